import json
import subprocess
import sys
from pathlib import Path

import pytest

from monolab import __version__
from monolab.checks import resolve
from monolab.cli import main
from monolab.errors import ConfigParse

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _flux(tmp_path, *extra):
    return main(["flux", "--spec", str(CONFIGS / "two_poles.toml"), "--out", str(tmp_path), *extra])


def test_passing_run_writes_manifest(tmp_path, capsys):
    assert _flux(tmp_path) == 0
    assert "ok   flux_single_k3_pole0" in capsys.readouterr().out
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["version"] == __version__ and man["command"] == "flux"
    assert man["seed"] == 7 and man["passed"] is True
    assert len(man["inputs"]["spec"]["sha256"]) == 64
    assert set(man["artifacts"]) == {"fluxes.csv", "laplacian.csv"}
    assert man["tolerances"]["flux_single_k3_pole0"] == 1e-5
    assert man["config"]["n_quad"] == 64
    gates = json.loads((tmp_path / "gates.json").read_text())
    assert gates and all(g["passed"] for g in gates)


def test_repeat_runs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _flux(a) == 0 and _flux(b) == 0
    for name in ("fluxes.csv", "laplacian.csv", "gates.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_failed_gate_exits_one(tmp_path, capsys):
    spec = tmp_path / "bad.toml"
    spec.write_text('command = "flux"\nflux_tol = -1.0\n')
    assert main(["flux", "--spec", str(spec), "--out", str(tmp_path / "o")]) == 1
    assert "gate failure" in capsys.readouterr().err
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["passed"] is False


def test_syntax_error_reports_position(tmp_path, capsys):
    spec = tmp_path / "broken.toml"
    spec.write_text('command = "flux"\nn_quad = = 3\n')
    assert main(["flux", "--spec", str(spec), "--out", str(tmp_path)]) == 2
    assert f"{spec}:2:" in capsys.readouterr().err


@pytest.mark.parametrize("body", ['command = "flux"\nno_such_key = 1\n', 'command = "flux"\nn_quad = "many"\n',
                                  'command = "bps-check"\n', 'seed = 1.5\n'])
def test_bad_configuration_exits_two(tmp_path, body):
    spec = tmp_path / "s.toml"
    spec.write_text(body)
    assert main(["flux", "--spec", str(spec), "--out", str(tmp_path)]) == 2


def test_even_grid_is_rejected(tmp_path):
    assert main(["metric-gram", "--grid-n", "64", "--out", str(tmp_path)]) == 2


def test_io_errors_exit_three(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["flux", "--out", str(blocker / "sub")]) == 3
    assert main(["flux", "--spec", str(tmp_path / "missing.toml"), "--out", str(tmp_path)]) == 3


def test_run_prefix_and_env_output(tmp_path, monkeypatch):
    monkeypatch.setenv("MONOLAB_OUT", str(tmp_path))
    assert main(["run", "flux"]) == 0
    assert (tmp_path / "flux" / "fluxes.csv").exists()


def test_resolve_rejects_unknown_keys():
    with pytest.raises(ConfigParse):
        resolve("flux", {"laplacian": {"bogus": 1}})
    assert resolve("flux", {"n_quad": 32})["n_quad"] == 32


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "monolab.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
