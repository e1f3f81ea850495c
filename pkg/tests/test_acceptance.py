"""The ten acceptance criteria, each run through the same code path as the CLI.

Every test appends one PASS/FAIL line to the terminal summary.
"""
import time

import pytest

from conftest import ACCEPTANCE_LINES
from monolab import checks

SEED = 0
pytestmark = pytest.mark.slow

# number, title, command, parts, runtime budget in seconds
CRITERIA = [
    (1, "BPS exactness", "bps-check", ("residual",), 10),
    (2, "energy identity", "bps-check", ("energy",), 60),
    (3, "tau-norm identity", "bps-check", ("tau",), 60),
    (4, "Dirac integrality and harmonicity", "flux", None, 10),
    (5, "homogeneous-solution kernel", "linear-check", ("kernel",), 10),
    (6, "Weitzenbock identity", "linear-check", ("weitzenbock",), 120),
    (7, "pregluing residual ladder", "residual-scan", None, 1200),
    (8, "leading-order metric", "metric-sweep", None, 1800),
    (9, "Gibbons-Manton flux pairing", "preglue", ("gm",), 10),
]

_first_runs: dict = {}


def _run(number):
    _, _, command, parts, _ = CRITERIA[number - 1]
    t0 = time.perf_counter()
    out = checks.run(command, None, seed=SEED, threads=1, parts=parts)
    return out, time.perf_counter() - t0


def _margin(g):
    if g.relation == "<=":
        return (g.tolerance - g.value) / max(abs(g.tolerance), 1e-300)
    if g.relation == ">=":
        return (g.value - g.tolerance) / max(abs(g.tolerance), 1e-300)
    lo, hi = g.tolerance
    return min(g.value - lo, hi - g.value) / max(hi - lo, 1e-300)


def _report(number, ok, text):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {text}"
    ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.mark.parametrize("number", [c[0] for c in CRITERIA])
def test_criterion(number):
    _, title, command, parts, budget = CRITERIA[number - 1]
    out, elapsed = _run(number)
    _first_runs[number] = out
    hard = [g for g in out.gates if not g.warning]
    failed = [g for g in hard if not g.passed]
    warned = [g for g in out.gates if g.warning and not g.passed]
    tight = min(hard, key=_margin)
    ok = bool(hard) and not failed and elapsed <= budget
    text = (f"{title}: {len(hard) - len(failed)}/{len(hard)} gates, "
            f"tightest {tight.name}={tight.value:.4g} ({tight.relation} {tight.tolerance}), "
            f"{elapsed:.1f} s (budget {budget} s)")
    if warned:
        text += f", {len(warned)} report-only warnings"
    if failed:
        text += ", failed: " + ", ".join(f"{g.name}={g.value:.4g}" for g in failed)
    _report(number, ok, text)
    assert hard, "criterion produced no gates"
    assert not failed, [(g.name, g.value, g.tolerance) for g in failed]
    assert elapsed <= budget


def test_criterion_10_determinism():
    diffs, compared = [], 0
    for number, *_ in CRITERIA:
        first = _first_runs.get(number) or _run(number)[0]
        second, _ = _run(number)
        names = sorted(n for n in first.artifacts if n.endswith(".csv"))
        assert names == sorted(n for n in second.artifacts if n.endswith(".csv"))
        for name in names:
            compared += 1
            if first.artifacts[name] != second.artifacts[name]:
                diffs.append(f"{number}:{name}")
    ok = not diffs and compared > 0
    text = f"determinism: {compared} CSV artifacts from criteria 1-9 rerun with seed {SEED}"
    text += ", all bit-identical" if ok else ", differing: " + ", ".join(diffs)
    _report(10, ok, text)
    assert compared > 0
    assert not diffs
