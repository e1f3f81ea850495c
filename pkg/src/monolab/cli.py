"""Command-line front end: ``monolab <command> [--spec FILE.toml] [options]``.

Every command writes its CSV/JSON artifacts, ``gates.json`` and a
``manifest.json`` (input hashes, version, resolved configuration and all
tolerances) to the output directory.

Exit codes: 0 all gates pass, 1 a gate failed, 2 bad configuration,
3 file system error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import re
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import tomli

from . import __version__
from .checks import COMMANDS, gates_json, resolve, run
from .errors import ConfigParse, GateFailure

OUT_ENV = "MONOLAB_OUT"
_POS = re.compile(r"\(at line (\d+), column (\d+)\)")


def _sweep(raw: str) -> list[float]:
    try:
        vals = [float(x) for x in raw.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad sweep list {raw!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty sweep list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="monolab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"monolab {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--spec", type=Path, help="TOML scenario file")
    p.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./monolab-out/<command>)")
    p.add_argument("--grid-n", type=int, help="override the main grid size (odd)")
    p.add_argument("--h-fd", type=float, help="finite-difference step where the command uses one")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--sweep", type=_sweep, help="comma-separated epsilon values")
    p.add_argument("--seed", type=int, help="random seed (overrides the scenario's)")
    p.add_argument("--strict", action="store_true", help="warnings count as gate failures")
    return p


def load_scenario(path: Path) -> tuple[dict, bytes]:
    """Parse a TOML scenario; syntax errors become :class:`ConfigParse` with a position."""
    blob = path.read_bytes()
    try:
        doc = tomli.loads(blob.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ConfigParse(f"{path}: not UTF-8 text ({exc.reason})") from exc
    except tomli.TOMLDecodeError as exc:
        line, col = getattr(exc, "lineno", None), getattr(exc, "colno", None)
        msg = getattr(exc, "msg", None) or _POS.sub("", str(exc)).strip()
        if line is None:
            m = _POS.search(str(exc))
            line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        where = f"{path}:{line}:{col}" if line is not None else str(path)
        raise ConfigParse(f"{where}: {msg}") from exc
    return doc, blob


def _sha(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def _tolerances(outcome) -> dict:
    return {g.name: g.tolerance for g in outcome.gates}


def execute(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    cfg: dict = {}
    inputs = {}
    seed = 0
    if args.spec is not None:
        doc, blob = load_scenario(args.spec)
        inputs["spec"] = {"path": str(args.spec), "sha256": _sha(blob)}
        named = doc.pop("command", args.command)
        if named != args.command:
            raise ConfigParse(f"{args.spec}: scenario is for {named!r}, not {args.command!r}")
        seed = doc.pop("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigParse(f"{args.spec}: seed must be an integer")
        cfg = doc
    if args.seed is not None:
        seed = args.seed
    if args.grid_n is not None and (args.grid_n < 3 or args.grid_n % 2 == 0):
        raise ConfigParse("--grid-n must be odd and at least 3")

    out_dir = args.out or Path(os.environ.get(OUT_ENV, "monolab-out")) / args.command
    out_dir.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    outcome = run(args.command, cfg, seed=seed, threads=args.threads, grid_n=args.grid_n,
                  h_fd=args.h_fd, sweep=args.sweep)
    elapsed = time.perf_counter() - t0

    digests = {}
    for name, data in sorted(outcome.artifacts.items()):
        blob = data.encode("utf-8") if isinstance(data, str) else data
        (out_dir / name).write_bytes(blob)
        digests[name] = _sha(blob)
    (out_dir / "gates.json").write_text(gates_json(outcome) + "\n", encoding="utf-8")

    passed = outcome.ok(args.strict)
    manifest = {
        "tool": "monolab",
        "version": __version__,
        "command": args.command,
        "seed": seed,
        "inputs": inputs,
        "options": {"grid_n": args.grid_n, "h_fd": args.h_fd, "sweep": args.sweep, "strict": args.strict,
                    "threads": args.threads},
        "config": resolve(args.command, cfg),
        "tolerances": _tolerances(outcome),
        "artifacts": digests,
        "notes": outcome.notes,
        "passed": passed,
        "elapsed_s": round(elapsed, 3),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=float) + "\n", encoding="utf-8")

    for g in outcome.gates:
        flag = "ok" if g.passed else ("warn" if g.warning else "FAIL")
        print(f"{flag:4s} {g.name}: {g.value:.6g} {g.relation} {g.tolerance}")
    if not passed:
        names = ", ".join(g.name for g in outcome.failures(args.strict))
        raise GateFailure(f"failed gates: {names}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv[:1] == ["run"]:
        argv = argv[1:]
    try:
        return execute(argv)
    except ConfigParse as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except GateFailure as exc:
        print(f"gate failure: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
