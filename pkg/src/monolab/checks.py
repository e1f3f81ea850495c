"""Numeric gates behind every CLI command.

Each ``run_*`` function takes a resolved configuration mapping and returns
an :class:`Outcome`: the gates it evaluated and the text artifacts it
produced.  Artifacts are deterministic for a fixed configuration and seed
(no timestamps, fixed reduction order, ``repr`` floats).
"""
from __future__ import annotations

import copy
import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .bps import bps_field
from .dirac import STRING_TOL, DiracSpec, dirac_field, laplacian7, pole_fluxes, superpose_check
from .errors import ConfigParse
from .export import field_snapshot, to_bytes, to_csv
from .fields import Grid3D, gram_matrix, residual_norm, ymh_energy
from .fitting import halving_slopes, loglog_fit
from .linear import (
    bump_field,
    detuned,
    f0,
    fc,
    indicial_roots_check,
    model_L,
    random_plane_waves,
    sensitive_bump,
    square_errors,
    tau_identity_residual,
    tau_vectors,
    weitzenbock_check,
)
from .metric import MetricQuadrature, centre_sum_check, gram, metric_sweep, sweep_csv, variation_basis
from .preglue import (
    ClusterSpec,
    SamplePlan,
    SpliceLayout,
    build_pregluing,
    gm_curvature_form,
    gm_flux_table,
    ladder_csv,
    ladder_slope,
    region_norms,
    residual_orders,
)
from .quad import fibonacci_sphere


@dataclass
class Gate:
    name: str
    value: float
    tolerance: float
    passed: bool
    relation: str = "<="
    warning: bool = False  # only fails the run under --strict
    detail: dict = field(default_factory=dict)


@dataclass
class Outcome:
    command: str
    gates: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def gate(self, name, value, tolerance, relation="<=", **detail) -> Gate:
        value = float(value)
        if relation == "<=":
            ok = value <= tolerance
        elif relation == ">=":
            ok = value >= tolerance
        elif relation == "in":
            lo, hi = tolerance
            ok = lo <= value <= hi
        else:
            raise ValueError(relation)
        g = Gate(name, value, tolerance, bool(ok and math.isfinite(value)), relation, False, detail)
        self.gates.append(g)
        return g

    def ok(self, strict: bool = False) -> bool:
        return all(g.passed for g in self.gates if strict or not g.warning)

    def failures(self, strict: bool = False) -> list:
        return [g for g in self.gates if not g.passed and (strict or not g.warning)]


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def gates_json(out: Outcome) -> str:
    return json.dumps([asdict(g) for g in out.gates], indent=2, default=float)


# --- configuration -----------------------------------------------------------

DEFAULTS: dict = {
    "bps-check": {
        "center": [0.0, 0.0, 0.0],
        "masses": [1.0, 2.0],
        "residual": {"r_min": 0.2, "r_max": 10.0, "n_radii": 40, "n_dirs": 64, "h_fd": 1e-3,
                     "tol_analytic": 1e-10, "tol_fd": 1e-5},
        "energy": {"half_width": 12.0, "grid_n": 161, "rtol": 0.01},
        "tau": {"half_width": 12.0, "grid_n": 121, "rtol": 0.01},
    },
    "flux": {
        "specs": [
            {"name": "single_k3", "poles": [[0.0, 0.0, 0.0, 3]], "mass": 1.0},
            {"name": "pair_1_m2", "poles": [[1.0, 0.0, 0.0, 1], [-1.0, 0.0, 0.0, -2]], "mass": 1.0},
        ],
        "n_quad": 64,
        "flux_tol": 1e-5,
        "laplacian": {"hs": [0.1, 0.05, 0.025], "n_points": 20, "min_distance": 0.75, "box": 2.0,
                      "slope": 2.0, "slope_tol": 0.2},
    },
    "dirac-field": {
        "poles": [[1.0, 0.0, 0.0, 1], [-1.0, 0.0, 0.0, -2]],
        "mass": 1.0,
        "strings": [],
        "grid": {"center": [0.0, 0.0, 0.0], "half_width": 3.0, "n": 21},
        "formats": ["bin", "csv"],
        "residual_tol": 1e-9,
    },
    "linear-check": {
        "kernel": {"n_points": 20, "n_directions": 3, "tol": 1e-9},
        "square": {"n_fields": 5, "n_points": 20, "hs": [0.1, 0.05, 0.025], "slope": 2.0, "slope_tol": 0.2},
        "indicial": {"n_points": 40, "tol": 1e-9, "gap_tol": 1e-3},
        "tau_identity_tol": 1e-10,
        "weitzenbock": {"n_bumps": 5, "bump_radius": 2.0, "centre_spread": 0.3, "half_width": 2.5,
                        "grid_n": 61, "h": 1e-3, "gap_tol": 0.02,
                        "detune": 1.5, "control_radius": 2.5, "control_search_n": 41, "control_gap": 0.10,
                        "report_detunes": [1.1]},
    },
    "preglue": {
        "zetas": [[0.7071067811865476, 0.0, 0.0], [-0.7071067811865476, 0.0, 0.0]],
        "charges": [1, 1],
        "mass": 1.0,
        "epsilon": 0.1,
        "phases": [],
        "strings": [],
        "variant": "corrected",
        "layout": {"out_frac": 0.4, "in_frac": 0.5},
        "plan": {"grid_half_width": 2.5, "grid_n": 51, "shell_count": 24, "shell_dirs": 600, "string_gap": 1e-3},
        "h": 0.0,
        "gm": {"radius": 0.0, "n_quad": 32, "flux_tol": 1e-5, "hs": [1e-2, 5e-3, 2.5e-3], "n_directions": 3,
               "min_order": 1.8},
        "export": {"enabled": False, "half_width": 2.0, "n": 41},
    },
    "residual-scan": {
        "zetas": [[0.7071067811865476, 0.0, 0.0], [-0.7071067811865476, 0.0, 0.0]],
        "charges": [1, 1],
        "mass": 1.0,
        "sweep": [0.1, 0.05, 0.025],
        "layout": {"out_frac": 0.4, "in_frac": 0.5},
        "plan": {"grid_half_width": 2.5, "grid_n": 51, "shell_count": 24, "shell_dirs": 600, "string_gap": 1e-3},
        "h": 0.0,
        "naive_region": "interstitial",
        "corrected_region": "exterior",
        "norm_kind": "sup_zeta",
        "naive_slope": 1.0,
        "slope_tol": 0.25,
        "min_r2": 0.98,
        "min_improvement": 0.75,
    },
    "metric-gram": {
        "zetas": [[0.7071067811865476, 0.0, 0.0], [-0.7071067811865476, 0.0, 0.0]],
        "charges": [1, 1],
        "mass": 1.0,
        "epsilon": 0.05,
        "phases": [],
        "layout": {"out_frac": 0.4, "in_frac": 0.5},
        "quadrature": {"grid_half_width": 4.0, "grid_n": 65},
        "block_rtol": 0.02,
        "block_eps_factor": 3.0,
        "single_rtol": 0.01,
        "offblock_factor": 0.5,
    },
    "metric-sweep": {
        "zetas": [[0.7071067811865476, 0.0, 0.0], [-0.7071067811865476, 0.0, 0.0]],
        "charges": [1, 1],
        "mass": 1.0,
        "sweep": [0.1, 0.05, 0.025],
        "layout": {"out_frac": 0.4, "in_frac": 0.5},
        "quadrature": {"grid_half_width": 4.0, "grid_n": 65},
        "block_rtol": 0.02,
        "block_eps_factor": 3.0,
        "offblock_factor": 0.5,
        "halving_ratio": 0.7,
        "min_slope": 0.75,
        "centre_tol": 0.0,
    },
}

COMMANDS = tuple(DEFAULTS)


def _merge(base, user, path=""):
    if not isinstance(user, dict):
        raise ConfigParse(f"{path or 'config'}: expected a table")
    out = copy.deepcopy(base)
    for key, val in user.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigParse(f"{where}: unknown key")
        ref = base[key]
        if isinstance(ref, dict):
            out[key] = _merge(ref, val, where)
        elif isinstance(ref, bool):
            if not isinstance(val, bool):
                raise ConfigParse(f"{where}: expected true/false")
            out[key] = val
        elif isinstance(ref, (int, float)):
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigParse(f"{where}: expected a number")
            out[key] = float(val) if isinstance(ref, float) else val
            if isinstance(ref, int) and not isinstance(val, int):
                raise ConfigParse(f"{where}: expected an integer")
        elif isinstance(ref, str):
            if not isinstance(val, str):
                raise ConfigParse(f"{where}: expected a string")
            out[key] = val
        elif isinstance(ref, list):
            if not isinstance(val, list):
                raise ConfigParse(f"{where}: expected an array")
            out[key] = val
        else:
            out[key] = val
    return out


def resolve(command: str, user: Optional[dict] = None) -> dict:
    """Defaults for ``command`` overlaid with a user table (unknown keys are errors)."""
    if command not in DEFAULTS:
        raise ConfigParse(f"unknown command {command!r}")
    return _merge(DEFAULTS[command], user or {})


def _cluster_spec(cfg, epsilon) -> ClusterSpec:
    try:
        return ClusterSpec(
            tuple(tuple(float(x) for x in z) for z in cfg["zetas"]),
            tuple(int(k) for k in cfg.get("charges", ())),
            0,
            float(cfg.get("mass", 1.0)),
            float(epsilon),
            tuple(float(t) for t in cfg.get("phases", ())),
            tuple(cfg.get("strings", ())),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigParse(f"cluster configuration: {exc}") from exc


def _layout_rule(cfg) -> Callable:
    lay = cfg["layout"]
    return lambda s: SpliceLayout.default(s, lay["out_frac"], lay["in_frac"])


def _plan(cfg, grid_n=None) -> SamplePlan:
    p = dict(cfg["plan"])
    if grid_n is not None:
        p["grid_n"] = grid_n
    return SamplePlan(**p)


def _h(val) -> Optional[float]:
    return None if not val else float(val)


def _want(parts, name) -> bool:
    return parts is None or name in parts


# --- bps-check ---------------------------------------------------------------

def shell_points(r_min: float, r_max: float, n_radii: int, n_dirs: int, center=(0.0, 0.0, 0.0)):
    radii = np.geomspace(r_min, r_max, n_radii)
    dirs = fibonacci_sphere(n_dirs)
    return np.asarray(center) + (radii[:, None, None] * dirs[None]).reshape(-1, 3), np.repeat(radii, n_dirs)


def run_bps_check(cfg: dict, *, threads: int = 1, grid_n: Optional[int] = None,
                  h_fd: Optional[float] = None, parts=None) -> Outcome:
    """Parts: ``residual``, ``energy``, ``tau``."""
    out = Outcome("bps-check")
    c = tuple(cfg["center"])
    F = bps_field(c, 1.0)
    if _want(parts, "residual"):
        _bps_residual(out, F, cfg, h_fd)
    if _want(parts, "energy"):
        _bps_energy(out, cfg, threads, grid_n)
    if _want(parts, "tau"):
        _bps_tau(out, F, cfg, threads)
    return out


def _bps_residual(out, F, cfg, h_fd):
    c = tuple(cfg["center"])
    rc = cfg["residual"]
    h = h_fd if h_fd is not None else rc["h_fd"]
    pts, radii = shell_points(rc["r_min"], rc["r_max"], rc["n_radii"], rc["n_dirs"], c)
    exact = residual_norm(F, pts)
    fd = residual_norm(F, pts, h)
    out.gate("bps_residual_analytic", exact.max(), rc["tol_analytic"])
    out.gate("bps_residual_fd", fd.max(), rc["tol_fd"], h=h)
    rows = []
    for r in np.unique(radii):
        sel = radii == r
        rows.append((float(r), float(exact[sel].max()), float(fd[sel].max())))
    out.artifacts["bps_residual.csv"] = _csv(["r", "residual_analytic", "residual_fd"], rows)


def _bps_energy(out, cfg, threads, grid_n):
    c = tuple(cfg["center"])
    ec = cfg["energy"]
    n = grid_n or ec["grid_n"]
    rows = []
    for m in cfg["masses"]:
        rep = ymh_energy(bps_field(c, float(m)), Grid3D(c, ec["half_width"], n), threads=threads)
        target = 4 * np.pi * float(m)
        rel = abs(rep.value - target) / target
        out.gate(f"energy_m{m:g}", rel, ec["rtol"], value_abs=rep.value, target=target)
        rows.append((float(m), rep.value, target, rel, rep.box, rep.tail, rep.tail_error))
    out.artifacts["bps_energy.csv"] = _csv(["mass", "energy", "target", "rel_error", "box", "tail", "tail_error"],
                                           rows)


def _bps_tau(out, F, cfg, threads):
    c = tuple(cfg["center"])
    tc = cfg["tau"]
    G = gram_matrix(tau_vectors(F), Grid3D(c, tc["half_width"], tc["grid_n"]), threads=threads).value
    target = 2 * np.pi * np.eye(4)
    dev = float(np.max(np.abs(G - target))) / (2 * np.pi)
    out.gate("tau_gram", dev, tc["rtol"])
    out.artifacts["tau_gram.csv"] = _csv(
        ["a", "b", "value", "target"],
        [(a, b, float(G[a, b]), float(target[a, b])) for a in range(4) for b in range(4)],
    )


# --- flux / dirac-field ------------------------------------------------------

def _dirac_spec(doc) -> DiracSpec:
    try:
        return DiracSpec.from_mapping({k: v for k, v in doc.items() if k != "name"})
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ConfigParse(f"Dirac pole data: {exc}") from exc


def _far_from_poles(spec: DiracSpec, rng, n, box, min_distance):
    got = []
    zs = np.array([z for z, _ in spec.poles])
    while len(got) < n:
        p = rng.uniform(-box, box, size=3)
        if np.min(np.linalg.norm(zs - p, axis=1)) >= min_distance:
            got.append(p)
    return np.array(got)


def run_flux(cfg: dict, *, seed: int = 0, **_) -> Outcome:
    out = Outcome("flux")
    rows, lap_rows = [], []
    lc = cfg["laplacian"]
    rng = np.random.default_rng(seed)
    for doc in cfg["specs"]:
        name = str(doc.get("name", f"spec{len(rows)}"))
        spec = _dirac_spec(doc)
        for label, x, y, z, radius, k, value, err in pole_fluxes(spec, n_quad=cfg["n_quad"]):
            out.gate(f"flux_{name}_{label}", abs(value - k), cfg["flux_tol"], value_abs=value, charge=k)
            rows.append((name, label, x, y, z, radius, k, value, err))
        pts = _far_from_poles(spec, rng, lc["n_points"], lc["box"], lc["min_distance"])
        errs = [float(np.max(np.abs(laplacian7(spec, pts, h)))) for h in lc["hs"]]
        slopes = halving_slopes(lc["hs"], errs)
        for i, s in enumerate(slopes):
            out.gate(f"laplacian_slope_{name}_{i}", s, (lc["slope"] - lc["slope_tol"], lc["slope"] + lc["slope_tol"]),
                     "in")
        for h, e, s in zip(lc["hs"], errs, [math.nan] + slopes):
            lap_rows.append((name, float(h), e, s))
    out.artifacts["fluxes.csv"] = _csv(["spec", "label", "x", "y", "z", "radius", "charge", "flux", "error"], rows)
    out.artifacts["laplacian.csv"] = _csv(["spec", "h", "max_abs_laplacian", "slope"], lap_rows)
    return out


def _singular_nodes(spec: DiracSpec, pts):
    bad = np.zeros(len(pts), dtype=bool)
    for (z, _), s in zip(spec.poles, spec.strings):
        d = pts - np.asarray(z)
        r = np.linalg.norm(d, axis=1)
        rho = np.hypot(d[:, 0], d[:, 1])
        sign = 1.0 if s == "north" else -1.0
        bad |= r < 1e-9
        bad |= (rho < STRING_TOL * np.maximum(1.0, r)) & (sign * d[:, 2] < 0)
    return bad


def run_dirac_field(cfg: dict, *, seed: int = 0, grid_n: Optional[int] = None, **_) -> Outcome:
    out = Outcome("dirac-field")
    spec = _dirac_spec({"poles": cfg["poles"], "mass": cfg["mass"], "strings": cfg["strings"]})
    gc = cfg["grid"]
    grid = Grid3D(tuple(gc["center"]), gc["half_width"], grid_n or gc["n"])
    F = dirac_field(spec)

    def safe(p):
        A = np.full((len(p), 3, 3), np.nan)
        Phi = np.full((len(p), 3), np.nan)
        ok = ~_singular_nodes(spec, p)
        if np.any(ok):
            A[ok], Phi[ok] = F.evaluator(p[ok])
        return A, Phi

    from dataclasses import replace

    snap = field_snapshot(replace(F, evaluator=safe), grid)
    if "bin" in cfg["formats"]:
        out.artifacts["dirac_field.bin"] = to_bytes(snap)
    if "csv" in cfg["formats"]:
        out.artifacts["dirac_field.csv"] = to_csv(snap)
    pts = _far_from_poles(spec, np.random.default_rng(seed), 64, 2.0, 0.5)
    pts = pts[~_singular_nodes(spec, pts)]
    out.gate("dirac_residual", residual_norm(F, pts).max(), cfg["residual_tol"])
    out.gate("superposition", superpose_check(spec, pts), 1e-12)
    rows = [(label, x, y, z, radius, k, value, err) for label, x, y, z, radius, k, value, err in pole_fluxes(spec)]
    out.artifacts["fluxes.csv"] = _csv(["label", "x", "y", "z", "radius", "charge", "flux", "error"], rows)
    return out


# --- linear-check ------------------------------------------------------------

def _off_origin(rng, n, rmin=0.5, rmax=3.0):
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    return d * rng.uniform(rmin, rmax, n)[:, None]


def run_linear_check(cfg: dict, *, seed: int = 0, threads: int = 1, grid_n: Optional[int] = None,
                     h_fd: Optional[float] = None, parts=None) -> Outcome:
    """Parts: ``kernel`` (with the L^2 convergence study), ``indicial``, ``weitzenbock``.

    Each part draws from its own stream derived from ``seed``.
    """
    out = Outcome("linear-check")
    seeds = np.random.SeedSequence(seed).spawn(3)
    if _want(parts, "kernel"):
        _linear_kernel(out, cfg, np.random.default_rng(seeds[0]))
    if _want(parts, "indicial"):
        _linear_indicial(out, cfg, np.random.default_rng(seeds[1]))
    if _want(parts, "weitzenbock"):
        _linear_weitzenbock(out, cfg, np.random.default_rng(seeds[2]), threads, grid_n, h_fd)
    out.artifacts["linear_report.json"] = json.dumps(
        [{"test": g.name, "value": g.value, "tolerance": g.tolerance, "pass": g.passed} for g in out.gates],
        indent=2,
    )
    return out


def _linear_kernel(out, cfg, rng):
    kc = cfg["kernel"]
    pts = _off_origin(rng, kc["n_points"])
    rows = [("f0", float(np.max(np.abs(model_L(f0, pts)))))]
    for i in range(kc["n_directions"]):
        c = rng.normal(size=3)
        rows.append((f"fc{i}", float(np.max(np.abs(model_L(fc(c), pts))))))
    for name, val in rows:
        out.gate(f"kernel_{name}", val, kc["tol"])

    sc = cfg["square"]
    sq_rows = []
    band = (sc["slope"] - sc["slope_tol"], sc["slope"] + sc["slope_tol"])
    for j in range(sc["n_fields"]):
        u = random_plane_waves(rng)
        p = rng.uniform(-2.0, 2.0, size=(sc["n_points"], 3))
        errs = square_errors(u, p, sc["hs"])
        slopes = halving_slopes(sc["hs"], errs)
        for i, s in enumerate(slopes):
            out.gate(f"square_slope_{j}_{i}", s, band, "in")
        for h, e, s in zip(sc["hs"], errs, [math.nan] + slopes):
            sq_rows.append((j, float(h), e, s))
    out.artifacts["kernel.csv"] = _csv(["field", "max_abs_L"], rows)
    out.artifacts["square.csv"] = _csv(["field", "h", "max_error", "slope"], sq_rows)


def _linear_indicial(out, cfg, rng):
    ic = cfg["indicial"]
    entries = indicial_roots_check(rng, ic["n_points"], ic["tol"], ic["gap_tol"])
    for e in entries:
        g = out.gate(e.test, e.value, e.tolerance, ">=" if e.test.startswith("exclusion") else "<=", **e.detail)
        g.passed = bool(e.passed)

    bg = bps_field()
    lam = rng.normal(size=4)
    out.gate("tau_identity", tau_identity_residual(bg, lam, _off_origin(rng, 32)), cfg["tau_identity_tol"])


def _linear_weitzenbock(out, cfg, rng, threads, grid_n, h_fd):
    bg = bps_field()
    wc = cfg["weitzenbock"]
    h = h_fd if h_fd is not None else wc["h"]
    grid = Grid3D((0.0, 0.0, 0.0), wc["half_width"], grid_n or wc["grid_n"])
    w_rows = []
    for j in range(wc["n_bumps"]):
        centre = rng.uniform(-wc["centre_spread"], wc["centre_spread"], size=3)
        u = bump_field(centre, wc["bump_radius"], rng)
        res = weitzenbock_check(bg, u, grid, h=h, threads=threads)
        out.gate(f"weitzenbock_bump{j}", res.gap, wc["gap_tol"])
        w_rows.append((f"bump{j}", 1.0, res.lhs, res.rhs, res.gap, res.lhs_pairing))
    search = Grid3D((0.0, 0.0, 0.0), wc["half_width"], wc["control_search_n"])
    for factor in [wc["detune"], *wc["report_detunes"]]:
        off = detuned(bg, factor)
        u, _ = sensitive_bump(off, wc["control_radius"], search)
        res = weitzenbock_check(off, u, grid, h=h, residual_tol=None, threads=threads)
        g = out.gate(f"weitzenbock_control_x{factor:g}", res.gap, wc["control_gap"], ">=")
        g.warning = factor != wc["detune"]
        w_rows.append((f"control_x{factor:g}", factor, res.lhs, res.rhs, res.gap, res.lhs_pairing))

    out.artifacts["weitzenbock.csv"] = _csv(["field", "higgs_factor", "lhs", "rhs", "gap", "lhs_pairing"], w_rows)


# --- preglue / residual-scan -------------------------------------------------

def run_preglue(cfg: dict, *, seed: int = 0, grid_n: Optional[int] = None, h_fd: Optional[float] = None,
                parts=None, **_) -> Outcome:
    """Parts: ``regions`` (residual norms and optional export), ``gm``."""
    out = Outcome("preglue")
    spec = _cluster_spec(cfg, cfg["epsilon"])
    if _want(parts, "regions"):
        glued = build_pregluing(spec, _layout_rule(cfg)(spec), cfg["variant"])
        h = h_fd if h_fd is not None else _h(cfg["h"])
        norms = region_norms(glued, _plan(cfg, grid_n), h)
        out.artifacts["region_norms.csv"] = _csv(
            ["epsilon", "region", "norm_kind", "value"],
            [(spec.epsilon, reg, kind, float(v)) for (reg, kind), v in sorted(norms.items())],
        )
        ex = cfg["export"]
        if ex["enabled"]:
            grid = Grid3D((0.0, 0.0, 0.0), ex["half_width"] / spec.epsilon, ex["n"])
            out.artifacts["glued_field.bin"] = to_bytes(field_snapshot(glued.field, grid))
    if _want(parts, "gm"):
        _preglue_gm(out, spec, cfg, np.random.default_rng(seed))
    return out


def _preglue_gm(out, spec, cfg, rng):
    gm = cfg["gm"]
    rows = gm_flux_table(spec, gm["radius"] or None, gm["n_quad"])
    for j, i, k, val in rows:
        out.gate(f"gm_flux_{j}_{i}", abs(val - k), gm["flux_tol"], value_abs=val, charge=k)
    out.artifacts["gm_flux.csv"] = _csv(["j", "i", "charge", "flux"], rows)

    zetas = np.asarray(spec.zetas)
    cl_rows = []
    for j in range(spec.n):
        F = gm_curvature_form(spec, j)
        for d in range(gm["n_directions"]):
            U, V, W = (rng.normal(size=zetas.shape) for _ in range(3))
            errs = [abs(F.exterior_derivative(zetas, U, V, W, hh)) for hh in gm["hs"]]
            order = loglog_fit(gm["hs"], errs).slope
            out.gate(f"gm_closed_{j}_{d}", order, gm["min_order"], ">=", residuals=errs)
            for hh, e in zip(gm["hs"], errs):
                cl_rows.append((j, d, float(hh), float(e)))
    out.artifacts["gm_closedness.csv"] = _csv(["j", "direction", "h", "residual"], cl_rows)


def run_residual_scan(cfg: dict, *, sweep=None, grid_n: Optional[int] = None, h_fd: Optional[float] = None,
                      **_) -> Outcome:
    out = Outcome("residual-scan")
    eps = list(sweep) if sweep else cfg["sweep"]
    spec = _cluster_spec(cfg, eps[0])
    plan = _plan(cfg, grid_n)
    h = h_fd if h_fd is not None else _h(cfg["h"])
    rule = _layout_rule(cfg)
    tables = {}
    for variant in ("naive", "corrected"):
        tables[variant] = residual_orders(spec, eps, variant, plan, h, rule)
        out.artifacts[f"ladder_{variant}.csv"] = ladder_csv(tables[variant])
    kind = cfg["norm_kind"]
    s_naive, r2 = ladder_slope(tables["naive"], cfg["naive_region"], kind)
    s_corr, r2c = ladder_slope(tables["corrected"], cfg["corrected_region"], kind)
    band = (cfg["naive_slope"] - cfg["slope_tol"], cfg["naive_slope"] + cfg["slope_tol"])
    out.gate("naive_slope", s_naive, band, "in", region=cfg["naive_region"], norm_kind=kind)
    out.gate("naive_r2", r2, cfg["min_r2"], ">=")
    out.gate("corrected_improvement", s_corr - s_naive, cfg["min_improvement"], ">=",
             corrected_slope=s_corr, corrected_r2=r2c, region=cfg["corrected_region"])
    return out


# --- metric ------------------------------------------------------------------

def _quadrature(cfg, grid_n=None, threads=1) -> MetricQuadrature:
    q = dict(cfg["quadrature"])
    if grid_n is not None:
        q["grid_n"] = grid_n
    return MetricQuadrature(**q, threads=threads)


def _gram_gates(out: Outcome, rep, spec: ClusterSpec, cfg, tag=""):
    scale = 2 * np.pi * spec.mass
    tol = cfg.get("single_rtol", cfg["block_rtol"]) if spec.n == 1 else max(
        cfg["block_rtol"], cfg["block_eps_factor"] * spec.epsilon)
    out.gate(f"block_dev{tag}", rep.block_dev_max, tol)
    if spec.n > 1:
        out.gate(f"offblock{tag}", rep.off_block_max / scale, cfg["offblock_factor"] * spec.epsilon)
    G = rep.matrix
    out.gate(f"min_eigenvalue{tag}", float(np.linalg.eigvalsh(0.5 * (G + G.T)).min()), 0.0, ">=")


def run_metric_gram(cfg: dict, *, threads: int = 1, grid_n: Optional[int] = None, **_) -> Outcome:
    out = Outcome("metric-gram")
    spec = _cluster_spec(cfg, cfg["epsilon"])
    glued = build_pregluing(spec, _layout_rule(cfg)(spec))
    rep = gram(variation_basis(glued), _quadrature(cfg, grid_n, threads))
    _gram_gates(out, rep, spec, cfg)
    out.artifacts["gram.json"] = rep.to_json()
    out.artifacts["gram.csv"] = rep.to_csv()
    return out


def run_metric_sweep(cfg: dict, *, sweep=None, threads: int = 1, grid_n: Optional[int] = None, **_) -> Outcome:
    out = Outcome("metric-sweep")
    eps = list(sweep) if sweep else cfg["sweep"]
    spec = _cluster_spec(cfg, eps[0])
    rows, reports = metric_sweep(spec, eps, _layout_rule(cfg), _quadrature(cfg, grid_n, threads))
    for row, rep in zip(rows, reports):
        _gram_gates(out, rep, spec.with_epsilon(row.epsilon), cfg, f"_eps{row.epsilon:g}")
        out.artifacts[f"gram_eps{row.epsilon:g}.json"] = rep.to_json()
    offs = [r.offblock_max for r in rows]
    for i in range(len(offs) - 1):
        out.gate(f"halving_ratio_{i}", offs[i + 1] / offs[i], cfg["halving_ratio"])
    out.gate("offblock_slope", rows[0].slope, cfg["min_slope"], ">=", r2=rows[0].r2)
    fit = loglog_fit([r.epsilon for r in rows], [r.block_dev_max for r in rows])
    out.notes.append(f"block deviation slope {fit.slope:.3f} (r2 {fit.r2:.4f})")
    mid = spec.with_epsilon(rows[len(rows) // 2].epsilon)
    cen = centre_sum_check(build_pregluing(mid, _layout_rule(cfg)(mid)), tolerance=cfg["centre_tol"] or None)
    out.gate("centre", cen.error, cen.tolerance, fitted=cen.fitted.tolist(), expected=cen.expected.tolist())
    out.artifacts["metric_sweep.csv"] = sweep_csv(rows)
    return out


RUNNERS = {
    "bps-check": run_bps_check,
    "flux": run_flux,
    "dirac-field": run_dirac_field,
    "linear-check": run_linear_check,
    "preglue": run_preglue,
    "residual-scan": run_residual_scan,
    "metric-gram": run_metric_gram,
    "metric-sweep": run_metric_sweep,
}


def run(command: str, cfg: Optional[dict] = None, **opts) -> Outcome:
    """Resolve ``cfg`` against the defaults and run ``command``.

    ``opts`` may carry ``seed``, ``threads``, ``grid_n``, ``h_fd`` and ``sweep``;
    each runner ignores the ones it has no use for.
    """
    resolved = resolve(command, cfg)
    fn = RUNNERS[command]
    import inspect

    params = inspect.signature(fn).parameters
    has_var = any(p.kind is p.VAR_KEYWORD for p in params.values())
    kw = {k: v for k, v in opts.items() if v is not None and (has_var or k in params)}
    return fn(resolved, **kw)


__all__ = ["COMMANDS", "DEFAULTS", "Gate", "Outcome", "RUNNERS", "gates_json", "resolve", "run"]
