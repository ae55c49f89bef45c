"""Reproducible experiments wiring drivers, solvers and oracles together.

Each ``run_<kind>`` returns an :class:`Outcome`; :func:`write_outcome`
writes ``results.csv``, ``diagnostics.csv`` and ``verdicts.txt`` atomically.
Convergence is judged on the last three ladder levels: the two
inter-level gaps must decrease by at least :data:`DECAY_FACTOR`
(all-zero gaps pass).  These thresholds are engineering choices.
"""
from __future__ import annotations

import csv
import io
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import sympy as sp

from . import drivers as D
from . import paths as P
from . import rde
from .config import ExperimentConfig
from .errors import ConfigError
from .grid import Box, ScalarField, SpaceTimeGrid, diagnostics_text
from .parabolic import solve_second_order_rpde
from .presets import coefficient_preset, datum_preset, field_preset
from .transport import solve_transport

__all__ = ["Outcome", "run_experiment", "write_outcome", "converges", "DECAY_FACTOR", "RUNNERS"]

DECAY_FACTOR = 1.3
ZERO_GAP = 1e-14


@dataclass
class Outcome:
    kind: str
    header: list
    rows: list
    verdicts: list  # (passed, criterion id)
    diagnostics: list = field(default_factory=list)
    results_text: str | None = None  # preformatted results (scalar-field CSV)

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.verdicts)

    def verdict_lines(self) -> list[str]:
        return [f"{'PASS' if ok else 'FAIL'} {cid}" for ok, cid in self.verdicts]


def converges(gaps, factor: float = DECAY_FACTOR) -> bool:
    """Monotone decay by ``factor`` over the last two gaps; all-zero gaps pass."""
    gaps = [float(g) for g in gaps]
    if not gaps:
        return False
    if max(gaps) <= ZERO_GAP:
        return True
    tail = gaps[-2:]
    if len(tail) < 2:
        return False
    return tail[1] < tail[0] and tail[0] >= factor * tail[1]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


# --- builders -----------------------------------------------------------------------


def _params(sec: dict) -> dict:
    return {k: v for k, v in sec.items() if k != "preset"}


def build_fields(cfg: ExperimentConfig):
    return field_preset(cfg.fields["preset"], **_params(cfg.fields))


def build_coeffs(cfg: ExperimentConfig, e: int):
    return coefficient_preset(cfg.coeffs["preset"], **({"e": e} | _params(cfg.coeffs)))


def build_phi(cfg: ExperimentConfig, e: int):
    return datum_preset(cfg.phi["preset"], **({"e": e} | _params(cfg.phi)))


def build_grid(cfg: ExperimentConfig, e: int) -> SpaceTimeGrid:
    g = cfg.grid
    lo, hi = float(g.get("lo", -4.0)), float(g.get("hi", 4.0))
    box = Box.with_spacing(lo, hi, float(g["h"]), e) if "h" in g else Box.cube(lo, hi, int(g.get("n", 81)), e)
    horizon = float(g.get("horizon", cfg.driver.horizon))
    outs = g.get("outputs", horizon)
    outs = tuple(float(t) for t in (outs if isinstance(outs, list) else [outs]))
    return SpaceTimeGrid(box, horizon=horizon, dt=float(g.get("dt", horizon / cfg.driver.steps)),
                         output_times=outs, eval_fraction=float(g.get("eval_fraction", 0.6)))


def _solver_options(cfg: ExperimentConfig) -> dict:
    g = cfg.grid
    return {"substeps": int(g.get("substeps", 1)), "scheme": str(g.get("scheme", "euler"))}


def _solve(kind: str, cfg, V, phi, x, grid, coeffs=None) -> ScalarField:
    opts = _solver_options(cfg)
    if kind == "transport":
        return solve_transport(V, phi, x, grid, **opts)
    if kind == "second_order":
        return solve_second_order_rpde(coeffs, V, phi, x, grid,
                                       boundary=str(cfg.grid.get("boundary", "dirichlet")), **opts)
    raise ConfigError(f"unknown solver {kind!r}; use transport or second_order")


def _solvers(cfg, section: str, default: str) -> list[str]:
    val = cfg.option(section, "solver", default)
    kinds = val if isinstance(val, list) else [val]
    return ["transport", "second_order"] if kinds == ["both"] else [str(k) for k in kinds]


def _seed_count(cfg, default: int) -> int:
    n = int(cfg.option("run", "seeds", default))
    if n < 1:
        raise ConfigError("run.seeds must be >= 1")
    return n


def _map(fn, args, jobs: int):
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, args))
    return [fn(a) for a in args]


def _jobs(cfg) -> int:
    return max(1, int(cfg.option("run", "jobs", 1)))


# --- Wong–Zakai -------------------------------------------------------------------


def run_wong_zakai(cfg: ExperimentConfig) -> Outcome:
    """Piecewise-linear lifts of one Brownian sample at each ladder level."""
    spec = cfg.driver
    if spec.kind != "brownian":
        raise ConfigError("wong_zakai needs a brownian driver")
    ladder = list(cfg.ladder) or [64, 256, 1024]
    if len(ladder) < 3:
        raise ConfigError("wong_zakai needs at least three ladder levels")
    top = ladder[-1]
    spec = replace(spec, steps=top)
    times, values = D.sample_path(spec)
    fine_cells = times.size - 1
    values = np.sqrt(spec.eps) * values
    p = D.default_p(spec)
    finest = times[:: fine_cells // top]
    lifts = []
    for M in ladder:
        if fine_cells % M:
            raise ConfigError(f"ladder level {M} does not divide the fine grid ({fine_cells} cells)")
        every = fine_cells // M
        xm = P.lift_piecewise_linear(times[::every], values[::every], p=p)
        lifts.append(P.resample(xm, finest))
    V = build_fields(cfg)
    e = V.e
    phi, grid = build_phi(cfg, e), build_grid(cfg, e)
    coeffs = None
    rows, verdicts = [], []
    for kind in _solvers(cfg, "wong_zakai", "both"):
        if kind == "second_order":
            coeffs = build_coeffs(cfg, e)
        sols = [_solve(kind, cfg, V, phi, x, grid, coeffs) for x in lifts]
        gaps = [a.sup_distance(b) for a, b in zip(sols, sols[1:])]
        for (m0, m1), gap in zip(zip(ladder, ladder[1:]), gaps):
            rows.append([kind, m0, m1, gap])
        verdicts.append((converges(gaps), f"wong_zakai.{kind}"))
    return Outcome("wong_zakai", ["solver", "level_from", "level_to", "sup_gap"], rows, verdicts)


# --- McShane drift ----------------------------------------------------------------


def _bracket_fields(V, c: float):
    if V.d != 2:
        raise ConfigError("mcshane_drift needs d = 2 vector fields")
    br = V.bracket(0, 1)
    if all(sp.simplify(b) == 0 for b in br):
        raise ConfigError(f"preset {V.name!r} has [V1, V2] = 0; the drift comparison would be vacuous")
    return V.with_fields([[c * b for b in br]], prepend=True, name=f"{V.name}+bracket")


def _mcshane_gap(args):
    cfg, index, steps = args
    V = build_fields(cfg)
    W = _bracket_fields(V, cfg.driver.area_c)
    spec = replace(cfg.driver, steps=steps, seed=D.trajectory_seed(cfg.seed, index))
    y0 = np.asarray(cfg.option("mcshane", "y0", [0.3, -0.2]), dtype=float)
    if y0.size != V.e:
        raise ConfigError(f"mcshane.y0 needs {V.e} entries")
    opts = _solver_options(cfg)
    ya = rde.solve_rde(V, y0, D.sample_mcshane_lift(spec), **opts)
    yb = rde.solve_rde(W, y0, D.time_space_lift(spec), **opts)
    return float(np.max(np.abs(ya - yb)))


def run_mcshane_drift(cfg: ExperimentConfig) -> Outcome:
    """B̃-driven RDE against (t, B)-driven RDE with drift field c[V1, V2]."""
    if cfg.driver.kind != "mcshane" or cfg.driver.dim != 2:
        raise ConfigError("mcshane_drift needs a 2-dimensional mcshane driver")
    _bracket_fields(build_fields(cfg), cfg.driver.area_c)  # fail fast on vacuous presets
    levels = list(cfg.ladder) or [cfg.driver.steps]
    n = _seed_count(cfg, 4)
    tol = float(cfg.option("mcshane", "tolerance", 1e-3))
    args = [(cfg, i, M) for M in levels for i in range(n)]
    gaps = _map(_mcshane_gap, args, _jobs(cfg))
    rows = [[M, D.trajectory_seed(cfg.seed, i), g] for (_, i, M), g in zip(args, gaps)]
    worst_final = max(g for (_, _, M), g in zip(args, gaps) if M == levels[-1])
    verdicts = [(worst_final < tol, "mcshane_drift.gap")]
    return Outcome("mcshane_drift", ["steps", "seed", "sup_gap"], rows, verdicts)


# --- continuity -------------------------------------------------------------------


def _cm_path(cfg, dim: int, horizon: float) -> P.CameronMartinPath:
    vel = cfg.option("continuity", "h_velocity", None)
    if vel is None:
        vel = cfg.option("action", "velocity", [0.0] * dim)
    vel = np.broadcast_to(np.asarray(vel, dtype=float).ravel(), (dim,))
    return P.CameronMartinPath.linear(vel, horizon)


def run_continuity(cfg: ExperimentConfig) -> Outcome:
    """Homotopy (1-λ)X + λh from a sampled driver X to a Cameron–Martin path h."""
    spec = cfg.driver
    times, values = D.sample_path(spec)
    h = _cm_path(cfg, spec.dim, spec.horizon)
    hv = np.stack([np.interp(times, h.times, h.values[:, i]) for i in range(h.dim)], axis=1)
    p = D.default_p(spec)
    every = spec.fine_factor

    def lift(vals):
        return P.lift_piecewise_linear(times, vals, p=p).subsample(every)

    target = lift(hv)
    lambdas = [float(v) for v in cfg.option("continuity", "lambdas", [0.0, 0.5, 0.75, 0.9, 1.0])]
    V = build_fields(cfg)
    phi, grid = build_phi(cfg, V.e), build_grid(cfg, V.e)
    kind = _solvers(cfg, "continuity", "transport")[0]
    coeffs = build_coeffs(cfg, V.e) if kind == "second_order" else None
    u_h = _solve(kind, cfg, V, phi, target, grid, coeffs)
    rows = []
    for lam in lambdas:
        x = lift((1 - lam) * values + lam * hv)
        dist = P.holder_distance(x, target)
        gap = _solve(kind, cfg, V, phi, x, grid, coeffs).sup_distance(u_h)
        rows.append([lam, dist, gap])
    order = sorted(rows, key=lambda r: -r[1])
    dists = [r[1] for r in order]
    gaps = [r[2] for r in order]
    monotone = all(g1 <= g0 + ZERO_GAP for g0, g1 in zip(gaps, gaps[1:]))
    verdicts = [(monotone and len(set(dists)) == len(dists), "continuity.monotone")]
    return Outcome("continuity", ["lambda", "holder_distance", "sup_gap"], rows, verdicts)


# --- small noise ------------------------------------------------------------------


def _small_noise_seed(args):
    cfg, index, eps_list, kind = args
    spec = replace(cfg.driver, kind="brownian", eps=1.0, seed=D.trajectory_seed(cfg.seed, index))
    base = D.sample_lift(spec)
    V = build_fields(cfg)
    phi, grid = build_phi(cfg, V.e), build_grid(cfg, V.e)
    coeffs = build_coeffs(cfg, V.e) if kind == "second_order" else None
    zero = P.constant_path(base.dim, base.times, base.p)
    ref = _solve(kind, cfg, V, phi, zero, grid, coeffs)
    return [_solve(kind, cfg, V, phi, P.dilate_path(np.sqrt(eps), base), grid, coeffs).sup_distance(ref)
            for eps in eps_list]


def _action_rows(cfg, dim: int, horizon: float):
    vel = np.broadcast_to(np.asarray(cfg.option("action", "velocity", [1.0] * dim), dtype=float).ravel(), (dim,))
    h = P.CameronMartinPath.linear(vel, horizon)
    got = D.action(h)
    closed = 0.5 * float(vel @ vel) * horizon
    return got, closed


def run_small_noise(cfg: ExperimentConfig) -> Outcome:
    """Gap to the noise-free PDE along an ε ladder, per seed and median."""
    eps_list = [float(v) for v in cfg.option("small_noise", "eps", [1.0, 0.25, 0.0625])]
    if any(e < 0 for e in eps_list):
        raise ConfigError("small_noise.eps values must be >= 0")
    kind = _solvers(cfg, "small_noise", "second_order")[0]
    n = _seed_count(cfg, 32)
    per_seed = _map(_small_noise_seed, [(cfg, i, eps_list, kind) for i in range(n)], _jobs(cfg))
    gaps = np.array(per_seed)  # (seeds, eps)
    medians = np.median(gaps, axis=0)
    rows = []
    for i in range(n):
        for j, eps in enumerate(eps_list):
            rows.append(["gap", eps, D.trajectory_seed(cfg.seed, i), gaps[i, j]])
    for j, eps in enumerate(eps_list):
        rows.append(["median_gap", eps, "", medians[j]])
    got, closed = _action_rows(cfg, cfg.driver.dim, cfg.driver.horizon)
    rows += [["action", "", "", got], ["action_closed_form", "", "", closed]]
    order = np.argsort(eps_list)[::-1]
    med = medians[order]
    decreasing = bool(np.all(np.diff(med) < 0)) or float(np.max(med)) <= ZERO_GAP
    verdicts = [(decreasing, "small_noise.median"),
                (abs(got - closed) <= 1e-12 * max(1.0, abs(closed)), "small_noise.action")]
    return Outcome("small_noise", ["quantity", "eps", "seed", "value"], rows, verdicts)


# --- demos & action ---------------------------------------------------------------


def _range_ok(u: ScalarField, phi, slack: float = 0.0) -> bool:
    if phi.bounds is None:
        return True
    lo, hi = phi.bounds
    return bool(np.min(u.values) >= lo - slack and np.max(u.values) <= hi + slack)


def run_transport_demo(cfg: ExperimentConfig) -> Outcome:
    V = build_fields(cfg)
    phi, grid = build_phi(cfg, V.e), build_grid(cfg, V.e)
    x = D.sample_lift(cfg.driver)
    u = solve_transport(V, phi, x, grid, **_solver_options(cfg))
    return Outcome("transport_demo", [], [], [(_range_ok(u, phi), "transport_demo.range")],
                   results_text=u.to_csv_text())


def run_parabolic_demo(cfg: ExperimentConfig) -> Outcome:
    V = build_fields(cfg)
    phi, grid = build_phi(cfg, V.e), build_grid(cfg, V.e)
    coeffs = build_coeffs(cfg, V.e)
    x = D.sample_lift(cfg.driver)
    u = _solve("second_order", cfg, V, phi, x, grid, coeffs)
    slack = u.info["max_principle_slack"]
    tol = float(cfg.option("parabolic", "slack_tolerance", 1e-3))
    verdicts = [
        (_range_ok(u, phi, slack) and slack < tol, "parabolic_demo.range"),
        (u.info["Lambda"] > 0 and u.info["Lambda"] >= u.info["lambda_bound"] * (1 - 1e-12),
         "parabolic_demo.ellipticity"),
    ]
    return Outcome("parabolic_demo", [], [], verdicts, diagnostics=u.diagnostics, results_text=u.to_csv_text())


def run_action(cfg: ExperimentConfig) -> Outcome:
    got, closed = _action_rows(cfg, cfg.driver.dim, cfg.driver.horizon)
    rows = [["action", got], ["action_closed_form", closed]]
    return Outcome("action", ["quantity", "value"], rows,
                   [(abs(got - closed) <= 1e-12 * max(1.0, abs(closed)), "action.exact")])


RUNNERS = {
    "wong_zakai": run_wong_zakai,
    "mcshane_drift": run_mcshane_drift,
    "continuity": run_continuity,
    "small_noise": run_small_noise,
    "transport_demo": run_transport_demo,
    "parabolic_demo": run_parabolic_demo,
    "action": run_action,
}


def run_experiment(cfg: ExperimentConfig) -> Outcome:
    return RUNNERS[cfg.kind](cfg)


# --- output -----------------------------------------------------------------------


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def results_text(outcome: Outcome) -> str:
    if outcome.results_text is not None:
        return outcome.results_text
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(outcome.header)
    for row in outcome.rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_outcome(outcome: Outcome, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "results.csv", results_text(outcome))
    _atomic_write(out / "diagnostics.csv", diagnostics_text(outcome.diagnostics))
    _atomic_write(out / "verdicts.txt", "\n".join(outcome.verdict_lines()) + "\n")
    return out
