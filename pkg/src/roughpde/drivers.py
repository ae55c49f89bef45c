"""Sampled stochastic drivers and their geometric rough-path lifts.

Every sampler draws the underlying process on a fine grid of ``M * R``
cells (``R`` the refinement factor), lifts the piecewise-linear
interpolant exactly, and subsamples the lift to the ``M``-cell output grid.
The Lévy area of the output increments therefore comes from the fine
piecewise-linear approximation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from .errors import DriverError
from .paths import (
    CameronMartinPath,
    RoughPathGrid,
    dilate_path,
    lift_piecewise_linear,
)

__all__ = [
    "DriverSpec",
    "KINDS",
    "trajectory_seed",
    "default_p",
    "sample_path",
    "sample_lift",
    "sample_brownian_lift",
    "sample_fbm_lift",
    "sample_ou_lift",
    "sample_bridge_lift",
    "sample_mcshane_lift",
    "lift_cameron_martin",
    "action",
    "add_area_drift",
    "time_space_lift",
]

KINDS = ("brownian", "fbm", "ou", "bridge", "mcshane", "cameron_martin")
FBM_MAX_FINE = 2 ** 12
_U64 = (1 << 64) - 1


def trajectory_seed(seed: int, index: int) -> int:
    """Per-trajectory seed for ensembles: seed XOR index, kept in 64 bits."""
    return (int(seed) ^ int(index)) & _U64


@dataclass(frozen=True)
class DriverSpec:
    kind: str = "brownian"
    dim: int = 1
    horizon: float = 1.0
    steps: int = 256
    seed: int = 0
    hurst: float = 0.5
    theta: float = 1.0
    sigma: float = 1.0
    area_c: float = 0.0
    eps: float = 1.0
    refinement: int | None = None
    # Cameron-Martin driver: piecewise-linear knots (times, values)
    cm_times: tuple = field(default=())
    cm_values: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DriverError(f"unknown driver kind {self.kind!r}")
        if self.steps < 2:
            raise DriverError("steps M must be >= 2")
        if not self.horizon > 0:
            raise DriverError("horizon must be positive")
        if not 0.25 < self.hurst < 1.0:
            raise DriverError("Hurst index must lie in (1/4, 1)")
        if self.eps < 0:
            raise DriverError("noise scale eps must be >= 0")
        if not 0 <= int(self.seed) <= _U64:
            raise DriverError("seed must be an unsigned 64-bit integer")

    @property
    def fine_factor(self) -> int:
        if self.refinement is not None:
            return int(self.refinement)
        if self.kind == "fbm":
            return max(1, min(64, FBM_MAX_FINE // self.steps))
        return 64

    def with_seed(self, seed: int) -> "DriverSpec":
        return replace(self, seed=int(seed))


def default_p(spec: DriverSpec) -> float:
    """Rough-path exponent used for the lift.

    With ρ = 1/(2H) the lift lives in p ∈ (2ρ, ·); we take the midpoint of
    (2ρ, ⌊2ρ⌋ + 1) and never go below 2, so Brownian-type drivers get p = 2.5
    (step 2) and fBm with H ∈ (1/4, 1/3] gets step 3.
    """
    h = spec.hurst if spec.kind == "fbm" else 0.5
    two_rho = 1.0 / h
    upper = math.floor(two_rho) + 1
    return max(2.0, 0.5 * (two_rho + upper))


def _rng(spec: DriverSpec) -> np.random.Generator:
    return np.random.default_rng(int(spec.seed))


def _fine_times(spec: DriverSpec) -> np.ndarray:
    return np.linspace(0.0, spec.horizon, spec.steps * spec.fine_factor + 1)


def _brownian_values(spec, times, rng):
    dt = np.diff(times)
    inc = rng.standard_normal((dt.size, spec.dim)) * np.sqrt(dt)[:, None]
    out = np.zeros((times.size, spec.dim))
    np.cumsum(inc, axis=0, out=out[1:])
    return out


def _fbm_values(spec, times, rng):
    n = times.size - 1
    if n > FBM_MAX_FINE:
        raise DriverError(f"dense fBm sampling limited to {FBM_MAX_FINE} fine cells, got {n}")
    h2 = 2.0 * spec.hurst
    dt = times[1] - times[0]
    k = np.arange(n, dtype=float)
    # fractional Gaussian noise autocovariance
    gamma = 0.5 * dt ** h2 * (np.abs(k + 1) ** h2 - 2 * np.abs(k) ** h2 + np.abs(k - 1) ** h2)
    idx = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    cov = gamma[idx]
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise DriverError(f"fGn covariance factorization failed (H={spec.hurst}, n={n})") from exc
    noise = chol @ rng.standard_normal((n, spec.dim))
    out = np.zeros((n + 1, spec.dim))
    np.cumsum(noise, axis=0, out=out[1:])
    return out


def _ou_values(spec, times, rng):
    # exact AR(1) transition from X_0 = 0 on the uniform fine grid;
    # theta = 0 degenerates to sigma * B
    dt = times[1] - times[0]
    z = rng.standard_normal((times.size - 1, spec.dim))
    if spec.theta == 0:
        decay = 1.0
        scale = spec.sigma * math.sqrt(dt)
    else:
        decay = math.exp(-spec.theta * dt)
        scale = spec.sigma * math.sqrt(-math.expm1(-2.0 * spec.theta * dt) / (2.0 * spec.theta))
    out = np.zeros((times.size, spec.dim))
    out[1:] = lfilter([1.0], [1.0, -decay], scale * z, axis=0)
    return out


def _bridge_values(spec, times, rng):
    b = _brownian_values(spec, times, rng)
    out = b - (times / times[-1])[:, None] * b[-1][None, :]
    out[-1] = 0.0
    return out


def sample_path(spec: DriverSpec) -> tuple[np.ndarray, np.ndarray]:
    """Raw samples (times, values) of the driver on the fine grid."""
    rng = _rng(spec)
    times = _fine_times(spec)
    kind = spec.kind
    if kind in ("brownian", "mcshane"):
        values = _brownian_values(spec, times, rng)
    elif kind == "fbm":
        values = _fbm_values(spec, times, rng)
    elif kind == "ou":
        values = _ou_values(spec, times, rng)
    elif kind == "bridge":
        values = _bridge_values(spec, times, rng)
    elif kind == "cameron_martin":
        h = _cm_path(spec)
        values = np.stack([np.interp(times, h.times, h.values[:, i]) for i in range(h.dim)], axis=1)
    else:  # pragma: no cover - guarded in DriverSpec
        raise DriverError(kind)
    return times, values


def _finish(spec: DriverSpec, times, values, p=None) -> RoughPathGrid:
    p = default_p(spec) if p is None else p
    fine = lift_piecewise_linear(times, values, p=p)
    x = fine.subsample(spec.fine_factor)
    if spec.eps != 1.0:
        x = dilate_path(math.sqrt(spec.eps), x)
    return x


def _expect(spec, *kinds):
    if spec.kind not in kinds:
        raise DriverError(f"expected driver kind in {kinds}, got {spec.kind!r}")


def sample_brownian_lift(spec: DriverSpec) -> RoughPathGrid:
    _expect(spec, "brownian")
    return _finish(spec, *sample_path(spec))


def sample_fbm_lift(spec: DriverSpec) -> RoughPathGrid:
    _expect(spec, "fbm")
    return _finish(spec, *sample_path(spec))


def sample_ou_lift(spec: DriverSpec) -> RoughPathGrid:
    _expect(spec, "ou")
    return _finish(spec, *sample_path(spec))


def sample_bridge_lift(spec: DriverSpec) -> RoughPathGrid:
    _expect(spec, "bridge")
    return _finish(spec, *sample_path(spec))


def add_area_drift(x: RoughPathGrid, c: float) -> RoughPathGrid:
    """Add the antisymmetric area drift Γt, Γ = ((0, c), (-c, 0)), at level 2.

    At step 2 the level-2 antisymmetric part is central, so shifting the
    absolute points by Γt shifts every log-increment by Γ(t_j - t_i).
    """
    if x.dim != 2:
        raise DriverError("the McShane area drift needs d = 2")
    if x.step != 2:
        raise DriverError("the McShane area drift is defined at step 2")
    x2 = x.levels[1].copy()
    x2[:, 0, 1] += c * x.times
    x2[:, 1, 0] -= c * x.times
    return RoughPathGrid(x.times, (x.levels[0], x2), x.p)


def sample_mcshane_lift(spec: DriverSpec) -> RoughPathGrid:
    """Enhanced Brownian motion with its Lévy area shifted by Γt."""
    _expect(spec, "mcshane")
    if spec.dim != 2:
        raise DriverError("McShane driver requires d = 2")
    times, values = sample_path(spec)
    fine = lift_piecewise_linear(times, values, p=default_p(spec))
    x = fine.subsample(spec.fine_factor)
    if spec.area_c != 0.0:
        x = add_area_drift(x, spec.area_c)
    if spec.eps != 1.0:
        x = dilate_path(math.sqrt(spec.eps), x)
    return x


def time_space_lift(spec: DriverSpec) -> RoughPathGrid:
    """Lift of (t, B_t) built from the same fine samples as the Brownian lift."""
    _expect(spec, "brownian", "mcshane")
    times, values = sample_path(spec)
    aug = np.concatenate([times[:, None], math.sqrt(spec.eps) * values], axis=1)
    fine = lift_piecewise_linear(times, aug, p=default_p(spec))
    return fine.subsample(spec.fine_factor)


def _cm_path(spec: DriverSpec) -> CameronMartinPath:
    if not spec.cm_times:
        return CameronMartinPath.zero(spec.dim, spec.horizon)
    return CameronMartinPath(np.asarray(spec.cm_times), np.asarray(spec.cm_values))


def lift_cameron_martin(h: CameronMartinPath, step: int = 2, times=None, p: float | None = None) -> RoughPathGrid:
    """Piecewise-linear signature of h, optionally on a finer grid ``times``.

    Output grid nodes not among h's knots are evaluated by linear
    interpolation, which leaves the signature unchanged.
    """
    if times is None:
        times = h.times
    times = np.asarray(times, dtype=float)
    knots = np.union1d(times, h.times)
    vals = np.stack([np.interp(knots, h.times, h.values[:, i]) for i in range(h.dim)], axis=1)
    x = lift_piecewise_linear(knots, vals, p=float(step) if p is None else p)
    if knots.size == times.size:
        return x
    keep = np.searchsorted(knots, times)
    return RoughPathGrid(times - times[0], tuple(lev[keep] for lev in x.levels), x.p)


def action(h: CameronMartinPath) -> float:
    """½∫|ḣ_t|² dt."""
    return h.energy()


def sample_lift(spec: DriverSpec) -> RoughPathGrid:
    """Dispatch on ``spec.kind``."""
    if spec.kind == "brownian":
        return sample_brownian_lift(spec)
    if spec.kind == "fbm":
        return sample_fbm_lift(spec)
    if spec.kind == "ou":
        return sample_ou_lift(spec)
    if spec.kind == "bridge":
        return sample_bridge_lift(spec)
    if spec.kind == "mcshane":
        return sample_mcshane_lift(spec)
    h = _cm_path(spec)
    x = lift_cameron_martin(h, times=np.linspace(0.0, spec.horizon, spec.steps + 1), p=default_p(spec))
    if spec.eps != 1.0:
        x = dilate_path(math.sqrt(spec.eps), x)
    return x
