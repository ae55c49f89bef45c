"""Time-gridded weak geometric p-rough paths.

A :class:`RoughPathGrid` stores the absolute group values ``x_{t_i}`` of a
path started at the identity.  Increments are recovered as
``x_{t_i}^{-1} ⊗ x_{t_j}``, so Chen's identity holds by construction.
Everything in between grid nodes is implicit: norms and distances take the
supremum over grid pairs only.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import GridError, ShapeMismatchError
from .tensor import GroupElement

__all__ = [
    "RoughPathGrid",
    "CameronMartinPath",
    "lift_piecewise_linear",
    "constant_path",
    "holder_norm",
    "holder_distance",
    "uniform_distance",
    "time_reverse",
    "resample",
    "dilate_path",
    "step_for_p",
    "write_rough_path_csv",
    "read_rough_path_csv",
]


def step_for_p(p: float) -> int:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    step = int(math.floor(p))
    if step > T.MAX_STEP:
        raise ValueError(f"p = {p} needs step {step} > {T.MAX_STEP}")
    return step


@dataclass(frozen=True, eq=False)
class RoughPathGrid:
    """Absolute group values of a rough path on a strictly increasing grid.

    ``levels[k]`` has shape ``(M + 1,) + (d,) * (k + 1)``.
    """

    times: np.ndarray
    levels: tuple
    p: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        levels = tuple(np.asarray(lev, dtype=float) for lev in self.levels)
        if times.ndim != 1 or times.size < 2:
            raise GridError("a rough path needs at least two grid times")
        if not np.all(np.diff(times) > 0):
            raise GridError("grid times must be strictly increasing")
        if times[0] != 0.0:
            raise GridError("grid must start at t = 0")
        step = step_for_p(self.p)
        if len(levels) != step:
            raise ShapeMismatchError(f"p = {self.p} requires {step} levels, got {len(levels)}")
        d = levels[0].shape[1]
        for k, lev in enumerate(levels, start=1):
            if lev.shape != (times.size,) + (d,) * k:
                raise ShapeMismatchError(f"level {k} has shape {lev.shape}")
            if np.any(lev[0] != 0.0):
                raise GridError("a rough path must start at the identity")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "levels", levels)

    @property
    def dim(self) -> int:
        return self.levels[0].shape[1]

    @property
    def step(self) -> int:
        return len(self.levels)

    @property
    def holder_exponent(self) -> float:
        return 1.0 / self.p

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def __len__(self):
        return self.times.size

    def point(self, i: int) -> GroupElement:
        return GroupElement(tuple(lev[i] for lev in self.levels))

    def increment(self, i: int, j: int) -> GroupElement:
        """x_{t_i, t_j} = x_{t_i}^{-1} ⊗ x_{t_j}."""
        return T.multiply(T.inverse(self.point(i)), self.point(j))

    def step_increments(self) -> tuple:
        """Batched increments over consecutive grid cells, shape (M, d, ...)."""
        left = tuple(lev[:-1] for lev in self.levels)
        right = tuple(lev[1:] for lev in self.levels)
        return T._mul(T._inv(left), right)

    def index_of(self, t: float) -> int:
        """Index of grid time t (matched to 1e-12 relative to the horizon)."""
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-12 * max(1.0, self.times[-1]):
            raise GridError(f"t = {t!r} is not a grid time")
        return i

    def restrict(self, stop: int) -> "RoughPathGrid":
        """Path on [0, t_stop] (index inclusive)."""
        return RoughPathGrid(self.times[: stop + 1], tuple(lev[: stop + 1] for lev in self.levels), self.p)

    def subsample(self, every: int) -> "RoughPathGrid":
        if (self.times.size - 1) % every:
            raise GridError("subsampling factor must divide the number of cells")
        sl = slice(None, None, every)
        return RoughPathGrid(self.times[sl], tuple(lev[sl] for lev in self.levels), self.p)

    def with_p(self, p: float) -> "RoughPathGrid":
        """Same points reinterpreted with another p of equal step."""
        return RoughPathGrid(self.times, self.levels, p)

    def max_shuffle_defect(self) -> float:
        return T.shuffle_defect(self.levels)


@dataclass(frozen=True)
class CameronMartinPath:
    """Piecewise-linear finite-energy path h: [0, T] -> R^d."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or times.size < 2 or values.shape[0] != times.size:
            raise GridError("need matching times and values, at least two samples")
        if not np.all(np.diff(times) > 0):
            raise GridError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def energy(self) -> float:
        """½∫|ḣ|² dt, exact for piecewise-linear h."""
        dh = np.diff(self.values, axis=0)
        dt = np.diff(self.times)
        return 0.5 * float(np.sum(np.sum(dh ** 2, axis=1) / dt))

    @classmethod
    def linear(cls, velocity, horizon: float, n: int = 2):
        v = np.atleast_1d(np.asarray(velocity, dtype=float))
        t = np.linspace(0.0, horizon, n)
        return cls(t, t[:, None] * v[None, :])

    @classmethod
    def zero(cls, dim: int, horizon: float, n: int = 2):
        return cls(np.linspace(0.0, horizon, n), np.zeros((n, dim)))


def _running_signature(values: np.ndarray, step: int) -> tuple:
    """Signature levels of the piecewise-linear interpolant at every node."""
    x1 = values - values[0]
    delta = np.diff(values, axis=0)
    m, d = delta.shape
    out = [x1]
    if step >= 2:
        prev1 = x1[:-1]
        terms = 0.5 * delta[:, :, None] * delta[:, None, :] + prev1[:, :, None] * delta[:, None, :]
        x2 = np.zeros((m + 1, d, d))
        np.cumsum(terms, axis=0, out=x2[1:])
        out.append(x2)
    if step >= 3:
        prev2 = x2[:-1]
        dd = delta[:, :, None] * delta[:, None, :]
        terms = (dd[:, :, :, None] * delta[:, None, None, :] / 6.0
                 + prev2[:, :, :, None] * delta[:, None, None, :]
                 + 0.5 * prev1[:, :, None, None] * dd[:, None, :, :])
        x3 = np.zeros((m + 1, d, d, d))
        np.cumsum(terms, axis=0, out=x3[1:])
        out.append(x3)
    return tuple(out)


def lift_piecewise_linear(times, values, step: int | None = None, p: float | None = None) -> RoughPathGrid:
    """Exact step-N signature of the piecewise-linear interpolant of samples.

    Either ``step`` or ``p`` must be given; ``p`` defaults to ``step``.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if times.size < 2 or values.shape[0] != times.size:
        raise GridError("need at least two samples with matching times")
    if not np.all(np.diff(times) > 0):
        raise GridError("sample times must be strictly increasing")
    if p is None:
        if step is None:
            raise ValueError("give step or p")
        p = float(step)
    step = step_for_p(p)
    return RoughPathGrid(times - times[0], _running_signature(values, step), p)


def constant_path(dim: int, times, p: float = 1.0) -> RoughPathGrid:
    times = np.asarray(times, dtype=float)
    return RoughPathGrid(times, T._identity(dim, step_for_p(p), (times.size,)), p)


def dilate_path(eps: float, x: RoughPathGrid) -> RoughPathGrid:
    return RoughPathGrid(x.times, T._dilate(eps, x.levels), x.p)


def _pair_sup(x: RoughPathGrid, y: RoughPathGrid | None, p: float) -> float:
    # sup over i < j of ‖x_{ij}^{-1} y_{ij}‖ / |t_j - t_i|^{1/p}  (or ‖x_{ij}‖ when y is None)
    n = x.times.size
    best = 0.0
    for i in range(n - 1):
        xi_inv = T._inv(tuple(lev[i] for lev in x.levels))
        inc_x = T._mul(xi_inv, tuple(lev[i + 1:] for lev in x.levels))
        if y is not None:
            yi_inv = T._inv(tuple(lev[i] for lev in y.levels))
            inc_y = T._mul(yi_inv, tuple(lev[i + 1:] for lev in y.levels))
            inc_x = T._mul(T._inv(inc_x), inc_y)
        ratio = T._norm(inc_x) / (x.times[i + 1:] - x.times[i]) ** (1.0 / p)
        best = max(best, float(np.max(ratio)))
    return best


def holder_norm(x: RoughPathGrid) -> float:
    """Grid 1/p-Hölder norm sup_{i<j} ‖x_{t_i,t_j}‖ / |t_j - t_i|^{1/p}."""
    return _pair_sup(x, None, x.p)


def _check_same_grid(x: RoughPathGrid, y: RoughPathGrid):
    if x.dim != y.dim or x.step != y.step:
        raise ShapeMismatchError("paths differ in dimension or step")
    if x.p != y.p:
        raise ShapeMismatchError(f"paths differ in p: {x.p} vs {y.p}")
    if x.times.shape != y.times.shape or not np.array_equal(x.times, y.times):
        raise GridError("paths live on different grids; resample first")


def _same_points(x: RoughPathGrid, y: RoughPathGrid) -> bool:
    # inverse-then-multiply leaves O(1e-16) residue that the k-th root would inflate
    return all(np.array_equal(a, b) for a, b in zip(x.levels, y.levels))


def holder_distance(x: RoughPathGrid, y: RoughPathGrid) -> float:
    """Grid 1/p-Hölder distance sup ‖x_{s,t}^{-1} ⊗ y_{s,t}‖ / |t - s|^{1/p}."""
    _check_same_grid(x, y)
    if _same_points(x, y):
        return 0.0
    return _pair_sup(x, y, x.p)


def uniform_distance(x: RoughPathGrid, y: RoughPathGrid) -> float:
    """sup_i d(x_{t_i}, y_{t_i}) in the group metric."""
    _check_same_grid(x, y)
    if _same_points(x, y):
        return 0.0
    return float(np.max(T._norm(T._mul(T._inv(x.levels), y.levels))))


def time_reverse(x: RoughPathGrid, t: float) -> RoughPathGrid:
    """Reversed path s ↦ x_t^{-1} ⊗ x_{t-s} on [0, t], started at the identity."""
    k = x.index_of(t)
    if k == 0:
        raise GridError("time reversal needs t > 0")
    return _reverse_upto(x, k)


def _reverse_upto(x: RoughPathGrid, k: int) -> RoughPathGrid:
    tk = x.times[k]
    times = tk - x.times[k::-1]
    times[0] = 0.0
    xt_inv = T._inv(tuple(lev[k] for lev in x.levels))
    pts = T._mul(xt_inv, tuple(lev[k::-1] for lev in x.levels))
    pts = tuple(lev.copy() for lev in pts)
    for lev in pts:
        lev[0] = 0.0
    return RoughPathGrid(times, pts, x.p)


def resample(x: RoughPathGrid, new_times) -> RoughPathGrid:
    """Evaluate x at new grid times by geodesic interpolation inside cells.

    Inside the cell [t_i, t_{i+1}] the point is x_{t_i} ⊗ exp(θ log x_{t_i,t_{i+1}}),
    θ = (τ - t_i)/(t_{i+1} - t_i).  Nodes that coincide with old grid times are
    copied verbatim.
    """
    new_times = np.asarray(new_times, dtype=float)
    if new_times.ndim != 1 or new_times.size < 2 or new_times[0] != 0.0:
        raise GridError("new grid must start at 0 and have at least two nodes")
    if not np.all(np.diff(new_times) > 0):
        raise GridError("new grid times must be strictly increasing")
    if new_times[-1] > x.times[-1]:
        raise GridError("cannot resample beyond the path horizon")
    if new_times.shape == x.times.shape and np.array_equal(new_times, x.times):
        return x
    cell = np.clip(np.searchsorted(x.times, new_times, side="right") - 1, 0, x.times.size - 2)
    exact = x.times[cell] == new_times
    theta = (new_times - x.times[cell]) / (x.times[cell + 1] - x.times[cell])
    base = tuple(lev[cell] for lev in x.levels)
    incs = tuple(lev[cell] for lev in x.step_increments())
    logs = T._log(incs)
    frac = T._exp(tuple(th * lev for th, lev in zip(_bcast(theta, logs), logs)))
    pts = T._mul(base, frac)
    pts = tuple(np.where(_bcast_mask(exact, lev), b, lev) for b, lev in zip(base, pts))
    return RoughPathGrid(new_times, pts, x.p)


def _bcast(theta, levels):
    return [theta.reshape(theta.shape + (1,) * (lev.ndim - 1)) for lev in levels]


def _bcast_mask(mask, lev):
    return mask.reshape(mask.shape + (1,) * (lev.ndim - 1))


# --- CSV serialization -------------------------------------------------------

def _level_columns(dim: int, step: int) -> list[str]:
    cols = ["t"]
    for k in range(1, step + 1):
        for idx in itertools.product(range(1, dim + 1), repeat=k):
            cols.append(f"level{k}_" + "".join(str(i) for i in idx))
    return cols


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_rough_path_csv(x: RoughPathGrid, path, p_comment: bool = True) -> None:
    """Write ``t, level1_<i>, level2_<ij>, level3_<ijk>`` rows, 17 significant digits."""
    if x.dim > 9:
        raise ShapeMismatchError("CSV column naming supports d <= 9")
    buf = io.StringIO()
    if p_comment:
        buf.write(f"# p={_fmt(x.p)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_level_columns(x.dim, x.step))
    flat = [lev.reshape(lev.shape[0], -1) for lev in x.levels]
    for i, t in enumerate(x.times):
        w.writerow([_fmt(t)] + [_fmt(v) for f in flat for v in f[i]])
    Path(path).write_text(buf.getvalue())


def read_rough_path_csv(path, p: float | None = None) -> RoughPathGrid:
    text = Path(path).read_text().splitlines()
    if text and text[0].startswith("#"):
        meta = text.pop(0)[1:].strip()
        if p is None and meta.startswith("p="):
            p = float(meta[2:])
    rows = list(csv.reader(text))
    header = [h.strip() for h in rows[0]]
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    step = max(int(h[5]) for h in header[1:])
    dim = sum(1 for h in header if h.startswith("level1_"))
    if header != _level_columns(dim, step):
        raise GridError("unrecognised rough-path CSV header")
    if p is None:
        p = float(step)
    levels, col = [], 1
    for k in range(1, step + 1):
        n = dim ** k
        levels.append(data[:, col: col + n].reshape((-1,) + (dim,) * k))
        col += n
    return RoughPathGrid(data[:, 0], tuple(levels), p)
