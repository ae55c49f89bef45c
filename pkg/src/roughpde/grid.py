"""Uniform space boxes, space-time grids and gridded scalar fields."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import GridError, ShapeMismatchError

__all__ = ["Box", "SpaceTimeGrid", "ScalarField", "diagnostics_text", "write_diagnostics_csv", "DIAGNOSTIC_COLUMNS"]

DIAGNOSTIC_COLUMNS = ("t", "ellipticity_lower_bound", "jacobian_cond_max", "out_of_box_fraction")


@dataclass(frozen=True)
class Box:
    """Uniform tensor grid on ∏ [lo_a, hi_a] with n_a nodes per axis.

    Flattened node order is lexicographic with the first axis slowest.
    """

    lo: tuple
    hi: tuple
    n: tuple

    def __post_init__(self):
        lo, hi, n = (tuple(np.atleast_1d(v).tolist()) for v in (self.lo, self.hi, self.n))
        if not len(lo) == len(hi) == len(n):
            raise ShapeMismatchError("lo, hi and n must have one entry per axis")
        if any(b <= a for a, b in zip(lo, hi)):
            raise GridError("box needs lo < hi on every axis")
        if any(int(k) < 3 for k in n):
            raise GridError("need at least 3 nodes per axis")
        object.__setattr__(self, "lo", tuple(float(v) for v in lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in hi))
        object.__setattr__(self, "n", tuple(int(v) for v in n))

    @classmethod
    def cube(cls, lo: float, hi: float, n: int, e: int) -> "Box":
        return cls((lo,) * e, (hi,) * e, (n,) * e)

    @classmethod
    def with_spacing(cls, lo: float, hi: float, h: float, e: int) -> "Box":
        n = int(round((hi - lo) / h)) + 1
        if not np.isclose(lo + (n - 1) * h, hi, rtol=0, atol=1e-9 * max(1.0, abs(hi))):
            raise GridError(f"spacing {h} does not divide [{lo}, {hi}]")
        return cls.cube(lo, hi, n, e)

    @property
    def e(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def h(self) -> np.ndarray:
        return (np.array(self.hi) - np.array(self.lo)) / (np.array(self.n) - 1)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.array(self.lo) + np.array(self.hi))

    @property
    def radius(self) -> np.ndarray:
        return 0.5 * (np.array(self.hi) - np.array(self.lo))

    @property
    def axes(self) -> list:
        return [np.linspace(a, b, k) for a, b, k in zip(self.lo, self.hi, self.n)]

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def boundary_mask(self) -> np.ndarray:
        idx = np.indices(self.n).reshape(self.e, -1)
        upper = np.array(self.n)[:, None] - 1
        return np.any((idx == 0) | (idx == upper), axis=0)

    def inner(self, fraction: float) -> tuple["Box", np.ndarray]:
        """Sub-box of the nodes within ``fraction`` of the radius of the center.

        Returns the sub-box and the flat indices of its nodes in this box.
        """
        if not 0 < fraction <= 1:
            raise GridError("inner fraction must lie in (0, 1]")
        keep = []
        for ax, c, r in zip(self.axes, self.center, self.radius):
            keep.append(np.flatnonzero(np.abs(ax - c) <= fraction * r * (1 + 1e-12)))
        if any(k.size < 3 for k in keep):
            raise GridError("inner region has fewer than 3 nodes per axis")
        sub = Box(tuple(self.axes[a][k[0]] for a, k in enumerate(keep)),
                  tuple(self.axes[a][k[-1]] for a, k in enumerate(keep)),
                  tuple(k.size for k in keep))
        flat = np.ravel_multi_index(np.meshgrid(*keep, indexing="ij"), self.n).ravel()
        return sub, flat

    def clamp(self, y) -> tuple[np.ndarray, np.ndarray]:
        """Project points onto the box; also return the mask of points moved."""
        y = np.asarray(y, dtype=float)
        lo, hi = np.array(self.lo), np.array(self.hi)
        outside = np.any((y < lo) | (y > hi), axis=-1)
        return np.clip(y, lo, hi), outside

    def interpolate(self, values, y) -> np.ndarray:
        """Multilinear interpolation of nodal ``values`` (flat or shaped) at points y in the box."""
        values = np.asarray(values, dtype=float).reshape(self.n)
        rgi = RegularGridInterpolator(self.axes, values, method="linear", bounds_error=False, fill_value=None)
        return rgi(np.asarray(y, dtype=float).reshape(-1, self.e)).reshape(np.shape(y)[:-1])


@dataclass(frozen=True)
class SpaceTimeGrid:
    """A space box plus a time discretisation of [0, horizon].

    ``dt`` is the nominal solver step; ``output_times`` are the times at
    which solutions are stored (default: the horizon only).
    ``eval_fraction`` picks the inner region where composed solutions are
    reported.
    """

    box: Box
    horizon: float = 1.0
    dt: float = 1e-3
    output_times: tuple = ()
    eval_fraction: float = 0.6

    def __post_init__(self):
        if not self.horizon > 0 or not self.dt > 0:
            raise GridError("horizon and dt must be positive")
        outs = tuple(float(t) for t in np.atleast_1d(self.output_times)) or (float(self.horizon),)
        if any(t < 0 or t > self.horizon * (1 + 1e-12) for t in outs):
            raise GridError("output times must lie in [0, horizon]")
        if list(outs) != sorted(set(outs)):
            raise GridError("output times must be strictly increasing")
        object.__setattr__(self, "output_times", outs)

    def uniform_times(self) -> np.ndarray:
        k = max(1, int(np.ceil(self.horizon / self.dt - 1e-9)))
        return np.linspace(0.0, self.horizon, k + 1)

    def solver_times(self, extra=None) -> np.ndarray:
        """Uniform times merged with ``extra`` (e.g. driver nodes) and output times."""
        t = np.concatenate([self.uniform_times(), np.asarray(self.output_times)]
                           + ([np.asarray(extra, dtype=float)] if extra is not None else []))
        t = np.unique(t[t <= self.horizon * (1 + 1e-12)])
        # drop near-duplicates left by floating-point noise
        keep = np.concatenate([[True], np.diff(t) > 1e-12 * max(1.0, self.horizon)])
        return t[keep]

    def eval_region(self) -> tuple[Box, np.ndarray]:
        return self.box.inner(self.eval_fraction)


def _nearest_index(times, t):
    k = int(np.argmin(np.abs(np.asarray(times) - t)))
    if abs(times[k] - t) > 1e-9 * max(1.0, abs(t)):
        raise GridError(f"time {t} is not a grid time")
    return k


@dataclass
class ScalarField:
    """Values u(t_i, y_j) on ``box`` at ``times``; ``values`` has shape (nt,) + box.shape."""

    times: np.ndarray
    box: Box
    values: np.ndarray
    diagnostics: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float).reshape((self.times.size,) + self.box.shape)
        if not np.all(np.isfinite(self.values)):
            raise ShapeMismatchError("scalar field contains non-finite values")

    def at(self, t: float) -> np.ndarray:
        return self.values[_nearest_index(self.times, t)]

    def sup_distance(self, other: "ScalarField") -> float:
        if self.values.shape != other.values.shape:
            raise ShapeMismatchError(f"field shapes differ: {self.values.shape} vs {other.values.shape}")
        return float(np.max(np.abs(self.values - other.values), initial=0.0))

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"y_{a + 1}" for a in range(self.box.e)] + ["u"])
        pts = self.box.points()
        for t, vals in zip(self.times, self.values):
            for y, u in zip(pts, vals.ravel()):
                w.writerow([format(float(v), ".17g") for v in (t, *y, u)])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv_text())


def diagnostics_text(rows) -> str:
    """CSV text for rows keyed by DIAGNOSTIC_COLUMNS."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DIAGNOSTIC_COLUMNS)
    for r in rows:
        w.writerow([format(float(r[c]), ".17g") for c in DIAGNOSTIC_COLUMNS])
    return buf.getvalue()


def write_diagnostics_csv(rows, path) -> None:
    Path(path).write_text(diagnostics_text(rows))
