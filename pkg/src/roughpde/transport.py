"""First-order rough transport: u(t, y) = φ(π_(V)(0, y; ←x^t)_t).

No spatial discretisation of the equation is involved; every grid value is
obtained by running the reversed-driver flow from the grid point and
evaluating φ there.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rde
from .errors import DerivativeCheckError, ShapeMismatchError
from .fields import VectorFieldSet, default_probes
from .grid import ScalarField, SpaceTimeGrid
from .paths import RoughPathGrid

__all__ = ["InitialDatum", "DATUM_CLASSES", "solve_transport", "solution_map_modulus", "UnboundedDatumWarning"]

DATUM_CLASSES = ("C1b", "BUC", "Ck")


class UnboundedDatumWarning(UserWarning):
    """Solutions with unbounded φ are only meaningful uniformly on compacts."""


@dataclass(frozen=True)
class InitialDatum:
    """Initial condition φ with its gradient.

    ``value`` maps (..., e) to (...); ``gradient`` maps (..., e) to (..., e).
    ``bounds`` is (inf φ, sup φ) when known; ``None`` marks unbounded data.
    The gradient is checked against central differences on construction.
    """

    e: int
    value: Callable
    gradient: Callable
    cls: str = "Ck"
    bounds: tuple | None = None
    name: str = "phi"
    check_h: float = 1e-4
    check_tol: float = 1e-5

    def __post_init__(self):
        if self.cls not in DATUM_CLASSES:
            raise ValueError(f"datum class must be one of {DATUM_CLASSES}")
        probes = default_probes(self.e)
        g = np.asarray(self.gradient(probes), dtype=float)
        if g.shape != probes.shape:
            raise ShapeMismatchError(f"{self.name}: gradient has shape {g.shape}, expected {probes.shape}")
        worst = 0.0
        for a in range(self.e):
            step = np.zeros(self.e)
            step[a] = self.check_h
            fd = (self.value(probes + step) - self.value(probes - step)) / (2 * self.check_h)
            worst = max(worst, float(np.max(np.abs(fd - g[:, a]) / np.maximum(1.0, np.abs(g[:, a])))))
        if worst > self.check_tol:
            raise DerivativeCheckError(f"{self.name}: gradient off by {worst:.3g}")

    @property
    def bounded(self) -> bool:
        return self.bounds is not None

    def __call__(self, y):
        return self.value(np.asarray(y, dtype=float))


def _output_indices(x: RoughPathGrid, times) -> list[int]:
    return [x.index_of(t) for t in times]


def solve_transport(V: VectorFieldSet, phi: InitialDatum, x: RoughPathGrid, grid: SpaceTimeGrid,
                    substeps: int = 1, scheme: str = "euler") -> ScalarField:
    """u(t, ·) = φ ∘ (inverse flow at t) on ``grid.box`` at ``grid.output_times``.

    Output times must be driver grid times.
    """
    if phi.e != V.e or grid.box.e != V.e:
        raise ShapeMismatchError("state dimension of V, φ and the grid must agree")
    if not phi.bounded:
        warnings.warn(f"{phi.name} is unbounded; the transport solution is only valid "
                      "uniformly on compact sets", UnboundedDatumWarning, stacklevel=2)
    pts = grid.box.points()
    out = np.empty((len(grid.output_times), pts.shape[0]))
    for n, (t, k) in enumerate(zip(grid.output_times, _output_indices(x, grid.output_times))):
        z = rde.inverse_flow(V, pts, x, x.times[k], substeps, scheme)
        out[n] = phi(z)
    return ScalarField(np.array(grid.output_times), grid.box, out)


def solution_map_modulus(V: VectorFieldSet, phi: InitialDatum, x: RoughPathGrid,
                         x_perturbed: RoughPathGrid, grid: SpaceTimeGrid, **kw) -> float:
    """sup |Π(φ; x) - Π(φ; x_perturbed)| over the grid."""
    if x_perturbed is x:
        return 0.0
    u = solve_transport(V, phi, x, grid, **kw)
    w = solve_transport(V, phi, x_perturbed, grid, **kw)
    return u.sup_distance(w)
