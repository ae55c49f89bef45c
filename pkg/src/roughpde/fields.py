"""Vector field sets V = (V_1, ..., V_d) on R^e with analytic derivatives.

Derivative tensors use the layout ``(..., d, e, e, ..., e)``:
``D^k V[..., i, a, b1, ..., bk] = ∂^k V_i^a / ∂y^{b1} ... ∂y^{bk}``.
"""
from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np
import sympy as sp

from .errors import DerivativeCheckError, SmoothnessError

__all__ = ["VectorFieldSet", "SymbolicFieldSet", "check_derivatives", "zero_fields"]


class VectorFieldSet:
    """d vector fields on R^e given by derivative evaluators.

    ``derivatives[k]`` maps points of shape ``(..., e)`` to the k-th
    derivative tensor; ``order`` is the highest available k.  With
    ``check=True`` the derivatives up to order 3 are compared with central
    differences on :func:`default_probes` at construction.
    """

    def __init__(self, d: int, e: int, derivatives: Sequence[Callable], name: str = "fields",
                 check: bool = True):
        if d < 1 or e < 1:
            raise ValueError("need d >= 1 and e >= 1")
        self.d = d
        self.e = e
        self.name = name
        self._derivs = list(derivatives)
        if check:
            self.verify()

    def verify(self) -> float:
        probes = default_probes(self.e)
        vals = self.derivative(0)(probes)
        if not np.all(np.isfinite(vals)):
            raise DerivativeCheckError(f"{self.name}: non-finite field values on the probe box")
        return check_derivatives(self, probes)

    @property
    def order(self) -> int:
        return len(self._derivs) - 1

    def derivative(self, k: int) -> Callable:
        if k > self.order:
            raise SmoothnessError(f"{self.name}: derivative of order {k} unavailable (order {self.order})")
        return self._derivs[k]

    def __call__(self, y):
        return self.derivative(0)(y)

    def require(self, k: int, why: str = "") -> None:
        if self.order < k:
            raise SmoothnessError(
                f"{self.name} has smoothness order {self.order}, {why or 'operation'} needs {k}"
            )

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, d={self.d}, e={self.e}, order={self.order})"


def _compile(exprs, syms, shape):
    """Vectorised evaluator for a dense array of sympy expressions."""
    flat = list(sp.flatten(exprs)) if isinstance(exprs, (list, tuple)) else [exprs]
    flat = [sp.sympify(x) for x in flat]
    nz = [i for i, x in enumerate(flat) if x != 0]
    size = int(np.prod(shape)) if shape else 1
    fn = sp.lambdify(syms, [flat[i] for i in nz], modules="numpy", cse=True) if nz else None

    def evaluate(y):
        y = np.asarray(y, dtype=float)
        batch = y.shape[:-1]
        out = np.zeros(batch + (size,))
        if fn is not None:
            vals = fn(*np.moveaxis(y, -1, 0))
            for i, v in zip(nz, vals):
                out[..., i] = v
        return out.reshape(batch + tuple(shape))

    return evaluate


class SymbolicFieldSet(VectorFieldSet):
    """Fields given as sympy expressions; derivatives compiled on demand.

    ``exprs[i][a]`` is the a-th component of V_i in the symbols ``syms``.
    """

    def __init__(self, exprs, syms, name: str = "symbolic", max_order: int = 5, check: bool = True):
        self.syms = tuple(syms)
        e = len(self.syms)
        self.exprs = [[sp.sympify(c) for c in field] for field in exprs]
        d = len(self.exprs)
        if any(len(f) != e for f in self.exprs):
            raise ValueError("each field needs e components")
        self.max_order = max_order
        self._cache: dict[int, Callable] = {}
        super().__init__(d, e, [], name, check)

    @property
    def order(self) -> int:
        return self.max_order

    def derivative(self, k: int) -> Callable:
        if k > self.max_order:
            raise SmoothnessError(f"{self.name}: derivative of order {k} unavailable")
        if k not in self._cache:
            self._cache[k] = _compile(self._tensor(k), self.syms, (self.d,) + (self.e,) * (k + 1))
        return self._cache[k]

    def _tensor(self, k):
        out = []
        for field in self.exprs:
            comp = []
            for c in field:
                if k == 0:
                    comp.append(c)
                else:
                    comp.append(_nested_diff(c, self.syms, k))
            out.append(comp)
        return out

    def bracket(self, i: int, j: int) -> list:
        """[V_i, V_j] = DV_j·V_i - DV_i·V_j as sympy expressions."""
        vi, vj = self.exprs[i], self.exprs[j]
        return [
            sp.simplify(
                sum(sp.diff(vj[a], s) * vi[b] - sp.diff(vi[a], s) * vj[b] for b, s in enumerate(self.syms))
            )
            for a in range(self.e)
        ]

    def with_fields(self, extra: Sequence, prepend: bool = True, name: str | None = None) -> "SymbolicFieldSet":
        extra = [list(f) for f in extra]
        exprs = extra + self.exprs if prepend else self.exprs + extra
        return SymbolicFieldSet(exprs, self.syms, name or f"{self.name}+{len(extra)}", self.max_order)

    def scaled(self, factor: float) -> "SymbolicFieldSet":
        return SymbolicFieldSet([[factor * c for c in f] for f in self.exprs], self.syms,
                                f"{factor}*{self.name}", self.max_order)


def _nested_diff(expr, syms, k):
    """Nested list of all k-th partial derivatives of expr."""
    if k == 0:
        return expr
    return [_nested_diff(sp.diff(expr, s), syms, k - 1) for s in syms]


def zero_fields(d: int, e: int) -> SymbolicFieldSet:
    syms = sp.symbols(f"y1:{e + 1}")
    return SymbolicFieldSet([[0] * e for _ in range(d)], syms, name="zero")


def check_derivatives(fields: VectorFieldSet, probes, h: float = 1e-4, tol: float = 1e-5,
                      max_order: int = 3) -> float:
    """Compare analytic derivatives with central differences of the order below.

    Returns the largest scaled discrepancy and raises DerivativeCheckError
    when it exceeds ``tol``.
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    worst = 0.0
    for k in range(1, min(fields.order, max_order) + 1):
        lower = fields.derivative(k - 1)
        exact = fields.derivative(k)(probes)
        for b in range(fields.e):
            step = np.zeros(fields.e)
            step[b] = h
            fd = (lower(probes + step) - lower(probes - step)) / (2 * h)
            err = np.abs(fd - exact[..., b]) / np.maximum(1.0, np.abs(exact[..., b]))
            worst = max(worst, float(np.max(err)) if err.size else 0.0)
    if worst > tol:
        raise DerivativeCheckError(f"{fields.name}: analytic derivatives off by {worst:.3g} (> {tol})")
    return worst


def default_probes(e: int, n: int = 7, radius: float = 2.0) -> np.ndarray:
    axes = [np.linspace(-radius, radius, n)] * e if e <= 2 else [np.linspace(-radius, radius, 3)] * e
    return np.array(list(itertools.product(*axes)))
