"""Arithmetic in the step-N free nilpotent group G^N(R^d), N <= 3.

Elements are stored densely as a tuple of levels ``(x1, x2, x3)`` with
shapes ``(d,)``, ``(d, d)``, ``(d, d, d)``; the scalar level 0 is implicit
and equal to 1.  The private ``_``-prefixed helpers work on bare level
tuples and broadcast over any leading batch axes, which is what the path
and solver modules use internally.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotLieError, ShapeMismatchError

__all__ = [
    "GroupElement",
    "LieElement",
    "identity",
    "multiply",
    "inverse",
    "exp",
    "log",
    "homogeneous_norm",
    "dilate",
    "group_distance",
    "shuffle_defect",
    "MAX_STEP",
]

MAX_STEP = 3


def _tprod(a, ka, b, kb):
    """Tensor product of a rank-``ka`` level and a rank-``kb`` level, batched."""
    a_exp = a.reshape(a.shape + (1,) * kb)
    b_exp = b.reshape(b.shape[: b.ndim - kb] + (1,) * ka + b.shape[b.ndim - kb:])
    return a_exp * b_exp


def _mul(a, b):
    n = len(a)
    out = [a[0] + b[0]]
    if n >= 2:
        out.append(a[1] + b[1] + _tprod(a[0], 1, b[0], 1))
    if n >= 3:
        out.append(a[2] + b[2] + _tprod(a[1], 2, b[0], 1) + _tprod(a[0], 1, b[1], 2))
    return tuple(out)


def _inv(a):
    # (1 + x)^{-1} = 1 - x + x^2 - x^3 in the truncated algebra
    n = len(a)
    out = [-a[0]]
    if n >= 2:
        out.append(-a[1] + _tprod(a[0], 1, a[0], 1))
    if n >= 3:
        a11 = _tprod(a[0], 1, a[0], 1)
        out.append(-a[2] + _tprod(a[0], 1, a[1], 2) + _tprod(a[1], 2, a[0], 1)
                   - _tprod(a11, 2, a[0], 1))
    return tuple(out)


def _exp(a):
    n = len(a)
    out = [a[0].copy()]
    if n >= 2:
        out.append(a[1] + 0.5 * _tprod(a[0], 1, a[0], 1))
    if n >= 3:
        a11 = _tprod(a[0], 1, a[0], 1)
        out.append(a[2] + 0.5 * (_tprod(a[0], 1, a[1], 2) + _tprod(a[1], 2, a[0], 1))
                   + _tprod(a11, 2, a[0], 1) / 6.0)
    return tuple(out)


def _log(g):
    n = len(g)
    out = [g[0].copy()]
    if n >= 2:
        out.append(g[1] - 0.5 * _tprod(g[0], 1, g[0], 1))
    if n >= 3:
        g11 = _tprod(g[0], 1, g[0], 1)
        out.append(g[2] - 0.5 * (_tprod(g[0], 1, g[1], 2) + _tprod(g[1], 2, g[0], 1))
                   + _tprod(g11, 2, g[0], 1) / 3.0)
    return tuple(out)


def _dilate(eps, g):
    return tuple(eps ** (k + 1) * lev for k, lev in enumerate(g))


def _norm(g):
    """max_k |level_k|_F^(1/k), batched over leading axes."""
    out = None
    for k, lev in enumerate(g, start=1):
        f = np.sqrt(np.sum(lev.reshape(lev.shape[: lev.ndim - k] + (-1,)) ** 2, axis=-1))
        f = f ** (1.0 / k)
        out = f if out is None else np.maximum(out, f)
    return out


def _identity(dim, step, batch=()):
    return tuple(np.zeros(tuple(batch) + (dim,) * k) for k in range(1, step + 1))


@dataclass(frozen=True, eq=False)
class GroupElement:
    """Truncated group element of G^N(R^d)."""

    levels: tuple

    def __post_init__(self):
        levels = tuple(np.asarray(lev, dtype=float) for lev in self.levels)
        if not 1 <= len(levels) <= MAX_STEP:
            raise ShapeMismatchError(f"step must be in 1..{MAX_STEP}, got {len(levels)}")
        d = levels[0].shape[0] if levels[0].ndim == 1 else None
        if d is None or d < 1:
            raise ShapeMismatchError("level 1 must be a non-empty vector")
        for k, lev in enumerate(levels, start=1):
            if lev.shape != (d,) * k:
                raise ShapeMismatchError(f"level {k} has shape {lev.shape}, expected {(d,) * k}")
        object.__setattr__(self, "levels", levels)

    @property
    def dim(self) -> int:
        return self.levels[0].shape[0]

    @property
    def step(self) -> int:
        return len(self.levels)

    def level(self, k: int) -> np.ndarray:
        return self.levels[k - 1]

    def allclose(self, other: "GroupElement", atol: float = 1e-12) -> bool:
        _check_compatible(self, other)
        return all(np.allclose(a, b, rtol=0.0, atol=atol) for a, b in zip(self.levels, other.levels))

    def __repr__(self):
        return f"GroupElement(dim={self.dim}, step={self.step}, level1={self.levels[0]!r})"


@dataclass(frozen=True, eq=False)
class LieElement(GroupElement):
    """Element of the step-N free nilpotent Lie algebra (same dense layout)."""

    def __repr__(self):
        return f"LieElement(dim={self.dim}, step={self.step}, level1={self.levels[0]!r})"


def _check_compatible(g, h):
    if g.dim != h.dim or g.step != h.step:
        raise ShapeMismatchError(
            f"incompatible elements: (dim={g.dim}, step={g.step}) vs (dim={h.dim}, step={h.step})"
        )


def identity(dim: int, step: int) -> GroupElement:
    return GroupElement(_identity(dim, step))


def multiply(g: GroupElement, h: GroupElement) -> GroupElement:
    """Truncated tensor product g ⊗ h."""
    _check_compatible(g, h)
    return GroupElement(_mul(g.levels, h.levels))


def inverse(g: GroupElement) -> GroupElement:
    return GroupElement(_inv(g.levels))


def exp(a: LieElement, tol: float = 1e-10) -> GroupElement:
    """Truncated exponential of a Lie element.

    Raises NotLieError when the level-2 part has a symmetric component
    above ``tol``.
    """
    if a.step >= 2:
        sym = 0.5 * (a.levels[1] + a.levels[1].T)
        if np.max(np.abs(sym)) > tol:
            raise NotLieError("level-2 part of a Lie element must be antisymmetric")
    return GroupElement(_exp(a.levels))


def log(g: GroupElement) -> LieElement:
    return LieElement(_log(g.levels))


def homogeneous_norm(g: GroupElement) -> float:
    return float(_norm(g.levels))


def dilate(eps: float, g: GroupElement) -> GroupElement:
    return GroupElement(_dilate(eps, g.levels))


def group_distance(g: GroupElement, h: GroupElement) -> float:
    """‖g^{-1} ⊗ h‖."""
    _check_compatible(g, h)
    return float(_norm(_mul(_inv(g.levels), h.levels)))


def shuffle_defect(g) -> float:
    """Largest violation of the shuffle identities up to the element's step.

    Accepts a GroupElement or a bare (possibly batched) level tuple.
    Level 2: g^i g^j = g^{ij} + g^{ji}.
    Level 3: g^i g^{jk} = g^{ijk} + g^{jik} + g^{jki}.
    """
    levels = g.levels if isinstance(g, GroupElement) else g
    defect = 0.0
    if len(levels) >= 2:
        x1, x2 = levels[0], levels[1]
        lhs = _tprod(x1, 1, x1, 1)
        rhs = x2 + np.swapaxes(x2, -1, -2)
        defect = max(defect, float(np.max(np.abs(lhs - rhs))))
    if len(levels) >= 3:
        x3 = levels[2]
        lhs = _tprod(x1, 1, x2, 2)  # [i, j, k] = g^i g^{jk}
        # g^{ijk} + g^{jik} + g^{jki} expressed with axes (i, j, k)
        rhs = x3 + np.swapaxes(x3, -3, -2) + np.moveaxis(x3, -1, -3)
        defect = max(defect, float(np.max(np.abs(lhs - rhs))))
    return defect
