"""Named vector fields, coefficients and initial data with analytic derivatives.

Vector fields are sympy expressions, so every derivative order and every
Lie bracket is exact; coefficients and initial data are closed-form numpy.
"""
from __future__ import annotations

import numpy as np
import sympy as sp

from .errors import ConfigError
from .fields import SymbolicFieldSet, zero_fields
from .parabolic import EllipticCoefficients
from .transport import InitialDatum

__all__ = ["field_preset", "coefficient_preset", "datum_preset", "FIELD_PRESETS", "COEFF_PRESETS", "DATUM_PRESETS"]


def _syms(e):
    return sp.symbols(f"y1:{e + 1}")


def _zero(d=1, e=1):
    return zero_fields(int(d), int(e))


def _constant(d=1, e=1, value=1.0):
    """V_i ≡ value (scalar broadcast, or a flat list of d*e entries)."""
    d, e = int(d), int(e)
    vals = np.broadcast_to(np.asarray(value, dtype=float).ravel(), (d * e,)) if np.size(value) in (1, d * e) else None
    if vals is None:
        raise ConfigError("constant preset needs 1 or d*e values")
    rows = vals.reshape(d, e)
    return SymbolicFieldSet([[float(c) for c in r] for r in rows], _syms(e), name="constant")


def _linear(d=1, e=1, kappa=1.0):
    """V_i(y) = κ_i y."""
    d, e = int(d), int(e)
    k = np.broadcast_to(np.asarray(kappa, dtype=float).ravel(), (d,)) if np.size(kappa) in (1, d) else None
    if k is None:
        raise ConfigError("linear preset needs 1 or d values of kappa")
    y = _syms(e)
    return SymbolicFieldSet([[float(k[i]) * y[a] for a in range(e)] for i in range(d)], y, name="linear")


def _nonlinear(d=2, e=1, amplitude=1.0):
    """Bounded smooth fields built from sin/cos; non-commuting for d >= 2."""
    d, e = int(d), int(e)
    y = _syms(e)
    A = float(amplitude)
    exprs = []
    for i in range(d):
        comp = []
        for a in range(e):
            other = y[(a + i) % e]
            if i % 2 == 0:
                comp.append(A * (0.5 + 0.4 * sp.sin(other + 0.3 * i)))
            else:
                comp.append(A * 0.3 * sp.cos(other - 0.2 * a))
        exprs.append(comp)
    return SymbolicFieldSet(exprs, y, name="nonlinear")


def _rotation(amplitude=0.5):
    """d = e = 2: V_1 = A(-sin y2, sin y1), V_2 = A(cos y2, cos y1)."""
    y1, y2 = _syms(2)
    A = float(amplitude)
    return SymbolicFieldSet([[-A * sp.sin(y2), A * sp.sin(y1)], [A * sp.cos(y2), A * sp.cos(y1)]],
                            (y1, y2), name="rotation")


def _commuting(amplitude=0.5):
    """d = e = 2: V_1 = (A sin y1, 0), V_2 = (0, A cos y2); [V_1, V_2] = 0."""
    y1, y2 = _syms(2)
    A = float(amplitude)
    return SymbolicFieldSet([[A * sp.sin(y1), 0], [0, A * sp.cos(y2)]], (y1, y2), name="commuting")


FIELD_PRESETS = {
    "zero": _zero,
    "constant": _constant,
    "linear": _linear,
    "nonlinear": _nonlinear,
    "rotation": _rotation,
    "commuting": _commuting,
}


def field_preset(name: str, **params) -> SymbolicFieldSet:
    try:
        factory = FIELD_PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown vector-field preset {name!r}; known: {sorted(FIELD_PRESETS)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for preset {name!r}: {exc}") from None


# --- coefficients -------------------------------------------------------------


def _heat(e=1, sigma=1.0):
    e, s2 = int(e), float(sigma) ** 2
    eye = np.eye(e)
    return EllipticCoefficients(
        e,
        lambda t, y: np.broadcast_to(s2 * eye, (y.shape[0], e, e)).copy(),
        lambda t, y: np.zeros((y.shape[0], e)),
        lam=s2, beta=1.0, holder_const=1.0, name="heat",
    )


def _variable(e=1, sigma=1.0, drift=0.2):
    """a = σ²(1 + 0.25 sin(Σy) + 0.1 sin t) I, b = drift · cos(y), Hölder with β = 1."""
    e, s2, c = int(e), float(sigma) ** 2, float(drift)
    eye = np.eye(e)

    def a(t, y):
        scale = s2 * (1.0 + 0.25 * np.sin(np.sum(y, axis=-1)) + 0.1 * np.sin(t))
        return scale[:, None, None] * eye

    def b(t, y):
        return c * np.cos(y)

    return EllipticCoefficients(e, a, b, lam=0.65 * s2, beta=1.0,
                                holder_const=max(1.0, s2 * (0.25 * np.sqrt(e) + 0.1) + c) * 2.0,
                                time_dependent=True, name="variable")


COEFF_PRESETS = {"heat": _heat, "variable": _variable}


def coefficient_preset(name: str, **params) -> EllipticCoefficients:
    try:
        factory = COEFF_PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown coefficient preset {name!r}; known: {sorted(COEFF_PRESETS)}") from None
    return factory(**params)


# --- initial data -------------------------------------------------------------


def _gaussian(e=1, width=1.0, center=0.0):
    e, w = int(e), float(width)
    c = np.broadcast_to(np.asarray(center, dtype=float), (e,))

    def value(y):
        return np.exp(-np.sum((y - c) ** 2, axis=-1) / (2 * w * w))

    def grad(y):
        return -(y - c) / (w * w) * value(y)[..., None]

    return InitialDatum(e, value, grad, cls="Ck", bounds=(0.0, 1.0), name="gaussian")


def _tanh(e=1, scale=1.0):
    """tanh(scale · y_1)."""
    e, k = int(e), float(scale)

    def value(y):
        return np.tanh(k * y[..., 0])

    def grad(y):
        g = np.zeros(y.shape)
        g[..., 0] = k / np.cosh(k * y[..., 0]) ** 2
        return g

    return InitialDatum(e, value, grad, cls="Ck", bounds=(-1.0, 1.0), name="tanh")


def _constant_datum(e=1, value=1.0):
    e, c = int(e), float(value)
    return InitialDatum(e, lambda y: np.full(y.shape[:-1], c), lambda y: np.zeros(y.shape),
                        cls="Ck", bounds=(c, c), name="constant")


def _bump(e=1, width=1.0):
    """1 / (1 + |y|²/w²)²: smooth, bounded, slowly decaying."""
    e, w = int(e), float(width)

    def value(y):
        return 1.0 / (1.0 + np.sum(y * y, axis=-1) / (w * w)) ** 2

    def grad(y):
        r = 1.0 + np.sum(y * y, axis=-1) / (w * w)
        return (-4.0 / (w * w) * r ** -3)[..., None] * y

    return InitialDatum(e, value, grad, cls="C1b", bounds=(0.0, 1.0), name="bump")


def _linear_datum(e=1):
    """Σ y_a: unbounded."""
    e = int(e)
    return InitialDatum(e, lambda y: np.sum(y, axis=-1), lambda y: np.ones(y.shape),
                        cls="Ck", bounds=None, name="linear")


DATUM_PRESETS = {
    "gaussian": _gaussian,
    "tanh": _tanh,
    "constant": _constant_datum,
    "bump": _bump,
    "linear": _linear_datum,
}


def datum_preset(name: str, **params) -> InitialDatum:
    try:
        factory = DATUM_PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown initial-datum preset {name!r}; known: {sorted(DATUM_PRESETS)}") from None
    return factory(**params)
