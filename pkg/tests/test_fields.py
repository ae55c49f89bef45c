import numpy as np
import pytest
import sympy as sp

from roughpde.errors import DerivativeCheckError, SmoothnessError
from roughpde.fields import SymbolicFieldSet, VectorFieldSet, check_derivatives, default_probes, zero_fields
from roughpde.presets import FIELD_PRESETS, field_preset


@pytest.mark.parametrize("name", sorted(FIELD_PRESETS))
def test_presets_pass_derivative_check(name):
    V = field_preset(name)
    assert check_derivatives(V, default_probes(V.e), max_order=4) < 1e-5


def test_layout_of_derivative_tensors():
    y1, y2 = sp.symbols("y1 y2")
    V = SymbolicFieldSet([[y1 * y2, y1 ** 2], [sp.sin(y2), 0]], (y1, y2))
    p = np.array([[0.5, -1.0]])
    D1 = V.derivative(1)(p)
    assert D1.shape == (1, 2, 2, 2)
    assert D1[0, 0, 0, 1] == pytest.approx(0.5)       # ∂(y1 y2)/∂y2
    assert D1[0, 0, 1, 0] == pytest.approx(1.0)       # ∂(y1²)/∂y1
    assert D1[0, 1, 0, 1] == pytest.approx(np.cos(-1.0))
    D2 = V.derivative(2)(p)
    np.testing.assert_allclose(D2, np.swapaxes(D2, -1, -2))


def test_bracket_of_rotation_and_commuting():
    rot = field_preset("rotation")
    assert any(sp.simplify(c) != 0 for c in rot.bracket(0, 1))
    com = field_preset("commuting")
    assert all(c == 0 for c in com.bracket(0, 1))


def test_bracket_matches_numeric_formula():
    V = field_preset("rotation", amplitude=0.7)
    br = SymbolicFieldSet([V.bracket(0, 1)], V.syms, check=False)
    y = np.array([[0.3, -1.1], [2.0, 0.4]])
    v, Dv = V(y), V.derivative(1)(y)
    expect = np.einsum("nab,nb->na", Dv[:, 1], v[:, 0]) - np.einsum("nab,nb->na", Dv[:, 0], v[:, 1])
    np.testing.assert_allclose(br(y)[:, 0], expect, atol=1e-13)


def test_with_fields_and_scaling():
    V = field_preset("nonlinear", d=2, e=1)
    W = V.with_fields([[1]], prepend=True)
    assert W.d == 3
    np.testing.assert_allclose(W(np.zeros((1, 1)))[0, 0], 1.0)
    np.testing.assert_allclose(V.scaled(2.0)(np.ones((1, 1))), 2.0 * V(np.ones((1, 1))))


def test_wrong_derivative_is_caught():
    good = field_preset("nonlinear", d=1, e=1)
    with pytest.raises(DerivativeCheckError):
        VectorFieldSet(1, 1, [good.derivative(0), lambda y: 2.0 * good.derivative(1)(y)], name="bad")


def test_non_finite_field_is_caught():
    with pytest.raises(DerivativeCheckError):
        VectorFieldSet(1, 1, [lambda y: np.full(y.shape[:-1] + (1, 1), np.inf)])


def test_smoothness_order():
    V = VectorFieldSet(1, 1, [lambda y: np.ones(y.shape[:-1] + (1, 1))], check=False)
    assert V.order == 0
    with pytest.raises(SmoothnessError):
        V.require(2, "test")
    with pytest.raises(SmoothnessError):
        V.derivative(1)


def test_zero_fields():
    Z = zero_fields(3, 2)
    assert Z(np.ones((4, 2))).shape == (4, 3, 2)
    assert not np.any(Z.derivative(3)(np.ones((4, 2))))
