import warnings

import numpy as np
import pytest
import sympy as sp

from roughpde import drivers as D
from roughpde import paths as P
from roughpde import rde
from roughpde.errors import DerivativeCheckError, GridError
from roughpde.fields import SymbolicFieldSet
from roughpde.grid import Box, SpaceTimeGrid
from roughpde.presets import datum_preset, field_preset
from roughpde.transport import InitialDatum, UnboundedDatumWarning, solution_map_modulus, solve_transport

y = sp.Symbol("y1")


def sine_lift(m, step=3):
    t = np.linspace(0, 1, m + 1)
    return P.lift_piecewise_linear(t, np.sin(t), step=step)


def line_grid(n=41, outputs=(0.5, 1.0), lo=-3.0, hi=3.0):
    return SpaceTimeGrid(Box.cube(lo, hi, n, 1), output_times=outputs)


def test_identity_driver_keeps_datum():
    phi = datum_preset("tanh")
    x = P.constant_path(2, np.linspace(0, 1, 9), p=2.5)
    u = solve_transport(field_preset("nonlinear", d=2, e=1), phi, x, line_grid(outputs=(0.25, 1.0)))
    pts = u.box.points()
    for vals in u.values:
        np.testing.assert_array_equal(vals, phi(pts))


def test_constant_field_closed_form():
    x = D.sample_lift(D.DriverSpec(dim=1, steps=64, seed=12))
    a = 0.8
    u = solve_transport(SymbolicFieldSet([[a]], (y,)), datum_preset("tanh"), x, line_grid())
    pts = u.box.points()[:, 0]
    for t in (0.5, 1.0):
        exact = np.tanh(pts - a * x.levels[0][x.index_of(t), 0])
        assert np.max(np.abs(u.at(t) - exact)) < 1e-8


def test_linear_field_closed_form():
    x = sine_lift(2 ** 10)
    phi = datum_preset("gaussian")
    u = solve_transport(SymbolicFieldSet([[y]], (y,)), phi, x, line_grid())
    pts = u.box.points()
    for t in (0.5, 1.0):
        exact = phi(pts * np.exp(-np.sin(t)))
        assert np.max(np.abs(u.at(t) - exact)) < 1e-5


def test_output_times_must_be_driver_times():
    x = D.sample_lift(D.DriverSpec(dim=2, steps=8))
    with pytest.raises(GridError):
        solve_transport(field_preset("nonlinear", d=2, e=1), datum_preset("tanh"), x, line_grid(outputs=(0.3,)))


def test_unbounded_datum_warns():
    x = D.sample_lift(D.DriverSpec(dim=2, steps=8))
    with pytest.warns(UnboundedDatumWarning):
        solve_transport(field_preset("nonlinear", d=2, e=1), datum_preset("linear"), x, line_grid())


def test_bad_gradient_rejected():
    with pytest.raises(DerivativeCheckError):
        InitialDatum(1, lambda z: np.sin(z[..., 0]), lambda z: np.sin(z))


def test_range_is_preserved():
    x = D.sample_lift(D.DriverSpec(dim=2, steps=128, seed=6))
    phi = datum_preset("gaussian", e=2, width=0.8)
    u = solve_transport(field_preset("rotation"), phi, x, SpaceTimeGrid(Box.cube(-3, 3, 21, 2)))
    lo, hi = phi.bounds
    assert lo <= u.values.min() and u.values.max() <= hi


def test_modulus_examples():
    x = D.sample_lift(D.DriverSpec(dim=2, steps=128, seed=7))
    V = field_preset("nonlinear", d=2, e=1)
    phi = datum_preset("tanh")
    grid = line_grid()
    assert solution_map_modulus(V, phi, x, x, grid) == 0.0
    mods = [solution_map_modulus(V, phi, x, P.dilate_path(1 + d, x), grid) for d in (0.1, 0.01, 0.001)]
    assert mods[0] > mods[1] > mods[2] > 0
    assert max(mods) <= 2 * max(abs(b) for b in phi.bounds)


def test_gradient_matches_jet():
    x = D.sample_lift(D.DriverSpec(dim=2, steps=256, seed=10))
    V = field_preset("rotation")
    phi = datum_preset("gaussian", e=2, width=1.2)
    pts = np.array([[0.3, -0.4], [1.0, 0.8], [-1.2, 0.1]])
    t = 1.0
    jet = rde.inverse_flow_jet(V, pts, x, t)
    analytic = np.einsum("na,nab->nb", phi.gradient(jet.point), jet.jacobian)
    h = 1e-5
    fd = np.empty_like(analytic)
    for b in range(2):
        dy = np.zeros(2)
        dy[b] = h
        fd[:, b] = (phi(rde.inverse_flow(V, pts + dy, x, t)) - phi(rde.inverse_flow(V, pts - dy, x, t))) / (2 * h)
    assert np.max(np.abs(fd - analytic)) < 1e-4 * np.max(np.abs(analytic))


def test_composition_coherence():
    # u(t, π_t(z)) = φ(z) up to the round-trip residual
    x = D.sample_lift(D.DriverSpec(dim=2, steps=512, seed=13))
    V = field_preset("nonlinear", d=2, e=1)
    phi = datum_preset("tanh")
    grid = line_grid(n=21, outputs=(1.0,))
    u = solve_transport(V, phi, x, grid, scheme="logode")
    z = rde.inverse_flow(V, grid.box.points(), x, 1.0, scheme="logode")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fwd = rde.solve_rde(V, z, x, scheme="logode")[-1]
    np.testing.assert_allclose(fwd, grid.box.points(), atol=1e-6)
    np.testing.assert_allclose(u.at(1.0), phi(z), atol=0)
