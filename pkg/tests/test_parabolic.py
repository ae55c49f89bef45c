import warnings

import numpy as np
import pytest
import sympy as sp

from roughpde import drivers as D
from roughpde import paths as P
from roughpde.errors import CFLError, EllipticityError, RegularityError, SingularFlowError
from roughpde.fields import SymbolicFieldSet, zero_fields
from roughpde.grid import DIAGNOSTIC_COLUMNS, Box, SpaceTimeGrid, diagnostics_text
from roughpde.parabolic import (
    AdvectionWarning,
    BoxMarginWarning,
    EllipticCoefficients,
    jacobian_duality,
    solve_direct_lipschitz,
    solve_parabolic,
    solve_second_order_rpde,
    transform_coefficients,
)
from roughpde.presets import coefficient_preset, datum_preset, field_preset

y = sp.Symbol("y1")


def heat_exact(pts, t, sigma):
    s = 1.0 + sigma ** 2 * t
    return np.exp(-np.sum(pts ** 2, axis=-1) / (2 * s)) / s ** (pts.shape[-1] / 2)


def smooth_driver(every, fine=2 ** 10):
    t = np.linspace(0, 1, fine + 1)
    vals = np.stack([np.sin(4 * t), np.cos(3 * t) - 1], axis=1)
    return P.lift_piecewise_linear(t[::every], vals[::every], p=2.5)


def const_coeffs(a, b, lam):
    a, b = np.asarray(a, float), np.asarray(b, float)
    e = b.size
    return EllipticCoefficients(e, lambda t, z: np.broadcast_to(a, (z.shape[0], e, e)).copy(),
                                lambda t, z: np.broadcast_to(b, (z.shape[0], e)).copy(), lam=lam)


# --- coefficients ---------------------------------------------------------------


def test_coefficient_checks():
    with pytest.raises(EllipticityError):
        const_coeffs([[1.0, 0.3], [0.0, 1.0]], [0, 0], 0.5)
    with pytest.raises(EllipticityError):
        const_coeffs([[0.5]], [0.0], 1.0)
    with pytest.raises(EllipticityError):
        const_coeffs([[1.0]], [0.0], 0.0)
    with pytest.raises(RegularityError):
        EllipticCoefficients(1, lambda t, z: np.ones((z.shape[0], 1, 1)),
                             lambda t, z: 50 * np.sin(20 * z), lam=1.0, holder_const=1.0)


def test_transform_zero_field_is_identity():
    c = coefficient_preset("variable", e=2, sigma=0.8)
    x = D.sample_lift(D.DriverSpec(dim=3, steps=16, seed=1))
    grid = SpaceTimeGrid(Box.cube(-2, 2, 9, 2), dt=0.1)
    tc = transform_coefficients(c, zero_fields(3, 2), x, grid)
    pts = grid.box.points()
    for n, t in enumerate(tc.times):
        np.testing.assert_allclose(tc.a[n], c.a(t, pts), atol=1e-14)
        np.testing.assert_allclose(tc.b[n], c.b(t, pts), atol=1e-14)


def test_transform_constant_field_is_pure_shift():
    x = D.sample_lift(D.DriverSpec(dim=1, steps=32, seed=2))
    tc = transform_coefficients(coefficient_preset("heat"), SymbolicFieldSet([[0.9]], (y,)), x,
                                SpaceTimeGrid(Box.cube(-3, 3, 13, 1), dt=0.05))
    assert np.all(tc.a == 1.0) and np.all(tc.b == 0.0)


def test_transform_linear_field():
    kappa = 0.7
    t = np.linspace(0, 1, 1025)
    x = P.lift_piecewise_linear(t, np.sin(t), step=3)
    grid = SpaceTimeGrid(Box.cube(-2, 2, 9, 1), dt=1 / 1024)
    tc = transform_coefficients(coefficient_preset("heat"), SymbolicFieldSet([[kappa * y]], (y,)), x, grid)
    exact = np.exp(-2 * kappa * np.sin(tc.times))
    assert np.max(np.abs(tc.a[:, :, 0, 0] - exact[:, None])) < 1e-6


def test_transformed_ellipticity():
    c = coefficient_preset("variable", e=2, sigma=0.7)
    x = D.sample_lift(D.DriverSpec(dim=2, steps=64, seed=3))
    tc = transform_coefficients(c, field_preset("rotation", amplitude=0.4), x,
                                SpaceTimeGrid(Box.cube(-3, 3, 13, 2), dt=1 / 64))
    assert tc.Lambda > 0
    assert np.all(tc.ellipticity >= tc.lambda_bound * (1 - 1e-10))
    np.testing.assert_allclose(tc.a, np.swapaxes(tc.a, -1, -2), atol=0)


def test_jacobian_duality():
    x = D.sample_lift(D.DriverSpec(dim=2, steps=256, seed=4))
    pts = Box.cube(-2, 2, 5, 2).points()
    r = jacobian_duality(field_preset("rotation"), x, 1.0, pts, scheme="logode")
    assert r["duality_residual"] < 1e-6
    assert r["hessian_gap"] < 1e-6
    assert r["roundtrip"] < 1e-6


def test_verification_mode_records_residuals():
    x = D.sample_lift(D.DriverSpec(dim=2, steps=64, seed=5))
    tc = transform_coefficients(coefficient_preset("heat"), field_preset("nonlinear", d=2, e=1), x,
                                SpaceTimeGrid(Box.cube(-2, 2, 9, 1), dt=1 / 64), scheme="logode", verify=True)
    assert tc.verification["duality_residual"] < 1e-6


def test_singular_flow_detected():
    y1, y2 = sp.symbols("y1 y2")
    V = SymbolicFieldSet([[6 * y1, -6 * y2]], (y1, y2))
    t = np.linspace(0, 1, 65)
    x = P.lift_piecewise_linear(t, 2 * t, step=2)
    with pytest.raises(SingularFlowError):
        transform_coefficients(coefficient_preset("heat", e=2), V, x, SpaceTimeGrid(Box.cube(-1, 1, 5, 2), dt=1 / 64))


@pytest.mark.parametrize("level", range(3))
def test_coefficients_and_solutions_converge_under_refinement(level):
    # level picks the quantity: 0 = (a_x, b_x), 1 = v, 2 = composed u
    V = field_preset("nonlinear", d=2, e=1)
    c = coefficient_preset("heat", sigma=0.6)
    phi = datum_preset("gaussian")
    grid = SpaceTimeGrid(Box.cube(-5, 5, 51, 1), dt=1 / 128, output_times=(0.5, 1.0))

    def run(every):
        x = smooth_driver(every)
        if level == 0:
            tc = transform_coefficients(c, V, x, grid)
            idx = [int(np.argmin(np.abs(tc.times - s))) for s in grid.output_times]
            return [tc.a[idx], tc.b[idx]]
        u = solve_second_order_rpde(c, V, phi, x, grid)
        return [u.info["v"].values] if level == 1 else [u.values]

    ref = run(1)
    gaps = [[np.max(np.abs(q - r)) for q, r in zip(run(e), ref)] for e in (32, 16, 8)]
    for k in range(len(ref)):
        assert gaps[0][k] > gaps[1][k] > gaps[2][k]


# --- parabolic solver -------------------------------------------------------------


def heat_error(h, dt, sigma=1.0):
    grid = SpaceTimeGrid(Box.with_spacing(-6, 6, h, 1), horizon=0.5, dt=dt)
    v = solve_parabolic(coefficient_preset("heat", sigma=sigma), datum_preset("gaussian"), grid)
    return np.max(np.abs(v.at(0.5) - heat_exact(grid.box.points(), 0.5, sigma))), v


def test_heat_closed_form():
    err, v = heat_error(0.02, 1e-3)
    assert err < 1e-3
    assert v.info["max_principle_slack"] < 1e-3
    assert [r["t"] for r in v.diagnostics] == [0.5]


def test_heat_second_order_refinement():
    coarse, _ = heat_error(0.04, 2e-3)
    fine, _ = heat_error(0.02, 1e-3)
    assert coarse / fine == pytest.approx(4.0, rel=0.15)


def test_heat_2d_with_cross_diffusion():
    a = np.array([[1.0, 0.4], [0.4, 0.6]])
    grid = SpaceTimeGrid(Box.cube(-5, 5, 81, 2), horizon=0.5, dt=1 / 200)
    v = solve_parabolic(const_coeffs(a, [0.0, 0.0], 0.3), datum_preset("gaussian", e=2), grid)
    cov = np.eye(2) + 0.5 * a
    pts = grid.box.points()
    q = np.einsum("ni,ij,nj->n", pts, np.linalg.inv(cov), pts)
    exact = np.exp(-q / 2) / np.sqrt(np.linalg.det(cov))
    assert np.max(np.abs(v.at(0.5).ravel() - exact)) < 5e-3


@pytest.mark.parametrize("boundary", ["dirichlet", "neumann"])
def test_constants_are_invariant(boundary):
    c = coefficient_preset("variable", e=2, sigma=0.9, drift=1.5)
    grid = SpaceTimeGrid(Box.cube(-3, 3, 21, 2), dt=0.05, output_times=(0.5, 1.0))
    v = solve_parabolic(c, datum_preset("constant", e=2, value=2.5), grid, boundary=boundary)
    np.testing.assert_allclose(v.values, 2.5, atol=1e-12)


def test_strong_advection_warns_and_upwinds():
    grid = SpaceTimeGrid(Box.cube(-3, 3, 61, 1), dt=0.1)
    with pytest.warns(AdvectionWarning):
        v = solve_parabolic(const_coeffs([[0.01]], [2.0], 0.01), datum_preset("gaussian"), grid)
    assert v.info["upwinded_cells"] > 0 and v.info["courant"] > 1


# --- second-order rough PDE ---------------------------------------------------------


def test_second_order_zero_field_reduces_to_parabolic():
    c = coefficient_preset("heat", sigma=0.8)
    phi = datum_preset("gaussian")
    x = D.sample_lift(D.DriverSpec(dim=2, steps=32, seed=6))
    grid = SpaceTimeGrid(Box.cube(-5, 5, 101, 1), dt=1 / 64, output_times=(0.5, 1.0))
    u = solve_second_order_rpde(c, zero_fields(2, 1), phi, x, grid)
    v = solve_parabolic(c, phi, grid)
    _, flat = grid.eval_region()
    np.testing.assert_allclose(u.values, v.values.reshape(2, -1)[:, flat], atol=1e-13)


def test_second_order_zero_driver():
    c = coefficient_preset("heat", sigma=0.8)
    phi = datum_preset("gaussian")
    grid = SpaceTimeGrid(Box.cube(-5, 5, 101, 1), dt=1 / 64)
    x = P.constant_path(2, np.linspace(0, 1, 17), p=2.5)
    u = solve_second_order_rpde(c, field_preset("nonlinear", d=2, e=1), phi, x, grid)
    v = solve_parabolic(c, phi, grid)
    _, flat = grid.eval_region()
    np.testing.assert_allclose(u.values[0], v.values[0].ravel()[flat], atol=1e-13)


def test_second_order_constant_field_closed_form():
    sigma, a = 0.8, 0.6
    x = D.sample_lift(D.DriverSpec(dim=1, steps=256, seed=7))
    grid = SpaceTimeGrid(Box.cube(-6, 6, 241, 1), dt=1 / 256)
    u = solve_second_order_rpde(coefficient_preset("heat", sigma=sigma), SymbolicFieldSet([[a]], (y,)),
                                datum_preset("gaussian"), x, grid)
    shift = a * x.levels[0][-1, 0]
    exact = heat_exact(u.box.points() - shift, 1.0, sigma)
    assert np.max(np.abs(u.at(1.0).ravel() - exact)) < 5e-3
    assert u.diagnostics[0]["out_of_box_fraction"] == 0.0


def test_range_bound_and_diagnostics():
    phi = datum_preset("gaussian", e=2)
    x = D.sample_lift(D.DriverSpec(dim=2, steps=64, seed=8))
    grid = SpaceTimeGrid(Box.cube(-5, 5, 41, 2), dt=1 / 64, output_times=(0.5, 1.0))
    u = solve_second_order_rpde(coefficient_preset("variable", e=2, sigma=0.6), field_preset("rotation", amplitude=0.3),
                                phi, x, grid)
    delta = u.info["max_principle_slack"]
    assert delta < 1e-3
    assert phi.bounds[0] - delta <= u.values.min() and u.values.max() <= phi.bounds[1] + delta
    assert u.info["Lambda"] > 0
    text = diagnostics_text(u.diagnostics)
    assert text.splitlines()[0] == ",".join(DIAGNOSTIC_COLUMNS)
    assert len(text.splitlines()) == 3


def test_small_box_triggers_margin_warning():
    t = np.linspace(0, 1, 17)
    x = P.lift_piecewise_linear(t, 3 * t, step=2)
    grid = SpaceTimeGrid(Box.cube(-2, 2, 41, 1), dt=1 / 16)
    with pytest.warns(BoxMarginWarning):
        u = solve_second_order_rpde(coefficient_preset("heat"), SymbolicFieldSet([[1.0]], (y,)),
                                    datum_preset("gaussian"), x, grid)
    assert u.diagnostics[-1]["out_of_box_fraction"] > 0


# --- direct solver ----------------------------------------------------------------


def test_direct_zero_field_matches_parabolic():
    c = coefficient_preset("heat", sigma=0.8)
    phi = datum_preset("gaussian")
    grid = SpaceTimeGrid(Box.cube(-5, 5, 101, 1), dt=1 / 64)
    x = P.lift_piecewise_linear(np.linspace(0, 1, 9), np.linspace(0, 1, 9), step=1)
    u = solve_direct_lipschitz(c, zero_fields(1, 1), phi, x, grid)
    v = solve_parabolic(c, phi, grid)
    _, flat = grid.eval_region()
    np.testing.assert_allclose(u.values[0], v.values[0].ravel()[flat], atol=1e-13)


def test_direct_constant_datum():
    grid = SpaceTimeGrid(Box.cube(-4, 4, 41, 1), dt=1 / 64)
    u = solve_direct_lipschitz(coefficient_preset("heat"), field_preset("nonlinear", d=2, e=1),
                               datum_preset("constant", value=-1.0), smooth_driver(16), grid)
    np.testing.assert_allclose(u.values, -1.0, atol=1e-12)


def test_direct_matches_transformed_route():
    c = coefficient_preset("heat", sigma=0.6)
    V = field_preset("nonlinear", d=2, e=1)
    phi = datum_preset("gaussian")
    x = smooth_driver(16)
    gaps = []
    for h, dt in ((0.04, 1 / 256), (0.02, 1 / 512)):
        grid = SpaceTimeGrid(Box.with_spacing(-5, 5, h, 1), dt=dt)
        direct = solve_direct_lipschitz(c, V, phi, x, grid)
        routed = solve_second_order_rpde(c, V, phi, x, grid)
        gaps.append(direct.sup_distance(routed))
    assert gaps[0] < 1e-2
    assert gaps[1] < gaps[0]


def test_direct_cfl_violation():
    t = np.linspace(0, 1, 3)
    x = P.lift_piecewise_linear(t, 40 * t, step=1)
    grid = SpaceTimeGrid(Box.cube(-4, 4, 81, 1), dt=0.25)
    with pytest.raises(CFLError):
        solve_direct_lipschitz(coefficient_preset("heat"), SymbolicFieldSet([[1.0]], (y,)),
                               datum_preset("gaussian"), x, grid)
