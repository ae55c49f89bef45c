"""Second-order rough PDEs through the flow-transformed parabolic operator.

With ξ_t = π_(V)(0, ·; x)_t and ζ_t = ξ_t^{-1}, the function
v(t, z) = u(t, ξ_t(z)) solves the classical equation

    ∂_t v = ½ a_x^{ij} ∂_ij v + b_x^i ∂_i v,
    a_x = Dζ a(t, ξ) Dζ^T,   b_x^i = ½ a^{kl}(t, ξ) ∂_kl ζ^i + b^k(t, ξ) ∂_k ζ^i,

with Dζ, D²ζ evaluated at ξ_t(z).  This module builds a_x, b_x from
forward flow jets, solves for v with Crank–Nicolson on a truncated box and
composes u(t, y) = v(t, ζ_t(y)).  A direct solver for piecewise-linear
drivers, stepping ∂_t u = L u - (V ẋ)·∇u, serves as an independent check.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import splu

from . import rde
from .errors import CFLError, EllipticityError, LinearSolveError, RegularityError, ShapeMismatchError, SingularFlowError
from .fields import VectorFieldSet, default_probes
from .grid import Box, ScalarField, SpaceTimeGrid
from .paths import RoughPathGrid, resample
from .transport import InitialDatum

__all__ = [
    "EllipticCoefficients",
    "GriddedCoefficients",
    "TransformedCoefficients",
    "transform_coefficients",
    "jacobian_duality",
    "solve_parabolic",
    "solve_second_order_rpde",
    "solve_direct_lipschitz",
    "AdvectionWarning",
    "BoxMarginWarning",
    "COND_LIMIT",
    "BOUNDARY_KINDS",
]

COND_LIMIT = 1e8
BOUNDARY_KINDS = ("dirichlet", "neumann")
PECLET_LIMIT = 2.0


class AdvectionWarning(UserWarning):
    """Advection dominates the time step (Courant number above one)."""


class BoxMarginWarning(UserWarning):
    """Composition queries came closer to the box boundary than the safety margin."""


@dataclass(frozen=True)
class EllipticCoefficients:
    """L_t = ½ a^{ij}(t, y) ∂_ij + b^i(t, y) ∂_i.

    ``a(t, y)`` maps points (N, e) to (N, e, e) and ``b(t, y)`` to (N, e).
    Symmetry, ellipticity ⟨θ, aθ⟩ ≥ λ|θ|² and the Hölder bound
    |f(t, y) - f(s, z)| ≤ C (|t - s|^{β/2} + |y - z|^β) for f = a, b are
    spot-checked on construction.
    """

    e: int
    a: Callable
    b: Callable
    lam: float
    beta: float = 1.0
    holder_const: float = 10.0
    time_dependent: bool = False
    name: str = "coefficients"

    def __post_init__(self):
        if self.e not in (1, 2, 3):
            raise ShapeMismatchError("coefficients supported for e <= 3")
        if not self.lam > 0:
            raise EllipticityError("ellipticity constant must be positive")
        if not 0 < self.beta <= 1:
            raise RegularityError("Hölder exponent must lie in (0, 1]")
        probes = default_probes(self.e)
        for t in (0.0, 0.5, 1.0):
            a = self.a(t, probes)
            if a.shape != (probes.shape[0], self.e, self.e):
                raise ShapeMismatchError(f"a(t, y) has shape {a.shape}")
            if np.max(np.abs(a - np.swapaxes(a, -1, -2))) > 1e-12:
                raise EllipticityError(f"{self.name}: diffusion matrix is not symmetric")
            low = float(np.min(np.linalg.eigvalsh(a)))
            if low < self.lam * (1 - 1e-12):
                raise EllipticityError(f"{self.name}: smallest eigenvalue {low:.3g} below λ = {self.lam:.3g}")
        self._check_holder()

    def _check_holder(self, pairs: int = 64):
        rng = np.random.default_rng(0)
        y = rng.uniform(-2, 2, (pairs, self.e))
        z = rng.uniform(-2, 2, (pairs, self.e))
        t = rng.uniform(0, 1, pairs)
        s = rng.uniform(0, 1, pairs)
        bound = self.holder_const * (np.abs(t - s) ** (self.beta / 2)
                                     + np.linalg.norm(y - z, axis=1) ** self.beta)
        for k in range(pairs):
            da = np.max(np.abs(self.a(t[k], y[k:k + 1]) - self.a(s[k], z[k:k + 1])))
            db = np.max(np.abs(self.b(t[k], y[k:k + 1]) - self.b(s[k], z[k:k + 1])))
            if max(da, db) > bound[k]:
                raise RegularityError(f"{self.name}: Hölder bound (β={self.beta}, C={self.holder_const}) fails")

    def on_grid(self, box: Box, times) -> "GriddedCoefficients":
        return GriddedCoefficients(self, box, np.asarray(times, dtype=float))


class GriddedCoefficients:
    """Plain coefficients evaluated lazily at the nodes of a box."""

    def __init__(self, coeffs: EllipticCoefficients, box: Box, times):
        self.coeffs = coeffs
        self.box = box
        self.times = np.asarray(times, dtype=float)
        self._pts = box.points()
        self._static = None

    def at(self, n: int):
        if not self.coeffs.time_dependent:
            if self._static is None:
                self._static = (self.coeffs.a(0.0, self._pts), self.coeffs.b(0.0, self._pts))
            return self._static
        t = self.times[n]
        return self.coeffs.a(t, self._pts), self.coeffs.b(t, self._pts)

    def ellipticity_at(self, n: int) -> float:
        return float(np.min(np.linalg.eigvalsh(self.at(n)[0])))

    def jacobian_cond(self, n: int) -> float:
        return 1.0


@dataclass
class TransformedCoefficients:
    """a_x, b_x on the box nodes at every solver time.

    ``ellipticity[n]`` is the smallest eigenvalue of a_x at time n and
    ``lambda_bound[n]`` = λ / max ‖Dξ‖₂², a lower bound it must respect.
    ``driver`` is the driver resampled onto ``times``.
    """

    times: np.ndarray
    box: Box
    a: np.ndarray
    b: np.ndarray
    ellipticity: np.ndarray
    lambda_bound: np.ndarray
    cond: np.ndarray
    driver: RoughPathGrid
    verification: dict = field(default_factory=dict)

    @property
    def Lambda(self) -> float:
        return float(np.min(self.ellipticity))

    def at(self, n: int):
        return self.a[n], self.b[n]

    def ellipticity_at(self, n: int) -> float:
        return float(self.ellipticity[n])

    def jacobian_cond(self, n: int) -> float:
        return float(self.cond[n])


def _driver_on(x: RoughPathGrid, grid: SpaceTimeGrid) -> RoughPathGrid:
    if x.horizon < grid.horizon * (1 - 1e-12):
        raise ShapeMismatchError(f"driver horizon {x.horizon} shorter than grid horizon {grid.horizon}")
    times = grid.solver_times(x.times[x.times <= grid.horizon * (1 + 1e-12)])
    times[-1] = min(times[-1], x.times[-1])
    return resample(x, times)


def _inverse_derivatives(J, H):
    """Dζ and D²ζ at ξ from the forward jet (J, H)."""
    Jinv = np.linalg.inv(J)
    D2 = -np.einsum("nia,nabc,nbk,ncl->nikl", Jinv, H, Jinv, Jinv, optimize=True)
    return Jinv, D2


def transform_coefficients(coeffs: EllipticCoefficients, V: VectorFieldSet, x: RoughPathGrid,
                           grid: SpaceTimeGrid, substeps: int = 1, scheme: str = "euler",
                           verify: bool = False) -> TransformedCoefficients:
    """Flow-transformed coefficients on ``grid.box`` at every solver time.

    With ``verify=True`` the inverse-flow derivatives at the output times
    are recomputed from reversed-driver jets and compared (see
    :func:`jacobian_duality`); results land in ``.verification``.
    """
    if coeffs.e != V.e or grid.box.e != V.e:
        raise ShapeMismatchError("state dimension of coefficients, fields and grid must agree")
    xf = _driver_on(x, grid)
    pts = grid.box.points()
    nt, N, e = xf.times.size, pts.shape[0], V.e
    a_x = np.empty((nt, N, e, e))
    b_x = np.empty((nt, N, e))
    ell = np.empty(nt)
    bound = np.empty(nt)
    cond = np.empty(nt)
    for n, jet in rde.iter_jet(V, pts, xf, substeps, scheme):
        t = xf.times[n]
        c = np.linalg.cond(jet.jacobian)
        cond[n] = float(np.max(c))
        if not np.all(np.isfinite(c)) or cond[n] > COND_LIMIT:
            raise SingularFlowError(f"flow Jacobian condition number {cond[n]:.3g} at t = {t:.6g}")
        Jinv, D2 = _inverse_derivatives(jet.jacobian, jet.hessian)
        a = coeffs.a(t, jet.point)
        b = coeffs.b(t, jet.point)
        a_x[n] = np.einsum("nik,nkl,njl->nij", Jinv, a, Jinv, optimize=True)
        a_x[n] = 0.5 * (a_x[n] + np.swapaxes(a_x[n], -1, -2))
        b_x[n] = 0.5 * np.einsum("nkl,nikl->ni", a, D2) + np.einsum("nik,nk->ni", Jinv, b)
        ell[n] = float(np.min(np.linalg.eigvalsh(a_x[n])))
        bound[n] = coeffs.lam / float(np.max(np.linalg.norm(jet.jacobian, 2, axis=(-2, -1)))) ** 2
    out = TransformedCoefficients(xf.times, grid.box, a_x, b_x, ell, bound, cond, xf)
    if verify:
        probes = pts[:: max(1, N // 25)]
        rows = [jacobian_duality(V, xf, t, probes, substeps, scheme) for t in grid.output_times]
        out.verification = {
            "duality_residual": max(r["duality_residual"] for r in rows),
            "hessian_gap": max(r["hessian_gap"] for r in rows),
        }
    return out


def jacobian_duality(V: VectorFieldSet, x: RoughPathGrid, t: float, y, substeps: int = 1,
                     scheme: str = "euler") -> dict:
    """Compare reversed-flow jets at ξ_t(y) with the inverse of the forward jet.

    ``duality_residual`` = max |Dζ(ξ) Dξ(y) - I|; ``hessian_gap`` is the max
    difference between the reversed-flow D²ζ and the analytic inversion
    formula.
    """
    y = np.asarray(y, dtype=float).reshape(-1, V.e)
    k = x.index_of(t)
    fwd = rde.solve_rde_jet(V, y, x.restrict(k), substeps, scheme)[-1]
    rev = rde.inverse_flow_jet(V, fwd.point, x, x.times[k], substeps, scheme)
    eye = np.eye(V.e)
    resid = np.einsum("nij,njk->nik", rev.jacobian, fwd.jacobian) - eye
    _, D2 = _inverse_derivatives(fwd.jacobian, fwd.hessian)
    return {
        "duality_residual": float(np.max(np.abs(resid))),
        "hessian_gap": float(np.max(np.abs(rev.hessian - D2))),
        "roundtrip": float(np.max(np.abs(rev.point - y))),
    }


# --- Crank–Nicolson on a box -----------------------------------------------------


class _Stencil:
    """Index bookkeeping for interior nodes and boundary prolongation."""

    def __init__(self, box: Box, boundary: str):
        if box.e not in (1, 2):
            raise ShapeMismatchError("the finite-difference solver supports e in {1, 2}")
        if boundary not in BOUNDARY_KINDS:
            raise ValueError(f"boundary must be one of {BOUNDARY_KINDS}")
        self.box = box
        self.boundary = boundary
        self.h = box.h
        self.strides = np.array([int(np.prod(box.n[a + 1:])) for a in range(box.e)])
        bmask = box.boundary_mask()
        self.interior = np.flatnonzero(~bmask)
        self.boundary_nodes = np.flatnonzero(bmask)
        m = self.interior.size
        pos = np.full(box.size, -1)
        pos[self.interior] = np.arange(m)
        if boundary == "dirichlet":
            rows, cols = self.interior, np.arange(m)
        else:
            # zero normal derivative: boundary nodes copy their nearest interior node
            idx = np.indices(box.n).reshape(box.e, -1)
            clipped = np.clip(idx, 1, np.array(box.n)[:, None] - 2)
            src = np.ravel_multi_index(tuple(clipped), box.n)
            rows, cols = np.arange(box.size), pos[src]
        self.P = sps.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(box.size, m))

    def offset(self, a: int, s: int):
        return self.interior + s * self.strides[a]

    def assemble(self, a, b):
        """Rows of L = ½ a^{ij} ∂_ij + b^i ∂_i at interior nodes (m × N).

        Central differences, switched to one-sided upwinding along any axis
        whose cell Péclet number |b| h / (½ a) exceeds 2.
        Returns the matrix and the number of upwinded (node, axis) pairs.
        """
        I = self.interior
        m = I.size
        rows, cols, vals = [], [], []
        r = np.arange(m)
        upwinded = 0

        def add(col, val):
            rows.append(r)
            cols.append(col)
            vals.append(val)

        for ax in range(self.box.e):
            h = self.h[ax]
            diff = 0.5 * a[I, ax, ax] / h ** 2
            bb = b[I, ax]
            peclet = np.abs(bb) * h / np.maximum(0.5 * a[I, ax, ax], 1e-300)
            up = peclet > PECLET_LIMIT
            upwinded += int(np.count_nonzero(up))
            central = bb / (2 * h)
            fwd = np.where(up, np.maximum(bb, 0.0) / h, central)
            bwd = np.where(up, np.maximum(-bb, 0.0) / h, -central)
            mid = np.where(up, -np.abs(bb) / h, 0.0)
            add(self.offset(ax, 1), diff + fwd)
            add(self.offset(ax, -1), diff + bwd)
            add(I, -2 * diff + mid)
        if self.box.e == 2:
            c = a[I, 0, 1] / (4 * self.h[0] * self.h[1])
            s0, s1 = self.strides
            add(I + s0 + s1, c)
            add(I - s0 - s1, c)
            add(I + s0 - s1, -c)
            add(I - s0 + s1, -c)
        L = sps.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                           shape=(m, self.box.size))
        return L, upwinded


def _as_gridded(coeffs, box: Box):
    if coeffs.box != box:
        raise ShapeMismatchError("gridded coefficients live on a different box")
    return coeffs


def _crank_nicolson(box: Box, times, coeff_at: Callable, phi: InitialDatum, boundary: str,
                    out_idx: list[int], static: bool = False, step_dependent: bool = False):
    """March v from φ; ``coeff_at(j, n)`` gives (a, b) at node time n for step j.

    ``static`` marks time-independent coefficients (one assembly, one LU per
    distinct dt); ``step_dependent`` marks coefficients that change with the
    step j, not only with the node time.  Returns stored full-box values at
    ``out_idx``, max-principle slack, the largest number of upwinded
    (node, axis) pairs in any operator and the largest Courant number
    |b| dt / h.
    """
    st = _Stencil(box, boundary)
    pts = box.points()
    v0 = phi(pts)
    c = np.zeros(box.size)
    if boundary == "dirichlet":
        c[st.boundary_nodes] = v0[st.boundary_nodes]
    v = v0[st.interior].copy()
    lo, hi = float(np.min(v0)), float(np.max(v0))
    vmin, vmax = lo, hi
    m = st.interior.size
    eye = sps.identity(m, format="csc")
    stored = {}
    if 0 in out_idx:
        stored[0] = v0.copy()
    upwinded, courant = 0, 0.0
    held = {}

    def operator(j, n):
        # node operators are reused across steps unless coefficients depend on the step
        key = (j, n) if step_dependent else (0 if static else n)
        if key not in held:
            a, b = coeff_at(j, n)
            L, up = st.assemble(a, b)
            op = ((L @ st.P).tocsc(), L @ c, up, float(np.max(np.abs(b) / st.h)))
            if not static:
                held.clear()
            held[key] = op
        return held[key]

    lu, lu_dt = None, None
    for j in range(times.size - 1):
        dt = times[j + 1] - times[j]
        A0, f0, up0, cb0 = operator(j, j)
        A1, f1, up1, cb1 = operator(j, j + 1)
        upwinded = max(upwinded, up0, up1)
        courant = max(courant, max(cb0, cb1) * dt)
        if lu is None or not static or not np.isclose(dt, lu_dt, rtol=1e-12, atol=0):
            try:
                lu = splu((eye - 0.5 * dt * A1).tocsc())
            except RuntimeError as exc:
                raise LinearSolveError(f"Crank–Nicolson factorization failed at t = {times[j + 1]:.6g}") from exc
            lu_dt = dt
        rhs = v + 0.5 * dt * (A0 @ v) + 0.5 * dt * (f0 + f1)
        v = lu.solve(rhs)
        if not np.all(np.isfinite(v)):
            raise LinearSolveError(f"non-finite Crank–Nicolson state at t = {times[j + 1]:.6g}")
        full = st.P @ v + c
        vmin, vmax = min(vmin, float(np.min(full))), max(vmax, float(np.max(full)))
        if j + 1 in out_idx:
            stored[j + 1] = full
    slack = max(0.0, vmax - hi, lo - vmin)
    return stored, slack, upwinded, courant


def _index_in(times, t):
    k = int(np.argmin(np.abs(times - t)))
    if abs(times[k] - t) > 1e-9 * max(1.0, abs(t)):
        raise ShapeMismatchError(f"output time {t} is not a solver time")
    return k


def _warn_courant(courant):
    if courant > 1.0:
        warnings.warn(f"advection-dominated step: Courant number {courant:.3g} > 1", AdvectionWarning, stacklevel=3)


def solve_parabolic(coeffs, phi: InitialDatum, grid: SpaceTimeGrid, boundary: str = "dirichlet") -> ScalarField:
    """Crank–Nicolson solution of ∂v/∂t = ½ a ∂²v + b ∂v, v(0) = φ, on ``grid.box``.

    ``coeffs`` is either :class:`EllipticCoefficients` (sampled on
    ``grid.solver_times()``) or gridded coefficients such as
    :class:`TransformedCoefficients`.  The default boundary condition freezes
    the boundary nodes at φ; ``boundary="neumann"`` copies the nearest
    interior node instead.  ``info["max_principle_slack"]`` records how far
    the discrete solution left [min φ, max φ].
    """
    if isinstance(coeffs, EllipticCoefficients):
        times = grid.solver_times()
        gridded = coeffs.on_grid(grid.box, times)
    else:
        gridded = _as_gridded(coeffs, grid.box)
        times = gridded.times
    out_idx = [_index_in(times, t) for t in grid.output_times]
    static = isinstance(gridded, GriddedCoefficients) and not gridded.coeffs.time_dependent
    stored, slack, upwinded, courant = _crank_nicolson(
        grid.box, times, lambda j, n: gridded.at(n), phi, boundary, out_idx, static=static)
    _warn_courant(courant)
    diag = [{
        "t": times[k],
        "ellipticity_lower_bound": gridded.ellipticity_at(k),
        "jacobian_cond_max": gridded.jacobian_cond(k),
        "out_of_box_fraction": 0.0,
    } for k in out_idx]
    f = ScalarField(times[out_idx], grid.box, np.stack([stored[k] for k in out_idx]), diag)
    f.info.update(max_principle_slack=slack, upwinded_cells=upwinded, courant=courant)
    return f


def solve_second_order_rpde(coeffs: EllipticCoefficients, V: VectorFieldSet, phi: InitialDatum,
                            x: RoughPathGrid, grid: SpaceTimeGrid, boundary: str = "dirichlet",
                            substeps: int = 1, scheme: str = "euler", margin: float = 0.2) -> ScalarField:
    """u(t, y) = v(t, ζ_t(y)) on the inner evaluation region of ``grid``.

    Composition queries are clamped to the box and counted in
    ``out_of_box_fraction``; queries closer than ``margin`` × radius to the
    boundary trigger a :class:`BoxMarginWarning`.
    """
    tc = transform_coefficients(coeffs, V, x, grid, substeps, scheme)
    v = solve_parabolic(tc, phi, grid, boundary)
    ebox, _ = grid.eval_region()
    pts = ebox.points()
    box = grid.box
    values, diag = [], []
    near = 0
    for t, vt, row in zip(v.times, v.values, v.diagnostics):
        z = rde.inverse_flow(V, pts, tc.driver, t, substeps, scheme) if t > 0 else pts
        zc, outside = box.clamp(z)
        near += int(np.count_nonzero(np.any(np.abs(z - box.center) > (1 - margin) * box.radius, axis=-1)))
        values.append(box.interpolate(vt, zc))
        diag.append(dict(row, out_of_box_fraction=float(np.mean(outside))))
    if near:
        warnings.warn(f"{near} composition queries within {margin:.0%} of the box boundary; "
                      "enlarge the box", BoxMarginWarning, stacklevel=2)
    u = ScalarField(v.times, ebox, np.stack(values), diag)
    u.info.update(v.info, Lambda=tc.Lambda, lambda_bound=float(np.min(tc.lambda_bound)),
                  margin_violations=near, v=v, transformed=tc)
    return u


def solve_direct_lipschitz(coeffs: EllipticCoefficients, V: VectorFieldSet, phi: InitialDatum,
                           x_smooth: RoughPathGrid, grid: SpaceTimeGrid, boundary: str = "dirichlet",
                           cfl_limit: float = 1.0) -> ScalarField:
    """Step ∂_t u = L_t u - (V(y) ẋ_t)·∇u directly for a piecewise-linear driver.

    ẋ is constant on each solver step (the driver's level-1 slope there).
    Raises :class:`CFLError` when |V ẋ| dt / h exceeds ``cfl_limit``.
    Values are reported on the same evaluation region as
    :func:`solve_second_order_rpde`.
    """
    if V.d != x_smooth.dim:
        raise ShapeMismatchError(f"{V.d} vector fields but a {x_smooth.dim}-dimensional driver")
    xf = _driver_on(x_smooth, grid)
    times = xf.times
    slopes = np.diff(xf.levels[0], axis=0) / np.diff(times)[:, None]
    pts = grid.box.points()
    Vy = V(pts)  # (N, d, e)
    base = coeffs.on_grid(grid.box, times)
    h = grid.box.h
    for j in range(times.size - 1):
        speed = np.max(np.abs(np.einsum("i,nie->ne", slopes[j], Vy)) / h)
        courant = speed * (times[j + 1] - times[j])
        if courant > cfl_limit:
            raise CFLError(f"transport Courant number {courant:.3g} exceeds {cfl_limit} at t = {times[j]:.6g}")

    def coeff_at(j, n):
        a, b = base.at(n)
        return a, b - np.einsum("i,nie->ne", slopes[j], Vy)

    out_idx = [_index_in(times, t) for t in grid.output_times]
    stored, slack, upwinded, courant = _crank_nicolson(grid.box, times, coeff_at, phi, boundary, out_idx,
                                                       step_dependent=True)
    _warn_courant(courant)
    ebox, flat = grid.eval_region()
    u = ScalarField(times[out_idx], ebox, np.stack([stored[k][flat] for k in out_idx]))
    u.info.update(max_principle_slack=slack, upwinded_cells=upwinded, courant=courant)
    return u
