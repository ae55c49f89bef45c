"""Numerical RDE flows dy = V(y) dx, their jets, and inverse flows.

The scheme is the step-N Euler scheme on signature coordinates: over a grid
cell with increment g,

    y <- y + Σ_i V_i g^i + Σ_{ij} (DV_j V_i) g^{ij}
           + Σ_{ijk} (D²V_k[V_j, V_i] + DV_k DV_j V_i) g^{ijk}.

Only directional derivatives of the fields are needed, so the same step
drives both the plain system and the augmented jet system (y, Dy, D²y).
Each cell may optionally be split into ``substeps`` geodesic pieces
exp(log(g)/K); this refines the scheme without touching the driver.

``scheme="logode"`` instead reads the same increment formula with log(g)
in place of g, which gives the autonomous field whose unit-time flow is the
log-ODE step, and integrates it with RK4.  Forward and reversed cell maps
then invert each other to RK4 accuracy, which matters for flow inversion.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import BlowUpError, ShapeMismatchError
from .fields import VectorFieldSet
from .paths import RoughPathGrid, time_reverse

__all__ = ["FlowJet", "solve_rde", "solve_rde_jet", "iter_jet", "inverse_flow", "inverse_flow_jet",
           "BLOWUP_LIMIT", "SCHEMES", "write_trajectory_csv"]

BLOWUP_LIMIT = 1e8


class _PlainContext:
    """Field values and derivative tensors of V at a batch of points."""

    def __init__(self, fields: VectorFieldSet, y, step):
        self.D0 = fields.derivative(0)(y)
        self.D1 = fields.derivative(1)(y) if step >= 2 else None
        self.D2 = fields.derivative(2)(y) if step >= 3 else None

    def vf(self):
        return self.D0

    def jvp(self, u):
        # Σ_j DV_j[u[:, K, j]]
        return np.einsum("njab,nKjb->nKa", self.D1, u)

    def hvp(self, u, w):
        return np.einsum("njabc,nKjb,nKjc->nKa", self.D2, u, w)


class _PlainSystem:
    def __init__(self, fields):
        self.fields = fields
        self.dim = fields.e

    def at(self, y, step):
        return _PlainContext(self.fields, y, step)


class _JetContext:
    """Augmented fields (V, DV·J, D²V[J,J] + DV·H) and their derivatives."""

    def __init__(self, fields, state, e, step):
        n = state.shape[0]
        self.e = e
        y, J, H = _unpack(state, e)
        self.J, self.H = J, H
        need = step + 1  # vf uses D2; each extra level adds one derivative
        self.D = [fields.derivative(k)(y) for k in range(need + 1)]
        self.n = n

    def vf(self):
        D0, D1, D2 = self.D[0], self.D[1], self.D[2]
        J, H = self.J, self.H
        vy = D0
        vJ = np.einsum("nkab,nbl->nkal", D1, J)
        vH = np.einsum("nkabc,nbl,ncm->nkalm", D2, J, J) + np.einsum("nkab,nblm->nkalm", D1, H)
        return _pack(vy, vJ, vH)

    def jvp(self, u):
        D1, D2, D3 = self.D[1], self.D[2], self.D[3]
        J, H = self.J, self.H
        dy, dJ, dH = _unpack(u, self.e)
        D2dy = np.einsum("njabc,nKjc->nKjab", D2, dy)
        D3dy = np.einsum("njabcd,nKjd->nKjabc", D3, dy)
        ry = np.einsum("njab,nKjb->nKa", D1, dy)
        rJ = np.einsum("nKjab,nbl->nKal", D2dy, J) + np.einsum("njab,nKjbl->nKal", D1, dJ)
        rH = (np.einsum("nKjabc,nbl,ncm->nKalm", D3dy, J, J)
              + np.einsum("njabc,nKjbl,ncm->nKalm", D2, dJ, J)
              + np.einsum("njabc,nbl,nKjcm->nKalm", D2, J, dJ)
              + np.einsum("nKjab,nblm->nKalm", D2dy, H)
              + np.einsum("njab,nKjblm->nKalm", D1, dH))
        return _pack(ry, rJ, rH)

    def hvp(self, u, w):
        D2, D3, D4 = self.D[2], self.D[3], self.D[4]
        J, H = self.J, self.H
        y1, J1, H1 = _unpack(u, self.e)
        y2, J2, H2 = _unpack(w, self.e)
        D2y1 = np.einsum("njabc,nKjc->nKjab", D2, y1)
        D2y2 = np.einsum("njabc,nKjc->nKjab", D2, y2)
        D3y1 = np.einsum("njabcd,nKjd->nKjabc", D3, y1)
        D3y2 = np.einsum("njabcd,nKjd->nKjabc", D3, y2)
        D3y12 = np.einsum("nKjabc,nKjc->nKjab", D3y1, y2)
        D4y12 = np.einsum("njabcde,nKjd,nKje->nKjabc", D4, y1, y2)
        ry = np.einsum("nKjab,nKjb->nKa", D2y1, y2)
        rJ = (np.einsum("nKjab,nbl->nKal", D3y12, J)
              + np.einsum("nKjab,nKjbl->nKal", D2y1, J2)
              + np.einsum("nKjab,nKjbl->nKal", D2y2, J1))
        rH = (np.einsum("nKjabc,nbl,ncm->nKalm", D4y12, J, J)
              + np.einsum("nKjabc,nKjbl,ncm->nKalm", D3y1, J2, J)
              + np.einsum("nKjabc,nbl,nKjcm->nKalm", D3y1, J, J2)
              + np.einsum("nKjabc,nKjbl,ncm->nKalm", D3y2, J1, J)
              + np.einsum("nKjabc,nbl,nKjcm->nKalm", D3y2, J, J1)
              + np.einsum("njabc,nKjbl,nKjcm->nKalm", D2, J1, J2)
              + np.einsum("njabc,nKjbl,nKjcm->nKalm", D2, J2, J1)
              + np.einsum("nKjab,nblm->nKalm", D3y12, H)
              + np.einsum("nKjab,nKjblm->nKalm", D2y1, H2)
              + np.einsum("nKjab,nKjblm->nKalm", D2y2, H1))
        return _pack(ry, rJ, rH)


class _JetSystem:
    def __init__(self, fields):
        self.fields = fields
        e = fields.e
        self.e = e
        self.dim = e + e * e + e ** 3

    def at(self, state, step):
        return _JetContext(self.fields, state, self.e, step)


def _unpack(state, e):
    lead = state.shape[:-1]
    y = state[..., :e]
    J = state[..., e:e + e * e].reshape(lead + (e, e))
    H = state[..., e + e * e:].reshape(lead + (e, e, e))
    return y, J, H


def _pack(y, J, H):
    lead = y.shape[:-1]
    return np.concatenate([y, J.reshape(lead + (-1,)), H.reshape(lead + (-1,))], axis=-1)


def _euler_increment(ctx, g, step):
    V = ctx.vf()  # (n, d, m)
    dY = np.einsum("i,nim->nm", g[0], V)
    if step >= 2:
        U = np.einsum("ij,nim->njm", g[1], V)
        dY = dY + ctx.jvp(U[:, None])[:, 0]
    if step >= 3:
        U3 = np.einsum("ijk,nim->njkm", g[2], V)  # Σ_i g^{ijk} V_i
        W = ctx.jvp(np.swapaxes(U3, 1, 2))  # (n, k, m): Σ_j DV_j[U3[:, j, k]]
        dY = dY + ctx.jvp(W[:, None])[:, 0]
        Vj = np.broadcast_to(V[:, :, None, :], U3.shape)
        dY = dY + ctx.hvp(Vj, U3).sum(axis=1)
    return dY


SCHEMES = ("euler", "logode")


def _integrate(system, Y0, x: RoughPathGrid, substeps: int = 1, limit_dim: int | None = None,
               scheme: str = "euler"):
    """Yield the state at every grid node (index, state).

    ``scheme="euler"``: step-N Euler, each cell split into ``substeps``
    geodesic pieces.  ``scheme="logode"``: the Euler increment evaluated at
    log(g) is the log-ODE vector field W; integrate y' = W(y) over unit time
    with ``substeps`` classical RK4 steps.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    step = x.step
    incs = x.step_increments()
    if scheme == "logode":
        incs = tuple(lev / substeps for lev in T._log(incs))
    elif substeps > 1:
        incs = T._exp(tuple(lev / substeps for lev in T._log(incs)))
    Y = np.array(Y0, dtype=float)
    check = slice(None, limit_dim)
    yield 0, Y
    for i in range(x.times.size - 1):
        g = tuple(lev[i] for lev in incs)
        for _ in range(substeps):
            if scheme == "euler":
                Y = Y + _euler_increment(system.at(Y, step), g, step)
            else:
                k1 = _euler_increment(system.at(Y, step), g, step)
                k2 = _euler_increment(system.at(Y + 0.5 * k1, step), g, step)
                k3 = _euler_increment(system.at(Y + 0.5 * k2, step), g, step)
                k4 = _euler_increment(system.at(Y + k3, step), g, step)
                Y = Y + (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        head = Y[:, check]
        if not np.all(np.isfinite(head)) or np.max(np.abs(head), initial=0.0) > BLOWUP_LIMIT:
            raise BlowUpError(f"RDE state exceeded {BLOWUP_LIMIT:g} at t = {x.times[i + 1]:.6g}",
                              time=float(x.times[i + 1]))
        yield i + 1, Y


def _as_batch(y0, e):
    y0 = np.asarray(y0, dtype=float)
    single = y0.ndim == 1
    batch = y0.reshape(-1, e) if not single else y0[None, :]
    if batch.shape[-1] != e:
        raise ShapeMismatchError(f"initial points must have trailing dimension {e}")
    return batch, single, y0.shape


def _check_driver(V: VectorFieldSet, x: RoughPathGrid, extra: int, what: str):
    if V.d != x.dim:
        raise ShapeMismatchError(f"{V.d} vector fields but a {x.dim}-dimensional driver")
    V.require(x.step + extra, what)


def solve_rde(V: VectorFieldSet, y0, x: RoughPathGrid, substeps: int = 1,
              scheme: str = "euler") -> np.ndarray:
    """π_(V)(0, y0; x) at every grid time.

    ``y0`` is a point (e,) or a batch (..., e); the result has a leading
    time axis of length len(x).
    """
    _check_driver(V, x, 0, "solve_rde")
    batch, single, shape = _as_batch(y0, V.e)
    out = np.empty((x.times.size,) + batch.shape)
    for i, Y in _integrate(_PlainSystem(V), batch, x, substeps, scheme=scheme):
        out[i] = Y
    return out[:, 0] if single else out.reshape((x.times.size,) + shape)


@dataclass(frozen=True)
class FlowJet:
    """Flow value, Jacobian and Hessian ∂²π^i/∂y^k∂y^l (leading axes kept)."""

    point: np.ndarray
    jacobian: np.ndarray
    hessian: np.ndarray

    def __getitem__(self, idx) -> "FlowJet":
        return FlowJet(self.point[idx], self.jacobian[idx], self.hessian[idx])

    def jacobian_condition(self) -> np.ndarray:
        return np.linalg.cond(self.jacobian)


def _initial_jet(batch, e):
    n = batch.shape[0]
    J = np.broadcast_to(np.eye(e), (n, e, e))
    H = np.zeros((n, e, e, e))
    return _pack(batch, J, H)


def iter_jet(V: VectorFieldSet, y0, x: RoughPathGrid, substeps: int = 1, scheme: str = "euler"):
    """Generator over (grid index, FlowJet) for a batch of start points (n, e)."""
    _check_driver(V, x, 2, "flow jets")
    e = V.e
    batch = np.asarray(y0, dtype=float).reshape(-1, e)
    for i, S in _integrate(_JetSystem(V), _initial_jet(batch, e), x, substeps, limit_dim=e,
                           scheme=scheme):
        y, J, H = _unpack(S, e)
        yield i, FlowJet(y, J, H)


def solve_rde_jet(V: VectorFieldSet, y0, x: RoughPathGrid, substeps: int = 1,
                  scheme: str = "euler") -> FlowJet:
    """Flow jets (π, Dπ, D²π) at every grid time via the augmented RDE."""
    batch, single, shape = _as_batch(y0, V.e)
    e, nt = V.e, x.times.size
    pts = np.empty((nt, batch.shape[0], e))
    jac = np.empty((nt, batch.shape[0], e, e))
    hes = np.empty((nt, batch.shape[0], e, e, e))
    for i, jet in iter_jet(V, batch, x, substeps, scheme):
        pts[i], jac[i], hes[i] = jet.point, jet.jacobian, jet.hessian
    if single:
        return FlowJet(pts[:, 0], jac[:, 0], hes[:, 0])
    lead = (nt,) + shape[:-1]
    return FlowJet(pts.reshape(lead + (e,)), jac.reshape(lead + (e, e)), hes.reshape(lead + (e, e, e)))


def inverse_flow(V: VectorFieldSet, y, x: RoughPathGrid, t: float, substeps: int = 1,
                 scheme: str = "euler") -> np.ndarray:
    """π_(V)(0, ·; x)_t^{-1}(y), computed as π_(V)(0, y; ←x^t)_t."""
    y = np.asarray(y, dtype=float)
    if x.index_of(t) == 0:
        return y.copy()
    rev = time_reverse(x, t)
    return solve_rde(V, y, rev, substeps, scheme)[-1]


def inverse_flow_jet(V: VectorFieldSet, y, x: RoughPathGrid, t: float, substeps: int = 1,
                     scheme: str = "euler") -> FlowJet:
    """Jet of the inverse flow at time t, from the reversed-driver jet system."""
    y = np.asarray(y, dtype=float)
    if x.index_of(t) == 0:
        e = V.e
        lead = y.shape[:-1]
        return FlowJet(y.copy(), np.broadcast_to(np.eye(e), lead + (e, e)).copy(), np.zeros(lead + (e, e, e)))
    return solve_rde_jet(V, y, time_reverse(x, t), substeps, scheme)[-1]


def write_trajectory_csv(times, traj, path) -> None:
    """Trajectory rows ``t, y_1..y_e`` at 17 significant digits."""
    traj = np.asarray(traj)
    e = traj.shape[-1]
    lines = [",".join(["t"] + [f"y_{i + 1}" for i in range(e)])]
    for t, row in zip(times, traj):
        lines.append(",".join(format(float(v), ".17g") for v in (t, *row)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
