"""Lagrangian scalar-potential electrokinetics driven by the coil source potential.

Per quadrature point, with e = grad_X(Phi) + F^T d_t a_s (the negative effective field
pulled back) and f = F^-T e its Eulerian image:

    sigma_L = J sigma F^-1 F^-T,   J_L = -sigma_L e,   w = J sigma f.f

The element residual of Div J_L = 0 is r_a = sum w_q J sigma P_a.f with P_a = grad_x N_a.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coil import CoilSpec, b_rate, skew_axis
from .context import QpContext, block_context
from .fem_core import Mesh, block_geometry, scatter_matrix, scatter_vector


@dataclass
class EmMaterial:
    sigma0: float = 1e4
    alpha: float = 0.0
    theta_ref: float = 293.15
    mu_r: float = 20.0
    hysteresis_loss: bool = False

    def __post_init__(self):
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        if self.mu_r < 1:
            raise ValueError("mu_r must be >= 1")
        if self.hysteresis_loss:
            raise NotImplementedError("hysteretic losses are not modelled (anhysteretic, linear magnetization)")

    def sigma(self, theta):
        s = self.sigma0 * (1.0 + self.alpha * (theta - self.theta_ref))
        if np.any(s <= 0):
            raise ValueError("conductivity became non-positive; temperature outside admissible range")
        return s, np.full_like(s, self.sigma0 * self.alpha)


@dataclass
class EmQp:
    """Quadrature-point electrokinetic quantities and their sensitivities."""

    sigma: np.ndarray
    dsigma: np.ndarray
    e: np.ndarray       # Lagrangian e = grad Phi + F^T a_dot
    f: np.ndarray       # F^-T e
    Wx: np.ndarray      # d_t a_s at deformed x
    W: np.ndarray       # (3,3) with d_t a_s = W x
    w: np.ndarray       # loss density per reference volume


def em_qp(ctx: QpContext, mat: EmMaterial, coil: CoilSpec | None, t: float, averaged: bool = False) -> EmQp:
    sig, dsig = mat.sigma(ctx.theta)
    if coil is None:
        W = np.zeros((3, 3))
    else:
        W = b_rate(t, coil, averaged) * skew_axis(coil)
    Wx = np.einsum("ij,eqj->eqi", W, ctx.x)
    e = ctx.grad_phi + np.einsum("eqji,eqj->eqi", ctx.F, Wx)
    f = np.einsum("eqji,eqj->eqi", ctx.Finv, e)
    w = sig * ctx.J * np.einsum("eqi,eqi->eq", f, f)
    return EmQp(sig, dsig, e, f, Wx, W, w)


def lagrangian_current(ctx: QpContext, q: EmQp) -> np.ndarray:
    """J_L = -J sigma F^-1 f."""
    return -(q.sigma * ctx.J)[..., None] * np.einsum("eqij,eqj->eqi", ctx.Finv, q.f)


def em_residual(ctx: QpContext, q: EmQp) -> np.ndarray:
    """(E, n) element residual of K Phi + F."""
    c = ctx.wdet * q.sigma * ctx.J
    return np.einsum("eq,eqnk,eqk->en", c, ctx.P, q.f)


def em_tangent(ctx: QpContext, q: EmQp):
    """Element blocks dr/dPhi (E,n,n), dr/dtheta (E,n,n), dr/du (E,n,n,3)."""
    c = ctx.wdet * q.sigma * ctx.J
    N = ctx.Nfull
    PP = np.einsum("eqak,eqbk->eqab", ctx.P, ctx.P)
    Pf = np.einsum("eqak,eqk->eqa", ctx.P, q.f)
    d_phi = np.einsum("eq,eqab->eab", c, PP)
    d_th = np.einsum("eq,eqa,eqb->eab", ctx.wdet * q.dsigma * ctx.J, Pf, N)
    PW = np.einsum("eqai,ik->eqak", ctx.P, q.W)
    d_u = (
        np.einsum("eq,eqbk,eqa->eabk", c, ctx.P, Pf)
        - np.einsum("eq,eqak,eqb->eabk", c, ctx.P, Pf)
        + np.einsum("eq,eqab,eqk->eabk", c, PP, q.Wx - q.f)
        + np.einsum("eq,eqb,eqak->eabk", c, N, PW)
    )
    return d_phi, d_th, d_u


def loss_sensitivities(ctx: QpContext, q: EmQp):
    """dw/dPhi (E,Q,n), dw/dtheta (E,Q,n), dw/du (E,Q,n,3)."""
    c = q.sigma * ctx.J
    N = ctx.Nfull
    ff = np.einsum("eqi,eqi->eq", q.f, q.f)
    Pf = np.einsum("eqbk,eqk->eqb", ctx.P, q.f)
    fW = np.einsum("eqi,ik->eqk", q.f, q.W)
    dw_phi = 2 * c[..., None] * Pf
    dw_th = (q.dsigma * ctx.J * ff)[..., None] * N
    dw_u = c[..., None, None] * (
        ctx.P * ff[..., None, None]
        + 2 * Pf[..., None] * (q.Wx - q.f)[:, :, None, :]
        + 2 * N[..., None] * fW[:, :, None, :]
    )
    return dw_phi, dw_th, dw_u


def lorentz_force(ctx: QpContext, q: EmQp, bvec: np.ndarray) -> np.ndarray:
    """Reference-volume force J^-1 (F J_L) x (F B_L) = -J sigma f x b for uniform b."""
    return -(q.sigma * ctx.J)[..., None] * np.cross(q.f, bvec)


def lorentz_sensitivities(ctx: QpContext, q: EmQp, bvec: np.ndarray):
    """d f_L / dPhi (E,Q,n,3), / dtheta (E,Q,n,3), / du (E,Q,n,3,3) with last axis = force comp."""
    c = (q.sigma * ctx.J)[..., None, None]
    N = ctx.Nfull
    d_phi = -c * np.cross(ctx.P, bvec)
    d_th = -(q.dsigma * ctx.J)[..., None, None] * N[..., None] * np.cross(q.f, bvec)[:, :, None, :]
    # delta(J f) for u_bk: J [P_bk f + P_b (Wx - f)_k + N_b W[:, k]]
    jf = (
        ctx.P[..., :, None] * q.f[:, :, None, None, :]
        + ctx.P[..., None, :] * (q.Wx - q.f)[:, :, None, :, None]
        + N[..., None, None] * q.W.T[None, None, None, :, :]
    )
    d_u = -c[..., None] * np.cross(jf, bvec)
    return d_phi, d_th, d_u


# ---------------------------------------------------------------- standalone API


def _contexts(mesh: Mesh, u, theta, phi=None):
    n = mesh.n_nodes
    u = np.zeros((n, 3)) if u is None else np.asarray(u, float).reshape(n, 3)
    theta = np.full(n, 293.15) if theta is None else np.broadcast_to(np.asarray(theta, float), (n,))
    phi = np.zeros(n) if phi is None else np.asarray(phi, float)
    return [block_context(bg, phi, theta, u) for bg in block_geometry(mesh)]


def assemble_K_ele(mesh: Mesh, u, theta, material: EmMaterial) -> sp.csr_matrix:
    rows, vals = [], []
    for ctx in _contexts(mesh, u, theta):
        q = em_qp(ctx, material, None, 0.0)
        d_phi, _, _ = em_tangent(ctx, q)
        rows.append(ctx.conn)
        vals.append(d_phi)
    return scatter_matrix(mesh.n_nodes, rows, rows, vals)


def assemble_F_ele(mesh: Mesh, u, theta, material: EmMaterial, coil: CoilSpec, t: float, averaged: bool = False) -> np.ndarray:
    idx, vals = [], []
    for ctx in _contexts(mesh, u, theta):
        q = em_qp(ctx, material, coil, t, averaged)
        idx.append(ctx.conn)
        vals.append(em_residual(ctx, q))
    return scatter_vector(mesh.n_nodes, idx, vals)


def ground_node(mesh: Mesh) -> int:
    """Minimum-index boundary node."""
    return int(min(fs.nodes.min() for fs in mesh.facets.values()))


def solve_potential(K: sp.spmatrix, F: np.ndarray, grounding) -> np.ndarray:
    """Solve K phi + F = 0 with phi = 0 at the grounded nodes."""
    grounding = np.atleast_1d(np.asarray(grounding, dtype=np.int64))
    if grounding.size == 0:
        raise ValueError("floating conductor, no ground")
    n = K.shape[0]
    free = np.setdiff1d(np.arange(n), grounding)
    phi = np.zeros(n)
    if free.size == 0:
        return phi
    kff = sp.csc_matrix(K)[free][:, free]
    try:
        lu = spla.splu(kff.tocsc())
    except RuntimeError as exc:
        raise ValueError("floating conductor, no ground (singular reduced matrix)") from exc
    phi[free] = lu.solve(-F[free])
    if not np.all(np.isfinite(phi)):
        raise ValueError("floating conductor, no ground (singular reduced matrix)")
    return phi


@dataclass
class EmSolution:
    phi: np.ndarray
    J_qp: list[np.ndarray]
    w_qp: list[np.ndarray]
    e_qp: list[np.ndarray]
    a_dot_qp: list[np.ndarray]
    x_qp: list[np.ndarray]
    weights: list[np.ndarray]


def current_and_losses(mesh: Mesh, phi, u, theta, material: EmMaterial, coil: CoilSpec, t: float, averaged: bool = False) -> EmSolution:
    out = EmSolution(np.asarray(phi), [], [], [], [], [], [])
    for ctx in _contexts(mesh, u, theta, phi):
        q = em_qp(ctx, material, coil, t, averaged)
        out.J_qp.append(lagrangian_current(ctx, q))
        out.w_qp.append(q.w)
        out.e_qp.append(q.e)
        out.a_dot_qp.append(q.Wx)
        out.x_qp.append(ctx.x)
        out.weights.append(ctx.wdet)
    return out


def solve_em(mesh: Mesh, u, theta, material: EmMaterial, coil: CoilSpec, t: float, averaged: bool = False) -> EmSolution:
    K = assemble_K_ele(mesh, u, theta, material)
    F = assemble_F_ele(mesh, u, theta, material, coil, t, averaged)
    phi = solve_potential(K, F, ground_node(mesh))
    return current_and_losses(mesh, phi, u, theta, material, coil, t, averaged)


def em_body_force(F, J_L, B_L, grad_b=None, m=None):
    """Reference-volume EM force f_L = J^-1 (F J_L) x (F B_L) + J (grad b)^T m.

    ``grad_b`` (Eulerian gradient of b, (...,3,3) with [i, j] = d b_i / d x_j) and the
    Eulerian magnetization ``m`` are optional; the magnetization term vanishes for a
    uniform solenoid field.
    """
    from .kinematics import det3

    J = det3(F)
    fj = np.einsum("...ij,...j->...i", F, J_L)
    fb = np.einsum("...ij,...j->...i", F, B_L)
    out = np.cross(fj, fb) / J[..., None]
    if grad_b is not None and m is not None:
        out = out + J[..., None] * np.einsum("...ji,...j->...i", grad_b, m)
    return out
