"""Lagrangian transient heat conduction with Joule source, convection and radiation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .coil import Program
from .context import QpContext, block_context, facet_context
from .fem_core import Mesh, block_geometry, facet_geometry, scatter_matrix, scatter_vector

STEFAN_BOLTZMANN = 5.670374419e-8


@dataclass
class ThermalParams:
    rho0: float = 270.0
    cp: float = 10.0
    kappa0: float = 237.0
    alpha_kappa: float = 0.0
    theta_ref: float = 293.15
    h: Program = field(default_factory=lambda: Program.constant(500.0))
    theta_B: Program = field(default_factory=lambda: Program.constant(310.0))
    eps_R: float = 0.0
    sigma_R: float = STEFAN_BOLTZMANN
    theta_R: float = 293.15
    convection_regions: tuple[str, ...] = ()
    radiation_regions: tuple[str, ...] = ()

    def __post_init__(self):
        if self.rho0 <= 0 or self.cp <= 0 or self.kappa0 <= 0:
            raise ValueError("rho0, cp and kappa0 must be positive")
        if not 0.0 <= self.eps_R <= 1.0:
            raise ValueError("eps_R must lie in [0, 1]")

    @property
    def rho_cp(self) -> float:
        return self.rho0 * self.cp

    def kappa(self, theta):
        k = self.kappa0 * (1.0 + self.alpha_kappa * (theta - self.theta_ref))
        if np.any(k <= 0):
            raise ValueError("thermal conductivity became non-positive")
        return k, np.full_like(k, self.kappa0 * self.alpha_kappa)


def element_mass(ctx: QpContext, rho_cp: float) -> np.ndarray:
    N = ctx.Nfull
    return rho_cp * np.einsum("eq,eqa,eqb->eab", ctx.wdet, N, N)


def diffusion(ctx: QpContext, params: ThermalParams, tangent: bool = True):
    """Residual (E,n) of Div(kappa_L Grad theta) and its theta/u blocks."""
    k, dk = params.kappa(ctx.theta)
    tq = np.einsum("eqji,eqj->eqi", ctx.Finv, ctx.grad_theta)   # F^-T Grad theta
    c = ctx.wdet * k * ctx.J
    Pt = np.einsum("eqak,eqk->eqa", ctx.P, tq)
    r = np.einsum("eq,eqa->ea", c, Pt)
    if not tangent:
        return r, None, None
    N = ctx.Nfull
    PP = np.einsum("eqak,eqbk->eqab", ctx.P, ctx.P)
    d_th = np.einsum("eq,eqab->eab", c, PP) + np.einsum("eq,eqa,eqb->eab", ctx.wdet * dk * ctx.J, Pt, N)
    d_u = (
        np.einsum("eq,eqbk,eqa->eabk", c, ctx.P, Pt)
        - np.einsum("eq,eqak,eqb->eabk", c, ctx.P, Pt)
        - np.einsum("eq,eqab,eqk->eabk", c, PP, tq)
    )
    return r, d_th, d_u


def boundary_flux(ctx: QpContext, normal: np.ndarray, params: ThermalParams, t: float, kind: str, tangent: bool = True):
    """Facet residual (F,n) of the convective or radiative loss with Nanson area map."""
    th = ctx.theta
    if kind == "convection":
        h = params.h(t)
        q = h * (th - params.theta_B(t))
        dq = np.full_like(th, h)
    else:
        es = params.eps_R * params.sigma_R
        q = es * (th**4 - params.theta_R**4)
        dq = 4 * es * th**3
    m = np.einsum("fqji,fqj->fqi", ctx.Finv, normal)          # F^-T N
    mn = np.sqrt(np.einsum("fqi,fqi->fq", m, m))
    s = ctx.J * mn
    N = ctx.Nfull
    r = np.einsum("fq,fqa->fa", ctx.wdet * s * q, N)
    if not tangent:
        return r, None, None
    d_th = np.einsum("fq,fqa,fqb->fab", ctx.wdet * s * dq, N, N)
    Pm = np.einsum("fqbk,fqk->fqb", ctx.P, m)
    ds = ctx.J[..., None, None] * (ctx.P * mn[..., None, None] - Pm[..., None] * (m / mn[..., None])[:, :, None, :])
    d_u = np.einsum("fq,fqa,fqbk->fabk", ctx.wdet * q, N, ds)
    return r, d_th, d_u


# ---------------------------------------------------------------- standalone API


def _nodal(mesh, u, theta):
    n = mesh.n_nodes
    u = np.zeros((n, 3)) if u is None else np.asarray(u, float).reshape(n, 3)
    theta = np.zeros(n) if theta is None else np.broadcast_to(np.asarray(theta, float), (n,)).copy()
    return u, theta


def assemble_M_the(mesh: Mesh, params: ThermalParams) -> sp.csr_matrix:
    z = np.zeros(mesh.n_nodes)
    rows, vals = [], []
    for bg in block_geometry(mesh):
        ctx = block_context(bg, z, z, np.zeros((mesh.n_nodes, 3)))
        rows.append(bg.conn)
        vals.append(element_mass(ctx, params.rho_cp))
    return scatter_matrix(mesh.n_nodes, rows, rows, vals)


def assemble_K_the(mesh: Mesh, u, theta, params: ThermalParams) -> sp.csr_matrix:
    """Conduction matrix with kappa_L evaluated at the given temperature (secant form)."""
    u, theta = _nodal(mesh, u, theta)
    z = np.zeros(mesh.n_nodes)
    rows, vals = [], []
    for bg in block_geometry(mesh):
        ctx = block_context(bg, z, theta, u)
        k, _ = params.kappa(ctx.theta)
        c = ctx.wdet * k * ctx.J
        rows.append(bg.conn)
        vals.append(np.einsum("eq,eqak,eqbk->eab", c, ctx.P, ctx.P))
    return scatter_matrix(mesh.n_nodes, rows, rows, vals)


def boundary_terms(mesh: Mesh, theta, params: ThermalParams, u=None, t: float = 0.0):
    """Convective matrix (h_L N N), boundary residual vector, radiative tangent matrix."""
    u, theta = _nodal(mesh, u, theta)
    n = mesh.n_nodes
    z = np.zeros(n)
    conv_rows, conv_vals, rad_rows, rad_vals, vidx, vvals = [], [], [], [], [], []
    for kind, regions in (("convection", params.convection_regions), ("radiation", params.radiation_regions)):
        if kind == "radiation" and params.eps_R == 0.0:
            continue
        for tag in regions:
            for fg in facet_geometry(mesh, tag):
                ctx = facet_context(fg, mesh.nodes, z, theta, u)
                r, d_th, _ = boundary_flux(ctx, fg.normal, params, t, kind)
                vidx.append(fg.conn)
                vvals.append(r)
                (conv_rows if kind == "convection" else rad_rows).append(fg.conn)
                (conv_vals if kind == "convection" else rad_vals).append(d_th)
    return (
        scatter_matrix(n, conv_rows, conv_rows, conv_vals),
        scatter_vector(n, vidx, vvals) if vidx else np.zeros(n),
        scatter_matrix(n, rad_rows, rad_rows, rad_vals),
    )


def heat_source_vector(mesh: Mesh, w_qp, u=None) -> np.ndarray:
    """Consistent nodal source int N w over the reference volume; w_qp per block (E,Q) or scalar."""
    idx, vals = [], []
    for k, bg in enumerate(block_geometry(mesh)):
        w = w_qp[k] if isinstance(w_qp, (list, tuple)) else np.broadcast_to(w_qp, bg.wdet.shape)
        idx.append(bg.conn)
        vals.append(np.einsum("eq,qa->ea", bg.wdet * w, bg.N))
    return scatter_vector(mesh.n_nodes, idx, vals)


def thermal_residual(mesh: Mesh, params: ThermalParams, theta_new, theta_old, dt: float, w_qp, u=None, t: float = 0.0) -> np.ndarray:
    """Backward-Euler, dt-scaled heat residual M(th1-th0) + dt (K th1 + boundary - int N w)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    theta_new = np.asarray(theta_new, float)
    M = assemble_M_the(mesh, params)
    K = assemble_K_the(mesh, u, theta_new, params)
    _, rb, _ = boundary_terms(mesh, theta_new, params, u, t)
    src = heat_source_vector(mesh, w_qp, u)
    return M @ (theta_new - np.asarray(theta_old, float)) + dt * (K @ theta_new + rb - src)


@dataclass(frozen=True)
class NondimReport:
    T_c: float
    L_c: float
    source_ratio: float
    dtheta_per_step: float
    flagged: bool


def nondim_report(params: ThermalParams, L_c: float, w_ref: float = 0.0, dt: float = 0.0, band: float = 5.0) -> NondimReport:
    """Diffusion time rho cp L^2 / kappa; flags a per-step rise w dt / (rho cp) above ``band`` K."""
    if L_c <= 0:
        raise ValueError("L_c must be positive")
    T_c = params.rho0 * params.cp * L_c**2 / params.kappa0
    ratio = w_ref * T_c / params.rho_cp if w_ref else 0.0
    dth = w_ref * dt / params.rho_cp
    return NondimReport(T_c, L_c, ratio, dth, dth > band)
