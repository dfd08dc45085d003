"""Quasistatic total-Lagrangian mechanics: internal forces from S, tractions, EM body force.

The element residual for node a, component i is

    r_ai = sum_q w_q F_ij S_jm G_am - sum_q w_q N_a f_i - (traction and point loads)

and its displacement tangent adds the geometric term d_ik G_aj S_jm G_bm to the
material term F_ij (dS_jm / dF_kn) G_bn G_am.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .coil import Program
from .context import QpContext, block_context
from .fem_core import DofLayout, Mesh, MeshError, block_geometry, facet_geometry, scatter_matrix, scatter_vector
from .smp_material import MechParams, QuadPointState, StressTangent, return_mapping, virgin_state


@dataclass
class PointLoad:
    """Nodal forces (N) scaled by a program; used for force-controlled release."""

    nodes: np.ndarray
    comp: int
    values: np.ndarray
    scale: Program


@dataclass
class MechBC:
    dirichlet: list[tuple[str, int, Program]] = field(default_factory=list)
    traction: dict[str, tuple[np.ndarray, Program]] = field(default_factory=dict)
    point_loads: list[PointLoad] = field(default_factory=list)

    def validate(self, mesh: Mesh) -> None:
        fixed = set()
        for region, comp, _ in self.dirichlet:
            if comp not in (0, 1, 2):
                raise MeshError(f"displacement component {comp} out of range")
            fixed.update((int(n), comp) for n in mesh.region_nodes(region))
        for region, (vec, _) in self.traction.items():
            nodes = mesh.region_nodes(region)
            for comp in np.flatnonzero(np.asarray(vec, float)):
                clash = [n for n in nodes if (int(n), int(comp)) in fixed]
                if clash:
                    raise MeshError(
                        f"traction region '{region}' overlaps a Dirichlet region in component {comp} (node {clash[0]})"
                    )

    def apply(self, mesh: Mesh, layout: DofLayout) -> None:
        self.validate(mesh)
        for region, comp, prog in self.dirichlet:
            for n in mesh.region_nodes(region):
                layout.constrain("U", int(n), comp, prog)

    def external_force(self, mesh: Mesh, t: float, u=None) -> np.ndarray:
        """Dead-load nodal forces, node-major (3 n_nodes,)."""
        out = np.zeros(3 * mesh.n_nodes)
        for region, (vec, prog) in self.traction.items():
            tvec = np.asarray(vec, float) * prog(t)
            for fg in facet_geometry(mesh, region):
                fe = np.einsum("fq,fqa,i->fai", fg.wdA, fg.N, tvec)
                idx = 3 * fg.conn[..., None] + np.arange(3)
                np.add.at(out, idx.ravel(), fe.ravel())
        for pl in self.point_loads:
            np.add.at(out, 3 * pl.nodes + pl.comp, pl.values * pl.scale(t))
        return out


def initial_states(mesh: Mesh, theta0, params: MechParams) -> list[QuadPointState]:
    """Virgin committed states, one flat batch of E*Q points per element block."""
    out = []
    for bg in block_geometry(mesh):
        th = np.einsum("qn,en->eq", bg.N, np.broadcast_to(np.asarray(theta0, float), (mesh.n_nodes,))[bg.conn])
        out.append(virgin_state(th.size, th.ravel(), params))
    return out


def material_response(ctx: QpContext, state: QuadPointState, params: MechParams, tangent: bool = True):
    return return_mapping(ctx.F.reshape(-1, 3, 3), ctx.theta.ravel(), state, params, tangent)


def internal_force(ctx: QpContext, S: np.ndarray) -> np.ndarray:
    """(E, n, 3) element internal forces for S of shape (E*Q, 3, 3)."""
    Sq = S.reshape(ctx.F.shape)
    P = np.einsum("eqij,eqjm->eqim", ctx.F, Sq)
    return np.einsum("eq,eqim,eqam->eai", ctx.wdet, P, ctx.G)


def stiffness(ctx: QpContext, st: StressTangent):
    """(E,n,3,n,3) displacement block and (E,n,3,n) temperature block."""
    shp = ctx.F.shape
    S = st.S.reshape(shp)
    D = st.dSdF.reshape(shp[:2] + (3, 3, 3, 3))
    GSG = np.einsum("eqaj,eqjm,eqbm->eqab", ctx.G, S, ctx.G)
    geo = np.einsum("eq,eqab,ik->eaibk", ctx.wdet, GSG, np.eye(3))
    FD = np.einsum("eqij,eqjmkn->eqimkn", ctx.F, D) * ctx.wdet[..., None, None, None, None]
    FDG = np.einsum("eqimkn,eqbn->eqimkb", FD, ctx.G)
    mat = np.einsum("eqam,eqimkb->eaibk", ctx.G, FDG)
    dth = st.dSdTheta.reshape(shp)
    FdG = np.einsum("eqij,eqjm,eqam->eqai", ctx.F, dth, ctx.G, optimize=True) * ctx.wdet[..., None, None]
    kth = np.einsum("eqai,eqb->eaib", FdG, ctx.Nfull)
    return geo + mat, kth


def body_force_terms(ctx: QpContext, f_L: np.ndarray, sens=None):
    """Residual (E,n,3) of -int N_a f_L and, given sensitivities, its blocks."""
    N = ctx.Nfull
    r = -np.einsum("eq,eqa,eqi->eai", ctx.wdet, N, f_L)
    if sens is None:
        return r, None
    d_phi, d_th, d_u = sens
    blocks = (
        -np.einsum("eq,eqa,eqbi->eaib", ctx.wdet, N, d_phi),
        -np.einsum("eq,eqa,eqbi->eaib", ctx.wdet, N, d_th),
        -np.einsum("eq,eqa,eqbki->eaibk", ctx.wdet, N, d_u),
    )
    return r, blocks


# ---------------------------------------------------------------- standalone API


def _fields(mesh: Mesh, u, theta, phi):
    n = mesh.n_nodes
    u = np.zeros((n, 3)) if u is None else np.asarray(u, float).reshape(n, 3)
    theta = np.broadcast_to(np.asarray(theta, float), (n,)).copy()
    phi = np.zeros(n) if phi is None else np.asarray(phi, float)
    return u, theta, phi


def mech_residual(mesh: Mesh, u, theta, states, params: MechParams, bc: MechBC | None = None, t: float = 0.0,
                  phi=None, body_force=None) -> np.ndarray:
    """Internal minus external nodal forces, node-major (3 n_nodes,).

    ``body_force`` optionally maps a block context to f_L per quadrature point (E,Q,3).
    """
    u, theta, phi = _fields(mesh, u, theta, phi)
    idx, vals = [], []
    for bg, st in zip(block_geometry(mesh), states):
        ctx = block_context(bg, phi, theta, u)
        resp, _, _ = material_response(ctx, st, params, tangent=False)
        fe = internal_force(ctx, resp.S)
        if body_force is not None:
            fe = fe + body_force_terms(ctx, body_force(ctx))[0]
        idx.append(3 * bg.conn[..., None] + np.arange(3))
        vals.append(fe)
    r = scatter_vector(3 * mesh.n_nodes, idx, vals)
    if bc is not None:
        r -= bc.external_force(mesh, t, u)
    return r


def mech_tangent(mesh: Mesh, u, theta, states, params: MechParams) -> sp.csr_matrix:
    u, theta, phi = _fields(mesh, u, theta, None)
    rows, vals = [], []
    for bg, st in zip(block_geometry(mesh), states):
        ctx = block_context(bg, phi, theta, u)
        resp, _, _ = material_response(ctx, st, params)
        kuu, _ = stiffness(ctx, resp)
        E, n = bg.conn.shape
        rows.append((3 * bg.conn[..., None] + np.arange(3)).reshape(E, 3 * n))
        vals.append(kuu.reshape(E, 3 * n, 3 * n))
    return scatter_matrix(3 * mesh.n_nodes, rows, rows, vals)


def reaction_force(residual_internal: np.ndarray, layout: DofLayout, mesh: Mesh, region: str) -> np.ndarray:
    """Componentwise sum of internal-force entries at the constrained U DOFs of a region.

    ``residual_internal`` is either the node-major U vector (3 n_nodes,) or a full
    layout vector.
    """
    nodes = mesh.region_nodes(region)
    r = np.asarray(residual_internal)
    base = 0 if r.size == 3 * layout.node_count else layout.offset("U")
    out = np.zeros(3)
    for comp in range(3):
        sel = [n for n in nodes if ("U", int(n), comp) in layout.constraints]
        if sel:
            out[comp] = r[base + 3 * np.asarray(sel) + comp].sum()
    return out
