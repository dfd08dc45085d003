"""Quadrature-point evaluation of the nodal fields shared by all three physics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem_core import BlockGeometry, FacetGeometry
from .kinematics import KinematicsError, inv3, J_MIN


@dataclass
class QpContext:
    """Fields at the quadrature points of one element block (or facet set).

    P holds spatial shape gradients P_a = G_a F^-1 (rows), i.e. grad_x N_a.
    """

    conn: np.ndarray
    N: np.ndarray        # (Q, n) or (E, Q, n)
    G: np.ndarray        # (E, Q, n, 3)
    wdet: np.ndarray     # (E, Q)
    X: np.ndarray        # (E, Q, 3)
    u: np.ndarray        # (E, Q, 3)
    F: np.ndarray        # (E, Q, 3, 3)
    Finv: np.ndarray
    J: np.ndarray        # (E, Q)
    P: np.ndarray        # (E, Q, n, 3)
    theta: np.ndarray    # (E, Q)
    grad_theta: np.ndarray  # (E, Q, 3) reference gradient
    grad_phi: np.ndarray    # (E, Q, 3) reference gradient

    @property
    def x(self) -> np.ndarray:
        return self.X + self.u

    @property
    def Nfull(self) -> np.ndarray:
        return np.broadcast_to(self.N, self.G.shape[:-1]) if self.N.ndim == 2 else self.N


def evaluate(N, G, conn, X, phi, theta, u, where: str = "") -> tuple:
    ue = u[conn]                     # (E, n, 3)
    H = np.einsum("ena,eqnb->eqab", ue, G)
    F = np.eye(3) + H
    Finv, J = inv3(F)
    if np.any(J <= J_MIN):
        bad = np.unique(np.argwhere(J <= J_MIN)[:, 0])
        raise KinematicsError(f"element inversion{where}: J <= {J_MIN} in elements {bad[:10].tolist()}")
    P = np.einsum("eqnj,eqjk->eqnk", G, Finv)
    if N.ndim == 2:
        uq = np.einsum("qn,end->eqd", N, ue)
        th = np.einsum("qn,en->eq", N, theta[conn])
    else:
        uq = np.einsum("eqn,end->eqd", N, ue)
        th = np.einsum("eqn,en->eq", N, theta[conn])
    gth = np.einsum("eqnd,en->eqd", G, theta[conn])
    gph = np.einsum("eqnd,en->eqd", G, phi[conn])
    return uq, F, Finv, J, P, th, gth, gph


def block_context(bg: BlockGeometry, phi, theta, u) -> QpContext:
    uq, F, Finv, J, P, th, gth, gph = evaluate(bg.N, bg.G, bg.conn, bg.X, phi, theta, u)
    return QpContext(bg.conn, bg.N, bg.G, bg.wdet, bg.X, uq, F, Finv, J, P, th, gth, gph)


def facet_context(fg: FacetGeometry, nodes, phi, theta, u) -> QpContext:
    X = np.einsum("fqn,fnd->fqd", fg.N, nodes[fg.conn])
    uq, F, Finv, J, P, th, gth, gph = evaluate(fg.N, fg.G, fg.conn, X, phi, theta, u, " on boundary")
    return QpContext(fg.conn, fg.N, fg.G, fg.wdA, X, uq, F, Finv, J, P, th, gth, gph)
