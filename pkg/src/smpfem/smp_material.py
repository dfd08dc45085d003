"""Shape-memory-polymer constitutive model at quadrature points.

Kinematic splits  F = F_eg F_pg F_f  (glassy)  and  F = F_er F_p  (rubbery).  Each branch
is St. Venant-Kirchhoff in its elastic Green-Lagrange strain and the stresses mix as

    S = z J_f F_f^-1 S_g F_f^-T + (1 - z) J_p F_p^-1 S_r F_p^-T,
    S_g = F_pg^-1 (lam tr E_eg I + 2 mu E_eg) F_pg^-T.

Everything is vectorised over a flat batch of points and written with operations that
are analytic in their inputs, so a complex-step perturbation of F or theta propagates
exact first derivatives through the whole update (used for the algorithmic tangent on
yielding/cooling points and for dS/dtheta).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import det3, inv3

I3 = np.eye(3)
CS_STEP = 1e-30
YIELD_TOL = 1e-9  # relative overshoot that counts as yielding
PASS_CAP = 0.01   # largest plastic increment taken along one frozen flow direction


class ReturnMappingError(RuntimeError):
    """Plastic scalar solve failed; the caller should cut the time step."""


class ContractViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class MechParams:
    E_r: float = 0.9e6
    E_g: float = 771e6
    nu_r: float = 0.49
    nu_g: float = 0.29
    R_pg: float = 10e6
    h: float = 0.0
    delta_theta: float = 30.0
    theta_t: float = 350.0
    w: float = 0.2
    c: float = 1.0
    c_p: float = 0.0

    def __post_init__(self):
        if self.E_r <= 0 or self.E_g <= 0:
            raise ValueError("Young's moduli must be positive")
        for nu in (self.nu_r, self.nu_g):
            if not 0.0 <= nu < 0.5:
                raise ValueError("Poisson ratios must lie in [0, 0.5)")
        if self.R_pg <= 0 or self.c <= 0 or self.w <= 0:
            raise ValueError("R_pg, c and w must be positive")
        if self.h < 0 or self.c_p < 0:
            raise ValueError("h and c_p must be non-negative")


def lame(params: MechParams, phase: str) -> tuple[float, float]:
    if phase == "glassy":
        E, nu = params.E_g, params.nu_g
    elif phase == "rubbery":
        E, nu = params.E_r, params.nu_r
    else:
        raise ValueError(f"phase must be 'glassy' or 'rubbery', got '{phase}'")
    return E * nu / ((1 + nu) * (1 - 2 * nu)), E / (2 * (1 + nu))


def glassy_fraction(theta, params: MechParams):
    """z = 1 / (1 + c exp(w (theta - theta_t))) and dz/dtheta."""
    x = params.w * (theta - params.theta_t)
    ex = params.c * np.exp(np.clip(np.real(x), -700, 700) + 1j * np.imag(x)) if np.iscomplexobj(x) else params.c * np.exp(np.clip(x, -700, 700))
    z = 1.0 / (1.0 + ex)
    return z, -params.w * z * (1.0 - z)


@dataclass
class QuadPointState:
    """Internal variables of a batch of points (leading axis = point)."""

    z: np.ndarray
    F_f: np.ndarray
    F_p: np.ndarray
    F_pg: np.ndarray
    alpha: np.ndarray
    converged: bool = False

    def copy(self) -> "QuadPointState":
        return QuadPointState(self.z.copy(), self.F_f.copy(), self.F_p.copy(), self.F_pg.copy(), self.alpha.copy(), self.converged)

    def take(self, idx) -> "QuadPointState":
        return QuadPointState(self.z[idx], self.F_f[idx], self.F_p[idx], self.F_pg[idx], self.alpha[idx], self.converged)

    def __len__(self) -> int:
        return len(self.z)


def virgin_state(n: int, theta0, params: MechParams) -> QuadPointState:
    z, _ = glassy_fraction(np.broadcast_to(np.asarray(theta0, float), (n,)).copy(), params)
    eye = np.broadcast_to(I3, (n, 3, 3)).copy()
    return QuadPointState(z, eye.copy(), eye.copy(), eye.copy(), np.zeros(n), converged=True)


def commit(trial: QuadPointState) -> QuadPointState:
    """Return the immutable committed copy of a converged trial state."""
    if not trial.converged:
        raise ContractViolation("commit called on a trial state without the converged flag")
    out = trial.copy()
    for a in (out.z, out.F_f, out.F_p, out.F_pg, out.alpha):
        a.setflags(write=False)
    return out


def _mm(a, b):
    return np.einsum("...ij,...jk->...ik", a, b)


def _T(a):
    return np.swapaxes(a, -1, -2)


def _where(mask, a, b):
    m = mask.reshape(mask.shape + (1,) * (np.ndim(a) - mask.ndim))
    return np.where(m, a, b)


def update_frozen(F_f, z_old, z_new, F, F_p_new, params: MechParams):
    """Frozen-deformation storage on cooling and release on heating."""
    dz = z_new - z_old
    Fpinv, _ = inv3(F_p_new)
    safe_new = np.where(np.real(z_new) > 0, z_new, 1.0)
    cool = (dz / safe_new)[..., None, None] * (_mm(F, Fpinv) - F_f) + F_f
    safe_old = np.where(np.real(z_old) > 0, z_old, 1.0)
    ratio = (z_new / safe_old) ** params.c
    heat = I3 + ratio[..., None, None] * (F_f - I3)
    out = _where(np.real(dz) > 0, cool, F_f)
    return _where((np.real(dz) < 0) & (np.real(z_old) > 0), heat, out)


def _expm_sym(A):
    """Matrix exponential by scaling and squaring with a Taylor core (analytic in A)."""
    if A.size == 0:
        return A + I3
    nrm = np.sqrt(np.max(np.real(np.einsum("...ij,...ij->...", A, np.conj(A)))))
    s = int(max(0, np.ceil(np.log2(nrm / 0.25)))) if nrm > 0 else 0
    X = A / 2.0**s
    out = np.broadcast_to(I3, A.shape).astype(A.dtype)
    term = out.copy()
    for k in range(1, 14):
        term = _mm(term, X) / k
        out = out + term
    for _ in range(s):
        out = _mm(out, out)
    return out


def _svk(Ce, lam, mu):
    E = 0.5 * (Ce - I3)
    trE = E[..., 0, 0] + E[..., 1, 1] + E[..., 2, 2]
    return lam * trE[..., None, None] * I3 + 2 * mu * E


def _dev(M):
    trM = M[..., 0, 0] + M[..., 1, 1] + M[..., 2, 2]
    return M - trM[..., None, None] / 3.0 * I3


def _vm(devM):
    return np.sqrt(1.5 * np.einsum("...ij,...ij->...", devM, devM))


@dataclass
class Update:
    S: np.ndarray
    state: QuadPointState
    plastic: np.ndarray
    cooling: np.ndarray
    mandel_vm: np.ndarray
    iterations: int


def _scalar_return(Ct, Nf, y0, params: MechParams, lam_g, mu_g, tol, max_iter):
    """Solve q(dg) = y0 + h dg along a frozen flow direction with dg in [0, PASS_CAP].

    Safeguarded Newton with bisection.  Points whose residual is still positive at the cap
    return the cap; the caller then refreshes the direction and continues.
    """

    def resid(g):
        Em = _expm_sym(-g[..., None, None] * Nf)
        Ce = _mm(_mm(Em, Ct), Em)
        Sg = _svk(Ce, lam_g, mu_g)
        dM = _dev(_mm(Ce, Sg))
        qq = _vm(dM)
        dCe = -(_mm(Nf, Ce) + _mm(Ce, Nf))
        trd = dCe[..., 0, 0] + dCe[..., 1, 1] + dCe[..., 2, 2]
        dS = 0.5 * lam_g * trd[..., None, None] * I3 + mu_g * dCe
        dMd = _dev(_mm(dCe, Sg) + _mm(Ce, dS))
        dr = 1.5 * np.einsum("...ij,...ij->...", dM, dMd) / qq - params.h
        return qq - y0 - params.h * g, dr

    n = len(y0)
    cap = np.full(n, PASS_CAP) + 0 * y0
    r_cap, _ = resid(cap)
    capped = np.real(r_cap) > 0
    lo = np.zeros(n)
    hi = np.full(n, PASS_CAP)
    g = np.where(capped, cap, 0 * cap)
    active = ~capped
    for it in range(1, max_iter + 1):
        r, dr = resid(g)
        newton = g - r / np.where(np.real(dr) == 0, -1.0, dr)
        active = active & (np.abs(np.real(r)) > tol * params.R_pg)
        if not np.any(active):
            # a final Newton step on every converged point also settles the complex part
            return np.where(capped, g, newton), it
        gr = np.real(g)
        lo = np.where(np.real(r) > 0, np.maximum(lo, gr), lo)
        hi = np.where(np.real(r) < 0, np.minimum(hi, gr), hi)
        nr = np.real(newton)
        ok = (nr > lo) & (nr < hi) & np.isfinite(nr)
        g = np.where(active, np.where(ok, newton, 0.5 * (lo + hi)), g)
    raise ReturnMappingError(f"plastic scalar solve did not converge in {max_iter} iterations")


def _update(F, theta, st: QuadPointState, params: MechParams, tol: float = 1e-12, max_iter: int = 60, max_pass: int = 200) -> Update:
    """Return map for one batch; F and theta may be complex for complex-step use."""
    lam_g, mu_g = lame(params, "glassy")
    lam_r, mu_r = lame(params, "rubbery")
    z_old = st.z
    z, _ = glassy_fraction(theta, params)
    dz = z - z_old
    cooling = np.real(dz) > 0
    heating = (np.real(dz) < 0) & (np.real(z_old) > 0)

    # rubbery plastic set on heating (disabled for c_p = 0)
    F_f_rel = update_frozen(st.F_f, z_old, z, F, st.F_p, params)
    if params.c_p > 0:
        F_p = _where(heating, st.F_p + params.c_p * (st.F_f - F_f_rel), st.F_p)
        F_f = update_frozen(st.F_f, z_old, z, F, F_p, params)
    else:
        F_p = st.F_p + 0 * F_f_rel
        F_f = F_f_rel

    # new glass is born with F_pg = I: dilute the glassy plastic state on cooling
    wgt = np.where(cooling, z_old / z, 1.0)
    F_pg = wgt[..., None, None] * st.F_pg + (1 - wgt)[..., None, None] * I3
    F_pg = F_pg / (det3(F_pg) ** (1.0 / 3.0))[..., None, None]
    alpha = wgt * st.alpha

    C = _mm(_T(F), F)
    Ffinv, J_f = inv3(F_f)
    plastic = np.zeros(np.shape(z), bool)
    iters = 0
    for _pass in range(max_pass):
        Fpginv, _ = inv3(F_pg)
        A = _mm(Ffinv, Fpginv)
        Ctr = _mm(_mm(_T(A), C), A)
        Sig = _svk(Ctr, lam_g, mu_g)
        devM = _dev(_mm(Ctr, Sig))
        q = _vm(devM)
        yld = params.R_pg + params.h * alpha
        over = np.real(q - yld) > YIELD_TOL * params.R_pg
        if not np.any(over):
            break
        plastic |= over
        idx = np.flatnonzero(over)
        Nf = 1.5 * devM[idx] / q[idx][..., None, None]
        Nf = 0.5 * (Nf + _T(Nf))
        g, n_it = _scalar_return(Ctr[idx], Nf, yld[idx], params, lam_g, mu_g, tol, max_iter)
        iters += n_it
        F_pg = F_pg.astype(np.result_type(F_pg, g)).copy()
        F_pg[idx] = _mm(_expm_sym(g[..., None, None] * Nf), F_pg[idx])
        alpha = alpha.astype(np.result_type(alpha, g)).copy()
        alpha[idx] = alpha[idx] + g
    else:
        raise ReturnMappingError(f"glassy return did not reach the yield surface in {max_pass} passes")

    S_glass = (z * J_f)[..., None, None] * _mm(_mm(A, Sig), _T(A))
    Fpinv, J_p = inv3(F_p)
    Cr = _mm(_mm(_T(Fpinv), C), Fpinv)
    S_rub = ((1 - z) * J_p)[..., None, None] * _mm(_mm(Fpinv, _svk(Cr, lam_r, mu_r)), _T(Fpinv))
    S = S_glass + S_rub
    S = 0.5 * (S + _T(S))
    state = QuadPointState(z, F_f, F_p, F_pg, alpha)
    return Update(S, state, plastic, cooling, q, iters)


@dataclass
class StressTangent:
    S: np.ndarray          # (n,3,3)
    dSdE: np.ndarray       # (n,3,3,3,3)
    dSdF: np.ndarray       # (n,3,3,3,3) dS_ij / dF_km
    dSdTheta: np.ndarray   # (n,3,3)


def _pushed_moduli(Bm, lam, mu):
    return (
        lam * np.einsum("nij,nkl->nijkl", Bm, Bm)
        + mu * (np.einsum("nik,njl->nijkl", Bm, Bm) + np.einsum("nil,njk->nijkl", Bm, Bm))
    )


def return_mapping(F, theta, committed: QuadPointState, params: MechParams, tangent: bool = True):
    """Stress, tangents and trial state for a batch of points.

    Returns (StressTangent, trial QuadPointState, Update diagnostics).
    """
    F = np.asarray(F, float)
    theta = np.broadcast_to(np.asarray(theta, float), F.shape[:-2]).copy()
    upd = _update(F, theta, committed, params)
    trial = upd.state
    if not tangent:
        return StressTangent(upd.S, None, None, None), trial, upd
    lam_g, mu_g = lame(params, "glassy")
    lam_r, mu_r = lame(params, "rubbery")
    Ffinv, J_f = inv3(trial.F_f)
    Fpginv, _ = inv3(trial.F_pg)
    A = _mm(Ffinv, Fpginv)
    Fpinv, J_p = inv3(trial.F_p)
    dSdE = (trial.z * J_f)[:, None, None, None, None] * _pushed_moduli(_mm(A, _T(A)), lam_g, mu_g)
    dSdE += ((1 - trial.z) * J_p)[:, None, None, None, None] * _pushed_moduli(_mm(Fpinv, _T(Fpinv)), lam_r, mu_r)
    dSdF = np.einsum("nijrm,nkr->nijkm", dSdE, F)

    special = np.flatnonzero(upd.plastic | upd.cooling)
    if special.size:
        sub = committed.take(special)
        Fs = F[special]
        th = theta[special]
        D = np.zeros((special.size, 3, 3, 3, 3))
        for k in range(3):
            for m in range(3):
                Fc = Fs.astype(complex)
                Fc[:, k, m] += 1j * CS_STEP
                D[:, :, :, k, m] = np.imag(_update(Fc, th, sub, params).S) / CS_STEP
        dSdF[special] = D
        Finv, _ = inv3(Fs)
        dE = np.einsum("nrk,nijkm->nijrm", Finv, D)
        dSdE[special] = 0.5 * (dE + np.swapaxes(dE, -1, -2))
    dth = np.imag(_update(F.astype(complex), theta + 1j * CS_STEP, committed, params).S) / CS_STEP
    return StressTangent(upd.S, dSdE, dSdF, dth), trial, upd
