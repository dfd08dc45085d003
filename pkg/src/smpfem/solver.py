"""Monolithic backward-Euler / Newton-Raphson engine for v = (Phi, Theta, U).

Per step the stacked residual is

    H1 = K_ele(v) Phi + F_ele(v)                          (algebraic)
    H2 = M (theta - theta_old) + dt (K_the theta + boundary - int N w)
    H3 = f_int(v; Z) - f_ext(t) - int N f_L               (algebraic)

and the tangent carries all nine blocks.  Quadrature-point states are only committed
after a step converges, so a failed step is rolled back by simply discarding the trial.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coil import CoilSpec, Program, b_source
from .context import block_context, facet_context
from .electrokinetics import EmMaterial, em_qp, em_residual, em_tangent, ground_node, lorentz_force, lorentz_sensitivities, loss_sensitivities
from .fem_core import DofLayout, Mesh, block_geometry, facet_geometry, scatter_matrix, scatter_vector
from .kinematics import KinematicsError
from .mechanics import MechBC, PointLoad, body_force_terms, initial_states, internal_force, stiffness
from .smp_material import MechParams, QuadPointState, ReturnMappingError, commit, return_mapping
from .thermal import ThermalParams, boundary_flux, diffusion, element_mass

log = logging.getLogger(__name__)


class StepFailure(RuntimeError):
    """A time step could not be completed at the attempted size."""


class SolverAbort(RuntimeError):
    """Step cutting exhausted."""


@dataclass
class SolverConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    newton_tol: float = 1e-8
    newton_atol: float = 1e-10
    newton_max: int = 25
    ls_backtrack: float | None = None
    max_cuts: int = 8
    block_scaling: dict[str, float] = field(default_factory=dict)
    staggered: bool = False
    fd_coupling: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 < self.newton_tol < 1:
            raise ValueError("newton_tol must lie in (0, 1)")
        if self.newton_max < 1:
            raise ValueError("newton_max must be >= 1")
        if self.ls_backtrack is not None and not 0 < self.ls_backtrack < 1:
            raise ValueError("ls_backtrack must lie in (0, 1)")
        unknown = set(self.block_scaling) - {"Phi", "Theta", "U"}
        if unknown:
            raise ValueError(f"unknown block_scaling field(s): {sorted(unknown)}")


@dataclass
class Physics:
    mesh: Mesh
    mech: MechParams
    thermal: ThermalParams
    em: EmMaterial
    coil: CoilSpec | None = None
    bc: MechBC = field(default_factory=MechBC)
    theta0: float = 293.15
    theta_imposed: Program | None = None    # imposed-temperature mode when set
    em_active: bool = True
    thermal_active: bool = True
    averaged: bool = False
    body_force: bool = False

    def __post_init__(self):
        if self.body_force and self.averaged:
            raise ValueError("the Lorentz body force needs instantaneous fields; disable the period-averaged source")


@dataclass
class CoupledState:
    v: np.ndarray
    states: list[QuadPointState]
    t: float
    n: int = 0


@dataclass
class Assembly:
    R: np.ndarray
    K: sp.csr_matrix | None
    trials: list[QuadPointState]
    f_int: np.ndarray            # U-part internal forces (layout U ordering, node-major)
    S: list[np.ndarray]
    F: list[np.ndarray]
    w: list[np.ndarray]
    wdet: list[np.ndarray]
    theta_qp: list[np.ndarray]
    mandel_vm: list[np.ndarray] = field(default_factory=list)   # glassy equivalent stress per qp


@dataclass
class StepReport:
    iterations: int
    history: list[float]
    converged: bool


@dataclass
class TimeSeriesRecord:
    t: float
    theta: float
    eps_yy: float
    sigma_yy: float
    pk2_yy: float
    u_y: float
    reaction_fy: float
    joule_power: float
    theta_min: float
    theta_max: float
    u_max: float

    FIELDS = ("t", "theta", "eps_yy", "sigma_yy", "pk2_yy", "u_y", "reaction_fy", "joule_power", "theta_min", "theta_max", "u_max")

    def row(self) -> list[float]:
        return [getattr(self, k) for k in self.FIELDS]


class CoupledProblem:
    def __init__(self, physics: Physics, config: SolverConfig, probe_region: str | None = None,
                 reaction_region: str | None = None):
        self.ph = physics
        self.cfg = config
        mesh = physics.mesh
        mesh.validate()
        self.mesh = mesh
        self.n = mesh.n_nodes
        self.layout = DofLayout(self.n)
        self.blocks = block_geometry(mesh)
        self.probe_region = probe_region
        self.reaction_region = reaction_region or probe_region
        th = physics.thermal
        self.facets = []
        for kind, regions in (("convection", th.convection_regions), ("radiation", th.radiation_regions)):
            if kind == "radiation" and th.eps_R == 0.0:
                continue
            for tag in regions:
                self.facets += [(kind, fg) for fg in facet_geometry(mesh, tag)]
        physics.bc.apply(mesh, self.layout)
        if not physics.em_active:
            for a in range(self.n):
                self.layout.constrain("Phi", a, 0, 0.0)
        else:
            self.layout.constrain("Phi", ground_node(mesh), 0, 0.0)
        if physics.theta_imposed is not None:
            for a in range(self.n):
                self.layout.constrain("Theta", a, 0, physics.theta_imposed)
        self.scales = self._default_scales()
        self.scales.update(config.block_scaling)
        self._last: Assembly | None = None

    # ---------------------------------------------------------------- setup

    def _default_scales(self) -> dict[str, float]:
        V = self.mesh.volume() / self.n
        L = V ** (1.0 / 3.0)
        return {
            "Phi": self.ph.em.sigma0 * V / L**2,
            "Theta": self.ph.thermal.rho_cp * V,
            "U": self.ph.mech.E_g * L**2,
        }

    def initial_state(self, u0=None) -> CoupledState:
        v = np.zeros(self.layout.n_dofs)
        v[self.layout.field_slice("Theta")] = self.ph.theta0
        if u0 is not None:
            v[self.layout.field_slice("U")] = np.asarray(u0, float).ravel()
        states = initial_states(self.mesh, self.ph.theta0, self.ph.mech)
        for s in states:
            for a in (s.z, s.F_f, s.F_p, s.F_pg, s.alpha):
                a.setflags(write=False)
        return CoupledState(v, states, 0.0, 0)

    def split(self, v):
        lay = self.layout
        return v[lay.field_slice("Phi")], v[lay.field_slice("Theta")], v[lay.field_slice("U")].reshape(self.n, 3)

    # ---------------------------------------------------------------- assembly

    def assemble(self, v, v_old, t: float, dt: float, states, tangent: bool = True) -> Assembly:
        ph, lay = self.ph, self.layout
        phi, theta, u = self.split(v)
        _, theta_old, _ = self.split(v_old)
        coil = ph.coil
        bvec = b_source(t, coil) * coil.unit_axis if (ph.body_force and coil is not None) else None
        rows, kvals, ridx, rvals, fints = [], [], [], [], []
        out = Assembly(None, None, [], None, [], [], [], [], [])
        for bg, st in zip(self.blocks, states):
            ctx = block_context(bg, phi, theta, u)
            E, n = bg.conn.shape
            N = ctx.Nfull
            dofs = np.concatenate([lay.element_dofs(bg.conn, f) for f in ("Phi", "Theta", "U")], axis=1)
            re = np.zeros((E, 5 * n))
            ke = np.zeros((E, 5 * n, 5 * n)) if tangent else None
            P, T, U = slice(0, n), slice(n, 2 * n), slice(2 * n, 5 * n)

            resp, trial, upd = return_mapping(ctx.F.reshape(-1, 3, 3), ctx.theta.ravel(), st, ph.mech, tangent)
            fint = internal_force(ctx, resp.S)
            ru = fint.copy()
            w = np.zeros_like(ctx.J)
            q = None
            if ph.em_active:
                q = em_qp(ctx, ph.em, coil, t, ph.averaged)
                w = q.w
                re[:, P] = em_residual(ctx, q)
            if ph.thermal_active:
                Me = element_mass(ctx, ph.thermal.rho_cp)
                rd, dd_th, dd_u = diffusion(ctx, ph.thermal, tangent)
                src = np.einsum("eq,eqa->ea", ctx.wdet * w, N)
                re[:, T] = np.einsum("eab,eb->ea", Me, theta[bg.conn] - theta_old[bg.conn]) + dt * (rd - src)
            if bvec is not None:
                fL = lorentz_force(ctx, q, bvec)
                sens = lorentz_sensitivities(ctx, q, bvec) if tangent else None
                rb, bblocks = body_force_terms(ctx, fL, sens)
                ru = ru + rb
            re[:, U] = ru.reshape(E, 3 * n)

            if tangent:
                kuu, kuth = stiffness(ctx, resp)
                ke[:, U, U] = kuu.reshape(E, 3 * n, 3 * n)
                ke[:, U, T] = kuth.reshape(E, 3 * n, n)
                if ph.em_active:
                    d_phi, d_th, d_u = em_tangent(ctx, q)
                    ke[:, P, P] = d_phi
                    ke[:, P, T] = d_th
                    ke[:, P, U] = d_u.reshape(E, n, 3 * n)
                if ph.thermal_active:
                    ke[:, T, T] = Me + dt * dd_th
                    ke[:, T, U] = dt * dd_u.reshape(E, n, 3 * n)
                    if ph.em_active:
                        dw_phi, dw_th, dw_u = loss_sensitivities(ctx, q)
                        ke[:, T, P] -= dt * np.einsum("eq,eqa,eqb->eab", ctx.wdet, N, dw_phi)
                        ke[:, T, T] -= dt * np.einsum("eq,eqa,eqb->eab", ctx.wdet, N, dw_th)
                        ke[:, T, U] -= dt * np.einsum("eq,eqa,eqbk->eabk", ctx.wdet, N, dw_u).reshape(E, n, 3 * n)
                if bvec is not None:
                    b_phi, b_th, b_u = bblocks
                    ke[:, U, P] += b_phi.reshape(E, 3 * n, n)
                    ke[:, U, T] += b_th.reshape(E, 3 * n, n)
                    ke[:, U, U] += b_u.reshape(E, 3 * n, 3 * n)
                rows.append(dofs)
                kvals.append(ke)
            ridx.append(dofs)
            rvals.append(re)
            out.trials.append(trial)
            out.S.append(resp.S.reshape(ctx.F.shape))
            out.F.append(ctx.F)
            out.w.append(w)
            out.wdet.append(ctx.wdet)
            out.theta_qp.append(ctx.theta)
            out.mandel_vm.append(np.real(upd.mandel_vm).reshape(ctx.J.shape))
            fints.append((bg.conn, fint))

        if ph.thermal_active:
            for kind, fg in self.facets:
                ctx = facet_context(fg, self.mesh.nodes, phi, theta, u)
                r, d_th, d_u = boundary_flux(ctx, fg.normal, ph.thermal, t, kind, tangent)
                tdofs = lay.element_dofs(fg.conn, "Theta")
                ridx.append(tdofs)
                rvals.append(dt * r)
                if tangent:
                    F_, n = fg.conn.shape
                    udofs = lay.element_dofs(fg.conn, "U")
                    rows.append(np.concatenate([tdofs, udofs], axis=1))
                    kb = np.zeros((F_, 4 * n, 4 * n))
                    kb[:, :n, :n] = dt * d_th
                    kb[:, :n, n:] = dt * d_u.reshape(F_, n, 3 * n)
                    kvals.append(kb)

        R = scatter_vector(lay.n_dofs, ridx, rvals)
        f_int = np.zeros(3 * self.n)
        for conn, fe in fints:
            np.add.at(f_int, (3 * conn[..., None] + np.arange(3)).ravel(), fe.ravel())
        out.f_int = f_int
        R[lay.field_slice("U")] -= ph.bc.external_force(self.mesh, t, u)
        out.R = R
        if tangent:
            out.K = scatter_matrix(lay.n_dofs, rows, rows, kvals)
            if self.cfg.fd_coupling:
                out.K = self._fd_coupling(out.K, v, v_old, t, dt, states)
        return out

    def _fd_coupling(self, K, v, v_old, t, dt, states, h_rel: float = 1e-7):
        """Replace the d/dU columns of the Phi and Theta rows by central differences."""
        lay = self.layout
        K = K.tolil()
        rows = np.r_[np.arange(lay.offset("Phi"), lay.offset("Phi") + self.n), np.arange(lay.offset("Theta"), lay.offset("Theta") + self.n)]
        L = self.mesh.volume() ** (1.0 / 3.0)
        h = h_rel * L
        for j in range(lay.offset("U"), lay.n_dofs):
            vp, vm = v.copy(), v.copy()
            vp[j] += h
            vm[j] -= h
            col = (self.assemble(vp, v_old, t, dt, states, False).R - self.assemble(vm, v_old, t, dt, states, False).R) / (2 * h)
            for i in rows:
                K[i, j] = col[i]
        return K.tocsr()

    # ---------------------------------------------------------------- Newton

    def scaled_norm(self, R, free_mask) -> float:
        err = 0.0
        for name in ("Phi", "Theta", "U"):
            sl = self.layout.field_slice(name)
            r = R[sl][free_mask[sl]]
            if r.size:
                err = max(err, float(np.max(np.abs(r))) / self.scales[name])
        return err

    def _newton(self, v, v_old, t, dt, states, free_mask) -> tuple[np.ndarray, Assembly, StepReport]:
        cfg = self.cfg
        free = np.flatnonzero(free_mask)
        history = []
        err0 = None
        for it in range(cfg.newton_max + 1):
            asm = self.assemble(v, v_old, t, dt, states, tangent=True)
            if not np.all(np.isfinite(asm.R)):
                raise StepFailure("non-finite residual")
            err = self.scaled_norm(asm.R, free_mask)
            history.append(err)
            err0 = err if err0 is None else err0
            if err <= max(cfg.newton_tol * err0, cfg.newton_atol):
                return v, asm, StepReport(it, history, True)
            if it == cfg.newton_max:
                break
            kff = asm.K[free][:, free].tocsc()
            try:
                dx = spla.splu(kff).solve(-asm.R[free])
            except RuntimeError as exc:
                raise StepFailure(f"singular tangent after Dirichlet reduction: {exc}") from exc
            if not np.all(np.isfinite(dx)):
                raise StepFailure("non-finite Newton correction")
            alpha = 1.0
            if cfg.ls_backtrack is not None:
                for _ in range(8):
                    trial = v.copy()
                    trial[free] += alpha * dx
                    try:
                        e_try = self.scaled_norm(self.assemble(trial, v_old, t, dt, states, False).R, free_mask)
                    except (KinematicsError, ReturnMappingError):
                        e_try = np.inf
                    if e_try < err:
                        break
                    alpha *= cfg.ls_backtrack
            v = v.copy()
            v[free] += alpha * dx
        raise StepFailure(f"Newton did not converge in {cfg.newton_max} iterations (history {history[-3:]})")

    def _predict(self, cs: CoupledState, t_new, dt, fixed, vals, mask) -> np.ndarray:
        """Linearised predictor about the converged state with the lifted Dirichlet increment."""
        v = cs.v.copy()
        asm = self.assemble(v, cs.v, t_new, dt, cs.states, tangent=True)
        free = np.flatnonzero(mask)
        rhs = -(asm.R[free] + asm.K[free][:, fixed] @ (vals - v[fixed]))
        try:
            dx = spla.splu(asm.K[free][:, free].tocsc()).solve(rhs)
        except RuntimeError as exc:
            raise StepFailure(f"singular tangent after Dirichlet reduction: {exc}") from exc
        v[fixed] = vals
        if np.all(np.isfinite(dx)):
            v[free] += dx
        return v

    def newton_step(self, cs: CoupledState, t_new: float) -> tuple[CoupledState, StepReport]:
        """Advance one step from a committed state; the input state is never modified."""
        dt = t_new - cs.t
        fixed, vals = self.layout.constrained(t_new)
        mask = np.ones(self.layout.n_dofs, bool)
        mask[fixed] = False
        try:
            v, asm, rep = self._solve(self._predict(cs, t_new, dt, fixed, vals, mask), cs, t_new, dt, mask)
        except (KinematicsError, ReturnMappingError, FloatingPointError) as exc:
            raise StepFailure(str(exc)) from exc
        committed = []
        for tr in asm.trials:
            tr.converged = True
            committed.append(commit(tr))
        self._last = asm
        return CoupledState(v, committed, t_new, cs.n + 1), rep

    def _solve(self, v, cs, t_new, dt, mask):
        if self.cfg.staggered and self.ph.em_active:
            return self._staggered(v, cs, t_new, dt, mask)
        return self._newton(v, cs.v, t_new, dt, cs.states, mask)

    def _staggered(self, v, cs, t_new, dt, mask):
        """EM solve then thermo-mechanical Newton, repeated to the monolithic tolerance."""
        lay = self.layout
        phi_mask = np.zeros_like(mask)
        phi_mask[lay.field_slice("Phi")] = True
        total = 0
        history = []
        for _ in range(self.cfg.newton_max):
            v, _, r1 = self._newton(v, cs.v, t_new, dt, cs.states, mask & phi_mask)
            v, asm, r2 = self._newton(v, cs.v, t_new, dt, cs.states, mask & ~phi_mask)
            total += r1.iterations + r2.iterations
            err = self.scaled_norm(asm.R, mask)
            history.append(err)
            if err <= max(self.cfg.newton_tol * history[0], self.cfg.newton_atol) or r1.iterations + r2.iterations == 0:
                return v, asm, StepReport(total, history, True)
        raise StepFailure("staggered iteration did not converge")

    # ---------------------------------------------------------------- probes

    def record(self, cs: CoupledState, asm: Assembly | None = None) -> TimeSeriesRecord:
        if asm is None:
            asm = self.assemble(cs.v, cs.v, cs.t, self.cfg.dt, cs.states, tangent=False)
        _, theta, u = self.split(cs.v)
        vol = sum(w.sum() for w in asm.wdet)
        th = sum((w * t).sum() for w, t in zip(asm.wdet, asm.theta_qp)) / vol
        eyy = syy = pyy = 0.0
        for F, S, wd in zip(asm.F, asm.S, asm.wdet):
            C = np.einsum("eqki,eqkj->eqij", F, F)
            eyy += (wd * 0.5 * (C[..., 1, 1] - 1.0)).sum()
            pyy += (wd * S[..., 1, 1]).sum()
            J = np.linalg.det(F)
            sig = np.einsum("eqij,eqjk,eqlk->eqil", F, S, F) / J[..., None, None]
            syy += (wd * sig[..., 1, 1]).sum()
        power = sum((wd * w).sum() for wd, w in zip(asm.wdet, asm.w))
        uy = float(u[self.mesh.region_nodes(self.probe_region), 1].mean()) if self.probe_region else 0.0
        fy = 0.0
        if self.reaction_region:
            fy = float(asm.f_int[3 * self.mesh.region_nodes(self.reaction_region) + 1].sum())
        return TimeSeriesRecord(
            float(cs.t), float(th), float(eyy / vol), float(syy / vol), float(pyy / vol), uy, fy, float(power),
            float(theta.min()), float(theta.max()), float(np.sqrt((u**2).sum(axis=1)).max()),
        )

    # ---------------------------------------------------------------- time loop

    def run(self, cs: CoupledState | None = None, t_end: float | None = None,
            events: list[tuple[float, Callable]] | None = None, log_path=None,
            on_step: Callable | None = None) -> tuple[CoupledState, list[TimeSeriesRecord]]:
        cfg = self.cfg
        cs = cs or self.initial_state()
        t_end = cfg.t_end if t_end is None else t_end
        pending = sorted(events or [], key=lambda e: e[0])
        records = [self.record(cs)]
        eps = 1e-9 * cfg.dt
        logf = open(log_path, "w", encoding="utf-8") if log_path else None
        try:
            while cs.t < t_end - eps:
                while pending and pending[0][0] <= cs.t + eps:
                    pending.pop(0)[1](self, cs)
                target = min(t_end, pending[0][0]) if pending else t_end
                dt = min(cfg.dt, target - cs.t)
                if target - (cs.t + dt) < eps:
                    dt = target - cs.t
                cuts = 0
                while True:
                    t_new = target if abs(cs.t + dt - target) < eps else cs.t + dt
                    try:
                        new, rep = self.newton_step(cs, t_new)
                        break
                    except StepFailure as exc:
                        cuts += 1
                        log.info("step to t=%.6g failed (%s); cutting dt", t_new, exc)
                        if cuts > cfg.max_cuts:
                            raise SolverAbort(f"step at t={cs.t:.6g} failed after {cfg.max_cuts} cuts: {exc}") from exc
                        dt *= 0.5
                cs = new
                rec = self.record(cs, self._last)
                records.append(rec)
                if logf:
                    logf.write(json.dumps({"step": cs.n, "t": cs.t, "dt": dt, "iterations": rep.iterations,
                                           "cuts": cuts, "residuals": rep.history}) + "\n")
                    logf.flush()
                if on_step:
                    on_step(self, cs, rec)
            while pending and pending[0][0] <= cs.t + eps:
                pending.pop(0)[1](self, cs)
        finally:
            if logf:
                logf.close()
        return cs, records

    # ---------------------------------------------------------------- unload helper

    def release_to_force(self, cs: CoupledState, region: str, comp: int, t_release: float, duration: float) -> None:
        """Swap the Dirichlet condition of (region, comp) for its current reaction ramped to zero."""
        asm = self.assemble(cs.v, cs.v, cs.t, self.cfg.dt, cs.states, tangent=False)
        nodes = np.array([a for a in self.mesh.region_nodes(region) if ("U", int(a), comp) in self.layout.constraints], int)
        values = asm.f_int[3 * nodes + comp].copy()
        for a in nodes:
            self.layout.release("U", int(a), comp)
        self.ph.bc.dirichlet = [d for d in self.ph.bc.dirichlet if not (d[0] == region and d[1] == comp)]
        ramp = Program([[t_release, 1.0], [t_release + duration, 0.0]])
        self.ph.bc.point_loads.append(PointLoad(nodes, comp, values, ramp))


def residual_G(problem: CoupledProblem, v_new, v_old, dt: float, t: float, states) -> np.ndarray:
    return problem.assemble(v_new, v_old, t, dt, states, tangent=False).R


def tangent_A(problem: CoupledProblem, v, v_old, dt: float, t: float, states) -> sp.csr_matrix:
    return problem.assemble(v, v_old, t, dt, states, tangent=True).K


__all__ = [
    "Assembly", "CoupledProblem", "CoupledState", "Physics", "SolverAbort", "SolverConfig", "StepFailure",
    "StepReport", "TimeSeriesRecord", "residual_G", "tangent_A",
]
