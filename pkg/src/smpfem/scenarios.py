"""Scenario drivers: single-element cube (sec) and coil-heated vascular stent (cvs)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .coil import CoilSpec, Program, mqs_validity
from .context import block_context
from .electrokinetics import EmMaterial, em_qp, lagrangian_current, solve_em
from .fem_core import Mesh, facet_geometry, read_gmsh, tube_mesh, unit_cube
from .io import write_curve, write_records, write_vtk
from .mechanics import MechBC
from .smp_material import MechParams
from .solver import CoupledProblem, CoupledState, Physics, SolverConfig, TimeSeriesRecord
from .thermal import ThermalParams, nondim_report

log = logging.getLogger(__name__)
ZERO = Program.constant(0.0)


@dataclass
class ScenarioResult:
    records: list[TimeSeriesRecord]
    files: list[Path] = field(default_factory=list)
    state: CoupledState | None = None
    problem: CoupledProblem | None = None


# ---------------------------------------------------------------- builders


def build_mesh(cfg: dict) -> Mesh:
    m = cfg["mesh"]
    if m["generator"] == "unit_cube":
        return unit_cube(m["size"])
    if m["generator"] == "tube":
        return tube_mesh(m["outer_radius"], m["thickness"], m["length"], m["n_circ"], m["n_axial"], m["n_thick"], axis="y")
    return read_gmsh(m["file"])


def build_params(cfg: dict):
    mech = MechParams(**cfg["mechanics"])
    t = dict(cfg["thermal"])
    t.pop("theta0")
    t["convection_regions"] = tuple(t["convection_regions"])
    t["radiation_regions"] = tuple(t["radiation_regions"])
    thermal = ThermalParams(**t)
    em = EmMaterial(**cfg["em"])
    coil = CoilSpec(**cfg["coil"])
    return mech, thermal, em, coil


def build_bc(cfg: dict) -> MechBC:
    s = cfg["schedule"]
    top, bottom = s["top_region"], s["bottom_region"]
    if cfg["scenario"]["name"] == "sec":
        # statically determinate: free lateral contraction, no rigid modes
        d = [(bottom, 1, ZERO), ("origin", 0, ZERO), ("origin", 2, ZERO), ("corner_x", 2, ZERO), ("corner_z", 0, ZERO)]
    elif s["support"] == "clamped":
        d = [(bottom, 0, ZERO), (bottom, 1, ZERO), (bottom, 2, ZERO)]
    else:
        # axial roller on the bottom ring; three anchors remove the in-plane rigid modes
        d = [(bottom, 1, ZERO), ("anchor_000", 0, ZERO), ("anchor_180", 0, ZERO), ("anchor_090", 2, ZERO)]
    d.append((top, 1, s["u_top"]))
    return MechBC(dirichlet=d)


def check_regions(cfg: dict, mesh: Mesh) -> None:
    s = cfg["schedule"]
    names = [s["top_region"], s["bottom_region"], *cfg["thermal"]["convection_regions"]]
    if cfg["thermal"]["eps_R"] > 0:
        names += cfg["thermal"]["radiation_regions"]
    for name in names:
        if name not in mesh.node_sets and name not in mesh.tag_names:
            raise cfgmod.ConfigError(f"region '{name}' does not exist in the mesh (known: {sorted(mesh.tag_names)})")


def build_problem(cfg: dict, mesh: Mesh | None = None) -> CoupledProblem:
    mesh = mesh or build_mesh(cfg)
    check_regions(cfg, mesh)
    mech, thermal, em, coil = build_params(cfg)
    sc, s, so = cfg["scenario"], cfg["schedule"], cfg["solver"]
    imposed = sc["mode"] == "imposed"
    physics = Physics(
        mesh, mech, thermal, em, coil, build_bc(cfg),
        theta0=cfg["thermal"]["theta0"],
        theta_imposed=s["theta_imposed"] if (imposed or s["theta_dirichlet"]) else None,
        em_active=not imposed, thermal_active=not imposed,
        averaged=sc["period_averaged_source"], body_force=sc["em_body_force"],
    )
    scaling = {k: v for k, v in (("Phi", so["scale_phi"]), ("Theta", so["scale_theta"]), ("U", so["scale_u"])) if v > 0}
    solver = SolverConfig(
        dt=so["dt"], t_end=so["t_end"], newton_tol=so["newton_tol"], newton_atol=so["newton_atol"],
        newton_max=so["newton_max"], ls_backtrack=so["ls_backtrack"] or None, max_cuts=so["max_cuts"],
        block_scaling=scaling, staggered=so["staggered"], fd_coupling=so["fd_coupling"],
    )
    return CoupledProblem(physics, solver, probe_region=s["top_region"])


# ---------------------------------------------------------------- field snapshots


def nodal_fields(problem: CoupledProblem, cs: CoupledState) -> dict[str, np.ndarray]:
    """Displacement, temperature, potential and qp-projected current and loss density."""
    ph = problem.ph
    phi, theta, u = problem.split(cs.v)
    n = problem.n
    acc_j, acc_w, wsum = np.zeros((n, 3)), np.zeros(n), np.zeros(n)
    for bg in problem.blocks:
        ctx = block_context(bg, phi, theta, u)
        if ph.em_active:
            q = em_qp(ctx, ph.em, ph.coil, cs.t, ph.averaged)
            jl, w = lagrangian_current(ctx, q), q.w
        else:
            jl, w = np.zeros(ctx.X.shape), np.zeros(ctx.J.shape)
        wN = ctx.wdet[..., None] * ctx.Nfull
        np.add.at(wsum, bg.conn, wN.sum(axis=1))
        np.add.at(acc_w, bg.conn, np.einsum("eqa,eq->ea", wN, w))
        np.add.at(acc_j, bg.conn, np.einsum("eqa,eqi->eai", wN, jl))
    return {"u": u.copy(), "theta": theta.copy(), "phi": phi.copy(), "J_L": acc_j / wsum[:, None], "w_L": acc_w / wsum}


# ---------------------------------------------------------------- reheat design


def design_reheat_current(cfg: dict, t_start: float, t_stop: float, theta_from: float, theta_to: float,
                          t_hold_end: float, n_points: int = 8, mesh: Mesh | None = None) -> list[list[float]]:
    """Piecewise-linear I0 program whose Joule power drives a lumped linear theta ramp and hold.

    Power balance per instant: P = rho cp V dtheta/dt + h_L A_conv (theta - theta_B); the
    period-averaged loss scales as I0^2, so I0 = sqrt(P / P_1) with P_1 the power at 1 A
    from an electrokinetic solve on the reference geometry.
    """
    mesh = mesh or build_mesh(cfg)
    _, thermal, em, coil = build_params(cfg)
    unit = CoilSpec(coil.N, coil.L, coil.mu_r, coil.f, coil.a, coil.b, Program.constant(1.0), coil.axis)
    sol = solve_em(mesh, None, theta_from, em, unit, 0.0, averaged=True)
    p1 = sum(float((w * wd).sum()) for w, wd in zip(sol.w_qp, sol.weights))
    V = mesh.volume()
    A = sum(float(fg.wdA.sum()) for tag in thermal.convection_regions for fg in facet_geometry(mesh, tag))
    rate = (theta_to - theta_from) / (t_stop - t_start)

    def current(t, th, slope):
        p = thermal.rho_cp * V * slope + thermal.h(t) * A * (th - thermal.theta_B(t))
        return float(np.sqrt(max(p, 0.0) / p1))

    pts = [[0.0, 0.0], [t_start, 0.0]]
    eps = 1e-4 * (t_stop - t_start)
    for k, t in enumerate(np.linspace(t_start, t_stop, n_points + 1)):
        tt = t + eps if k == 0 else t
        pts.append([round(float(tt), 12), round(current(tt, theta_from + rate * (tt - t_start), rate), 1)])
    hold = round(current(t_stop, theta_to, 0.0), 1)
    pts.append([round(float(t_stop + eps), 12), hold])
    if t_hold_end > t_stop + eps:
        pts.append([float(t_hold_end), hold])
    return pts


# ---------------------------------------------------------------- drivers


def validation_report(cfg: dict, mesh: Mesh | None = None) -> dict:
    mesh = mesh or build_mesh(cfg)
    check_regions(cfg, mesh)
    _, thermal, em, coil = build_params(cfg)
    lo = mesh.nodes.min(axis=0)
    hi = mesh.nodes.max(axis=0)
    L = float(np.max(hi - lo))
    mqs = mqs_validity(coil, em.sigma0, coil.mu, L)
    nd = nondim_report(thermal, L, dt=cfg["solver"]["dt"])
    return {"mqs": mqs, "nondim": nd, "nodes": mesh.n_nodes, "elements": mesh.n_elements}


def run_scenario(cfg: dict, out_dir, write_vtk_files: bool | None = None) -> ScenarioResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    s = cfg["schedule"]
    name = cfg["scenario"]["name"]
    files = [out / "config.ini"]
    files[0].write_text(cfgmod.echo(cfg), encoding="utf-8")
    do_vtk = cfg["output"]["vtk"] if write_vtk_files is None else write_vtk_files

    def release(p, cs):
        p.release_to_force(cs, s["top_region"], 1, s["release_time"], s["release_duration"])

    snaps = sorted(t for t in cfg["output"]["vtk_times"] if 0.0 < t <= cfg["solver"]["t_end"])
    events = [(s["release_time"], release)] + [(t, lambda p, cs: None) for t in snaps]
    written = []

    def on_step(p, cs, rec):
        for k, t in enumerate(snaps):
            if abs(cs.t - t) <= 1e-9 * p.cfg.dt and do_vtk:
                path = out / f"{name}_{k:03d}.vtk"
                write_vtk(path, p.mesh, nodal_fields(p, cs), title=f"{name} t={cs.t:.9g}")
                written.append(path)

    cs, records = problem.run(events=events, log_path=out / "solver_log.jsonl", on_step=on_step)
    files += [out / "solver_log.jsonl", write_records(out / f"{name}_timeseries.csv", records)]
    files += written
    files += write_curves(name, records, problem, out)
    return ScenarioResult(records, files, cs, problem)


def _height(problem: CoupledProblem) -> float:
    y = problem.mesh.nodes[:, 1]
    return float(y.max() - y.min())


def write_curves(name: str, records, problem: CoupledProblem, out: Path) -> list[Path]:
    col = {k: np.array([getattr(r, k) for r in records]) for k in TimeSeriesRecord.FIELDS}
    if name == "sec":
        eps = col["u_y"] / _height(problem)
        sig = col["sigma_yy"]
        th = col["theta"]
        curves = {
            "sec_theta_eps_sigma.dat": {"theta": th, "eps": eps, "sigma_yy": sig},
            "sec_eps_t.dat": {"t": col["t"], "eps": eps},
            "sec_sigma_t.dat": {"t": col["t"], "sigma_yy": sig},
            "sec_sigma_eps.dat": {"eps": eps, "sigma_yy": sig},
            "sec_sigma_theta.dat": {"theta": th, "sigma_yy": sig},
            "sec_eps_theta.dat": {"theta": th, "eps": eps},
        }
    else:
        curves = {
            "cvs_fy_uy.dat": {"u_y": col["u_y"], "F_y": col["reaction_fy"]},
            "cvs_uy_theta.dat": {"theta": col["theta"], "u_y": col["u_y"]},
            "cvs_fy_theta.dat": {"theta": col["theta"], "F_y": col["reaction_fy"]},
            "cvs_theta_t.dat": {"t": col["t"], "theta": col["theta"], "theta_min": col["theta_min"], "theta_max": col["theta_max"]},
        }
    return [write_curve(out / fname, cols) for fname, cols in curves.items()]


def run_sec(cfg: dict, out_dir) -> ScenarioResult:
    if cfg["scenario"]["name"] != "sec":
        raise cfgmod.ConfigError("run_sec needs a sec configuration")
    return run_scenario(cfg, out_dir)


def run_cvs(cfg: dict, out_dir) -> ScenarioResult:
    if cfg["scenario"]["name"] != "cvs":
        raise cfgmod.ConfigError("run_cvs needs a cvs configuration")
    return run_scenario(cfg, out_dir)
