import copy

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from smpfem.coil import Program
from smpfem.fem_core import box_mesh, unit_cube
from smpfem.thermal import (
    ThermalParams, assemble_K_the, assemble_M_the, boundary_terms, heat_source_vector, nondim_report,
    thermal_residual,
)

FACES = ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")


def linear_step(mesh, p, th0, dt, w, t=0.0):
    M = assemble_M_the(mesh, p)
    K = assemble_K_the(mesh, None, th0, p)
    H, rb0, _ = boundary_terms(mesh, np.zeros(mesh.n_nodes), p, None, t)
    A = (M + dt * (K + H)).tocsc()
    rhs = M @ th0 - dt * (rb0 - heat_source_vector(mesh, w))
    return spla.spsolve(A, rhs)


def test_mass_total_and_scaling():
    p = ThermalParams(rho0=270.0, cp=10.0)
    m = unit_cube(1e-3)
    M = assemble_M_the(m, p)
    assert M.sum() == pytest.approx(2.7e-6, rel=1e-12)
    assert abs(M - M.T).max() <= 1e-14 * abs(M).max()
    big = unit_cube(2e-3)
    assert assemble_M_the(big, p).sum() == pytest.approx(8 * 2.7e-6, rel=1e-12)


def test_conduction_oracle():
    p = ThermalParams(kappa0=237.0)
    m = unit_cube(1.0)
    K = assemble_K_the(m, None, None, p)
    flux = (K @ m.nodes[:, 0])[m.region_nodes("xmax")].sum()
    assert flux == pytest.approx(237.0, rel=1e-12)
    assert np.abs(K @ np.ones(m.n_nodes)).max() <= 1e-12 * 237


def test_conductivity_pullback_equivalence():
    p = ThermalParams()
    m = box_mesh((1e-3, 1e-3, 2e-3), (1, 1, 2))
    F = np.array([[1.3, 0.2, 0], [0, 0.8, 0.1], [0.05, 0, 1.1]])
    u = m.nodes @ F.T - m.nodes
    md = copy.deepcopy(m)
    md.nodes = m.nodes + u
    Kl = assemble_K_the(m, u, None, p)
    Ke = assemble_K_the(md, None, None, p)
    assert abs(Kl - Ke).max() <= 1e-10 * abs(Ke).max()


def test_boundary_terms():
    m = unit_cube(1e-3)
    p = ThermalParams(h=Program.constant(500.0), theta_B=Program.constant(310.0), convection_regions=("ymax",))
    _, rb, _ = boundary_terms(m, np.full(m.n_nodes, 310.0), p)
    assert np.allclose(rb, 0.0)
    _, rb, _ = boundary_terms(m, np.full(m.n_nodes, 311.0), p)
    assert rb.sum() == pytest.approx(500.0 * 1e-6, rel=1e-12)
    rad = ThermalParams(eps_R=0.0, radiation_regions=("ymax",), theta_R=300.0)
    _, rb, R = boundary_terms(m, np.full(m.n_nodes, 400.0), rad)
    assert np.array_equal(rb, np.zeros(m.n_nodes)) and R.nnz == 0
    rad = ThermalParams(eps_R=0.8, radiation_regions=("ymax",), theta_R=300.0)
    _, rb, _ = boundary_terms(m, np.full(m.n_nodes, 300.0), rad)
    assert np.allclose(rb, 0.0, atol=1e-18)


def test_convection_uses_nanson_area():
    m = unit_cube(1e-3)
    p = ThermalParams(h=Program.constant(500.0), theta_B=Program.constant(0.0), convection_regions=("ymax",))
    u = m.nodes * [0.5, 0.0, 0.0]    # stretch x by 1.5: ymax area grows by 1.5
    _, rb, _ = boundary_terms(m, np.ones(m.n_nodes), p, u)
    assert rb.sum() == pytest.approx(1.5 * 500.0 * 1e-6, rel=1e-12)


def test_radiative_tangent_fd(rng):
    m = unit_cube(1e-3)
    p = ThermalParams(eps_R=0.7, radiation_regions=("xmax", "ymin"), theta_R=290.0)
    th = 300.0 + 50 * rng.random(m.n_nodes)
    _, r0, T = boundary_terms(m, th, p)
    d = rng.standard_normal(m.n_nodes)
    h = 1e-4
    fd = (boundary_terms(m, th + h * d, p)[1] - boundary_terms(m, th - h * d, p)[1]) / (2 * h)
    assert np.allclose(T @ d, fd, rtol=1e-6, atol=1e-6 * np.abs(fd).max())


def test_residual_zero_at_rest():
    m = unit_cube()
    th = np.full(m.n_nodes, 333.0)
    assert np.allclose(thermal_residual(m, ThermalParams(), th, th, 1e-4, 0.0), 0.0)


def test_lumped_source_update():
    m = unit_cube(1e-3)
    p = ThermalParams(rho0=270.0, cp=10.0)
    th0 = np.full(m.n_nodes, 300.0)
    th1 = linear_step(m, p, th0, 1e-4, 1e8)
    assert np.allclose(th1 - th0, 1e8 * 1e-4 / 2700.0, rtol=1e-10)
    assert th1[0] - 300.0 == pytest.approx(3.70, abs=5e-3)
    assert np.allclose(thermal_residual(m, p, th1, th0, 1e-4, 1e8), 0.0, atol=1e-12)


def test_convective_decay_rate():
    m = box_mesh((1e-3,) * 3, (2, 2, 2))
    p = ThermalParams(h=Program.constant(500.0), theta_B=Program.constant(0.0), convection_regions=FACES)
    rate = 500.0 * 6e-6 / (p.rho_cp * 1e-9)
    dt = 0.01 / rate
    th = np.full(m.n_nodes, 1.0)
    for _ in range(10):
        th = linear_step(m, p, th, dt, 0.0)
    assert th.mean() == pytest.approx(np.exp(-rate * 10 * dt), rel=0.01)


def test_maximum_principle(rng):
    m = box_mesh((1e-3,) * 3, (2, 2, 2))
    p = ThermalParams(h=Program.constant(800.0), theta_B=Program.constant(310.0), convection_regions=("ymax",))
    th = np.full(m.n_nodes, 330.0)
    for _ in range(5):
        new = linear_step(m, p, th, 1e-4, [rng.uniform(0, 1e7, (8, 8))])
        assert new.min() >= min(th.min(), 310.0) - 1e-9
        th = new


def test_nondim_report():
    p = ThermalParams(rho0=270.0, cp=10.0, kappa0=237.0)
    r = nondim_report(p, 0.02)
    assert r.T_c == 270 * 10 * 0.02**2 / 237
    assert r.T_c == pytest.approx(4.557e-3, rel=1e-4)
    assert nondim_report(p, 0.04).T_c == pytest.approx(4 * r.T_c, rel=1e-14)
    fast = ThermalParams(kappa0=1e12)
    assert nondim_report(fast, 0.02).T_c < 1e-10
    assert nondim_report(p, 0.02, w_ref=1e9, dt=1e-4).flagged


def test_parameter_validation():
    with pytest.raises(ValueError):
        ThermalParams(rho0=0.0)
    with pytest.raises(ValueError):
        ThermalParams(eps_R=1.5)
    with pytest.raises(ValueError):
        thermal_residual(unit_cube(), ThermalParams(), np.zeros(8), np.zeros(8), 0.0, 0.0)
