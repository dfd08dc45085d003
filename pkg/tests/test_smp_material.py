import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import root

from smpfem.smp_material import (
    ContractViolation, MechParams, commit, glassy_fraction, lame, return_mapping, update_frozen, virgin_state,
)

from conftest import random_rotation

SEC = MechParams()
I = np.eye(3)


def stress(F, theta, state, params=SEC, tangent=False):
    resp, trial, upd = return_mapping(np.asarray(F)[None], np.atleast_1d(float(theta)), state, params, tangent)
    return resp, trial, upd


def committed(trial):
    trial.converged = True
    return commit(trial)


def test_glassy_fraction_examples():
    assert glassy_fraction(350.0, SEC)[0] == pytest.approx(0.5)
    assert glassy_fraction(380.0, SEC)[0] == pytest.approx(1 / (1 + np.exp(6)), rel=1e-12)
    assert glassy_fraction(380.0, SEC)[0] == pytest.approx(2.47e-3, rel=2e-3)
    assert 1 - glassy_fraction(50.0, SEC)[0] <= 1e-8


@given(st.floats(150.0, 550.0))
def test_glassy_fraction_monotone_and_derivative(theta):
    z, dz = glassy_fraction(theta, SEC)
    assert 0.0 <= z <= 1.0
    assert glassy_fraction(theta + 0.5, SEC)[0] <= z
    h = 1e-5
    fd = (glassy_fraction(theta + h, SEC)[0] - glassy_fraction(theta - h, SEC)[0]) / (2 * h)
    assert dz == pytest.approx(fd, rel=1e-6, abs=1e-10)


def test_lame_examples():
    lr, mr = lame(SEC, "rubbery")
    assert lr == pytest.approx(14.80e6, rel=1e-3) and mr == pytest.approx(0.302e6, rel=1e-3)
    lg, mg = lame(SEC, "glassy")
    assert lg == pytest.approx(412.7e6, rel=1e-3) and mg == pytest.approx(298.8e6, rel=1e-3)
    p = MechParams(nu_g=0.0)
    assert lame(p, "glassy") == (0.0, p.E_g / 2)
    with pytest.raises(ValueError):
        lame(SEC, "liquid")


def test_update_frozen_rules(rng):
    Ff = I + 0.05 * rng.standard_normal((1, 3, 3))
    F = I + 0.1 * rng.standard_normal((1, 3, 3))
    assert np.array_equal(update_frozen(Ff, np.array([0.4]), np.array([0.4]), F, I[None], SEC), Ff)
    assert np.allclose(update_frozen(I[None], np.array([0.0]), np.array([1.0]), F, I[None], SEC), F)
    assert np.allclose(update_frozen(Ff, np.array([1.0]), np.array([0.0]), F, I[None], SEC), I)


def test_small_strain_rubbery_uniaxial():
    eps = 1e-4
    st0 = virgin_state(1, 450.0, SEC)
    sol = root(lambda a: stress(np.diag([1 + a[0], 1 + eps, 1 + a[0]]), 450.0, st0)[0].S[0, 0, 0] / 1e3, [-0.49 * eps], tol=1e-14)
    S = stress(np.diag([1 + sol.x[0], 1 + eps, 1 + sol.x[0]]), 450.0, st0)[0].S[0]
    assert S[1, 1] == pytest.approx(SEC.E_r * eps, rel=0.01)
    assert S[1, 1] == pytest.approx(90.0, rel=0.01)


def test_glassy_elastic_step_keeps_state():
    st0 = virgin_state(1, 200.0, SEC)
    _, trial, upd = stress(np.diag([1.0, 1.001, 1.0]), 200.0, st0)
    assert not upd.plastic.any()
    assert np.array_equal(trial.F_pg, st0.F_pg) and np.array_equal(trial.alpha, st0.alpha)


def test_shear_plateau_perfect_plasticity():
    state = virgin_state(1, 150.0, SEC)
    vms = []
    for g in np.linspace(0.0, 0.08, 41)[1:]:
        F = I.copy()
        F[0, 1] = g
        _, trial, upd = stress(F, 150.0, state)
        state = committed(trial)
        vms.append(float(upd.mandel_vm[0]))
    plastic = np.array(vms[-10:])
    assert np.all(np.abs(plastic / SEC.R_pg - 1) <= 1e-6)
    assert vms[0] < SEC.R_pg


def _fd_dSdF(F, theta, state, params, h=1e-7):
    D = np.zeros((3, 3, 3, 3))
    for k in range(3):
        for m in range(3):
            dF = np.zeros((3, 3))
            dF[k, m] = h
            D[:, :, k, m] = (stress(F + dF, theta, state, params)[0].S[0] - stress(F - dF, theta, state, params)[0].S[0]) / (2 * h)
    return D


@pytest.mark.parametrize("theta,amp,tol", [(420.0, 0.02, 2e-4), (330.0, 0.002, 2e-4), (200.0, 0.05, 5e-3)])
def test_tangent_matches_fd(theta, amp, tol, rng):
    state = virgin_state(1, theta, SEC)
    F = I + amp * rng.standard_normal((3, 3))
    resp, _, upd = stress(F, theta, state, tangent=True)
    D = _fd_dSdF(F, theta, state, SEC)
    assert np.max(np.abs(resp.dSdF[0] - D)) <= tol * np.max(np.abs(D))
    dF = rng.standard_normal((3, 3))
    dE = 0.5 * (F.T @ dF + dF.T @ F)
    lhs = np.einsum("ijkl,kl->ij", resp.dSdE[0], dE)
    assert np.allclose(lhs, np.einsum("ijkm,km->ij", resp.dSdF[0], dF), rtol=tol, atol=tol * np.abs(lhs).max())
    C = resp.dSdE[0]
    assert np.max(np.abs(C - C.transpose(1, 0, 2, 3))) <= 1e-10 * np.abs(C).max()
    assert np.max(np.abs(C - C.transpose(0, 1, 3, 2))) <= 1e-10 * np.abs(C).max()


def test_theta_tangent_fd(rng):
    # cooling from 360 K into the transition with a frozen-strain history
    state = virgin_state(1, 360.0, SEC)
    F = I + 0.03 * rng.standard_normal((3, 3))
    resp, _, _ = stress(F, 352.0, state, tangent=True)
    h = 1e-5
    fd = (stress(F, 352.0 + h, state)[0].S[0] - stress(F, 352.0 - h, state)[0].S[0]) / (2 * h)
    assert np.allclose(resp.dSdTheta[0], fd, rtol=1e-5, atol=1e-6 * np.abs(fd).max())


def test_mixing_limits(rng):
    F = I + 0.003 * rng.standard_normal((3, 3))
    C = F.T @ F
    E = 0.5 * (C - I)
    for theta, phase in ((1000.0, "rubbery"), (-1000.0, "glassy")):
        lam, mu = lame(SEC, phase)
        st0 = virgin_state(1, theta, SEC)
        S = stress(F, theta, st0)[0].S[0]
        assert np.allclose(S, lam * np.trace(E) * I + 2 * mu * E, rtol=1e-12, atol=1e-9 * mu)


def test_objectivity(rng):
    F = I + 0.04 * rng.standard_normal((3, 3))
    for theta in (400.0, 340.0, 200.0):
        st0 = virgin_state(1, theta, SEC)
        S = stress(F, theta, st0)[0].S[0]
        Sr = stress(random_rotation(rng) @ F, theta, st0)[0].S[0]
        assert np.max(np.abs(Sr - S)) <= 1e-10 * np.abs(S).max()


def test_commit_contract():
    st0 = virgin_state(1, 300.0, SEC)
    F = np.diag([1.0, 1.02, 1.0])
    _, trial, _ = stress(F, 300.0, st0)
    with pytest.raises(ContractViolation):
        commit(trial)
    trial.converged = True
    c1, c2 = commit(trial), commit(trial)
    assert np.array_equal(c1.F_f, c2.F_f)
    with pytest.raises(ValueError):
        c1.F_f[0, 0, 0] = 2.0
    a = stress(F, 300.0, c1)[0].S
    b = stress(F, 300.0, c1)[0].S
    assert a.tobytes() == b.tobytes()


def test_parameter_validation():
    with pytest.raises(ValueError):
        MechParams(nu_g=0.5)
    with pytest.raises(ValueError):
        MechParams(E_r=-1.0)


def _uniaxial(state, theta, ly=None, s_yy=0.0, guess=(1.0, 1.0)):
    """Newton on the lateral (and, with ly None, axial) stretch for a uniaxial stress state."""
    x = np.array(guess[:1] if ly is not None else guess, float)
    for _ in range(80):
        a, b = x[0], (ly if ly is not None else x[1])
        resp, trial, _ = stress(np.diag([a, b, a]), theta, state, tangent=True)
        S, D = resp.S[0], resp.dSdF[0]
        r = np.array([S[0, 0], S[1, 1] - s_yy])
        Jm = np.array([[D[0, 0, 0, 0] + D[0, 0, 2, 2], D[0, 0, 1, 1]], [D[1, 1, 0, 0] + D[1, 1, 2, 2], D[1, 1, 1, 1]]])
        if ly is not None:
            r, Jm = r[:1], Jm[:1, :1]
        if np.max(np.abs(r)) <= 1e-6:
            return committed(trial), a, b
        dx = np.linalg.solve(Jm, r)
        x = x - dx * min(1.0, 0.02 / np.max(np.abs(dx)))
    raise AssertionError("uniaxial driver did not converge")


def test_material_point_shape_memory_cycle():
    eps0 = 0.1
    state = virgin_state(1, 400.0, SEC)
    a = 1.0
    for ly in np.linspace(1, 1 + eps0, 11)[1:]:
        state, a, _ = _uniaxial(state, 400.0, ly=ly, guess=(a, ly))
    for th in np.linspace(400, 200, 41)[1:]:
        state, a, _ = _uniaxial(state, th, ly=1 + eps0, guess=(a, 1 + eps0))
    S_load = stress(np.diag([a, 1 + eps0, a]), 200.0, state)[0].S[0, 1, 1]
    b = 1 + eps0
    for s in np.linspace(S_load, 0.0, 11)[1:]:
        state, a, b = _uniaxial(state, 200.0, s_yy=s, guess=(a, b))
    assert b - 1 >= 0.9 * eps0
    for th in np.linspace(200, 400, 41)[1:]:
        state, a, b = _uniaxial(state, th, guess=(a, b))
    assert abs(b - 1) <= 0.01 * eps0
