"""Analytic coil excitation: waveform, solenoid induction and source vector potential."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MU0 = 4e-7 * np.pi
C0 = 299_792_458.0
AXES = {"x": 0, "y": 1, "z": 2}


class Program:
    """Piecewise-linear function of time, constant beyond the last breakpoint."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            raise ValueError("program needs at least one breakpoint")
        if np.any(np.diff(pts[:, 0]) <= 0):
            raise ValueError("program breakpoints must be strictly increasing in t")
        self.t = pts[:, 0]
        self.v = pts[:, 1]

    @classmethod
    def constant(cls, value: float) -> "Program":
        return cls([[0.0, value]])

    def __call__(self, t: float) -> float:
        if t < self.t[0] - 1e-15 * max(1.0, abs(self.t[0])):
            raise ValueError(f"t = {t} is before the first breakpoint {self.t[0]}")
        return float(np.interp(t, self.t, self.v))

    def slope(self, t: float) -> float:
        """Right-continuous derivative."""
        if len(self.t) == 1 or t >= self.t[-1] or t < self.t[0]:
            return 0.0
        k = int(np.searchsorted(self.t, t, side="right")) - 1
        return float((self.v[k + 1] - self.v[k]) / (self.t[k + 1] - self.t[k]))

    def slope_left(self, t: float) -> float:
        """Derivative on the interval ending at t; the one backward Euler sees at t_{n+1}."""
        if len(self.t) == 1 or t <= self.t[0] or t > self.t[-1]:
            return 0.0
        k = int(np.searchsorted(self.t, t, side="left")) - 1
        return float((self.v[k + 1] - self.v[k]) / (self.t[k + 1] - self.t[k]))

    def points(self) -> list[list[float]]:
        return [[float(a), float(b)] for a, b in zip(self.t, self.v)]


@dataclass
class CoilSpec:
    N: float = 1000.0
    L: float = 1.0
    mu_r: float = 20.0
    f: float = 1000.0
    a: float = 0.0
    b: float = 1.0
    I0: Program = field(default_factory=lambda: Program.constant(0.0))
    axis: str = "z"

    def __post_init__(self):
        if min(self.N, self.L, self.f, self.mu_r) <= 0:
            raise ValueError("coil N, L, f and mu_r must be positive")
        if self.axis not in AXES:
            raise ValueError(f"coil axis must be one of x, y, z, got '{self.axis}'")

    @property
    def mu(self) -> float:
        return MU0 * self.mu_r

    @property
    def omega(self) -> float:
        return 2 * np.pi * self.f

    @property
    def gain(self) -> float:
        """b_s per ampere."""
        return self.mu * self.N / self.L

    @property
    def unit_axis(self) -> np.ndarray:
        e = np.zeros(3)
        e[AXES[self.axis]] = 1.0
        return e


def current(t: float, coil: CoilSpec) -> float:
    return coil.I0(t) * (coil.a + coil.b * np.sin(coil.omega * t))


def current_rate(t: float, coil: CoilSpec) -> float:
    wt = coil.omega * t
    return coil.I0.slope_left(t) * (coil.a + coil.b * np.sin(wt)) + coil.I0(t) * coil.b * coil.omega * np.cos(wt)


def current_rate_rms(t: float, coil: CoilSpec) -> float:
    """RMS of dI_s/dt over one period at frozen I0 and dI0/dt."""
    i0, di0 = coil.I0(t), coil.I0.slope_left(t)
    return float(np.sqrt((di0 * coil.a) ** 2 + 0.5 * (di0 * coil.b) ** 2 + 0.5 * (i0 * coil.b * coil.omega) ** 2))


def b_source(t: float, coil: CoilSpec) -> float:
    """Axial induction b_s = mu N I_s / L."""
    return coil.gain * current(t, coil)


def b_rate(t: float, coil: CoilSpec, averaged: bool = False) -> float:
    if averaged:
        return coil.gain * current_rate_rms(t, coil)
    return coil.gain * current_rate(t, coil)


def skew_axis(coil: CoilSpec) -> np.ndarray:
    """W with W x = 0.5 (e x x), so a_s = b_s W x."""
    e = coil.unit_axis
    return 0.5 * np.array([[0, -e[2], e[1]], [e[2], 0, -e[0]], [-e[1], e[0], 0]])


def a_source(x, t: float, coil: CoilSpec, averaged: bool = False):
    """Source potential a_s = 0.5 b_s (e x x) and its partial time derivative at deformed x."""
    x = np.asarray(x, dtype=float)
    w = skew_axis(coil)
    ax = np.einsum("ij,...j->...i", w, x)
    return b_source(t, coil) * ax, b_rate(t, coil, averaged) * ax


def a_source_lagrangian(X, u, F, t: float, coil: CoilSpec, averaged: bool = False):
    """Pullbacks F^T a_s(X+u) and F^T d_t a_s(X+u), displacement frozen in time."""
    a, da = a_source(np.asarray(X) + np.asarray(u), t, coil, averaged)
    return np.einsum("...ji,...j->...i", F, a), np.einsum("...ji,...j->...i", F, da)


@dataclass(frozen=True)
class MqsValidity:
    skin_depth: float
    wavelength: float
    wavelength_material: float
    L_sys: float
    skin_ok: bool
    wave_ok: bool


def mqs_validity(coil: CoilSpec, sigma: float, mu: float, L_sys: float, eps_r: float = 1.0) -> MqsValidity:
    if min(sigma, mu, L_sys) <= 0:
        raise ValueError("sigma, mu and L_sys must be positive")
    delta = float(np.sqrt(2.0 / (mu * sigma * coil.omega)))
    lam = C0 / coil.f
    lam_mat = 1.0 / (np.sqrt(mu * eps_r * 8.8541878128e-12) * coil.f)
    return MqsValidity(delta, lam, float(lam_mat), L_sys, delta >= L_sys, lam / L_sys >= 100.0)
