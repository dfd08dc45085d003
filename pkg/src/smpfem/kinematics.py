"""Deformation kinematics and Eulerian/Lagrangian transformations.

All functions broadcast over leading axes: vectors are (..., 3), tensors (..., 3, 3).
Inverses come from the closed-form adjugate, so they also work on complex input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

J_MIN = 1e-12


class KinematicsError(ArithmeticError):
    """Raised when a deformation gradient is inverted (J <= 1e-12)."""


def det3(a: np.ndarray) -> np.ndarray:
    return (
        a[..., 0, 0] * (a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1])
        - a[..., 0, 1] * (a[..., 1, 0] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 0])
        + a[..., 0, 2] * (a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0])
    )


def adj3(a: np.ndarray) -> np.ndarray:
    """Adjugate (transposed cofactor matrix)."""
    out = np.empty_like(a)
    out[..., 0, 0] = a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1]
    out[..., 0, 1] = a[..., 0, 2] * a[..., 2, 1] - a[..., 0, 1] * a[..., 2, 2]
    out[..., 0, 2] = a[..., 0, 1] * a[..., 1, 2] - a[..., 0, 2] * a[..., 1, 1]
    out[..., 1, 0] = a[..., 1, 2] * a[..., 2, 0] - a[..., 1, 0] * a[..., 2, 2]
    out[..., 1, 1] = a[..., 0, 0] * a[..., 2, 2] - a[..., 0, 2] * a[..., 2, 0]
    out[..., 1, 2] = a[..., 0, 2] * a[..., 1, 0] - a[..., 0, 0] * a[..., 1, 2]
    out[..., 2, 0] = a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0]
    out[..., 2, 1] = a[..., 0, 1] * a[..., 2, 0] - a[..., 0, 0] * a[..., 2, 1]
    out[..., 2, 2] = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    return out


def inv3(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = det3(a)
    return adj3(a) / d[..., None, None], d


def tr(a):
    return a[..., 0, 0] + a[..., 1, 1] + a[..., 2, 2]


def T(a):
    return np.swapaxes(a, -1, -2)


def mv(a, v):
    return np.einsum("...ij,...j->...i", a, v)


def mm(a, b):
    return np.einsum("...ij,...jk->...ik", a, b)


@dataclass(frozen=True)
class DeformationState:
    F: np.ndarray
    J: np.ndarray
    Finv: np.ndarray
    E: np.ndarray


def green_lagrange(F: np.ndarray) -> np.ndarray:
    return 0.5 * (mm(T(F), F) - np.eye(3))


def deformation_from_displacement(grad_u: np.ndarray, where: str = "") -> DeformationState:
    F = np.eye(3) + np.asarray(grad_u)
    J = det3(F)
    if np.any(np.real(J) <= J_MIN):
        bad = np.argwhere(np.atleast_1d(np.real(J)) <= J_MIN)
        loc = f" {where}" if where else ""
        raise KinematicsError(f"element inversion{loc}: J <= {J_MIN} at {bad[:5].tolist()}")
    Finv, _ = inv3(F)
    return DeformationState(F, J, Finv, green_lagrange(F))


def pull_one_form(f, F):
    """F^T f."""
    return np.einsum("...ji,...j->...i", F, f)


def push_one_form(f, F):
    """F^-T f."""
    Finv, _ = inv3(F)
    return np.einsum("...ji,...j->...i", Finv, f)


def pull_two_form(f, F, J=None):
    """J F^-1 f."""
    Finv, d = inv3(F)
    J = d if J is None else J
    return J[..., None] * mv(Finv, f)


def push_two_form(f, F, J=None):
    """J^-1 F f."""
    J = det3(F) if J is None else J
    return mv(F, f) / J[..., None]


def pull_tensor_two(t, F, J=None, mode: str = "conductivity"):
    """J F^-1 t F^-T, or J^-1 F^T t F in reluctivity mode."""
    Finv, d = inv3(F)
    J = d if J is None else J
    if mode == "conductivity":
        return J[..., None, None] * mm(mm(Finv, t), T(Finv))
    if mode == "reluctivity":
        return mm(mm(T(F), t), F) / J[..., None, None]
    raise ValueError(f"unknown pullback mode '{mode}'")


def push_tensor_two(t, F, J=None, mode: str = "conductivity"):
    J = det3(F) if J is None else J
    if mode == "conductivity":
        return mm(mm(F, t), T(F)) / J[..., None, None]
    Finv, _ = inv3(F)
    return J[..., None, None] * mm(mm(T(Finv), t), Finv)


def piola_stress_maps(S, F, J=None):
    """First Piola-Kirchhoff P = F S and Cauchy sigma = J^-1 F S F^T."""
    J = det3(F) if J is None else J
    P = mm(F, S)
    return P, mm(P, T(F)) / J[..., None, None]


def cauchy_to_pk2(sigma, F, J=None):
    Finv, d = inv3(F)
    J = d if J is None else J
    return J[..., None, None] * mm(mm(Finv, sigma), T(Finv))


def matter_flow(v, F):
    """Lagrangian matter flow V = -F^-1 v."""
    Finv, _ = inv3(F)
    return -mv(Finv, v)
