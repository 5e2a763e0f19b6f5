"""BAL camera model: angle-axis rotation, perspective divide with sign flip, radial distortion.

    P = R(omega) X + t
    p = -(P_x / P_z, P_y / P_z)
    x = f * (1 + k1 |p|^2 + k2 |p|^4) * p

Residuals are ``observation - x`` and every Jacobian here is of the residual,
i.e. the negated projection derivative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEPTH_EPS = 1e-12
SMALL_ANGLE = 1e-8


class BehindCamera(ArithmeticError):
    """Point lies (numerically) on the camera's principal plane."""


@dataclass
class CameraExtrinsics:
    omega: np.ndarray
    t: np.ndarray

    @classmethod
    def from_bal(cls, params) -> "CameraExtrinsics":
        params = np.asarray(params, dtype=float)
        return cls(params[0:3].copy(), params[3:6].copy())


@dataclass
class Intrinsics:
    f: float
    k1: float = 0.0
    k2: float = 0.0

    @classmethod
    def from_bal(cls, params) -> "Intrinsics":
        return cls(float(params[6]), float(params[7]), float(params[8]))


@dataclass
class ResidualBlock:
    r2: np.ndarray   # (2,)
    Jc: np.ndarray   # (2, 6)  d residual / d (omega, t)
    Jp: np.ndarray   # (2, 3)  d residual / d X


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrices for (..., 3) vectors."""
    v = np.asarray(v)
    K = np.zeros(v.shape[:-1] + (3, 3), dtype=v.dtype)
    K[..., 0, 1] = -v[..., 2]
    K[..., 0, 2] = v[..., 1]
    K[..., 1, 0] = v[..., 2]
    K[..., 1, 2] = -v[..., 0]
    K[..., 2, 0] = -v[..., 1]
    K[..., 2, 1] = v[..., 0]
    return K


def _rotation_coeffs(omega: np.ndarray):
    """Coefficients a, b, c, d with R = I + a K + b K^2 and J_r = I - b K + c K^2."""
    theta2 = np.einsum("...i,...i->...", omega, omega)
    theta = np.sqrt(theta2)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    s, c = np.sin(safe), np.cos(safe)
    a = np.where(small, 1.0, s / safe)
    b = np.where(small, 0.5, (1.0 - c) / safe**2)
    cc = np.where(small, 1.0 / 6.0, (safe - s) / safe**3)
    return a, b, cc


def rotation_matrix(omega) -> np.ndarray:
    """Rodrigues' formula for (..., 3) angle-axis vectors."""
    omega = np.asarray(omega, dtype=float)
    K = skew(omega)
    a, b, _ = _rotation_coeffs(omega)
    I = np.broadcast_to(np.eye(3), K.shape)
    return I + a[..., None, None] * K + b[..., None, None] * (K @ K)


def right_jacobian(omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    K = skew(omega)
    _, b, c = _rotation_coeffs(omega)
    I = np.broadcast_to(np.eye(3), K.shape)
    return I - b[..., None, None] * K + c[..., None, None] * (K @ K)


def canonicalize_rotation(omega) -> np.ndarray:
    """Wrap angle-axis vectors so that |omega| < 2*pi without changing R."""
    omega = np.array(omega, dtype=float)
    theta = np.linalg.norm(omega, axis=-1, keepdims=True)
    wrapped = np.mod(theta, 2.0 * np.pi)
    scale = np.where(theta >= 2.0 * np.pi, wrapped / np.where(theta > 0, theta, 1.0), 1.0)
    return omega * scale


def project_many(cameras: np.ndarray, X: np.ndarray):
    """Project per-observation points; ``cameras`` is (o, 9), ``X`` is (o, 3).

    Returns ``(uv, degenerate)``; rows flagged degenerate hold NaN.
    """
    cameras = np.asarray(cameras, dtype=float)
    R = rotation_matrix(cameras[:, 0:3])
    P = np.einsum("nij,nj->ni", R, X) + cameras[:, 3:6]
    z = P[:, 2]
    bad = np.abs(z) < DEPTH_EPS
    zs = np.where(bad, np.nan, z)
    p = -P[:, :2] / zs[:, None]
    r2 = np.einsum("ni,ni->n", p, p)
    d = 1.0 + cameras[:, 7] * r2 + cameras[:, 8] * r2 * r2
    return (cameras[:, 6] * d)[:, None] * p, bad


def residual_blocks(cameras: np.ndarray, X: np.ndarray, observations: np.ndarray):
    """Residuals and Jacobian blocks for a batch of observations.

    ``cameras`` (o, 9) and ``X`` (o, 3) are already gathered per observation.
    Returns ``(r, Jc, Jp, degenerate)`` with shapes (o,2), (o,2,6), (o,2,3), (o,).
    """
    cameras = np.asarray(cameras, dtype=float)
    X = np.asarray(X, dtype=float)
    omega = cameras[:, 0:3]
    f, k1, k2 = cameras[:, 6], cameras[:, 7], cameras[:, 8]
    R = rotation_matrix(omega)
    P = np.einsum("nij,nj->ni", R, X) + cameras[:, 3:6]
    z = P[:, 2]
    bad = np.abs(z) < DEPTH_EPS
    z = np.where(bad, np.nan, z)
    p = -P[:, :2] / z[:, None]
    r2 = np.einsum("ni,ni->n", p, p)
    d = 1.0 + k1 * r2 + k2 * r2 * r2
    proj = (f * d)[:, None] * p

    n = len(z)
    # d proj / d p
    dd = 2.0 * k1 + 4.0 * k2 * r2
    dproj_dp = f[:, None, None] * (d[:, None, None] * np.eye(2) + dd[:, None, None] * np.einsum("ni,nj->nij", p, p))
    # d p / d P
    dp_dP = np.zeros((n, 2, 3))
    inv_z = 1.0 / z
    dp_dP[:, 0, 0] = -inv_z
    dp_dP[:, 1, 1] = -inv_z
    dp_dP[:, 0, 2] = P[:, 0] * inv_z**2
    dp_dP[:, 1, 2] = P[:, 1] * inv_z**2
    dproj_dP = dproj_dp @ dp_dP

    dP_domega = -R @ skew(X) @ right_jacobian(omega)
    Jc = np.empty((n, 2, 6))
    Jc[:, :, 0:3] = -(dproj_dP @ dP_domega)
    Jc[:, :, 3:6] = -dproj_dP
    Jp = -(dproj_dP @ R)
    return np.asarray(observations, dtype=float) - proj, Jc, Jp, bad


def project(extrinsics: CameraExtrinsics, intrinsics: Intrinsics, X) -> np.ndarray:
    cam = np.concatenate([extrinsics.omega, extrinsics.t,
                          [intrinsics.f, intrinsics.k1, intrinsics.k2]])[None]
    uv, bad = project_many(cam, np.asarray(X, dtype=float)[None])
    if bad[0]:
        raise BehindCamera("point depth is zero in camera frame")
    return uv[0]


def residual_block(extrinsics: CameraExtrinsics, intrinsics: Intrinsics, X, observation) -> ResidualBlock:
    cam = np.concatenate([extrinsics.omega, extrinsics.t,
                          [intrinsics.f, intrinsics.k1, intrinsics.k2]])[None]
    r, Jc, Jp, bad = residual_blocks(cam, np.asarray(X, dtype=float)[None],
                                     np.asarray(observation, dtype=float)[None])
    if bad[0]:
        raise BehindCamera("point depth is zero in camera frame")
    return ResidualBlock(r[0], Jc[0], Jp[0])
