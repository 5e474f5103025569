"""Closed-form algebra on 3x3 rotation matrices.

Every routine accepts a single matrix ``(3, 3)`` or a stack ``(..., 3, 3)``
so the rod code can take one square root per segment without a Python loop.
"""
from __future__ import annotations

import logging
from typing import NamedTuple

import numpy as np

logger = logging.getLogger(__name__)

# Below THETA_LO the half-angle rotation is replaced by its first-order series;
# within THETA_HI of pi the axis comes from the diagonal of R.
THETA_LO = 1e-7
THETA_HI = 1e-6

_Z_AXIS = np.array([0.0, 0.0, 1.0])


class AxisAngle(NamedTuple):
    axis: np.ndarray
    angle: float


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix K(v), so that ``skew(v) @ w == np.cross(v, w)``."""
    v = np.asarray(v, dtype=float)
    K = np.zeros(v.shape[:-1] + (3, 3))
    K[..., 0, 1] = -v[..., 2]
    K[..., 0, 2] = v[..., 1]
    K[..., 1, 0] = v[..., 2]
    K[..., 1, 2] = -v[..., 0]
    K[..., 2, 0] = -v[..., 1]
    K[..., 2, 1] = v[..., 0]
    return K


def rodrigues(axis: np.ndarray, theta) -> np.ndarray:
    """R = I cos(theta) + (1 - cos(theta)) n n^T + sin(theta) K(n).

    No range restriction on ``theta``; ``axis`` is assumed to be unit length.
    """
    n = np.asarray(axis, dtype=float)
    theta = np.asarray(theta, dtype=float)
    c = np.cos(theta)[..., None, None]
    s = np.sin(theta)[..., None, None]
    # 1 - cos(theta) = 2 sin^2(theta/2), without cancellation at small angles
    omc = 2.0 * np.sin(0.5 * theta)[..., None, None] ** 2
    eye = np.eye(3)
    return c * eye + omc * (n[..., :, None] * n[..., None, :]) + s * skew(n)


def from_axis_angle(axis, angle=None) -> np.ndarray:
    """Rotation matrix from an :class:`AxisAngle` (or an ``axis, angle`` pair).

    An axis off unit length by at most 1e-6 is renormalized with a warning;
    anything further off raises ``ValueError``.
    """
    if angle is None:
        axis, angle = axis
    n = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(n)
    if abs(norm - 1.0) > 1e-12:
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"rotation axis must be a unit vector, got |n| = {norm!r}")
        logger.warning("renormalizing rotation axis with |n| = %.16g", norm)
        n = n / norm
    return rodrigues(n, float(angle))


def _skew_vector(R: np.ndarray) -> np.ndarray:
    # equals 2 sin(theta) n for R = rodrigues(n, theta)
    return np.stack(
        [
            R[..., 2, 1] - R[..., 1, 2],
            R[..., 0, 2] - R[..., 2, 0],
            R[..., 1, 0] - R[..., 0, 1],
        ],
        axis=-1,
    )


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(norm > 0.0, v / norm, _Z_AXIS)


def _decompose(R: np.ndarray):
    """Axis, angle and the angle's branch label for a stack of rotations.

    The angle comes from ``atan2(|v|, tr R - 1)``, which stays accurate at both
    ends of [0, pi] where ``arccos`` loses half the digits.  The axis is taken
    from the skew part up to pi/2, from the symmetric part beyond it, and from
    the diagonal entries in the pi branch.
    """
    v = _skew_vector(R)
    vnorm = np.linalg.norm(v, axis=-1)
    tr = np.trace(R, axis1=-2, axis2=-1)
    theta = np.arctan2(vnorm, tr - 1.0)
    cos_t = np.cos(theta)

    axis_skew = _unit(v)

    # symmetric part: (R + R^T)/2 - cos(theta) I = (1 - cos(theta)) n n^T
    sym = 0.5 * (R + np.swapaxes(R, -1, -2)) - cos_t[..., None, None] * np.eye(3)
    diag = np.diagonal(sym, axis1=-2, axis2=-1)
    idx = np.argmax(diag, axis=-1)
    col = np.take_along_axis(sym, idx[..., None, None], axis=-1)[..., 0]
    axis_sym = _unit(col)

    # pi branch: component magnitudes from the diagonal, signs from the
    # off-diagonal products n_i n_j with the largest component taken positive
    omc = np.maximum(1.0 - cos_t, 1e-300)[..., None]
    Rdiag = np.diagonal(R, axis1=-2, axis2=-1)
    mags = np.sqrt(np.clip((Rdiag - cos_t[..., None]) / omc, 0.0, None))
    row = np.take_along_axis(sym, idx[..., None, None], axis=-2)[..., 0, :]
    signs = np.where(row >= 0.0, 1.0, -1.0)
    axis_diag = _unit(mags * signs)

    branch = np.where(
        theta < THETA_LO,
        0,
        np.where(theta <= 0.5 * np.pi, 1, np.where(theta <= np.pi - THETA_HI, 2, 3)),
    )
    axis = np.where((branch == 1)[..., None], axis_skew, axis_diag)
    axis = np.where((branch == 2)[..., None], axis_sym, axis)
    axis = np.where((branch == 0)[..., None], axis_skew, axis)

    # the symmetric/diagonal estimates fix the axis only up to sign
    flip = (branch >= 2) & (np.einsum("...i,...i->...", axis, v) < 0.0)
    axis = np.where(flip[..., None], -axis, axis)
    return axis, theta, branch


def to_axis_angle(R: np.ndarray) -> AxisAngle:
    """Axis and angle in [0, pi] of a single rotation matrix.

    The identity maps to angle 0 about the z axis.
    """
    R = np.asarray(R, dtype=float)
    axis, theta, _ = _decompose(R)
    return AxisAngle(axis, float(theta))


def sqrt_rotation(R: np.ndarray) -> np.ndarray:
    """Principal square root S of a rotation R, with S @ S == R.

    S turns about the axis of R by half the angle.  Near the identity the
    first-order limit S = I + (R - R^T)/4 is used.
    """
    R = np.asarray(R, dtype=float)
    axis, theta, branch = _decompose(R)
    S = rodrigues(axis, 0.5 * theta)
    small = branch == 0
    if np.any(small):
        series = np.eye(3) + 0.25 * (R - np.swapaxes(R, -1, -2))
        S = np.where(small[..., None, None], series, S)
    return S


def is_rotation(R: np.ndarray, tol: float = 1e-12) -> bool:
    R = np.asarray(R, dtype=float)
    eye = np.eye(3)
    ortho = np.linalg.norm(np.swapaxes(R, -1, -2) @ R - eye, axis=(-2, -1))
    det = np.linalg.det(R)
    return bool(np.all(ortho <= tol) and np.all(np.abs(det - 1.0) <= tol))


def rotate_about(vectors: np.ndarray, rotvec: np.ndarray) -> np.ndarray:
    """Rotate ``vectors`` (..., k, 3) by the rotation vector ``rotvec`` (..., 3).

    Angle |rotvec|, axis rotvec/|rotvec|; a zero rotation vector leaves the
    input untouched.  This is the director update used by the integrators.
    """
    theta = np.linalg.norm(rotvec, axis=-1)
    e = _unit(rotvec)[..., None, :]
    c = np.cos(theta)[..., None, None]
    s = np.sin(theta)[..., None, None]
    omc = 2.0 * np.sin(0.5 * theta)[..., None, None] ** 2
    edot = np.sum(e * vectors, axis=-1, keepdims=True)
    out = c * vectors + s * np.cross(e, vectors) + omc * edot * e
    return np.where((theta > 0.0)[..., None, None], out, vectors)


def orthonormality_residual(D: np.ndarray) -> np.ndarray:
    """Frobenius distance of D D^T from I for triads stored as rows."""
    return np.linalg.norm(D @ np.swapaxes(D, -1, -2) - np.eye(3), axis=(-2, -1))


def reorthonormalize(D: np.ndarray, threshold: float = 1e-9) -> np.ndarray:
    """One modified Gram-Schmidt pass on triads whose residual exceeds ``threshold``."""
    D = np.array(D, dtype=float, copy=True)
    bad = orthonormality_residual(D) > threshold
    if not np.any(bad):
        return D
    T = D[bad]
    d1 = T[..., 0, :] / np.linalg.norm(T[..., 0, :], axis=-1, keepdims=True)
    d2 = T[..., 1, :] - np.sum(T[..., 1, :] * d1, axis=-1, keepdims=True) * d1
    d2 /= np.linalg.norm(d2, axis=-1, keepdims=True)
    d3 = T[..., 2, :] - np.sum(T[..., 2, :] * d1, axis=-1, keepdims=True) * d1
    d3 -= np.sum(d3 * d2, axis=-1, keepdims=True) * d2
    d3 /= np.linalg.norm(d3, axis=-1, keepdims=True)
    D[bad] = np.stack([d1, d2, d3], axis=-2)
    return D
