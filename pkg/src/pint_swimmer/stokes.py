"""Regularized Stokeslet velocities for point forces and torques.

Blob: phi(r) = 15 eps^4 / (8 pi (r^2 + eps^2)^(7/2)).  For a force f and a
torque n at X, the fluid at x = X + r moves with

    mu u = f H1 + (f.r) r H2 + (n x r) H3
    mu w = (f x r) H3 + n H4 + (n.r) r H5

where w is half the vorticity.  The H functions below follow from the
regularized Green's function G (Lap G = phi) and biharmonic B (Lap B = G):
H1 = B'/r - G, H2 = (B'' - B'/r)/r^2, H3 = G'/(2r), H4 = (phi - G'/r)/4,
H5 = -(G'' - G'/r)/(4 r^2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

FREE_SPACE = "free_space"
IMAGE_WALL = "image_wall"

MOBILITY_CAP = 512
_CHUNK = 256


@dataclass(frozen=True)
class KernelParams:
    eps: float
    mu: float = 1.0
    wall_mode: str = FREE_SPACE

    def __post_init__(self):
        if not (self.eps > 0 and self.mu > 0):
            raise ValueError("regularization radius and viscosity must be positive")
        if self.wall_mode not in (FREE_SPACE, IMAGE_WALL):
            raise ValueError(f"unknown wall mode {self.wall_mode!r}")


class VelocityField(NamedTuple):
    u: np.ndarray
    omega: np.ndarray


def blob(r, eps: float):
    r2 = np.asarray(r, dtype=float) ** 2
    return 15.0 * eps**4 / (8.0 * math.pi * (r2 + eps**2) ** 3.5)


def _h_from_r2(r2, eps: float):
    e2 = eps * eps
    d = r2 + e2
    sd = np.sqrt(d)
    d3 = d * sd
    d5 = d3 * d
    d7 = d5 * d
    pi8 = 8.0 * math.pi
    H1 = (r2 + 2.0 * e2) / (pi8 * d3)
    H2 = 1.0 / (pi8 * d3)
    H3 = (2.0 * r2 + 5.0 * e2) / (2.0 * pi8 * d5)
    H4 = (10.0 * e2 * e2 - 7.0 * e2 * r2 - 2.0 * r2 * r2) / (4.0 * pi8 * d7)
    H5 = (21.0 * e2 + 6.0 * r2) / (4.0 * pi8 * d7)
    return H1, H2, H3, H4, H5


def h_functions(r, eps: float):
    """(H1, H2, H3, H4, H5) at distance(s) r; smooth and finite at r = 0."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("distance must be non-negative")
    return _h_from_r2(r * r, eps)


def _check_wall(kp: KernelParams):
    if kp.wall_mode == IMAGE_WALL:
        raise NotImplementedError(
            "image-wall corrections are not implemented; use wall_mode='free_space'"
        )


def evaluate_velocities(targets, sources, forces, torques, kp: KernelParams) -> VelocityField:
    """Linear and angular velocity at ``targets`` from point loads at ``sources``.

    Targets are processed in independent chunks; within a chunk every target
    reduces over the sources in the same fixed order.
    """
    _check_wall(kp)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    sources = np.atleast_2d(np.asarray(sources, dtype=float))
    forces = np.atleast_2d(np.asarray(forces, dtype=float))
    torques = np.atleast_2d(np.asarray(torques, dtype=float))
    if forces.shape != sources.shape or torques.shape != sources.shape:
        raise ValueError("forces and torques must match the source array shape")
    if not (np.all(np.isfinite(forces)) and np.all(np.isfinite(torques))):
        raise ValueError("non-finite load entries")

    u = np.empty_like(targets)
    w = np.empty_like(targets)
    for lo in range(0, len(targets), _CHUNK):
        x = targets[lo : lo + _CHUNK]
        r = x[:, None, :] - sources[None, :, :]
        r2 = np.einsum("tsd,tsd->ts", r, r)
        H1, H2, H3, H4, H5 = _h_from_r2(r2, kp.eps)
        fr = np.einsum("sd,tsd->ts", forces, r)
        nr = np.einsum("sd,tsd->ts", torques, r)
        nxr = np.cross(torques[None, :, :], r)
        fxr = np.cross(forces[None, :, :], r)
        uu = (
            H1[..., None] * forces[None, :, :]
            + (H2 * fr)[..., None] * r
            + H3[..., None] * nxr
        )
        ww = (
            H3[..., None] * fxr
            + H4[..., None] * torques[None, :, :]
            + (H5 * nr)[..., None] * r
        )
        u[lo : lo + _CHUNK] = uu.sum(axis=1)
        w[lo : lo + _CHUNK] = ww.sum(axis=1)
    return VelocityField(u / kp.mu, w / kp.mu)


def mobility_block(r_vec, kp: KernelParams) -> np.ndarray:
    """6x6 block mapping (f_j, n_j) to (u_i, w_i) for r_vec = x_i - x_j."""
    r_vec = np.asarray(r_vec, dtype=float)
    r2 = float(r_vec @ r_vec)
    H1, H2, H3, H4, H5 = _h_from_r2(r2, kp.eps)
    rr = np.outer(r_vec, r_vec)
    K = np.array(
        [
            [0.0, -r_vec[2], r_vec[1]],
            [r_vec[2], 0.0, -r_vec[0]],
            [-r_vec[1], r_vec[0], 0.0],
        ]
    )
    eye = np.eye(3)
    B = np.empty((6, 6))
    B[:3, :3] = H1 * eye + H2 * rr
    B[:3, 3:] = -H3 * K
    B[3:, :3] = -H3 * K
    B[3:, 3:] = H4 * eye + H5 * rr
    return B / kp.mu


def assemble_grand_mobility(nodes, kp: KernelParams, cap: int = MOBILITY_CAP) -> np.ndarray:
    """Dense 6N x 6N mobility, ordered per node as (u, w) rows and (f, n) columns.

    Diagnostic path only; refuses N above ``cap``.
    """
    _check_wall(kp)
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    N = len(nodes)
    if N > cap:
        raise ValueError(f"grand mobility limited to {cap} nodes, got {N}")
    M = np.empty((6 * N, 6 * N))
    for i in range(N):
        for j in range(N):
            M[6 * i : 6 * i + 6, 6 * j : 6 * j + 6] = mobility_block(nodes[i] - nodes[j], kp)
    return M
