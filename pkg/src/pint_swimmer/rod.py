"""Discrete Kirchhoff rod: state, constitutive loads and nodal densities.

Triads are stored row-wise: ``D[k, i]`` is director ``D^{i+1}`` at node k.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .rotation import sqrt_rotation

logger = logging.getLogger(__name__)


class CorruptStateError(ValueError):
    """Raised when a rod state is geometrically impossible (e.g. zero-length segment)."""


@dataclass(frozen=True)
class RodDiscretization:
    M: int
    L: float

    def __post_init__(self):
        if self.M < 3:
            raise ValueError(f"a rod needs at least 3 nodes, got M={self.M}")
        if self.L <= 0:
            raise ValueError("rod length must be positive")

    @property
    def ds(self) -> float:
        return self.L / (self.M - 1)

    @property
    def s(self) -> np.ndarray:
        return np.arange(self.M) * self.ds


@dataclass
class RodState:
    X: np.ndarray  # (M, 3)
    D: np.ndarray  # (M, 3, 3), rows are directors

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.D = np.asarray(self.D, dtype=float)
        if self.X.ndim != 2 or self.X.shape[1] != 3:
            raise ValueError(f"X must be (M, 3), got {self.X.shape}")
        if self.D.shape != (self.X.shape[0], 3, 3):
            raise ValueError(f"D must be (M, 3, 3), got {self.D.shape}")

    @property
    def M(self) -> int:
        return self.X.shape[0]

    def copy(self) -> "RodState":
        return RodState(self.X.copy(), self.D.copy())


@dataclass(frozen=True)
class MaterialParams:
    """Bend/twist moduli a_i and shear/stretch moduli b_i.

    Defaults are a desk set (mu = 1, L = 1): stiff enough in shear/stretch to
    keep segments near unit strain, soft enough in bending to beat visibly.
    """

    a1: float = 0.2
    a2: float = 0.2
    a3: float = 0.2
    b1: float = 20.0
    b2: float = 20.0
    b3: float = 20.0

    def __post_init__(self):
        if min(self.a1, self.a2, self.a3, self.b1, self.b2, self.b3) <= 0:
            raise ValueError("all rod moduli must be positive")

    @property
    def a(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3])

    @property
    def b(self) -> np.ndarray:
        return np.array([self.b1, self.b2, self.b3])


@dataclass(frozen=True)
class WaveformParams:
    A: float = 0.05
    f: float = 2.0 * math.pi
    wavelength: float = 1.0

    def __post_init__(self):
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")

    @property
    def k(self) -> float:
        return 2.0 * math.pi / self.wavelength


@dataclass(frozen=True)
class LJParams:
    well_depth: float = 1.0e-4
    sigma: float = 0.24

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("LJ sigma must be positive")

    @property
    def r_c(self) -> float:
        return 2.0 ** (1.0 / 6.0) * self.sigma


@dataclass
class InternalLoads:
    F: np.ndarray  # (M-1, 3) contact force on segment k+1/2
    N: np.ndarray  # (M-1, 3) contact moment on segment k+1/2


@dataclass
class LoadSet:
    """Force and torque densities a rod exerts on the fluid, per node."""

    f: np.ndarray
    n: np.ndarray = field(default=None)

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        self.n = np.zeros_like(self.f) if self.n is None else np.asarray(self.n, dtype=float)

    @classmethod
    def zeros(cls, M: int) -> "LoadSet":
        return cls(np.zeros((M, 3)), np.zeros((M, 3)))


def preferred_strain(s, t: float, w: WaveformParams) -> np.ndarray:
    """Preferred strain-twist vector (0, -k^2 A sin(k s + f t), 0) at arclength s."""
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape + (3,))
    out[..., 1] = -w.k**2 * w.A * np.sin(w.k * s + w.f * t)
    return out


def mid_frames(D: np.ndarray) -> np.ndarray:
    """Segment frames A_k^{1/2} D_k, with A_k = sum_j D^j_{k+1} (D^j_k)^T."""
    A = np.swapaxes(D[1:], -1, -2) @ D[:-1]
    S = sqrt_rotation(A)
    return D[:-1] @ np.swapaxes(S, -1, -2)


def strains(state: RodState, ds: float):
    """Shear/stretch strains (M-1, 3) and curvature/twist (M-1, 3) on segments,
    both in the segment frame, together with that frame."""
    X, D = state.X, state.D
    dX = X[1:] - X[:-1]
    seg = np.linalg.norm(dX, axis=-1)
    if np.any(seg == 0.0) or not np.all(np.isfinite(seg)):
        bad = np.flatnonzero((seg == 0.0) | ~np.isfinite(seg))
        raise CorruptStateError(f"degenerate segment(s) {bad.tolist()}")
    Dm = mid_frames(D)
    shear = np.einsum("kd,kjd->kj", dX / ds, Dm)
    shear[:, 2] -= 1.0
    dD = (D[1:] - D[:-1]) / ds
    # (i, j, k) cyclic: kappa_i = dD^j . Dm^k
    kappa = np.stack(
        [
            np.sum(dD[:, 1] * Dm[:, 2], axis=-1),
            np.sum(dD[:, 2] * Dm[:, 0], axis=-1),
            np.sum(dD[:, 0] * Dm[:, 1], axis=-1),
        ],
        axis=-1,
    )
    return shear, kappa, Dm


def internal_loads(
    state: RodState, mat: MaterialParams, w: WaveformParams, t: float, ds: float
) -> InternalLoads:
    shear, kappa, Dm = strains(state, ds)
    s_mid = (np.arange(state.M - 1) + 0.5) * ds
    omega = preferred_strain(s_mid, t, w)
    Fc = mat.b * shear
    Nc = mat.a * (kappa - omega)
    F = np.einsum("kj,kjd->kd", Fc, Dm)
    N = np.einsum("kj,kjd->kd", Nc, Dm)
    return InternalLoads(F, N)


def nodal_loads(state: RodState, loads: InternalLoads, ds: float) -> LoadSet:
    """Force/torque densities on the fluid from segment loads, free ends.

    f_k = (F_{k+1/2} - F_{k-1/2})/ds
    n_k = (N_{k+1/2} - N_{k-1/2})/ds + (t_{k+1/2} x F_{k+1/2} + t_{k-1/2} x F_{k-1/2})/2
    with t the scaled segment vector and zero ghost loads past either end.
    """
    M = state.M
    zero = np.zeros((1, 3))
    F = np.concatenate([zero, loads.F, zero])
    N = np.concatenate([zero, loads.N, zero])
    tan = np.concatenate([zero, (state.X[1:] - state.X[:-1]) / ds, zero])
    TxF = np.cross(tan, F)
    f = (F[1:] - F[:-1]) / ds
    n = (N[1:] - N[:-1]) / ds + 0.5 * (TxF[1:] + TxF[:-1])
    assert f.shape == (M, 3)
    return LoadSet(f, n)


def rod_loads(
    state: RodState, mat: MaterialParams, w: WaveformParams, t: float, ds: float
) -> LoadSet:
    return nodal_loads(state, internal_loads(state, mat, w, t, ds), ds)


def lj_repulsion(
    states,
    lj: LJParams,
    ds: float | None = None,
    self_exclusion: int | None = None,
) -> list[np.ndarray]:
    """Truncated Lennard-Jones point forces (one (M, 3) array per rod).

    Only the repulsive branch r < r_c acts.  Pairs on the same rod closer than
    ``self_exclusion`` nodes along the rod are skipped; by default the window
    spans 2 r_c of arclength so a straight rod never repels itself.
    """
    states = list(states)
    if not states:
        return []
    sizes = [s.M for s in states]
    X = np.concatenate([s.X for s in states])
    rod_id = np.repeat(np.arange(len(states)), sizes)
    node_id = np.concatenate([np.arange(m) for m in sizes])
    if self_exclusion is None:
        self_exclusion = len(X) if ds is None else int(math.ceil(2.0 * lj.r_c / ds)) + 1

    diff = X[:, None, :] - X[None, :, :]
    r = np.linalg.norm(diff, axis=-1)
    same = rod_id[:, None] == rod_id[None, :]
    sep = np.abs(node_id[:, None] - node_id[None, :])
    active = (r < lj.r_c) & (~same | (sep >= self_exclusion))
    np.fill_diagonal(active, False)

    forces = np.zeros_like(X)
    i, j = np.nonzero(active)
    if len(i):
        r_min = 1e-3 * lj.sigma
        rij = r[i, j]
        if np.any(rij < r_min):
            logger.warning("LJ near-collision: pair distance %.3g below %.3g", rij.min(), r_min)
        rc = np.maximum(rij, r_min)
        sr6 = (lj.sigma / rc) ** 6
        mag = 24.0 * lj.well_depth / rc * (2.0 * sr6 * sr6 - sr6)
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(rij > 0.0, mag / rij, 0.0)
        np.add.at(forces, i, scale[:, None] * diff[i, j])
    return np.split(forces, np.cumsum(sizes)[:-1])
