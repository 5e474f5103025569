"""Scenario parameters and initial rod placement.

The default constants form a small "desk" parameter set (unit viscosity, unit
rod length, one beat per unit time) that keeps explicit steps stable at
laptop-scale step sizes; every value can be overridden from a config file.
With M = 51 the coarse Euler step (T / intervals / step_ratio = 5e-4) sits
just inside its stability limit; smaller M tolerates far larger steps.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .propagators import (
    EULER,
    RK2,
    PositionExtractor,
    Propagator,
    StepperConfig,
    SwimmerModel,
    SwimmerState,
    TriadProjector,
)
from .rod import LJParams, MaterialParams, RodDiscretization, RodState, WaveformParams
from .stokes import FREE_SPACE, KernelParams

GRID = "grid"
RANDOM = "random"

MAX_PLACEMENT_ATTEMPTS = 10_000


class PlacementError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    rod_count: int = 1
    M: int = 51
    L: float = 1.0
    material: MaterialParams = field(default_factory=MaterialParams)
    waveform: WaveformParams = field(default_factory=WaveformParams)
    mu: float = 1.0
    eps: float | None = None  # None -> 4 ds
    wall_mode: str = FREE_SPACE
    lj_well_depth: float = 1.0e-4
    lj_sigma: float | None = None  # None -> 3 eps
    d_z: float = 1.0
    seed: int = 0
    fine_dt: float = 1.0e-5
    T: float = 0.02
    placement: str = GRID
    domain: tuple | None = None  # ((x0, x1), (y0, y1), (z0, z1)); None -> default box
    intervals: int = 8
    step_ratio: int = 50  # fine RK2 steps per coarse Euler step

    def __post_init__(self):
        if self.M < 3:
            raise ValueError("M must be at least 3")
        if self.rod_count < 1:
            raise ValueError("rod_count must be at least 1")
        if self.placement not in (GRID, RANDOM):
            raise ValueError(f"unknown placement {self.placement!r}")
        if self.fine_dt <= 0 or self.T <= 0:
            raise ValueError("fine_dt and T must be positive")
        if self.intervals < 1 or self.step_ratio < 1:
            raise ValueError("intervals and step_ratio must be >= 1")

    @property
    def ds(self) -> float:
        return self.L / (self.M - 1)

    @property
    def epsilon(self) -> float:
        return 4.0 * self.ds if self.eps is None else self.eps

    @property
    def sigma(self) -> float:
        return 3.0 * self.epsilon if self.lj_sigma is None else self.lj_sigma

    @property
    def box(self):
        if self.domain is not None:
            return tuple(tuple(map(float, b)) for b in self.domain)
        # the footprint widens with the rod count so default placements stay feasible
        side = 4 * self.L * max(1.0, math.ceil(math.sqrt(self.rod_count)) / 2)
        return ((0.0, side), (0.0, side), (self.d_z, self.d_z + 2 * self.L))

    def model(self) -> SwimmerModel:
        return SwimmerModel(
            disc=RodDiscretization(self.M, self.L),
            material=self.material,
            waveform=self.waveform,
            kernel=KernelParams(self.epsilon, self.mu, self.wall_mode),
            lj=LJParams(self.lj_well_depth, self.sigma),
        )

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def straight_rod(origin, tangent, normal, M: int, ds: float) -> RodState:
    """Straight rod from ``origin`` along ``tangent``; D3 = tangent, D1 = normal."""
    d3 = np.asarray(tangent, dtype=float)
    d3 = d3 / np.linalg.norm(d3)
    d1 = np.asarray(normal, dtype=float)
    d1 = d1 - (d1 @ d3) * d3
    d1 /= np.linalg.norm(d1)
    d2 = np.cross(d3, d1)
    X = np.asarray(origin, dtype=float) + np.outer(np.arange(M) * ds, d3)
    D = np.broadcast_to(np.stack([d1, d2, d3]), (M, 3, 3)).copy()
    return RodState(X, D)


def _grid_rods(cfg: ScenarioConfig) -> list[RodState]:
    # rods lie along x in the plane z = d_z, beating within that plane
    gap = 2.5 * cfg.sigma
    ncol = int(math.ceil(math.sqrt(cfg.rod_count)))
    rods = []
    for i in range(cfg.rod_count):
        row, col = divmod(i, ncol)
        origin = (row * (cfg.L + gap), col * gap, cfg.d_z)
        rods.append(straight_rod(origin, (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), cfg.M, cfg.ds))
    return rods


def _min_distance(a: np.ndarray, b: np.ndarray) -> float:
    d = a[:, None, :] - b[None, :, :]
    return float(np.sqrt(np.min(np.einsum("ijk,ijk->ij", d, d))))


def _random_rods(cfg: ScenarioConfig, rng: np.random.Generator) -> list[RodState]:
    (x0, x1), (y0, y1), (z0, z1) = cfg.box
    rods: list[RodState] = []
    for _ in range(cfg.rod_count):
        for _attempt in range(MAX_PLACEMENT_ATTEMPTS):
            tangent = rng.normal(size=3)
            tangent /= np.linalg.norm(tangent)
            helper = rng.normal(size=3)
            center = rng.uniform((x0, y0, z0), (x1, y1, z1))
            origin = center - 0.5 * cfg.L * tangent
            if abs(helper @ tangent) > 0.99 * np.linalg.norm(helper):
                continue
            rod = straight_rod(origin, tangent, helper, cfg.M, cfg.ds)
            if np.any(rod.X[:, 2] < 0.5 * cfg.d_z):
                continue
            if all(_min_distance(rod.X, other.X) >= 2.0 * cfg.sigma for other in rods):
                rods.append(rod)
                break
        else:
            raise PlacementError(
                f"could not place rod {len(rods) + 1} of {cfg.rod_count} after "
                f"{MAX_PLACEMENT_ATTEMPTS} attempts; enlarge the domain"
            )
    return rods


def build_initial_state(cfg: ScenarioConfig) -> list[RodState]:
    """Straight rods placed on a grid or at random (seeded, rejection-sampled)."""
    if cfg.placement == GRID:
        return _grid_rods(cfg)
    return _random_rods(cfg, np.random.default_rng(cfg.seed))


def initial_system(cfg: ScenarioConfig) -> SwimmerState:
    return SwimmerState.from_rods(build_initial_state(cfg))


def fine_steps_per_interval(cfg: ScenarioConfig, n: int | None = None) -> int:
    n = cfg.intervals if n is None else n
    steps = cfg.T / n / cfg.fine_dt
    if steps < 1 or abs(steps - round(steps)) > 1e-6 * steps:
        raise ValueError(f"T/n = {cfg.T / n:g} is not a whole number of fine steps {cfg.fine_dt:g}")
    return int(round(steps))


def coarse_steps_for_ratio(fine_steps: int, r: float) -> int:
    """Euler steps giving a fine/coarse cost ratio near r (RK2 costs 2 rhs per step)."""
    if not r > 1:
        raise ValueError("cost ratio r must exceed 1")
    return max(1, int(round(2 * fine_steps / r)))


@dataclass(frozen=True)
class PropagatorSet:
    coarse: Propagator
    fine: Propagator
    project: TriadProjector
    points: PositionExtractor
    fine_steps: int
    coarse_steps: int

    @property
    def cost_ratio(self) -> float:
        return 2.0 * self.fine_steps / self.coarse_steps


def make_propagators(cfg: ScenarioConfig, n: int | None = None, r: float | None = None):
    """Coarse Euler / fine RK2 pair over intervals of length T/n.

    Without ``r`` the coarse solver takes ``cfg.step_ratio`` times fewer steps
    than the fine one; with ``r`` the step counts are set so that the
    rhs-evaluation cost ratio is about r.
    """
    model = cfg.model()
    nf = fine_steps_per_interval(cfg, n)
    ng = max(1, nf // cfg.step_ratio) if r is None else coarse_steps_for_ratio(nf, r)
    R = cfg.rod_count
    return PropagatorSet(
        coarse=Propagator(model, StepperConfig(scheme=EULER, steps_per_interval=ng), R),
        fine=Propagator(model, StepperConfig(scheme=RK2, steps_per_interval=nf), R),
        project=TriadProjector(R, cfg.M),
        points=PositionExtractor(R, cfg.M),
        fine_steps=nf,
        coarse_steps=ng,
    )
