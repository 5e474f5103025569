"""Time integrators for a system of rods: explicit Euler and midpoint RK2.

Both schemes share one right-hand side: rod loads, LJ repulsion, then the
regularized Stokeslet sum over every node of every rod.  Positions move with
the local fluid velocity; directors are turned by the exact Rodrigues map of
the local angular velocity, so stage triads stay orthonormal.
"""
from __future__ import annotations

import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .rod import (
    LJParams,
    LoadSet,
    MaterialParams,
    RodDiscretization,
    RodState,
    WaveformParams,
    lj_repulsion,
    rod_loads,
)
from .rotation import orthonormality_residual, reorthonormalize, rotate_about
from .stokes import KernelParams, evaluate_velocities

EULER = "euler"
RK2 = "rk2"


class StiffnessError(RuntimeError):
    """A single step moved some node by more than the allowed multiple of ds."""


@dataclass(frozen=True)
class SwimmerModel:
    disc: RodDiscretization
    material: MaterialParams
    waveform: WaveformParams
    kernel: KernelParams
    lj: LJParams | None = None
    max_step_displacement: float = 10.0  # in units of ds

    @property
    def ds(self) -> float:
        return self.disc.ds


@dataclass
class SwimmerState:
    """All rods of a system: X is (R, M, 3), D is (R, M, 3, 3)."""

    X: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.D = np.asarray(self.D, dtype=float)
        if self.X.ndim != 3 or self.D.shape != self.X.shape + (3,):
            raise ValueError(f"inconsistent shapes X{self.X.shape} D{self.D.shape}")

    @classmethod
    def from_rods(cls, rods) -> "SwimmerState":
        rods = list(rods)
        return cls(np.stack([r.X for r in rods]), np.stack([r.D for r in rods]))

    @property
    def rods(self) -> list[RodState]:
        return [RodState(x, d) for x, d in zip(self.X, self.D)]

    @property
    def n_rods(self) -> int:
        return self.X.shape[0]

    @property
    def M(self) -> int:
        return self.X.shape[1]

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.X.ravel(), self.D.ravel()])

    @classmethod
    def from_vector(cls, vec: np.ndarray, n_rods: int, M: int) -> "SwimmerState":
        k = n_rods * M * 3
        return cls(vec[:k].reshape(n_rods, M, 3), vec[k:].reshape(n_rods, M, 3, 3))

    def copy(self) -> "SwimmerState":
        return SwimmerState(self.X.copy(), self.D.copy())


@dataclass
class Timings:
    """Wall-clock totals per solver stage."""

    totals: dict = field(default_factory=lambda: defaultdict(float))

    def add(self, key: str, seconds: float):
        self.totals[key] += seconds

    def as_dict(self) -> dict:
        return dict(self.totals)


@dataclass(frozen=True)
class StepperConfig:
    dt: float | None = None
    scheme: str = RK2
    steps_per_interval: int | None = None

    def __post_init__(self):
        if self.scheme not in (EULER, RK2):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.dt is None and self.steps_per_interval is None:
            raise ValueError("give either dt or steps_per_interval")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.steps_per_interval is not None and self.steps_per_interval < 1:
            raise ValueError("steps_per_interval must be >= 1")


def system_loads(model: SwimmerModel, state: SwimmerState, t: float):
    """Point forces and torques (R, M, 3) each node applies to the fluid."""
    ds = model.ds
    f = np.empty_like(state.X)
    n = np.empty_like(state.X)
    for r, rod in enumerate(state.rods):
        ls = rod_loads(rod, model.material, model.waveform, t, ds)
        f[r] = ls.f * ds
        n[r] = ls.n * ds
    if model.lj is not None and state.n_rods > 1:
        f += np.stack(lj_repulsion(state.rods, model.lj, ds))
    return f, n


def rhs(
    model: SwimmerModel,
    state: SwimmerState,
    t: float,
    extra: LoadSet | None = None,
    timings: Timings | None = None,
):
    """Node velocities and angular velocities, each (R, M, 3).

    ``extra`` adds externally prescribed densities (same layout as the state,
    flattened over rods) on top of the rod's own loads.
    """
    t0 = time.perf_counter()
    f, n = system_loads(model, state, t)
    if extra is not None:
        f = f + np.asarray(extra.f).reshape(f.shape) * model.ds
        n = n + np.asarray(extra.n).reshape(n.shape) * model.ds
    t1 = time.perf_counter()
    nodes = state.X.reshape(-1, 3)
    vel = evaluate_velocities(nodes, nodes, f.reshape(-1, 3), n.reshape(-1, 3), model.kernel)
    if timings is not None:
        timings.add("initialization", t1 - t0)
        timings.add("velocity", time.perf_counter() - t1)
    return vel.u.reshape(state.X.shape), vel.omega.reshape(state.X.shape)


def _advance(model, state, u, w, dt, timings):
    t0 = time.perf_counter()
    dX = u * dt
    limit = model.max_step_displacement * model.ds
    if not np.all(np.isfinite(dX)) or np.max(np.linalg.norm(dX, axis=-1)) > limit:
        raise StiffnessError(
            f"node displacement above {model.max_step_displacement:g} ds in one step "
            f"(dt={dt:g}); the step is too large for this configuration"
        )
    X = state.X + dX
    D = rotate_about(state.D, w * dt)
    if timings is not None:
        timings.add("triad_update", time.perf_counter() - t0)
    return SwimmerState(X, D)


def _finish(state: SwimmerState) -> SwimmerState:
    return SwimmerState(state.X, reorthonormalize(state.D))


def step_euler(model, state, t, dt, timings=None, rhs_fn=None):
    rhs_fn = rhs_fn or (lambda s, tt: rhs(model, s, tt, timings=timings))
    u, w = rhs_fn(state, t)
    return _finish(_advance(model, state, u, w, dt, timings))


def step_rk2(model, state, t, dt, timings=None, rhs_fn=None):
    """Midpoint rule: half Euler step, then a full step with the midpoint rates."""
    rhs_fn = rhs_fn or (lambda s, tt: rhs(model, s, tt, timings=timings))
    u0, w0 = rhs_fn(state, t)
    half = _advance(model, state, u0, w0, 0.5 * dt, timings)
    u1, w1 = rhs_fn(half, t + 0.5 * dt)
    return _finish(_advance(model, state, u1, w1, dt, timings))


_STEPPERS = {EULER: step_euler, RK2: step_rk2}


def step_count(t0: float, t1: float, cfg: StepperConfig) -> int:
    if cfg.steps_per_interval is not None:
        return cfg.steps_per_interval
    span = t1 - t0
    n = int(round(span / cfg.dt))
    if n < 1 or abs(n * cfg.dt - span) > 1e-9 * max(1.0, abs(span)):
        raise ValueError(f"interval {span!r} is not a whole number of steps dt={cfg.dt!r}")
    return n


def propagate(model, state, t0, t1, cfg: StepperConfig, timings=None, rhs_fn=None):
    """Advance ``state`` from t0 to t1 with whole steps of ``cfg.scheme``."""
    if t1 == t0:
        return state
    if t1 < t0:
        raise ValueError("propagate needs t1 >= t0")
    n = step_count(t0, t1, cfg)
    dt = (t1 - t0) / n if cfg.steps_per_interval is not None else cfg.dt
    step = _STEPPERS[cfg.scheme]
    for i in range(n):
        state = step(model, state, t0 + i * dt, dt, timings=timings, rhs_fn=rhs_fn)
    return state


@dataclass(frozen=True)
class Propagator:
    """Picklable (vector, t0, t1) -> vector wrapper used by the Parareal driver."""

    model: SwimmerModel
    cfg: StepperConfig
    n_rods: int

    def __call__(self, vec: np.ndarray, t0: float, t1: float) -> np.ndarray:
        state = SwimmerState.from_vector(vec, self.n_rods, self.model.disc.M)
        return propagate(self.model, state, t0, t1, self.cfg).to_vector()


def project_triads(vec: np.ndarray, n_rods: int, M: int) -> np.ndarray:
    """Re-orthonormalize the triads of a flattened system state."""
    state = SwimmerState.from_vector(vec, n_rods, M)
    if np.all(orthonormality_residual(state.D) <= 1e-9):
        return vec
    return SwimmerState(state.X, reorthonormalize(state.D)).to_vector()


@dataclass(frozen=True)
class TriadProjector:
    n_rods: int
    M: int

    def __call__(self, vec: np.ndarray) -> np.ndarray:
        return project_triads(vec, self.n_rods, self.M)


def node_positions(vec: np.ndarray, n_rods: int, M: int) -> np.ndarray:
    return vec[: n_rods * M * 3].reshape(-1, 3)


@dataclass(frozen=True)
class PositionExtractor:
    n_rods: int
    M: int

    def __call__(self, vec: np.ndarray) -> np.ndarray:
        return node_positions(vec, self.n_rods, self.M)
