"""Parallel-in-time simulation of elastic-rod microswimmers in Stokes flow.

Regularized Stokeslet hydrodynamics, a discrete Kirchhoff rod, explicit
Euler/RK2 integrators, a Parareal driver with regular and pipelined
scheduling, and an idle-time cost model with an event simulator.
"""
from __future__ import annotations

from .costmodel import CostInputs, ScheduleTrace, delta_w, simulate_schedule, w_pipelined, w_regular
from .parareal import ConvergenceReport, ParallelPlan, run
from .rotation import from_axis_angle, sqrt_rotation, to_axis_angle
from .scenario import ScenarioConfig, build_initial_state, make_propagators

__version__ = "0.1.0"

__all__ = [
    "ConvergenceReport",
    "CostInputs",
    "ParallelPlan",
    "ScenarioConfig",
    "ScheduleTrace",
    "build_initial_state",
    "delta_w",
    "from_axis_angle",
    "make_propagators",
    "run",
    "simulate_schedule",
    "sqrt_rotation",
    "to_axis_angle",
    "w_pipelined",
    "w_regular",
]
