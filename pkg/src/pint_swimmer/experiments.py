"""Experiment runners behind the CLI: serial reference, Parareal runs, the
regular/pipelined gap sweep, scaling tables and the rotation-sqrt benchmark.

Every runner returns plain Python data plus a :class:`RunRecord`; writing
files is left to :mod:`pint_swimmer.cli`.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import costmodel as cm
from . import parareal as pr
from .io import RunConfig, TrajectoryWriter, provenance
from .propagators import RK2, StepperConfig, Timings, propagate
from .rotation import rodrigues, sqrt_rotation, to_axis_angle, from_axis_angle
from .scenario import ScenarioConfig, initial_system, make_propagators


@dataclass
class RunRecord:
    command: str
    config: dict
    seed: int
    config_hash: str
    convergence: list = field(default_factory=list)
    schedule: dict = field(default_factory=dict)  # mode -> {"W": ..., "wall_time": ...}
    timings: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @classmethod
    def start(cls, command: str, cfg: ScenarioConfig) -> "RunRecord":
        return cls(command, cfg.to_dict(), cfg.seed, cfg.config_hash())

    def as_dict(self) -> dict:
        return asdict(self)


# ------------------------------------------------------------------ simulate


def simulate(cfg: ScenarioConfig, out_path=None, stride: int = 1):
    """Serial fine RK2 run over [0, T] with step ``cfg.fine_dt``.

    Frames (including t = 0) are written every ``stride`` steps when
    ``out_path`` is given.  Returns (final state, RunRecord).
    """
    rec = RunRecord.start("simulate", cfg)
    model = cfg.model()
    state = initial_system(cfg)
    steps = int(round(cfg.T / cfg.fine_dt))
    if steps < 1 or abs(steps * cfg.fine_dt - cfg.T) > 1e-9 * cfg.T:
        raise ValueError(f"T = {cfg.T:g} is not a whole number of steps of {cfg.fine_dt:g}")
    step_cfg = StepperConfig(dt=cfg.fine_dt, scheme=RK2)
    timings = Timings()
    writer = None
    if out_path is not None:
        writer = TrajectoryWriter(out_path, cfg.rod_count, cfg.M, cfg.fine_dt, stride, provenance(cfg))
        writer.write(0.0, state.to_vector())
    t_wall = time.perf_counter()
    for i in range(steps):
        t0 = i * cfg.fine_dt
        state = propagate(model, state, t0, t0 + cfg.fine_dt, step_cfg, timings=timings)
        if writer is not None and ((i + 1) % stride == 0 or i + 1 == steps):
            writer.write((i + 1) * cfg.fine_dt, state.to_vector())
    rec.timings = {**timings.as_dict(), "total": time.perf_counter() - t_wall}
    if writer is not None:
        rec.artifacts += [str(writer.path), str(writer.close())]
        rec.extra["frames"] = writer.frames
    rec.extra["steps"] = steps
    return state, rec


# ------------------------------------------------------------------ parareal


def parareal_plan(rc: RunConfig, mode=None, workers=None, intervals=None, ratio=None, l_max=None, tol=None):
    p = rc.parareal
    cfg = rc.scenario
    return pr.ParallelPlan(
        T=cfg.T,
        n=intervals or cfg.intervals,
        m=workers or p.get("workers", 1),
        l_max=l_max or p.get("l_max", 5),
        tol=tol if tol is not None else p.get("tol", 1e-10),
        mode=mode or p.get("mode", cm.PIPELINED),
        r=ratio if ratio is not None else p.get("ratio"),
    )


def run_parareal(cfg: ScenarioConfig, plan: pr.ParallelPlan, backend=pr.SERIAL, reference=True,
                 ref_states=None):
    """Parareal on ``cfg`` with the propagator pair implied by ``plan.r``.

    Returns (PararealResult, reference boundaries or None, PropagatorSet).
    """
    ps = make_propagators(cfg, plan.n, plan.r)
    x0 = initial_system(cfg).to_vector()
    ref = ref_states
    if reference and ref is None:
        ref = pr.serial_fine(ps.fine, x0, plan)
    res = pr.run(
        plan,
        ps.coarse,
        ps.fine,
        x0,
        points=ps.points,
        post_correct=ps.project,
        reference=ref,
        backend=backend,
    )
    return res, ref, ps


def convergence_rows(report: pr.ConvergenceReport):
    return [
        (k + 1, report.eta_tilde[k], "" if report.eta[k] is None else report.eta[k])
        for k in range(len(report.eta_tilde))
    ]


def schedule_rows(trace: cm.ScheduleTrace):
    return [(w, kind, k, j, a, b) for (w, kind, k, j, a, b) in trace.rows()]


# ------------------------------------------------------------------ gap sweep


def gap_simulated(m: int, ratios, n: int = 8, l: int = 3, T: float | None = None):
    """Rows (r, mode, W, wall_time) from the schedule simulator, plus the fit.

    ``T`` is the serial fine cost (defaults to n, i.e. unit fine tasks);
    wall_time is the simulated makespan.
    """
    ratios = list(ratios)
    if len(ratios) < 3:
        raise ValueError("the gap fit needs at least 3 ratios")
    T = float(n) if T is None else T
    rows, pts = [], []
    for r in ratios:
        ci = cm.CostInputs(n, m, l, T, r)
        W = {}
        for mode in cm.MODES:
            tr = cm.simulate_schedule(ci, mode)
            W[mode] = tr.W
            rows.append((r, mode, tr.W, tr.makespan))
        pts.append((1.0 / r, W[cm.REGULAR] - W[cm.PIPELINED]))
    return rows, cm.fit_gap_vs_inv_r(pts), pts


def gap_live(cfg: ScenarioConfig, m: int, ratios, n: int | None = None, l: int = 3,
             backend=pr.PROCESS, repeats: int = 1):
    """Both modes per ratio with a fixed iteration count; gap = wall-clock difference.

    Runs do exactly ``l`` iterations (the stopping test is effectively off) so
    both modes perform identical work.
    """
    ratios = list(ratios)
    if len(ratios) < 3:
        raise ValueError("the gap fit needs at least 3 ratios")
    n = n or cfg.intervals
    rows, pts = [], []
    for r in ratios:
        wall = {}
        for mode in cm.MODES:
            plan = pr.ParallelPlan(T=cfg.T, n=n, m=m, l_max=l, tol=1e-300, mode=mode, r=r)
            best = None
            for _ in range(repeats):
                res, _, _ = run_parareal(cfg, plan, backend=backend, reference=False)
                if best is None or res.wall_time < best.wall_time:
                    best = res
            wall[mode] = best.wall_time
            rows.append((r, mode, best.trace.W, best.wall_time))
        pts.append((1.0 / r, wall[cm.REGULAR] - wall[cm.PIPELINED]))
    return rows, cm.fit_gap_vs_inv_r(pts), pts


# ------------------------------------------------------------------ scaling


def scaling_rows(times: dict):
    """(p, time, speedup, efficiency %) with S_p = T_1/T_p, E_p = S_p/p."""
    ps = sorted(times)
    if not ps or ps[0] != 1:
        raise ValueError("worker list must start at p = 1")
    t1 = times[1]
    return [(p, times[p], t1 / times[p], 100.0 * t1 / times[p] / p) for p in ps]


def _check_workers(workers):
    workers = list(workers)
    if workers != sorted(workers) or workers[0] != 1 or len(set(workers)) != len(workers):
        raise ValueError("workers must be ascending, distinct and start at 1")
    return workers


def iterations_to_tol(cfg: ScenarioConfig, n: int, tol: float, l_max: int = 10) -> int:
    """Parareal iterations needed to reach eta_tilde < tol (serial backend)."""
    plan = pr.ParallelPlan(T=cfg.T, n=n, m=1, l_max=l_max, tol=tol, mode=cm.REGULAR)
    res, _, _ = run_parareal(cfg, plan, reference=False)
    return res.report.iterations_used


def strong_scaling(workers, n: int, l: int, r: float, mode=cm.PIPELINED, T: float | None = None):
    """Simulated Parareal time-to-solution for a fixed problem on p workers.

    Every row, p = 1 included, is a Parareal makespan with m = p, so
    S_p = T_1 / T_p measures parallel speedup of the same algorithm.
    """
    workers = _check_workers(workers)
    T = float(n) if T is None else T
    times = {p: cm.simulate_schedule(cm.CostInputs(n, p, l, T, r), mode).makespan for p in workers}
    return scaling_rows(times)


def weak_scaling(cfg: ScenarioConfig, workers, intervals_per_worker: int = 2, r: float = 8.0,
                 tol: float = 1e-10, mode=cm.PIPELINED, l_max: int = 10):
    """Horizon and interval count grow with p; iterations l are measured live.

    Times are simulated makespans with unit fine tasks.  Rows are
    (p, time, speedup, efficiency %, T_phys, n, l, weak efficiency %) where
    speedup/efficiency follow S_p = T_1/T_p, E_p = S_p/p and the weak
    efficiency is T_1/T_p (ideal weak scaling keeps the time constant).
    """
    workers = _check_workers(workers)
    times, meta = {}, {}
    for p in workers:
        n = intervals_per_worker * p
        c = cfg.replace(T=cfg.T * p, intervals=n)
        l = iterations_to_tol(c, n, tol, l_max)
        times[p] = cm.simulate_schedule(cm.CostInputs(n, p, l, float(n), r), mode).makespan
        meta[p] = (c.T, n, l)
    base = scaling_rows(times)
    return [row + meta[row[0]] + (100.0 * times[1] / row[1],) for row in base]


# ------------------------------------------------------------------ sqrt bench


def sample_rotations(N: int, seed: int = 0):
    """Random unit axis, angles uniform in [-0.1, pi + 0.1]: (axes, angles, R)."""
    rng = np.random.default_rng(seed)
    axes = rng.normal(size=(N, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    theta = rng.uniform(-0.1, np.pi + 0.1, size=N)
    return axes, theta, rodrigues(axes, theta)


def sqrt_bench(N: int, seed: int = 0, compare_scipy: bool = True):
    """Per-sample rows and summary stats for sqrt_rotation.

    Rows: (i, theta, residual ||S^2 - R||_F, roundtrip error, seconds per call).
    The round trip is axis-angle -> matrix -> axis-angle on the canonical
    angle |theta| folded into [0, pi].
    """
    if N < 10:
        raise ValueError("need at least 10 samples")
    axes, theta, R = sample_rotations(N, seed)
    t0 = time.perf_counter()
    S = sqrt_rotation(R)
    per_call = (time.perf_counter() - t0) / N
    res = np.linalg.norm(S @ S - R, axis=(-2, -1))
    rt = np.empty(N)
    for i in range(N):
        ang = abs(theta[i]) % (2 * np.pi)
        ax = axes[i] * np.sign(theta[i]) if theta[i] != 0 else axes[i]
        if ang > np.pi:
            ang, ax = 2 * np.pi - ang, -ax
        back = to_axis_angle(from_axis_angle(ax, ang))
        rt[i] = max(abs(back.angle - ang), float(np.linalg.norm(back.axis * back.angle - ax * ang)))
    stats = {
        "mean": float(res.mean()),
        "median": float(np.median(res)),
        "std": float(res.std()),
        "max": float(res.max()),
        "roundtrip_max": float(rt.max()),
        "seconds_per_call": per_call,
    }
    if compare_scipy:
        from scipy.linalg import sqrtm

        t0 = time.perf_counter()
        ref = [sqrtm(r) for r in R]
        stats["scipy_seconds_per_call"] = (time.perf_counter() - t0) / N
        stats["scipy_residual_mean"] = float(np.mean([np.linalg.norm(np.real(s) @ np.real(s) - r) for s, r in zip(ref, R)]))
    rows = [(i, float(theta[i]), float(res[i]), float(rt[i]), per_call) for i in range(N)]
    return rows, stats
