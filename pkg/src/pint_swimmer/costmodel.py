"""Idle-time model for regular vs pipelined Parareal scheduling.

The closed forms are approximations; :func:`simulate_schedule` replays the
exact task graph with unit costs and is the reference they are tested against.

Task graph for ``l`` iterations over ``n`` intervals (boundary index j):

* ``C(0, j)``, j = 1..n        -- initial coarse sweep
* ``F(k, j)``, k = 1..l, j = k..n  -- fine solves from X^{k-1}_{j-1}
* ``C(k, j)``, k = 1..l-1, j = k+1..n -- corrector coarse solves

so there are ``l`` coarse phases (k = 0..l-1), as in the idle-time sums.
Coarse and corrector solves share one serialized lane hosted by worker 0:
worker 0 counts as busy while either of its lanes runs, and the coarse lane
never blocks worker 0's fine work.  Fine solve F(k, j) belongs to worker
(j - 1) mod m.  Regular mode puts a barrier between consecutive phases;
pipelined mode only honours data dependencies.
"""
from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

REGULAR = "regular"
PIPELINED = "pipelined"
MODES = (REGULAR, PIPELINED)

COARSE_LANE = -1

COARSE = "coarse"
CORRECT = "correct"
FINE = "fine"
IDLE = "idle"


@dataclass(frozen=True)
class CostInputs:
    n: int
    m: int
    l: int
    T: float
    r: float

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.l < 1:
            raise ValueError("n, m and l must all be >= 1")
        if not self.r > 1:
            raise ValueError("the fine/coarse cost ratio r must exceed 1")
        if self.T <= 0:
            raise ValueError("T must be positive")

    @classmethod
    def from_coarse_cost(cls, n, m, l, T_G, r) -> "CostInputs":
        return cls(n, m, l, T_G * r * n, r)

    @property
    def T_F(self) -> float:
        return self.T / self.n

    @property
    def T_G(self) -> float:
        return self.T_F / self.r


def w_regular(ci: CostInputs) -> float:
    """(m - 1) T_G (l n - l (l - 1) / 2)."""
    return (ci.m - 1) * ci.T_G * (ci.l * ci.n - ci.l * (ci.l - 1) / 2)


def w_pipelined(ci: CostInputs) -> float:
    """m (m - 1) / 2 T_G: idle only while the pipeline fills."""
    return ci.m * (ci.m - 1) / 2 * ci.T_G


def delta_w(ci: CostInputs) -> float:
    """(m - 1) T / (r n) (l n - l (l - 1) / 2 - m / 2)."""
    A = ci.l * ci.n - ci.l * (ci.l - 1) / 2
    return (ci.m - 1) * ci.T / (ci.r * ci.n) * (A - ci.m / 2)


def predicted_gap(ci: CostInputs) -> float:
    return delta_w(ci)


@dataclass(frozen=True)
class TraceEvent:
    worker: int
    kind: str
    t_start: float
    t_end: float
    k: int = -1
    j: int = -1

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


def _union_length(intervals) -> float:
    total = 0.0
    end = -np.inf
    for a, b in sorted(intervals):
        if b <= end:
            continue
        total += b - max(a, end)
        end = b
    return total


def _gaps(intervals, horizon_start: float = 0.0):
    out = []
    cursor = horizon_start
    for a, b in sorted(intervals):
        if a > cursor:
            out.append((cursor, a))
        cursor = max(cursor, b)
    return out


@dataclass
class ScheduleTrace:
    """Worker timeline from a simulated or live run.

    Lane ``COARSE_LANE`` is the serialized coarse/corrector lane, accounted to
    worker ``coarse_host``.  Each worker's idle window runs from t = 0 to its
    own last completion.
    """

    m: int
    events: list = field(default_factory=list)
    coarse_host: int = 0
    mode: str = ""

    def add(self, event: TraceEvent):
        self.events.append(event)

    def _busy(self) -> dict:
        busy = defaultdict(list)
        for e in self.events:
            if e.kind == IDLE:
                continue
            w = self.coarse_host if e.worker == COARSE_LANE else e.worker
            busy[w].append((e.t_start, e.t_end))
        return busy

    def idle_events(self) -> list:
        out = []
        for w, spans in sorted(self._busy().items()):
            out.extend(TraceEvent(w, IDLE, a, b) for a, b in _gaps(spans))
        return out

    def idle_by_worker(self) -> dict:
        W = {w: 0.0 for w in range(self.m)}
        for e in self.idle_events():
            W[e.worker] += e.duration
        return W

    @property
    def W(self) -> float:
        return float(sum(e.duration for e in self.idle_events()))

    @property
    def makespan(self) -> float:
        return max((e.t_end for e in self.events), default=0.0)

    def busy_time(self) -> float:
        return float(sum(_union_length(s) for s in self._busy().values()))

    def lane_overlaps(self) -> bool:
        lanes = defaultdict(list)
        for e in self.events:
            if e.kind != IDLE:
                lanes[e.worker].append((e.t_start, e.t_end))
        for spans in lanes.values():
            spans.sort()
            for (a0, b0), (a1, b1) in zip(spans, spans[1:]):
                if a1 < b0 - 1e-12:
                    return True
        return False

    def rows(self):
        """(worker, kind, k, j, t_start, t_end) rows including idle gaps."""
        evs = sorted(self.events + self.idle_events(), key=lambda e: (e.t_start, e.worker))
        return [(e.worker, e.kind, e.k, e.j, e.t_start, e.t_end) for e in evs]


def parareal_tasks(n: int, l: int):
    """Task keys (kind, k, j) in phase order; phases alternate coarse/fine."""
    phases = []
    for k in range(l):
        phases.append([("C", k, j) for j in range(k + 1, n + 1)])
        phases.append([("F", k + 1, j) for j in range(k + 1, n + 1)])
    return phases


def _deps(task, n):
    kind, k, j = task
    deps = []
    if kind == "C":
        if k == 0:
            if j > 1:
                deps.append(("C", 0, j - 1))
        else:
            deps.append(("C", k, j - 1) if j - 1 > k else ("F", k, k))
            deps.append(("F", k, j))
            deps.append(("C", k - 1, j))
    else:
        if k == 1:
            if j > 1:
                deps.append(("C", 0, j - 1))
        elif j - 1 == k - 1:
            deps.append(("F", k - 1, k - 1))
        else:
            deps.append(("C", k - 1, j - 1))
    return deps


def simulate_schedule(ci: CostInputs, mode: str) -> ScheduleTrace:
    """Event-driven replay of ``ci.l`` Parareal iterations with unit task costs."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    n, m = ci.n, ci.m
    phases = parareal_tasks(n, ci.l)
    tasks = [t for ph in phases for t in ph]
    deps = {t: set(_deps(t, n)) for t in tasks}
    if mode == REGULAR:
        for prev, cur in zip(phases, phases[1:]):
            for t in cur:
                deps[t] |= set(prev)
    task_set = set(tasks)
    for t in tasks:
        deps[t] &= task_set

    def lane_of(t):
        return COARSE_LANE if t[0] == "C" else (t[2] - 1) % m

    def cost(t):
        return ci.T_G if t[0] == "C" else ci.T_F

    remaining = {t: len(deps[t]) for t in tasks}
    children = defaultdict(list)
    for t in tasks:
        for d in deps[t]:
            children[d].append(t)

    ready = defaultdict(list)  # lane -> heap of (k, j, task)
    for t in tasks:
        if remaining[t] == 0:
            heapq.heappush(ready[lane_of(t)], (t[1], t[2], t))
    lanes = [COARSE_LANE] + list(range(m))
    lane_free = {ln: True for ln in lanes}
    running = []  # heap of (t_end, seq, lane, task, t_start)
    trace = ScheduleTrace(m=m, mode=mode)
    now = 0.0
    seq = 0
    done = 0
    while done < len(tasks):
        for ln in lanes:
            if lane_free[ln] and ready[ln]:
                _, _, t = heapq.heappop(ready[ln])
                heapq.heappush(running, (now + cost(t), seq, ln, t, now))
                seq += 1
                lane_free[ln] = False
        if not running:
            raise RuntimeError("schedule deadlock")  # pragma: no cover
        now = running[0][0]
        while running and running[0][0] == now:
            t_end, _, ln, t, t_start = heapq.heappop(running)
            kind = FINE if t[0] == "F" else (COARSE if t[1] == 0 else CORRECT)
            trace.add(TraceEvent(ln, kind, t_start, t_end, t[1], t[2]))
            lane_free[ln] = True
            done += 1
            for c in children[t]:
                remaining[c] -= 1
                if remaining[c] == 0:
                    heapq.heappush(ready[lane_of(c)], (c[1], c[2], c))
    return trace


def fit_gap_vs_inv_r(points):
    """Least-squares line through (1/r, gap) points: (slope, intercept, R^2)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise ValueError("need at least 3 (1/r, gap) points")
    x, y = pts[:, 0], pts[:, 1]
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), float(r2)


def simulated_gap(ci: CostInputs) -> float:
    """W_regular - W_pipelined from the event simulator."""
    return simulate_schedule(ci, REGULAR).W - simulate_schedule(ci, PIPELINED).W
