"""Parareal driver with regular (barriered) and pipelined scheduling.

States are flat float vectors; coarse and fine propagators are callables
``prop(vec, t0, t1) -> vec``.  Iterates follow the usual predictor-corrector
recursion

    X^k_j = F(X^{k-1}_{j-1}) + G(X^k_{j-1}) - G(X^{k-1}_{j-1})

with X^k_j = X^{k-1}_j for j < k and X^k_k = F(X^{k-1}_{k-1}).  Both modes
evaluate exactly the same arithmetic in the same order per boundary, so their
iterates agree bitwise; only the timeline differs.

The coarse/corrector lane runs in the driver process.  Fine solves go to
``m`` workers; interval j is owned by worker (j - 1) mod m.
"""
from __future__ import annotations

import heapq
import logging
import multiprocessing as mp
import queue as queue_mod
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .costmodel import COARSE, COARSE_LANE, CORRECT, FINE, PIPELINED, REGULAR, MODES
from .costmodel import ScheduleTrace, TraceEvent

logger = logging.getLogger(__name__)

SERIAL = "serial"
PROCESS = "process"

Propagator = Callable[[np.ndarray, float, float], np.ndarray]


class WorkerError(RuntimeError):
    """A fine solve raised inside a worker."""


@dataclass(frozen=True)
class ParallelPlan:
    T: float
    n: int
    m: int = 1
    l_max: int = 5
    tol: float = 1e-10
    mode: str = PIPELINED
    t0: float = 0.0
    r: float | None = None  # nominal fine/coarse cost ratio, informational

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.l_max < 1:
            raise ValueError("n, m and l_max must all be >= 1")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.r is not None and not self.r > 1:
            raise ValueError("cost ratio r must exceed 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    def time(self, j: int) -> float:
        return self.t0 + self.T * j / self.n

    @property
    def times(self) -> np.ndarray:
        return np.array([self.time(j) for j in range(self.n + 1)])

    @property
    def k_max(self) -> int:
        return min(self.l_max, self.n)

    def owner(self, j: int) -> int:
        return (j - 1) % self.m


@dataclass
class ConvergenceReport:
    eta: list = field(default_factory=list)  # per iteration k >= 1; None without reference
    eta_tilde: list = field(default_factory=list)
    iterations_used: int = 0
    converged: bool = False


@dataclass
class PararealResult:
    iterates: dict  # k -> list of n + 1 boundary vectors
    report: ConvergenceReport
    trace: ScheduleTrace
    wall_time: float

    @property
    def final(self) -> list:
        return self.iterates[self.report.iterations_used]

    @property
    def final_state(self) -> np.ndarray:
        return self.final[-1]


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-14) -> float:
    """Max over rows of |a - b| / |b| (plain |a - b| where |b| < floor)."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    num = np.linalg.norm(a - b, axis=-1)
    den = np.linalg.norm(b, axis=-1)
    rel = np.where(den < floor, num, num / np.where(den < floor, 1.0, den))
    return float(np.max(rel)) if rel.size else 0.0


def convergence_metrics(Xk, Xprev, reference=None, points=None):
    """(eta, eta_tilde) between successive iterates and versus a reference.

    Both are maxima over interval boundaries 1..n of the per-node relative
    2-norm; ``points`` maps a state vector to the (nodes, 3) array compared.
    """
    points = points or (lambda v: np.reshape(v, (1, -1)))
    eta_t = max(relative_error(points(Xk[j]), points(Xprev[j])) for j in range(1, len(Xk)))
    eta = None
    if reference is not None:
        eta = max(relative_error(points(Xk[j]), points(reference[j])) for j in range(1, len(Xk)))
    return eta, eta_t


def serial_fine(fine: Propagator, x0: np.ndarray, plan: ParallelPlan) -> list:
    """Serial fine reference at every interval boundary, composed interval by interval."""
    out = [np.asarray(x0, dtype=float)]
    for j in range(1, plan.n + 1):
        out.append(fine(out[-1], plan.time(j - 1), plan.time(j)))
    return out


def coarse_sweep_initial(coarse: Propagator, x0: np.ndarray, plan: ParallelPlan) -> tuple:
    """Iteration-0 predictor: X^0_j = G(X^0_{j-1}).  Returns (X^0, G cache)."""
    X = [np.asarray(x0, dtype=float)]
    G = {}
    for j in range(1, plan.n + 1):
        G[j - 1] = coarse(X[-1], plan.time(j - 1), plan.time(j))
        X.append(G[j - 1])
    return X, G


def fine_parallel(fine: Propagator, prev: list, plan: ParallelPlan, k: int = 1) -> dict:
    """X'^k_j = F(X^{k-1}_{j-1}) for j = k..n, as independent direct calls."""
    return {j: fine(prev[j - 1], plan.time(j - 1), plan.time(j)) for j in range(k, plan.n + 1)}


def correct(fine_val, coarse_new, coarse_old, post_correct=None):
    x = fine_val + coarse_new - coarse_old
    return post_correct(x) if post_correct is not None else x


# ---------------------------------------------------------------- backends


class SerialBackend:
    """Runs fine solves inline on submit; results are queued for the driver."""

    def __init__(self, fine: Propagator, m: int, clock):
        self.fine = fine
        self.m = m
        self.clock = clock
        self._done = deque()

    def submit(self, key, worker, x, t0, t1):
        ts = self.clock()
        y = self.fine(x, t0, t1)
        self._done.append((key, worker, y, ts, self.clock()))

    def has_ready(self) -> bool:
        return bool(self._done)

    def get(self):
        return self._done.popleft()

    def cancel_beyond(self, k: int):
        pass

    def close(self):
        pass


def _worker_loop(fine, inbox, outbox, limit, epoch):
    while True:
        task = inbox.get()
        if task is None:
            return
        key, worker, x, t0, t1 = task
        if key[0] > limit.value:
            outbox.put((key, worker, None, 0.0, 0.0, None))
            continue
        ts = time.perf_counter() - epoch
        try:
            y = fine(x, t0, t1)
            err = None
        except Exception as exc:  # reported to the driver
            y, err = None, f"{type(exc).__name__}: {exc}"
        outbox.put((key, worker, y, ts, time.perf_counter() - epoch, err))


class ProcessBackend:
    """One OS process per worker, each with its own task queue."""

    def __init__(self, fine: Propagator, m: int, epoch: float):
        ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else mp.get_context()
        self.m = m
        self.limit = ctx.Value("i", 1 << 30)
        self.outbox = ctx.Queue()
        self.inboxes = [ctx.Queue() for _ in range(m)]
        self.procs = [
            ctx.Process(
                target=_worker_loop,
                args=(fine, self.inboxes[w], self.outbox, self.limit, epoch),
                daemon=True,
            )
            for w in range(m)
        ]
        for p in self.procs:
            p.start()
        self.pending = 0
        self._buf = deque()

    def submit(self, key, worker, x, t0, t1):
        self.inboxes[worker].put((key, worker, x, t0, t1))
        self.pending += 1

    def _pull(self, block: bool):
        try:
            item = self.outbox.get(block=block, timeout=None if block else 0)
        except queue_mod.Empty:
            return False
        self.pending -= 1
        key, worker, y, ts, te, err = item
        if err is not None:
            raise WorkerError(f"fine solve {key} failed on worker {worker}: {err}")
        if y is not None:
            self._buf.append((key, worker, y, ts, te))
        return True

    def has_ready(self) -> bool:
        while self._pull(block=False):
            pass
        return bool(self._buf)

    def get(self):
        while not self._buf:
            if self.pending == 0:
                raise RuntimeError("no fine results outstanding")  # pragma: no cover
            self._pull(block=True)
        return self._buf.popleft()

    def cancel_beyond(self, k: int):
        with self.limit.get_lock():
            self.limit.value = k

    def close(self):
        while self.pending:
            try:
                self._pull(block=True)
            except WorkerError:  # the first failure has already been raised
                pass
        for q in self.inboxes:
            q.put(None)
        for p in self.procs:
            p.join(timeout=10)
            if p.is_alive():  # pragma: no cover
                p.terminate()


# ------------------------------------------------------------------ driver


class _Run:
    def __init__(self, plan, coarse, fine, x0, points, post_correct, reference, backend):
        self.plan = plan
        self.coarse = coarse
        self.fine = fine
        self.points = points
        self.post = post_correct
        self.reference = reference
        self.epoch = time.perf_counter()
        n = plan.n
        x0 = np.asarray(x0, dtype=float)
        self.X = {0: [x0] + [None] * n}
        self.Xp = {}  # (k, j) -> fine result F(X^{k-1}_{j-1})
        self.G = {}  # (k, j) -> G(X^k_j)
        self.trace = ScheduleTrace(m=plan.m, mode=plan.mode)
        self.report = ConvergenceReport()
        self.coarse_ready = []  # heap of (k, j)
        self.coarse_done = set()
        self.fine_sent = set()
        self.stopped_at = None
        self.complete = set()
        self.next_check = 0
        if backend == SERIAL:
            self.backend = SerialBackend(fine, plan.m, self.clock)
        elif backend == PROCESS:
            self.backend = ProcessBackend(fine, plan.m, self.epoch)
        else:
            raise ValueError(f"unknown backend {backend!r}")

    def clock(self) -> float:
        return time.perf_counter() - self.epoch

    def known(self, k, j) -> bool:
        return k in self.X and self.X[k][j] is not None

    # -- task bodies

    def run_coarse(self, k, j):
        p = self.plan
        ts = self.clock()
        g = self.coarse(self.X[k][j - 1], p.time(j - 1), p.time(j))
        self.G[(k, j - 1)] = g
        if k == 0:
            self.X[0][j] = g
        else:
            self.X[k][j] = correct(self.Xp[(k, j)], g, self.G[(k - 1, j - 1)], self.post)
        self.coarse_done.add((k, j))
        kind = COARSE if k == 0 else CORRECT
        self.trace.add(TraceEvent(COARSE_LANE, kind, ts, self.clock(), k, j))

    def send_fine(self, k, j):
        p = self.plan
        self.fine_sent.add((k, j))
        self.backend.submit((k, j), p.owner(j), self.X[k - 1][j - 1], p.time(j - 1), p.time(j))

    def take_fine(self):
        (k, j), worker, y, ts, te = self.backend.get()
        self.trace.add(TraceEvent(worker, FINE, ts, te, k, j))
        self.Xp[(k, j)] = y
        if j == k:
            self.X[k] = list(self.X[k - 1][:k]) + [y] + [None] * (self.plan.n - k)
        return k, j

    # -- readiness (pipelined)

    def coarse_is_ready(self, k, j) -> bool:
        if j > self.plan.n or (k > 0 and j <= k) or (k, j) in self.coarse_done:
            return False
        if not self.known(k, j - 1):
            return False
        if k == 0:
            return True
        return (k, j) in self.Xp and (k - 1, j - 1) in self.G

    def fine_is_ready(self, k, j) -> bool:
        if k > self.plan.k_max or j > self.plan.n or (k, j) in self.fine_sent:
            return False
        if self.stopped_at is not None and k > self.stopped_at:
            return False
        return self.known(k - 1, j - 1)

    def try_coarse(self, k, j):
        if self.coarse_is_ready(k, j) and (k, j) not in self.coarse_ready:
            heapq.heappush(self.coarse_ready, (k, j))

    def try_fine(self, k, j):
        if self.fine_is_ready(k, j):
            self.send_fine(k, j)

    def after_boundary(self, k, j):
        """X^k_j just became known."""
        self.try_coarse(k, j + 1)
        self.try_fine(k + 1, j + 1)
        if j == self.plan.n:
            # iteration n can close before n - 1; check strictly in order
            self.complete.add(k)
            while self.stopped_at is None and self.next_check in self.complete:
                self.finish_iteration(self.next_check)
                self.next_check += 1

    # -- convergence

    def finish_iteration(self, k):
        if k == 0:
            return
        eta, eta_t = convergence_metrics(self.X[k], self.X[k - 1], self.reference, self.points)
        self.report.eta.append(eta)
        self.report.eta_tilde.append(eta_t)
        self.report.iterations_used = k
        logger.info("iteration %d: eta=%s eta_tilde=%.3e", k, eta, eta_t)
        if eta_t < self.plan.tol:
            self.report.converged = True
        if self.report.converged or k >= self.plan.k_max:
            self.stopped_at = k
            self.backend.cancel_beyond(k)

    # -- schedules

    def regular(self):
        p = self.plan
        for j in range(1, p.n + 1):
            self.run_coarse(0, j)
        k = 0
        while self.stopped_at is None:
            k += 1
            for j in range(k, p.n + 1):
                self.send_fine(k, j)
            for _ in range(k, p.n + 1):
                self.take_fine()
            for j in range(k + 1, p.n + 1):
                self.run_coarse(k, j)
            self.finish_iteration(k)

    def pipelined(self):
        self.try_coarse(0, 1)
        self.try_fine(1, 1)
        while self.stopped_at is None:
            # fine results first so idle workers are refilled quickly
            if self.backend.has_ready() or not self.coarse_ready:
                k, j = self.take_fine()
                if j == k:
                    self.after_boundary(k, k)
                else:
                    self.try_coarse(k, j)
            else:
                k, j = heapq.heappop(self.coarse_ready)
                self.run_coarse(k, j)
                self.after_boundary(k, j)
                self.try_coarse(k + 1, j)  # G(X^k_{j-1}) now cached

    def execute(self) -> PararealResult:
        t_start = time.perf_counter()
        try:
            if self.plan.mode == REGULAR:
                self.regular()
            else:
                self.pipelined()
        finally:
            self.backend.close()
        wall = time.perf_counter() - t_start
        ku = self.report.iterations_used
        iterates = {k: self.X[k] for k in range(ku + 1)}
        return PararealResult(iterates, self.report, self.trace, wall)


def run(
    plan: ParallelPlan,
    coarse: Propagator,
    fine: Propagator,
    x0: np.ndarray,
    *,
    points=None,
    post_correct=None,
    reference=None,
    backend: str = SERIAL,
) -> PararealResult:
    """Run Parareal until eta_tilde < tol, l_max iterations, or k = n.

    ``reference`` (serial fine boundaries, e.g. from :func:`serial_fine`)
    enables the true-error history eta.  ``post_correct`` is applied to every
    corrected state (e.g. triad re-orthonormalization).
    """
    if plan.n == 0:  # pragma: no cover - rejected by ParallelPlan
        raise ValueError("need at least one interval")
    r = _Run(plan, coarse, fine, x0, points, post_correct, reference, backend)
    return r.execute()
