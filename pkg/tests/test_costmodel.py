from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pint_swimmer.costmodel import (
    COARSE_LANE,
    FINE,
    MODES,
    PIPELINED,
    REGULAR,
    CostInputs,
    delta_w,
    fit_gap_vs_inv_r,
    parareal_tasks,
    simulate_schedule,
    simulated_gap,
    w_pipelined,
    w_regular,
)


@st.composite
def cost_inputs(draw):
    n = draw(st.integers(1, 200))
    return CostInputs(
        n=n,
        m=draw(st.integers(1, 64)),
        l=draw(st.integers(1, n)),
        T=draw(st.floats(1e-3, 1e6)),
        r=draw(st.floats(1.01, 1e3)),
    )


def unit_coarse(n, m, l, T_G=1.0, r=8.0):
    return CostInputs.from_coarse_cost(n, m, l, T_G, r)


# ------------------------------------------------------------------ formulas


@pytest.mark.parametrize(
    "ci, expected",
    [
        (unit_coarse(8, 1, 3), 0.0),
        (unit_coarse(8, 4, 3), 63.0),
        (unit_coarse(8, 4, 1), 3 * 8.0),
        (unit_coarse(10, 3, 1, T_G=2.0), 2 * 2.0 * 10),
    ],
)
def test_w_regular_examples(ci, expected):
    assert w_regular(ci) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize(
    "ci, expected",
    [(unit_coarse(8, 1, 3), 0.0), (unit_coarse(8, 4, 3), 6.0), (unit_coarse(8, 2, 3, T_G=5.0), 5.0)],
)
def test_w_pipelined_examples(ci, expected):
    assert w_pipelined(ci) == pytest.approx(expected, rel=1e-14)


def test_delta_w_examples():
    assert delta_w(unit_coarse(8, 1, 3)) == 0.0
    assert delta_w(CostInputs(8, 4, 3, 8 * 8.0, 8.0)) == pytest.approx(57.0, rel=1e-14)


def test_delta_w_halves_when_r_doubles():
    a = CostInputs(16, 4, 3, 100.0, 3.0)
    b = CostInputs(16, 4, 3, 100.0, 6.0)
    assert delta_w(b) == pytest.approx(delta_w(a) / 2, rel=1e-15)


@pytest.mark.parametrize("kwargs", [dict(n=0), dict(m=0), dict(l=0), dict(r=1.0), dict(T=0.0)])
def test_cost_inputs_validation(kwargs):
    base = dict(n=8, m=2, l=3, T=8.0, r=4.0)
    with pytest.raises(ValueError):
        CostInputs(**{**base, **kwargs})


@settings(max_examples=1000, deadline=None)
@given(cost_inputs())
def test_delta_w_is_difference(ci):
    assert delta_w(ci) == pytest.approx(w_regular(ci) - w_pipelined(ci), rel=1e-12, abs=1e-12 * ci.T)


@settings(max_examples=1000, deadline=None)
@given(cost_inputs(), st.floats(1.01, 1e3))
def test_delta_w_times_r_is_constant(ci, r2):
    other = CostInputs(ci.n, ci.m, ci.l, ci.T, r2)
    assert delta_w(ci) * ci.r == pytest.approx(delta_w(other) * r2, rel=1e-12, abs=1e-12 * ci.T)


@settings(max_examples=1000, deadline=None)
@given(st.integers(1, 40), st.integers(1, 6), st.floats(1.5, 50.0))
def test_m_argmax_near_a_plus_half(n, l, r):
    l = min(l, n)
    A = l * n - l * (l - 1) / 2
    ms = np.arange(1, int(2 * A) + 1)
    dw = [delta_w(CostInputs(n, int(m), l, 1.0, r)) for m in ms]
    m_best = ms[int(np.argmax(dw))]
    assert abs(m_best - (A + 0.5)) <= 1


@settings(max_examples=1000, deadline=None)
@given(st.integers(1, 64), st.integers(1, 10), st.floats(1e-2, 1e4), st.floats(1.01, 100.0))
def test_large_n_limit(m, l, T, r):
    n = 100 * (l * (l - 1) + m)
    limit = (m - 1) * T / r * l
    ci = CostInputs(n, m, l, T, r)
    if m == 1:
        assert delta_w(ci) == 0.0
    else:
        assert abs(delta_w(ci) - limit) <= 0.01 * limit


# ------------------------------------------------------------------ simulator


def test_task_graph_counts():
    phases = parareal_tasks(8, 3)
    assert [len(p) for p in phases] == [8, 8, 7, 7, 6, 6]


@pytest.mark.parametrize("mode", MODES)
def test_single_worker_never_idles(mode):
    assert simulate_schedule(unit_coarse(8, 1, 3), mode).W == 0.0


def test_regular_reference_case():
    # event-simulated ground truth for m=4, n=8, l=3, T_G=1, r=2; the formula says 63
    tr = simulate_schedule(unit_coarse(8, 4, 3, r=2.0), REGULAR)
    assert tr.W == pytest.approx(65.0, abs=1e-9)
    assert abs(tr.W - 63.0) <= 0.10 * 63.0


@pytest.mark.parametrize("r", [1.5, 2.0, 4.0, 8.0, 16.0])
def test_regular_excess_is_one_fine_solve(r):
    # the closed form ignores the uneven last round of each fine phase;
    # here that costs exactly one T_F = r of extra idle
    tr = simulate_schedule(unit_coarse(8, 4, 3, r=r), REGULAR)
    assert tr.W == pytest.approx(63.0 + r, abs=1e-9)


def test_pipelined_many_intervals_matches_fill_idle():
    tr = simulate_schedule(unit_coarse(64, 4, 3, r=8.0), PIPELINED)
    assert tr.W == pytest.approx(6.0, abs=1e-9)
    assert abs(tr.W - 6.0) <= 0.15 * 6.0


@pytest.mark.parametrize("mode", MODES)
@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_schedule_respects_lanes_and_ownership(mode, m):
    ci = unit_coarse(9, m, 3, r=5.0)
    tr = simulate_schedule(ci, mode)
    assert not tr.lane_overlaps()
    fines = [e for e in tr.events if e.kind == FINE]
    assert len(fines) == 9 + 8 + 7
    assert all(e.worker == (e.j - 1) % m for e in fines)
    coarse = [e for e in tr.events if e.worker == COARSE_LANE]
    assert len(coarse) == 9 + 8 + 7  # C(0, 1..9), C(1, 2..9), C(2, 3..9)
    assert tr.idle_by_worker().keys() == set(range(m))


@pytest.mark.parametrize("m", [2, 4])
def test_pipelining_never_slower(m):
    ci = unit_coarse(16, m, 3, r=4.0)
    assert simulate_schedule(ci, PIPELINED).makespan <= simulate_schedule(ci, REGULAR).makespan
    assert simulated_gap(ci) > 0


def test_dependencies_hold_in_trace():
    tr = simulate_schedule(unit_coarse(8, 3, 3, r=4.0), PIPELINED)
    end = {(e.kind == FINE, e.k, e.j): e.t_end for e in tr.events}
    start = {(e.kind == FINE, e.k, e.j): e.t_start for e in tr.events}
    for (is_fine, k, j), t0 in start.items():
        if is_fine and k > 1 and j > k:
            assert t0 >= end[(False, k - 1, j - 1)] - 1e-12
        if not is_fine and k > 0:
            assert t0 >= end[(True, k, j)] - 1e-12


def test_rows_include_idle_gaps():
    tr = simulate_schedule(unit_coarse(8, 4, 3), REGULAR)
    kinds = {row[1] for row in tr.rows()}
    assert "idle" in kinds and FINE in kinds


# ------------------------------------------------------------------ fit


def test_fit_exact_law():
    c = 123.5
    slope, intercept, r2 = fit_gap_vs_inv_r([(1 / r, c / r) for r in (2, 3, 7, 11)])
    assert slope == pytest.approx(c, abs=1e-10)
    assert r2 == pytest.approx(1.0, abs=1e-14)


def test_fit_constant_gap():
    slope, _, r2 = fit_gap_vs_inv_r([(0.5, 3.0), (0.2, 3.0), (0.1, 3.0)])
    assert slope == pytest.approx(0.0, abs=1e-12)
    assert r2 == 1.0


def test_fit_needs_three_points():
    with pytest.raises(ValueError):
        fit_gap_vs_inv_r([(0.5, 1.0), (0.25, 0.5)])


def test_fit_on_simulator_sweep():
    pts = [(1 / r, simulated_gap(CostInputs(8, 2, 3, 8.0, r))) for r in (2, 5, 8)]
    assert fit_gap_vs_inv_r(pts)[2] >= 0.99


def test_regular_mode_has_barriers():
    tr = simulate_schedule(unit_coarse(8, 2, 2, r=4.0), REGULAR)
    fine1_end = max(e.t_end for e in tr.events if e.kind == FINE and e.k == 1)
    corr_start = min(e.t_start for e in tr.events if e.worker == COARSE_LANE and e.k == 1)
    assert corr_start >= fine1_end - 1e-12
