from __future__ import annotations

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from pint_swimmer import experiments as ex
from pint_swimmer.cli import EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_NUMERICAL, EXIT_OK, default_workers, main
from pint_swimmer.io import read_csv, read_trajectory
from pint_swimmer.scenario import ScenarioConfig, initial_system

TINY = """\
[scenario]
M = 11
T = 0.004
fine_dt = 1e-5
intervals = 4
step_ratio = 50
seed = 3

[parareal]
workers = 2
l_max = 5
tol = 1e-10
"""


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY)
    return path


def run(*argv):
    return main([str(a) for a in argv])


# ------------------------------------------------------------------ simulate


def test_simulate_frames_and_provenance(tmp_path, tiny):
    out = tmp_path / "sim"
    cfg = tmp_path / "ten.ini"
    cfg.write_text(TINY.replace("T = 0.004", "T = 1e-4"))
    assert run("simulate", cfg, "--output-dir", out) == EXIT_OK
    meta, t, X, D = read_trajectory(out / "trajectory.bin")
    assert meta["frames"] == 11 and len(t) == 11
    np.testing.assert_allclose(t, np.arange(11) * 1e-5, atol=1e-18)
    rec = json.loads((out / "simulate_record.json").read_text())
    assert rec["seed"] == 3 and rec["config_hash"] == meta["config_hash"]
    prov, header, rows = read_csv(out / "trajectory.csv")
    assert prov["seed"] == "3" and len(rows) == 11 * 11
    assert header == ["frame", "t", "rod", "node", "x", "y", "z"]


def test_simulate_timing_table_schema(tmp_path, tiny):
    cfg = tmp_path / "ten.ini"
    cfg.write_text(TINY.replace("T = 0.004", "T = 1e-4"))
    assert run("simulate", cfg, "--output-dir", tmp_path / "o") == EXIT_OK
    prov, header, rows = read_csv(tmp_path / "o" / "timings.csv")
    assert header == ["stage", "seconds"]
    assert {r[0] for r in rows} == {"initialization", "velocity", "triad_update", "total"}
    assert all(float(r[1]) >= 0 for r in rows)
    assert set(prov) == {"seed", "config_hash"}


def test_simulate_is_byte_reproducible(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(TINY.replace("T = 0.004", "T = 2e-4") + "[output]\nstride = 4\n")
    run("simulate", cfg, "--output-dir", tmp_path / "a")
    run("simulate", cfg, "--output-dir", tmp_path / "b")
    a = (tmp_path / "a" / "trajectory.bin").read_bytes()
    b = (tmp_path / "b" / "trajectory.bin").read_bytes()
    assert a == b and len(a) > 0


def test_zero_waveform_rod_stays_put(tmp_path):
    cfg = tmp_path / "still.ini"
    cfg.write_text(TINY.replace("T = 0.004", "T = 1e-3") + "[waveform]\nA = 0.0\n")
    assert run("simulate", cfg, "--output-dir", tmp_path / "o") == EXIT_OK
    _, _, X, D = read_trajectory(tmp_path / "o" / "trajectory.bin")
    x0 = initial_system(ScenarioConfig(M=11, seed=3))
    assert np.abs(X[-1, 0] - x0.X[0]).max() <= 1e-12
    assert np.abs(D[-1, 0] - x0.D[0]).max() <= 1e-12


def test_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[scenario]\nM = 11\nwobble = 3\n")
    assert run("simulate", cfg, "--output-dir", tmp_path) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "bad.ini:3" in err and "wobble" in err


def test_stiffness_exit_code(tmp_path):
    cfg = tmp_path / "stiff.ini"
    cfg.write_text("[scenario]\nM = 21\nT = 0.01\nfine_dt = 0.01\n\n[waveform]\nA = 50\n")
    assert run("simulate", cfg, "--output-dir", tmp_path) == EXIT_NUMERICAL


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["parareal"])
    assert exc.value.code == EXIT_CONFIG


# ------------------------------------------------------------------ parareal


def test_parareal_check_both(tmp_path, tiny):
    out = tmp_path / "p"
    assert run("parareal", tiny, "--check-both", "--output-dir", out) == EXIT_OK
    rec = json.loads((out / "parareal_record.json").read_text())
    assert rec["extra"]["modes_identical"] is True
    assert rec["extra"]["converged"] is True
    assert set(rec["schedule"]) == {"regular", "pipelined"}
    _, _, reg = read_csv(out / "schedule_regular.csv")
    _, _, pipe = read_csv(out / "schedule_pipelined.csv")
    assert reg != pipe
    _, header, conv = read_csv(out / "convergence.csv")
    assert header == ["k", "eta_tilde", "eta"]
    eta_t = [float(r[1]) for r in conv]
    assert eta_t[1] <= eta_t[0] / 10


def test_parareal_four_by_four_converges(tmp_path, tiny):
    out = tmp_path / "p"
    assert run("parareal", tiny, "--workers", 4, "--intervals", 4, "--output-dir", out) == EXIT_OK
    rec = json.loads((out / "parareal_record.json").read_text())
    assert rec["extra"]["converged"] and rec["extra"]["iterations_used"] <= 5


def test_parareal_non_convergence_exit(tmp_path, tiny):
    out = tmp_path / "p"
    code = run("parareal", tiny, "--l-max", 1, "--tol", 1e-15, "--no-reference", "--output-dir", out)
    assert code == EXIT_NOT_CONVERGED
    rec = json.loads((out / "parareal_record.json").read_text())
    assert rec["extra"]["converged"] is False


def test_parareal_ratio_sets_coarse_steps(tmp_path, tiny):
    out = tmp_path / "p"
    run("parareal", tiny, "--ratio", 20, "--l-max", 1, "--no-reference", "--output-dir", out)
    rec = json.loads((out / "parareal_record.json").read_text())
    assert rec["extra"]["fine_steps"] == 100 and rec["extra"]["coarse_steps"] == 10


# ------------------------------------------------------------------ gap / scaling / bench


def test_gap_simulator_fit(tmp_path):
    out = tmp_path / "g"
    assert run("gap", "--workers", 2, "--ratios", "2,5,8", "--output-dir", out) == EXIT_OK
    fit = json.loads((out / "gap_fit.json").read_text())
    assert fit["r2"] >= 0.99 and fit["slope"] > 0
    _, header, rows = read_csv(out / "gap.csv")
    assert header == ["r", "mode", "W", "wall_time"] and len(rows) == 6


def test_gap_needs_three_ratios(tmp_path):
    assert run("gap", "--ratios", "4", "--output-dir", tmp_path) == EXIT_CONFIG
    with pytest.raises(ValueError, match="at least 3"):
        ex.gap_simulated(2, [2.0, 4.0])


@pytest.mark.skipif((os.cpu_count() or 1) < 4, reason="live timing needs >= 4 hardware threads")
def test_gap_live_positive(tmp_path):
    cfg = ScenarioConfig(M=11, T=0.004, fine_dt=1e-5, intervals=4)
    rows, fit, pts = ex.gap_live(cfg, 2, [2.0, 5.0, 8.0], l=3, repeats=3)
    assert all(gap > 0 for _, gap in pts)


def test_strong_scaling_table(tmp_path):
    out = tmp_path / "s"
    assert run("scaling", "--strong", "--workers", "1,2,4,8", "--intervals", 16, "--output-dir", out) == EXIT_OK
    _, header, rows = read_csv(out / "scaling_strong.csv")
    assert header == ["p", "time", "speedup", "efficiency"]
    p1 = rows[0]
    assert float(p1[2]) == 1.0 and float(p1[3]) == 100.0
    times = [float(r[1]) for r in rows]
    assert all(b <= a for a, b in zip(times, times[1:]))
    for p, t, s, e in ((int(r[0]), *map(float, r[1:])) for r in rows):
        assert s == pytest.approx(times[0] / t) and e == pytest.approx(100 * s / p)


def test_weak_scaling_iterations_grow():
    cfg = ScenarioConfig(M=11, T=0.004, fine_dt=1e-5, intervals=4)
    rows = ex.weak_scaling(cfg, [1, 2, 4], intervals_per_worker=4, tol=1e-11)
    ls = [row[6] for row in rows]
    assert ls == sorted(ls) and ls[-1] > ls[0]
    assert rows[0][2] == 1.0 and rows[0][3] == 100.0


def test_scaling_rejects_bad_worker_list(tmp_path):
    assert run("scaling", "--workers", "2,4", "--output-dir", tmp_path) == EXIT_CONFIG


def test_sqrt_bench_rows_and_accuracy(tmp_path):
    out = tmp_path / "b"
    assert run("sqrt-bench", "--samples", 100, "--output-dir", out) == EXIT_OK
    _, header, rows = read_csv(out / "sqrt_bench.csv")
    assert len(rows) == 100 and header[:3] == ["i", "theta", "residual"]
    stats = json.loads((out / "sqrt_bench_stats.json").read_text())
    assert stats["mean"] <= 1e-13 and stats["max"] <= 1e-7


def test_sqrt_bench_identity_batch():
    from pint_swimmer.rotation import sqrt_rotation

    R = np.broadcast_to(np.eye(3), (50, 3, 3))
    res = np.linalg.norm(sqrt_rotation(R) @ sqrt_rotation(R) - R, axis=(1, 2))
    assert res.max() <= np.finfo(float).eps


def test_sqrt_bench_minimum_samples(tmp_path):
    assert run("sqrt-bench", "--samples", 5, "--output-dir", tmp_path) == EXIT_CONFIG


def test_schedule_sim_outputs(tmp_path):
    out = tmp_path / "s"
    assert run("schedule-sim", "--ratio", 2, "--T", 16, "--output-dir", out) == EXIT_OK
    # T = n * r puts the coarse solve at one time unit
    summary = json.loads((out / "schedule_sim.json").read_text())
    assert summary["regular"]["W"] == pytest.approx(65.0)
    assert summary["regular"]["W_formula"] == pytest.approx(63.0)
    assert summary["delta_w_formula"] == pytest.approx(57.0)


# ------------------------------------------------------------------ workers / entry point


def test_worker_env_cap(monkeypatch):
    monkeypatch.setenv("PINT_SWIMMER_THREADS", "3")
    assert default_workers(None, 8) == 3
    assert default_workers(6, 8) == 6
    monkeypatch.setenv("PINT_SWIMMER_THREADS", "lots")
    assert run("gap", "--output-dir", "/tmp/unused-gap") == EXIT_CONFIG


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "pint_swimmer", "schedule-sim", "--output-dir", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0 and "regular: W" in proc.stdout
