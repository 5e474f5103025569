"""``pint-swimmer`` command line.

Exit codes: 0 success, 2 Parareal did not converge (record still written),
3 configuration or usage error, 4 numerical abort (stiffness guard or a
corrupt rod state).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import costmodel as cm
from . import experiments as ex
from . import parareal as pr
from .io import ConfigError, RunConfig, load_config, provenance, write_json, write_table
from .propagators import StiffnessError
from .rod import CorruptStateError

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_CONFIG = 3
EXIT_NUMERICAL = 4

THREADS_ENV = "PINT_SWIMMER_THREADS"
TRAJECTORY_CSV_LIMIT = 200_000  # rows; larger runs only get the binary file

logger = logging.getLogger("pint_swimmer")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _float_list(text: str):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text: str):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def default_workers(requested: int | None, fallback: int = 1) -> int:
    """--workers wins; otherwise PINT_SWIMMER_THREADS caps the fallback."""
    if requested is not None:
        return requested
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            cap = int(env)
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}")
        if cap < 1:
            raise UsageError(f"{THREADS_ENV} must be >= 1")
        return min(fallback, cap)
    return fallback


def _load(args) -> RunConfig:
    rc = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        rc.scenario = rc.scenario.replace(seed=args.seed)
    if getattr(args, "format", None):
        rc.output["format"] = args.format
    return rc


def _out_dir(args) -> Path:
    d = Path(args.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _record(out: Path, rec, prov):
    path = out / f"{rec.command}_record.json"
    rec.artifacts.append(str(path))
    write_json(path, rec.as_dict(), prov)
    return path


# ------------------------------------------------------------------ commands


def cmd_simulate(args) -> int:
    rc = _load(args)
    cfg = rc.scenario
    out = _out_dir(args)
    stride = args.stride or rc.output["stride"]
    prov = provenance(cfg)
    traj = out / "trajectory.bin"
    state, rec = ex.simulate(cfg, traj, stride)
    fmt = rc.output["format"]
    rec.artifacts.append(str(write_table(
        out, "timings", ["stage", "seconds"], sorted(rec.timings.items()), prov, fmt)))
    n_rows = rec.extra["frames"] * cfg.rod_count * cfg.M
    if fmt == "csv" and n_rows <= TRAJECTORY_CSV_LIMIT:
        from .io import read_trajectory

        _, times, X, _ = read_trajectory(traj)
        rows = [
            (f, times[f], r, k, *X[f, r, k])
            for f in range(len(times))
            for r in range(cfg.rod_count)
            for k in range(cfg.M)
        ]
        rec.artifacts.append(str(write_table(
            out, "trajectory", ["frame", "t", "rod", "node", "x", "y", "z"], rows, prov, "csv")))
    _record(out, rec, prov)
    print(f"simulate: {rec.extra['steps']} steps, {rec.extra['frames']} frames -> {traj}")
    return EXIT_OK


def cmd_parareal(args) -> int:
    rc = _load(args)
    cfg = rc.scenario
    out = _out_dir(args)
    prov = provenance(cfg)
    fmt = rc.output["format"]
    m = default_workers(args.workers, rc.parareal.get("workers", 1))
    backend = args.backend or rc.parareal.get("backend", pr.SERIAL)
    modes = list(cm.MODES) if args.check_both else [args.mode or rc.parareal.get("mode", cm.PIPELINED)]
    rec = ex.RunRecord.start("parareal", cfg)
    ref = None
    results = {}
    for mode in modes:
        plan = ex.parareal_plan(rc, mode=mode, workers=m, intervals=args.intervals,
                                ratio=args.ratio, l_max=args.l_max, tol=args.tol)
        res, ref, ps = ex.run_parareal(cfg, plan, backend=backend,
                                       reference=not args.no_reference, ref_states=ref)
        results[mode] = res
        rec.schedule[mode] = {"W": res.trace.W, "wall_time": res.wall_time,
                              "makespan": res.trace.makespan}
        rec.artifacts.append(str(write_table(
            out, f"schedule_{mode}", ["worker", "kind", "k", "j", "t_start", "t_end"],
            ex.schedule_rows(res.trace), prov, fmt)))
        rec.extra["coarse_steps"] = ps.coarse_steps
        rec.extra["fine_steps"] = ps.fine_steps
        rec.extra["cost_ratio"] = ps.cost_ratio
    main = results[modes[-1]]
    rep = main.report
    rec.convergence = [
        {"k": k, "eta_tilde": et, "eta": e} for k, et, e in ex.convergence_rows(rep)
    ]
    rec.extra.update(converged=rep.converged, iterations_used=rep.iterations_used)
    rec.artifacts.append(str(write_table(
        out, "convergence", ["k", "eta_tilde", "eta"], ex.convergence_rows(rep), prov, fmt)))
    if args.check_both:
        a, b = (results[m_] for m_ in cm.MODES)
        same = a.report.iterations_used == b.report.iterations_used and all(
            np.array_equal(x, y)
            for k in a.iterates
            for x, y in zip(a.iterates[k], b.iterates[k])
        )
        rec.extra["modes_identical"] = bool(same)
        if not same:
            _record(out, rec, prov)
            print("parareal: regular and pipelined iterates differ", file=sys.stderr)
            return 1
    _record(out, rec, prov)
    for k, et, e in ex.convergence_rows(rep):
        print(f"k={k}  eta_tilde={et:.3e}" + (f"  eta={e:.3e}" if e != "" else ""))
    for mode, s in rec.schedule.items():
        print(f"{mode}: wall {s['wall_time']:.3f}s  idle W {s['W']:.3f}s")
    if not rep.converged:
        print(f"parareal: not converged after {rep.iterations_used} iterations", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_gap(args) -> int:
    rc = _load(args)
    out = _out_dir(args)
    cfg = rc.scenario
    prov = provenance(cfg)
    ratios = args.ratios
    if len(ratios) < 3:
        raise UsageError("gap needs at least 3 ratios (--ratios 2,5,8)")
    m = default_workers(args.workers, 2)
    if args.live:
        rows, fit, pts = ex.gap_live(cfg, m, ratios, n=args.intervals, l=args.iterations,
                                     backend=args.backend or pr.PROCESS, repeats=args.repeats)
    else:
        rows, fit, pts = ex.gap_simulated(m, ratios, n=args.intervals or 8, l=args.iterations)
    write_table(out, "gap", ["r", "mode", "W", "wall_time"], rows, prov, rc.output["format"])
    slope, intercept, r2 = fit
    write_json(out / "gap_fit.json", {
        "workers": m, "live": bool(args.live), "points": pts,
        "slope": slope, "intercept": intercept, "r2": r2}, prov)
    print(f"gap vs 1/r: slope {slope:.4g}  intercept {intercept:.4g}  R^2 {r2:.5f}")
    return EXIT_OK


def cmd_scaling(args) -> int:
    rc = _load(args)
    out = _out_dir(args)
    cfg = rc.scenario
    prov = provenance(cfg)
    workers = args.workers or [1, 2, 4]
    if args.weak:
        rows = ex.weak_scaling(cfg, workers, intervals_per_worker=args.intervals_per_worker,
                               r=args.ratio, tol=args.tol)
        header = ["p", "time", "speedup", "efficiency", "T", "n", "l", "weak_efficiency"]
        stem = "scaling_weak"
    else:
        rows = ex.strong_scaling(workers, n=args.intervals or cfg.intervals,
                                 l=args.iterations, r=args.ratio)
        header = ["p", "time", "speedup", "efficiency"]
        stem = "scaling_strong"
    write_table(out, stem, header, rows, prov, rc.output["format"])
    for row in rows:
        print("  ".join(f"{h}={v:.4g}" if isinstance(v, float) else f"{h}={v}"
                        for h, v in zip(header, row)))
    return EXIT_OK


def cmd_sqrt_bench(args) -> int:
    out = _out_dir(args)
    prov = {"seed": args.seed, "config_hash": "none"}
    rows, stats = ex.sqrt_bench(args.samples, args.seed)
    write_table(out, "sqrt_bench",
                ["i", "theta", "residual", "roundtrip", "seconds_per_call"], rows, prov, args.format or "csv")
    write_json(out / "sqrt_bench_stats.json", stats, prov)
    print(f"residual mean {stats['mean']:.3e}  median {stats['median']:.3e}  "
          f"std {stats['std']:.3e}  max {stats['max']:.3e}")
    return EXIT_OK


def cmd_schedule_sim(args) -> int:
    out = _out_dir(args)
    ci = cm.CostInputs(args.intervals, args.workers or 1, args.iterations,
                       args.T if args.T else float(args.intervals), args.ratio)
    prov = {"seed": "none", "config_hash": "none"}
    modes = [args.mode] if args.mode else list(cm.MODES)
    summary = {}
    for mode in modes:
        tr = cm.simulate_schedule(ci, mode)
        write_table(out, f"schedule_sim_{mode}", ["worker", "kind", "k", "j", "t_start", "t_end"],
                    tr.rows(), prov, args.format or "csv")
        formula = cm.w_regular(ci) if mode == cm.REGULAR else cm.w_pipelined(ci)
        summary[mode] = {"W": tr.W, "W_formula": formula, "makespan": tr.makespan}
        print(f"{mode}: W {tr.W:.4g} (formula {formula:.4g})  makespan {tr.makespan:.4g}")
    summary["delta_w_formula"] = cm.delta_w(ci)
    write_json(out / "schedule_sim.json", {"inputs": ci, **summary}, prov)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pint-swimmer", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config_required=False):
        if config_required:
            sp.add_argument("config", help="INI or JSON config file")
        else:
            sp.add_argument("config", nargs="?", help="INI or JSON config file (optional)")
        sp.add_argument("--output-dir", default="out")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--format", choices=["csv", "json"])

    s = sub.add_parser("simulate", help="serial fine reference run")
    common(s, config_required=True)
    s.add_argument("--stride", type=int, help="write every N-th step (default from config)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("parareal", help="Parareal run with convergence and schedule output")
    common(s, config_required=True)
    s.add_argument("--mode", choices=list(cm.MODES))
    s.add_argument("--workers", type=int)
    s.add_argument("--intervals", type=int)
    s.add_argument("--ratio", type=float, help="fine/coarse cost ratio r (sets coarse steps)")
    s.add_argument("--l-max", type=int)
    s.add_argument("--tol", type=float)
    s.add_argument("--backend", choices=[pr.SERIAL, pr.PROCESS])
    s.add_argument("--check-both", action="store_true", help="run both modes and compare iterates")
    s.add_argument("--no-reference", action="store_true", help="skip the serial fine reference")
    s.set_defaults(func=cmd_parareal)

    s = sub.add_parser("gap", help="regular vs pipelined gap against 1/r")
    common(s)
    s.add_argument("--workers", type=int)
    s.add_argument("--ratios", type=_float_list, default=[2.0, 5.0, 8.0])
    s.add_argument("--intervals", type=int)
    s.add_argument("--iterations", type=int, default=3)
    s.add_argument("--live", action="store_true", help="time real runs instead of simulating")
    s.add_argument("--backend", choices=[pr.SERIAL, pr.PROCESS])
    s.add_argument("--repeats", type=int, default=1)
    s.set_defaults(func=cmd_gap)

    s = sub.add_parser("scaling", help="strong or weak scaling table")
    common(s)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--strong", action="store_true", default=True)
    g.add_argument("--weak", action="store_true")
    s.add_argument("--workers", type=_int_list)
    s.add_argument("--intervals", type=int)
    s.add_argument("--intervals-per-worker", type=int, default=2)
    s.add_argument("--iterations", type=int, default=3)
    s.add_argument("--ratio", type=float, default=8.0)
    s.add_argument("--tol", type=float, default=1e-10)
    s.set_defaults(func=cmd_scaling)

    s = sub.add_parser("sqrt-bench", help="rotation square-root accuracy and timing")
    s.add_argument("--samples", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output-dir", default="out")
    s.add_argument("--format", choices=["csv", "json"])
    s.set_defaults(func=cmd_sqrt_bench)

    s = sub.add_parser("schedule-sim", help="event-simulated schedule for given cost inputs")
    s.add_argument("--intervals", type=int, default=8)
    s.add_argument("--workers", type=int, default=4)
    s.add_argument("--iterations", type=int, default=3)
    s.add_argument("--ratio", type=float, default=8.0)
    s.add_argument("--T", type=float, help="serial fine cost (default: n, unit fine tasks)")
    s.add_argument("--mode", choices=list(cm.MODES))
    s.add_argument("--output-dir", default="out")
    s.add_argument("--format", choices=["csv", "json"])
    s.set_defaults(func=cmd_schedule_sim)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StiffnessError, CorruptStateError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        # invalid plan/scenario values given on the command line
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
