"""Command-line front end.

    cobundle stats FILE       CO histogram (CSV) and problem summary (JSON)
    cobundle solve FILE       LM bundle adjustment; optimized BAL file and JSONL trace
    cobundle simulate [FILE]  accelerator timing model (JSON report, CSV comparison)
    cobundle verify FILE      oracle checks on a subsampled problem

Exit codes: 0 ok, 2 unreadable input, 3 numerical failure, 4 verification failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__
from .bal_io import BalParseError, load_bal, save_bal, summarize
from .coobs import build_index, co_histogram
from .datasets import TABLE_SIZES, co_counts
from .linalg import NotPositiveDefinite
from .lm import LmConfig, LmFailure, solve
from .pesim import PRESETS, PeConfig, UncoveredCO, compare_configs, simulate
from .schur import SingularPointBlock
from .verify import run_verification

EXIT_OK, EXIT_PARSE, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4

log = logging.getLogger("cobundle")


class UsageError(Exception):
    pass


def _meta(args) -> dict | None:
    if args.no_meta:
        return None
    return {"version": __version__, "command": args.command, "input": args.path and str(args.path),
            "seed": args.seed, "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z")}


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(args, name: str, text: str) -> None:
    """Write to ``--out-dir/name`` when an output directory was given, else stdout."""
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)
    else:
        sys.stdout.write(text)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _plot_dir(args) -> Path | None:
    if not args.plot:
        return None
    return Path(args.out_dir or ".")


def cmd_stats(args) -> int:
    problem = load_bal(args.path)
    hist = co_histogram(build_index(problem))
    s = summarize(problem)
    _emit(args, "co_histogram.csv",
          _csv(["co_value", "count", "percent"], [[c, n, repr(p)] for c, (n, p) in sorted(hist.items())]))
    summary = {"num_points": s.num_points, "num_cameras": s.num_cameras,
               "num_observations": s.num_observations, "mean_co": s.observations_per_point}
    if (meta := _meta(args)) is not None:
        summary["meta"] = meta
    _emit(args, "summary.json", _dump_json(summary))
    if (d := _plot_dir(args)) is not None:
        from .plots import co_histogram_figure
        co_histogram_figure(hist, d / "co_histogram.png")
    return EXIT_OK


def cmd_solve(args) -> int:
    problem = load_bal(args.path)
    config = LmConfig(tau=args.tau, eps1=args.eps1, eps2=args.eps2, k_max=args.k_max)
    solved, trace = solve(problem, config, threads=args.threads, precision=args.precision)
    if args.output:
        save_bal(solved, args.output)
    if args.trace:
        with open(args.trace, "w") as fh:
            for it in trace.iterations:
                fh.write(json.dumps(it.as_dict(timings=not args.no_meta), sort_keys=True) + "\n")
    summary = {"initial_cost": trace.initial_cost, "final_cost": trace.final_cost,
               "stop_reason": trace.stop_reason, "iterations": len(trace.iterations),
               "accepted": sum(it.accepted for it in trace.iterations),
               "config": vars(config), "precision": args.precision}
    if (meta := _meta(args)) is not None:
        summary["meta"] = meta
    _emit(args, "solve_summary.json", _dump_json(summary))
    if (d := _plot_dir(args)) is not None:
        from .plots import cost_trace_figure
        cost_trace_figure(trace.accepted_costs(), d / "cost_trace.png")
    return EXIT_OK


def _load_configs(path) -> list[PeConfig]:
    if path is None:
        return [make() for make in PRESETS.values()]
    data = json.loads(Path(path).read_text())
    items = data if isinstance(data, list) else [data]
    return [PeConfig.from_dict(d) for d in items]


def cmd_simulate(args) -> int:
    configs = _load_configs(args.config)
    problems: dict[str, tuple] = {}
    if args.path:
        problem = load_bal(args.path)
        hist = co_histogram(build_index(problem))
        problems[Path(args.path).name] = (hist, problem.num_observations, problem.num_cameras)
    for d in args.dataset or []:
        counts = co_counts(d)
        images, _, observations = TABLE_SIZES[d]
        problems[f"dataset{d}"] = (counts, observations, images)
    if not problems:
        raise UsageError("simulate needs a BAL file or at least one --dataset")
    reports = {label: [simulate(h, cfg, o, b).to_dict() for cfg in configs]
               for label, (h, o, b) in problems.items()}
    rows = compare_configs(problems, configs)
    out = {"reports": reports}
    if (meta := _meta(args)) is not None:
        out["meta"] = meta
    _emit(args, "sim_report.json", _dump_json(out))
    fields = ["dataset", "config", "compute_ms", "transfer_ms", "overlapped_ms", "serial_ms", "speedup"]
    _emit(args, "comparison.csv", _csv(fields, [[r[f] if isinstance(r[f], str) else repr(r[f]) for f in fields]
                                                for r in rows]))
    if (d := _plot_dir(args)) is not None:
        from .plots import comparison_figure
        comparison_figure(rows, d / "comparison.png")
    return EXIT_OK


def _corrupt(blocks):
    blocks.jc[..., 3] *= 1.01
    return blocks


def cmd_verify(args) -> int:
    problem = load_bal(args.path)
    a_max, b_max = args.scale
    report = run_verification(problem, a_max, b_max, seed=args.seed,
                              jacobian_hook=_corrupt if args.corrupt_jacobian else None)
    out = {"passed": report.passed, "num_points": report.num_points, "num_cameras": report.num_cameras,
           "num_observations": report.num_observations, "checks": [c.as_dict() for c in report.checks]}
    if (meta := _meta(args)) is not None:
        out["meta"] = meta
    _emit(args, "verify.json", _dump_json(out))
    return EXIT_OK if report.passed else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads for Schur elimination (1 = deterministic)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--no-meta", action="store_true", help="omit timestamps and timings")
    common.add_argument("--out-dir", help="write outputs into this directory instead of stdout")
    common.add_argument("--plot", action="store_true", help="also render PNG figures (into --out-dir or .)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cobundle", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", parents=[common], help="co-observation statistics")
    p.add_argument("path")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("solve", parents=[common], help="run Levenberg-Marquardt")
    p.add_argument("path")
    p.add_argument("-o", "--output", help="optimized BAL file (.gz compresses)")
    p.add_argument("--trace", help="JSON-lines iteration trace")
    p.add_argument("--tau", type=float, default=LmConfig.tau)
    p.add_argument("--eps1", type=float, default=LmConfig.eps1)
    p.add_argument("--eps2", type=float, default=LmConfig.eps2)
    p.add_argument("--k-max", type=int, default=LmConfig.k_max)
    p.add_argument("--precision", type=int, choices=(32, 64), default=64,
                   help="arithmetic width of Schur elimination")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", parents=[common], help="accelerator timing model")
    p.add_argument("path", nargs="?")
    p.add_argument("--config", help="PeConfig JSON (object or list); default: Schur_1/2/3 presets")
    p.add_argument("--dataset", type=int, action="append", choices=sorted(TABLE_SIZES),
                   help="add a stand-in built from the published CO distribution (repeatable)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", parents=[common], help="oracle checks on a subsample")
    p.add_argument("path")
    p.add_argument("--scale", nargs=2, type=int, metavar=("A_MAX", "B_MAX"), default=(200, 8))
    p.add_argument("--corrupt-jacobian", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "path"):
        args.path = None
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (BalParseError, OSError, UnicodeDecodeError) as exc:
        print(f"cobundle: cannot read input: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (LmFailure, NotPositiveDefinite, SingularPointBlock, UncoveredCO, ValueError) as exc:
        print(f"cobundle: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except UsageError as exc:
        parser.error(str(exc))
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
