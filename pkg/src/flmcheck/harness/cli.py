"""Command line front end.

Subcommands::

    flmcheck power    --scenario S1 --n 100 --M 30 --reps 1000 --seed 7 --out run1
    flmcheck gridsize --scenario S2,S4 --M 8,16,32,64 --fast --out run2
    flmcheck test     curves.csv responses.csv --alpha 0.05 --out report
    flmcheck simulate --scenario S1 --d 2 --n 100 --M 30 --seed 3 --out data

Study flags may also come from a JSON file via --config (the file
mirrors StudyConfig); explicit flags win over the file.  Exit codes:
0 success, 2 malformed input or configuration, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from ..hypotest import TestConfig, hybrid_test
from ..procsim import generate_dataset, scenario
from . import figures
from .io import (
    ParseError,
    emit_outputs,
    ingest_csv,
    rows_to_csv,
    write_dataset_csv,
    write_test_report_json,
)
from .studies import (
    GRIDSIZE_SCENARIOS,
    StudyConfig,
    run_gridsize_study,
    run_power_study,
    summarize_report,
)

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NUMERIC = 3

_FAST_REPLICATES = 500


def _split_csv(chunks: list[str] | None) -> list[str] | None:
    if chunks is None:
        return None
    out: list[str] = []
    for chunk in chunks:
        out.extend(tok.strip() for tok in chunk.split(",") if tok.strip())
    return out


def _split_ints(chunks: list[str] | None, flag: str) -> list[int] | None:
    toks = _split_csv(chunks)
    if toks is None:
        return None
    try:
        return [int(t) for t in toks]
    except ValueError:
        raise ValueError(f"{flag} expects integers, got {toks!r}") from None


def _study_config(args, defaults: dict) -> StudyConfig:
    """Layer config sources: built-in defaults < --config file < flags."""
    merged = dict(defaults)
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                merged.update(json.load(fh))
        except OSError as exc:
            raise ParseError(f"{args.config}: cannot read config ({exc})") from None
        except json.JSONDecodeError as exc:
            raise ParseError(f"{args.config}:{exc.lineno}: bad JSON: {exc.msg}") from None
    overrides = {
        "scenarios": _split_csv(args.scenario),
        "d_levels": _split_ints(getattr(args, "d", None), "--d"),
        "n_values": _split_ints(args.n, "--n"),
        "M_values": _split_ints(args.M, "--M"),
        "replicates": args.reps,
        "seed": args.seed,
        "alpha": args.alpha,
        "out_dir": args.out,
    }
    merged.update({k: v for k, v in overrides.items() if v is not None})
    if args.fast and args.reps is None:
        merged["replicates"] = _FAST_REPLICATES
    try:
        return StudyConfig.from_dict(merged)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad study configuration: {exc}") from None


def _emit_and_print(rows, series, cfg: StudyConfig) -> int:
    written = emit_outputs(rows, series, cfg.out_dir, config=cfg)
    sys.stdout.write(rows_to_csv(rows))
    for row in rows:
        if row.flagged:
            print(
                f"warning: cell {row.scenario},d={row.d},n={row.n},M={row.M} "
                f"had {row.failures}/{row.replicates} numeric failures",
                file=sys.stderr,
            )
    for name in sorted(written):
        print(f"wrote {written[name]}")
    return EXIT_OK


def _cmd_power(args) -> int:
    cfg = _study_config(args, {})
    return _emit_and_print(run_power_study(cfg), None, cfg)


def _cmd_gridsize(args) -> int:
    cfg = _study_config(
        args,
        {"scenarios": list(GRIDSIZE_SCENARIOS), "M_values": [8, 16, 32, 64]},
    )
    rows, series = run_gridsize_study(cfg)
    return _emit_and_print(rows, series, cfg)


def _cmd_test(args) -> int:
    dataset = ingest_csv(args.curves, args.responses)
    config = TestConfig(alpha=args.alpha, ridge_seed=args.seed)
    report = hybrid_test(dataset, config)
    print(summarize_report(report, config.alpha, n=dataset.n, M=dataset.grid.M))
    os.makedirs(args.out, exist_ok=True)
    json_path = os.path.join(args.out, "report.json")
    write_test_report_json(report, config.alpha, json_path)
    png_path = os.path.join(args.out, "report.png")
    figures.render_test_report_png(dataset, report, config.alpha, png_path)
    print(f"wrote {json_path}")
    print(f"wrote {png_path}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    spec = scenario(args.scenario)
    dataset = generate_dataset(spec, args.d, args.n, args.M, args.seed)
    os.makedirs(args.out, exist_ok=True)
    curves_path = os.path.join(args.out, "curves.csv")
    responses_path = os.path.join(args.out, "responses.csv")
    write_dataset_csv(dataset, curves_path, responses_path)
    truth = dataset.truth
    print(
        f"simulated {args.scenario} d={args.d}: n={args.n}, M={args.M}, "
        f"delta={truth.delta:g}, sigma2={truth.sigma2:.6g}, seed={args.seed}"
    )
    print(f"wrote {curves_path}")
    print(f"wrote {responses_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flmcheck",
        description="Adaptive hybrid lack-of-fit checks for functional linear models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def study_flags(p: argparse.ArgumentParser, with_d: bool) -> None:
        p.add_argument("--scenario", action="append", metavar="ID[,ID...]",
                       help="scenario ids (repeatable or comma-separated)")
        if with_d:
            p.add_argument("--d", action="append", metavar="L[,L...]",
                           help="deviation levels from {0,1,2}")
        p.add_argument("--n", action="append", metavar="N[,N...]", help="sample sizes")
        p.add_argument("--M", action="append", metavar="M[,M...]", help="grid sizes")
        p.add_argument("--reps", type=int, help="replicates per cell (default 1000)")
        p.add_argument("--seed", type=int, help="study seed (default 0)")
        p.add_argument("--alpha", type=float, help="significance level (default 0.05)")
        p.add_argument("--out", help="output directory (default 'out')")
        p.add_argument("--fast", action="store_true",
                       help=f"quick profile: {_FAST_REPLICATES} replicates per cell")
        p.add_argument("--config", metavar="FILE",
                       help="JSON study config; explicit flags override it")

    p_power = sub.add_parser("power", help="empirical size/power table")
    study_flags(p_power, with_d=True)
    p_power.set_defaults(func=_cmd_power)

    p_grid = sub.add_parser("gridsize", help="size and power as the grid coarsens")
    study_flags(p_grid, with_d=False)
    p_grid.set_defaults(func=_cmd_gridsize)

    p_test = sub.add_parser("test", help="run the hybrid test on a CSV file pair")
    p_test.add_argument("curves", help="curves file: header = grid nodes, rows = curves")
    p_test.add_argument("responses", help="response file: one value per line")
    p_test.add_argument("--alpha", type=float, default=0.05)
    p_test.add_argument("--seed", type=int, default=0, help="seed for the screening ridge draw")
    p_test.add_argument("--out", default="out", help="directory for report.json and report.png")
    p_test.set_defaults(func=_cmd_test)

    p_sim = sub.add_parser("simulate", help="write a synthetic curves/response file pair")
    p_sim.add_argument("--scenario", default="S1")
    p_sim.add_argument("--d", type=int, default=0, choices=(0, 1, 2))
    p_sim.add_argument("--n", type=int, default=100)
    p_sim.add_argument("--M", type=int, default=30)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", default="out")
    p_sim.set_defaults(func=_cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (RuntimeError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
