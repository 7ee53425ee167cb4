"""Command line entry point: ``trajlab sample|sweep|pareto|plot``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

import numpy as np

from .errors import ConfigError, TrajlabError
from .guidance import make_strategy
from .metrics import proxy_scores
from .sampler import RunConfig, ScheduleParams, run_sampling
from .scenario import Condition, ModelVariant, resolve_scenario
from .schedule import DEFAULT_BASE_LEN, DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS
from .sweep import SweepRecord, load_grid, preset_grid, preset_grids, run_sweep
from .toolkit import format_real, front_rows, plot_csv, read_rows, record_row, write_rows

log = logging.getLogger("trajlab")

STRATEGY_FLAGS = ("omega_c", "omega_s", "t_sw", "q", "r", "omega_c0", "omega_s0", "provider", "basic")


def _add_schedule_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    p.add_argument("--base-len", type=int, default=DEFAULT_BASE_LEN)
    p.add_argument("--beta-start", type=float, default=DEFAULT_BETA_START)
    p.add_argument("--beta-end", type=float, default=DEFAULT_BETA_END)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trajlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="run one sampling strategy and write the final latents")
    p.add_argument("--scenario", required=True, help="fixture name or scenario file")
    p.add_argument("--strategy", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_schedule_flags(p)
    p.add_argument("--omega-c", type=float)
    p.add_argument("--omega-s", type=float)
    p.add_argument("--t-sw", type=int)
    p.add_argument("--q", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--omega-c0", type=float)
    p.add_argument("--omega-s0", type=float)
    p.add_argument("--provider", choices=("divergence", "region"))
    p.add_argument("--basic", action="store_true", default=None)
    p.add_argument("--superclass-variant", choices=[v.value for v in ModelVariant], default="tuned")
    p.add_argument("--superclass-condition", choices=[c.value for c in Condition], default="superclass")

    p = sub.add_parser("sweep", help="run a hyperparameter grid and write a CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--grid", help="grid document")
    src.add_argument("--preset", help=f"one of {sorted(preset_grids())}")
    p.add_argument("--scenario", help="override the grid's scenario")
    p.add_argument("--n", type=int, help="override samples per point")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--threads", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("pareto", help="keep the non-dominated rows of a CSV")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--x", default="context_mean")
    p.add_argument("--y", default="fidelity_mean")
    p.add_argument("--out", required=True)

    p = sub.add_parser("plot", help="SVG scatter plot of two CSV columns")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--front")
    p.add_argument("--x", default="context_mean")
    p.add_argument("--y", default="fidelity_mean")
    p.add_argument("--out", required=True)
    return parser


def cmd_sample(args) -> int:
    params = {
        name: getattr(args, name)
        for name in STRATEGY_FLAGS
        if getattr(args, name) is not None
    }
    source = (ModelVariant(args.superclass_variant), Condition(args.superclass_condition))
    strategy = make_strategy(args.strategy, params, source)
    schedule = ScheduleParams(args.base_len, args.beta_start, args.beta_end, args.steps)
    scenario = resolve_scenario(args.scenario)
    result = run_sampling(RunConfig(scenario, strategy, schedule, args.n, args.seed))

    finals = result.finals.reshape(len(result.finals), -1)
    header = ["sample"] + [f"z{d}" for d in range(finals.shape[1])]
    with open(args.out, "w") as fh:
        fh.write(",".join(header) + "\n")
        for j, row in enumerate(finals):
            fh.write(",".join([str(j)] + [format_real(v) for v in row]) + "\n")

    rec = SweepRecord(
        index=0,
        strategy=strategy,
        metrics=proxy_scores(result.finals, scenario),
        n_samples=args.n,
        steps=args.steps,
        seed=args.seed,
        calls_per_sample=result.calls_per_sample,
        wall_ms=result.wall_time * 1e3,
    )
    write_rows([record_row(rec)], sys.stdout)
    return 0


def cmd_sweep(args) -> int:
    grid = preset_grid(args.preset) if args.preset else load_grid(args.grid)
    overrides = {
        k: v
        for k, v in (("scenario", args.scenario), ("n_samples", args.n), ("seed", args.seed))
        if v is not None
    }
    if overrides:
        grid = replace(grid, **overrides)
    records = run_sweep(grid, threads=args.threads)
    with open(args.out, "w", newline="") as fh:
        write_rows((record_row(r) for r in records), fh)
    log.info("wrote %d rows to %s", len(records), args.out)
    return 0


def cmd_pareto(args) -> int:
    columns, rows = read_rows(args.in_path)
    if not rows:
        raise ConfigError(f"{args.in_path}: no data rows")
    front = front_rows(rows, columns, args.x, args.y)
    with open(args.out, "w", newline="") as fh:
        write_rows(front, fh, columns)
    return 0


def cmd_plot(args) -> int:
    plot_csv(args.in_path, args.out, args.x, args.y, args.front)
    return 0


COMMANDS = {"sample": cmd_sample, "sweep": cmd_sweep, "pareto": cmd_pareto, "plot": cmd_plot}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"trajlab {args.command}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"trajlab {args.command}: {exc.strerror}: {exc.filename}", file=sys.stderr)
        return 2
    except (TrajlabError, OSError, np.linalg.LinAlgError) as exc:
        print(f"trajlab {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
