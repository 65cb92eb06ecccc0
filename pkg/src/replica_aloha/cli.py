"""Command-line front end.

Subcommands:
  table     build a replica policy table and store it as JSON
  bounds    tabulate limiting backlog intensities over a load grid
  simulate  run the sweep described by a JSON experiment spec
  plot      render figures from previously written CSV files

Exit codes: 0 on success, 2 for configuration problems, 3 for runtime
failures. Results are CSV; figures are opt-in and never change the CSV.
The policy-table cache directory can be forced with the REPLICA_ALOHA_CACHE
environment variable.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .asymptotics import UnstableLoadError, h1_limit, hk_limit
from .config import ConfigError, load_experiment_spec
from .occupancy import build_policy_table, load_policy_table, save_policy_table
from .sweep import execute, write_csv

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

CACHE_ENV_VAR = "REPLICA_ALOHA_CACHE"

BOUNDS_FORMAT_LINE = "# replica-aloha bounds v1"
BOUNDS_COLUMNS = [
    "gamma",
    "lambda",
    "in_region",
    "h1_eta_star",
    "hk_eta_star",
    "hk_k_star",
    "hk_eta_star_literal",
    "hk_k_star_literal",
]


def _float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad float list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="replica-aloha",
        description="Replicated multi-channel random access: tables, "
        "bounds and simulation sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_table = sub.add_parser("table", help="build a replica policy table")
    p_table.add_argument("-M", "--channels", type=int, required=True)
    p_table.add_argument("--gamma", type=float, required=True)
    p_table.add_argument("--n-max", type=int, default=None)
    p_table.add_argument("--out", type=Path, required=True)
    p_table.add_argument(
        "--force", action="store_true",
        help="overwrite an existing table that was built for other parameters",
    )

    p_bounds = sub.add_parser(
        "bounds", help="limiting backlog intensities over a load grid"
    )
    p_bounds.add_argument("--gammas", type=_float_list, required=True)
    p_bounds.add_argument("--lambdas", type=_float_list, required=True)
    p_bounds.add_argument("--k-max", type=int, default=32)
    p_bounds.add_argument("--out", type=Path, required=True)
    p_bounds.add_argument(
        "--plot", action="store_true", help="also render the bounds figure"
    )

    p_sim = sub.add_parser("simulate", help="run a sweep from a JSON spec")
    p_sim.add_argument("--config", type=Path, required=True)
    p_sim.add_argument(
        "--out", type=Path, default=None,
        help="override the experiment's output_path",
    )
    p_sim.add_argument("--workers", type=int, default=1)
    p_sim.add_argument(
        "--plot", action="store_true",
        help="also render backlog figures next to the CSV",
    )

    p_plot = sub.add_parser("plot", help="render figures from CSV outputs")
    p_plot.add_argument("--results", type=Path, default=None)
    p_plot.add_argument("--bounds", type=Path, default=None)
    p_plot.add_argument("--out-dir", type=Path, required=True)
    return parser


def cmd_table(args: argparse.Namespace) -> int:
    if args.channels < 1:
        raise ConfigError("--channels must be >= 1")
    if not 0.0 <= args.gamma < 1.0:
        raise ConfigError("--gamma must lie in [0, 1)")
    n_max = args.n_max if args.n_max is not None else 4 * args.channels
    if args.out.exists() and not args.force:
        existing = load_policy_table(args.out)
        if not (
            existing.matches(args.channels, args.gamma)
            and existing.n_max == n_max
        ):
            raise ConfigError(
                f"{args.out} holds a table for (M={existing.n_channels}, "
                f"gamma={existing.erasure_prob}, n_max={existing.n_max}); "
                "pass --force to overwrite"
            )
    table = build_policy_table(args.channels, args.gamma, n_max=n_max)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_policy_table(table, args.out)
    log.info("wrote %s (M=%d, gamma=%g, n_max=%d)",
             args.out, args.channels, args.gamma, n_max)
    return EXIT_OK


def render_bounds_csv(
    gammas: list[float], lambdas: list[float], k_max: int
) -> str:
    buf = io.StringIO()
    buf.write(BOUNDS_FORMAT_LINE + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BOUNDS_COLUMNS)
    for gamma in gammas:
        if not 0.0 <= gamma < 1.0:
            raise ConfigError(f"gamma {gamma!r} outside [0, 1)")
        for lam in lambdas:
            if lam < 0.0:
                raise ConfigError(f"lambda {lam!r} must be >= 0")
            try:
                h1 = h1_limit(lam, gamma)
                h1_eta, in_region = repr(h1.eta_star), 1
            except UnstableLoadError:
                h1_eta, in_region = "", 0
            try:
                hk = hk_limit(lam, gamma, k_max=k_max)
                hk_eta, hk_k = repr(hk.eta_star), repr(hk.k_star)
            except UnstableLoadError:
                hk_eta, hk_k = "", ""
            try:
                lit = hk_limit(lam, gamma, k_max=k_max, selection="literal_max")
                lit_eta, lit_k = repr(lit.eta_star), repr(lit.k_star)
            except UnstableLoadError:
                lit_eta, lit_k = "", ""
            writer.writerow(
                [repr(gamma), repr(lam), in_region,
                 h1_eta, hk_eta, hk_k, lit_eta, lit_k]
            )
    return buf.getvalue()


def cmd_bounds(args: argparse.Namespace) -> int:
    if args.k_max < 1:
        raise ConfigError("--k-max must be >= 1")
    text = render_bounds_csv(args.gammas, args.lambdas, args.k_max)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(text, encoding="utf-8")
    log.info("wrote %s", args.out)
    if args.plot:
        from .plotting import render_bounds_figure

        figure = render_bounds_figure(args.out, args.out.with_suffix(".png"))
        log.info("wrote %s", figure)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    spec = load_experiment_spec(args.config)
    if args.out is not None:
        spec = replace(spec, output_path=str(args.out))
    cache_override = os.environ.get(CACHE_ENV_VAR)
    if cache_override:
        spec = replace(spec, table_cache_dir=cache_override)
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    rows = execute(spec, workers=args.workers)
    path = write_csv(rows, spec.output_path)
    log.info("wrote %s (%d rows)", path, len(rows))
    if args.plot:
        from .plotting import render_backlog_figures

        for figure in render_backlog_figures(path, path.parent):
            log.info("wrote %s", figure)
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    if args.results is None and args.bounds is None:
        raise ConfigError("nothing to plot: pass --results and/or --bounds")
    from .plotting import render_backlog_figures, render_bounds_figure

    if args.results is not None:
        for figure in render_backlog_figures(args.results, args.out_dir):
            log.info("wrote %s", figure)
    if args.bounds is not None:
        out = Path(args.out_dir) / (Path(args.bounds).stem + ".png")
        figure = render_bounds_figure(args.bounds, out)
        log.info("wrote %s", figure)
    return EXIT_OK


_COMMANDS = {
    "table": cmd_table,
    "bounds": cmd_bounds,
    "simulate": cmd_simulate,
    "plot": cmd_plot,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001  (CLI boundary)
        log.exception("failed: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
