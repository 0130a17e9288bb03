"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 analytic values inside the simulated 99% CI at fewer than 90% of the
compared points (``compare`` only).
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import fields

import numpy as np

from . import analysis
from .analysis import UNBOUNDED
from .centralized import InfeasibleError
from .config import ConfigError, RunConfig, dump_config, load_config, parse_value
from .distributed import d2d_power_moment
from .montecarlo import REPORT_COLUMNS, ExperimentReport, compare_reports, run_experiment
from .netmodel import db_to_linear

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CONTAINMENT = 0, 2, 3, 4
CONTAINMENT_MIN = 0.9

ANALYZE_COLUMNS = ("beta_db", "cell_cov_exact", "cell_cov_closed", "cell_cov_lb",
                   "d2d_cov_exact", "d2d_cov_approx", "tc", "sum_rate")
COMPARE_COLUMNS = ("beta_db", "cell_cov_analytic", "cell_cov_sim", "cell_cov_ci", "cell_gap",
                   "d2d_cov_analytic", "d2d_cov_sim", "d2d_cov_ci", "d2d_gap")


def format_cell(v) -> str:
    """CSV text: repr for floats, empty for missing, ``unbounded`` for the marker."""
    if v is None:
        return ""
    if v is UNBOUNDED:
        return "unbounded"
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


def write_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([format_cell(v) for v in r])
    return buf.getvalue()


# -- table builders -----------------------------------------------------------

def _scheme_ps(cfg: RunConfig, beta: float) -> float:
    if cfg.scheme != "distributed":
        return 1.0
    return cfg.experiment().policy(beta).p_s


def analyze_rows(cfg: RunConfig) -> list[tuple]:
    """Analytic curves, one row per grid point, for the configured scheme's
    D2D transmit probability (1 unless distributed)."""
    params = cfg.system_params()
    a = params.pathloss_exp
    pc, pd = params.p_max_cell_w, params.p_max_d2d_w
    optimal = cfg.scheme == "distributed" and cfg.gmin is None and cfg.ps is None
    sum_rate = analysis.d2d_sum_rate(params, rtol=max(cfg.rate_rtol, 1e-6))
    rows = []
    for bdb in cfg.beta_grid_db:
        b = float(db_to_linear(bdb))
        ps = _scheme_ps(cfg, b)
        moment = d2d_power_moment(ps, pd, a)
        closed = analysis.cell_coverage_closed_alpha4(params, b, ps) if a == 4 else None
        lam_t = params.d2d_density * ps
        tc = analysis.transmission_capacity(b, params) if optimal else \
            analysis.transmission_capacity_fixed(b, params, ps)
        rows.append((
            float(bdb),
            analysis.cell_coverage_exact(params, analysis.ConstantPower(pc), moment, b, rtol=cfg.quad_rtol),
            closed,
            analysis.cell_coverage_lower_bound(params, 1 / pc, moment, b),
            analysis.d2d_coverage(params, b, pc, pd, density=lam_t, rtol=cfg.quad_rtol),
            analysis.d2d_coverage_approx(params, b, pc, pd, density=lam_t),
            tc,
            sum_rate,
        ))
    return rows


def report_rows(report: ExperimentReport) -> list[tuple]:
    return [r.values() for r in report.rows]


def compare_rows(report: ExperimentReport) -> tuple[list[tuple], object]:
    div = compare_reports(report)
    rows = [(r.beta_db, r.cell_cov_analytic, r.cell_cov_sim, r.cell_cov_ci, cg,
             r.d2d_cov_analytic, r.d2d_cov_sim, r.d2d_cov_ci, dg)
            for r, cg, dg in zip(report.rows, div.cell_gap, div.d2d_gap)]
    return rows, div


# -- commands -----------------------------------------------------------------

def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_analyze(cfg: RunConfig) -> int:
    _emit(write_csv(ANALYZE_COLUMNS, analyze_rows(cfg)), cfg.out)
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    report = run_experiment(cfg.experiment(), workers=cfg.workers)
    _emit(write_csv(REPORT_COLUMNS, report_rows(report)), cfg.out)
    return EXIT_OK


def cmd_compare(cfg: RunConfig) -> int:
    report = run_experiment(cfg.experiment(), workers=cfg.workers)
    rows, div = compare_rows(report)
    _emit(write_csv(COMPARE_COLUMNS, rows), cfg.out)
    cont = div.containment
    cont_s = "n/a" if math.isnan(cont) else f"{cont:.3f}"
    gap_s = "n/a" if math.isnan(div.max_gap) else f"{div.max_gap:.4f}"
    print(f"max |analytic - simulated| = {gap_s}; analytic inside 99% CI at {cont_s} of points",
          file=sys.stderr)
    if not math.isnan(cont) and cont < CONTAINMENT_MIN:
        print(f"containment below {CONTAINMENT_MIN:.0%}", file=sys.stderr)
        return EXIT_CONTAINMENT
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, key: str, values: list[str], mode: str) -> int:
    if key not in {f.name for f in fields(RunConfig)} or key == "out":
        raise ConfigError(f"cannot sweep {key!r}")
    if mode not in ("analyze", "simulate"):
        raise ConfigError("mode must be analyze or simulate")
    if not values:
        raise ConfigError("no sweep values")
    header = (key,) + (ANALYZE_COLUMNS if mode == "analyze" else REPORT_COLUMNS)
    rows = []
    for text in values:
        v = parse_value(key, text)
        c = cfg.with_(**{key: v}).validate()
        if mode == "analyze":
            block = analyze_rows(c)
        else:
            block = report_rows(run_experiment(c.experiment(), workers=c.workers))
        rows.extend((v,) + tuple(r) for r in block)
    _emit(write_csv(header, rows), cfg.out)
    return EXIT_OK


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value config file")
    common.add_argument("--seed", type=int, help="override the seed")
    common.add_argument("--drops", type=int, help="override the number of drops")
    common.add_argument("--out", metavar="PATH", help="CSV output path (default stdout)")
    common.add_argument("--workers", type=int, help="worker threads for drops")
    common.add_argument("--dump-config", action="store_true",
                        help="print the resolved configuration and exit")

    p = argparse.ArgumentParser(prog="d2dpower", description="D2D underlay power control analysis and simulation")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="analytic curves over the beta grid")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo report over the beta grid")
    sub.add_parser("compare", parents=[common], help="analytic vs simulated coverage")
    sw = sub.add_parser("sweep", parents=[common], help="repeat analyze/simulate over one key")
    sw.add_argument("--key", required=True, help="config key to sweep, e.g. d2d_density")
    sw.add_argument("--values", required=True,
                    help="values in config syntax, comma-separated (semicolons if a value has commas)")
    sw.add_argument("--mode", default="analyze", choices=("analyze", "simulate"))
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.drops is not None:
        over["n_drops"] = args.drops
    if args.out is not None:
        over["out"] = args.out
    if args.workers is not None:
        over["workers"] = args.workers
    return cfg.with_(**over).validate() if over else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.dump_config:
            _emit(dump_config(cfg), cfg.out)
            return EXIT_OK
        if args.command == "analyze":
            return cmd_analyze(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "compare":
            return cmd_compare(cfg)
        sep = ";" if ";" in args.values else ","
        return cmd_sweep(cfg, args.key, [v for v in args.values.split(sep) if v.strip()], args.mode)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError, InfeasibleError, ValueError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
