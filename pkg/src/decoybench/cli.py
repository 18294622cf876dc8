"""``decoy-bench`` command-line front end.

Exit codes: 0 success, 1 config or I/O error, 2 invalid weak-decoy scheme.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .channel import click_probability, fock_yield
from .config import ConfigError, ScenarioConfig, load_config
from .estimators import (
    EXACT,
    PAPER_APPROX,
    ResidualError,
    UnderdeterminedError,
    scheme_validity,
    truncated_yield_solver,
    weak_decoy_bound_nodark,
)
from .fluctuation import feasibility
from .montecarlo import run_coverage, simulate_scheme, sweep
from .photon_stats import poisson_pmf

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVALID_SCHEME = 2

SIMULATE_COLUMNS = ["trial", "label", "mu", "count", "n_t", "n0", "n1", "nm"]
COVERAGE_COLUMNS = [
    "trial", "n_t_vacuum", "s0_hat", "n_t_weak", "n1_truth", "n1_lower", "clipped", "violated",
]
SWEEP_COLUMNS = [
    "axis", "value", "expected_darks", "expected_signal", "rel_dev",
    "required_N", "production_days", "violation_rate", "clip_rate",
]
SOLVER_RESIDUAL_TOL = 1e-10


def fmt(value) -> str:
    """CSV cell: integers verbatim, floats to 6 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6g}"
    return str(value)


def json_value(cell: str, original):
    if isinstance(original, (bool, np.bool_)):
        return bool(original)
    if isinstance(original, (int, np.integer)):
        return int(original)
    if isinstance(original, (float, np.floating)):
        value = float(cell)
        return value if math.isfinite(value) else cell
    return cell


def render_csv(columns: Sequence[str], rows: Sequence[Sequence], cfg: ScenarioConfig) -> str:
    buf = io.StringIO()
    for line in cfg.to_ini().splitlines():
        buf.write(f"# {line}".rstrip() + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def render_json(columns: Sequence[str], rows: Sequence[Sequence], cfg: ScenarioConfig) -> str:
    records = [
        {c: json_value(fmt(v), v) for c, v in zip(columns, row)}
        for row in rows
    ]
    doc = {
        "config": cfg.to_dict(),
        "config_ini": cfg.to_ini(),
        "seed": cfg.run.seed if cfg.run is not None else None,
        "columns": list(columns),
        "rows": records,
    }
    return json.dumps(doc, indent=2) + "\n"


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_outputs(out: Optional[str], columns, rows, cfg: ScenarioConfig) -> None:
    """CSV to ``out`` plus a JSON mirror next to it; CSV to stdout without ``out``."""
    csv_text = render_csv(columns, rows, cfg)
    if out is None:
        sys.stdout.write(csv_text)
        return
    csv_path = Path(out)
    json_path = csv_path.with_suffix(".json")
    written = []
    try:
        _atomic_write(csv_path, csv_text)
        written.append(csv_path)
        _atomic_write(json_path, render_json(columns, rows, cfg))
    except OSError as exc:
        for p in written:
            p.unlink(missing_ok=True)
        raise ConfigError(f"{exc.filename or out}: cannot write output: {exc.strerror or exc}") from exc


def cmd_estimate(cfg: ScenarioConfig, args) -> int:
    weak = cfg.weak_set()
    eta = cfg.channel.eta
    q_v = click_probability(weak.mu, cfg.channel, include_dark=False)
    print(f"eta = {fmt(eta)}")
    print(f"mu_v = {fmt(weak.mu)}")
    print(f"q_v = {fmt(q_v)}")
    for mode in (PAPER_APPROX, EXACT):
        b = weak_decoy_bound_nodark(q_v, weak.mu, mode=mode)
        print(f"[{mode}] s1_lower = {fmt(b.s1_lower)}")
        print(f"[{mode}] n1_lower_per_pulse = {fmt(b.n1_lower)}")
        print(f"[{mode}] clipped = {str(b.clipped).lower()}")
        print(f"[{mode}] dark_corrected = {str(b.dark_corrected).lower()}")
    v = scheme_validity(eta, weak.mu, args.target_fraction)
    print(f"target_fraction = {fmt(args.target_fraction)}")
    print(f"valid = {str(v.valid).lower()}")
    print(f"margin = {fmt(v.margin)}")
    return EXIT_OK if v.valid else EXIT_INVALID_SCHEME


def cmd_feasibility(cfg: ScenarioConfig, args) -> int:
    if cfg.run is None:
        raise ConfigError("run: section required for this command")
    weak = cfg.weak_set()
    spec = cfg.confidence_spec()
    rep = feasibility(cfg.channel, weak.mu, spec, cfg.run.rep_rate, max_days=cfg.run.max_days)
    print(f"rel_dev = {fmt(spec.rel_dev)}")
    print(f"k = {fmt(spec.log_fail)}")
    print(f"sidedness = {spec.sidedness}")
    print(f"required_N = {rep.required_N:.3g}")
    print(f"expected_darks = {rep.expected_darks:.3g}")
    print(f"expected_signal = {rep.expected_signal:.3g}")
    print(f"dark_margin = {rep.dark_margin:.3g}")
    print(f"rep_rate = {fmt(cfg.run.rep_rate)}")
    print(f"production_seconds = {fmt(rep.production_seconds)}")
    print(f"production_days = {fmt(rep.production_days)}")
    print(f"max_days = {fmt(rep.max_days)}")
    print(f"feasible = {str(rep.feasible).lower()}")
    return EXIT_OK


def cmd_simulate(cfg: ScenarioConfig, args) -> int:
    scenario = cfg.scenario()
    rows = []
    for trial, observed in enumerate(simulate_scheme(scenario, workers=args.workers)):
        for s, obs in zip(scenario.scheme.sets, observed):
            t = obs.truth
            rows.append([trial, s.label, s.mu, s.count, obs.n_t, t.n0, t.n1, t.nm])
    write_outputs(args.out, SIMULATE_COLUMNS, rows, cfg)
    return EXIT_OK


def cmd_coverage(cfg: ScenarioConfig, args) -> int:
    report = run_coverage(cfg.scenario(), workers=args.workers)
    rows = [
        [
            o.trial, o.vacuum.n_t, o.s0_hat, o.weak.n_t, o.weak.truth.n1,
            o.bound.n1_lower, o.bound.clipped, o.violated,
        ]
        for o in report.outcomes
    ]
    write_outputs(args.out, COVERAGE_COLUMNS, rows, cfg)
    print(
        f"violation_rate = {fmt(report.violation_rate)} clip_rate = {fmt(report.clip_rate)}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_sweep(cfg: ScenarioConfig, args) -> int:
    if cfg.sweep is None:
        raise ConfigError("sweep: section required for this command")
    derive = cfg.confidence is not None and cfg.confidence.rel_dev == "auto"
    spec = cfg.confidence_spec() if cfg.confidence is not None else None
    if spec is None and cfg.sweep.axis in ("rel_dev", "k"):
        raise ConfigError(f"sweep.axis: {cfg.sweep.axis!r} needs a confidence section")
    try:
        table = sweep(
            cfg.scenario(), spec, cfg.sweep.axis, cfg.sweep.values,
            workers=args.workers, derive_rel_dev=derive,
        )
    except ValueError as exc:
        raise ConfigError(f"{cfg.where('sweep', 'values')}: {exc}") from exc
    rows = [
        [r.axis, r.value, r.expected_darks, r.expected_signal, r.rel_dev,
         r.required_N, r.production_days, r.violation_rate, r.clip_rate]
        for r in table
    ]
    write_outputs(args.out, SWEEP_COLUMNS, rows, cfg)
    return EXIT_OK


def solver_rates(cfg: ScenarioConfig) -> list[float]:
    """Configured rates, or noiseless rates generated from the channel's yields up to n_max."""
    s = cfg.solver
    if s.rates is not None:
        return list(s.rates)
    yields = [fock_yield(n, cfg.channel) for n in range(s.n_max + 1)]
    return [math.fsum(y * poisson_pmf(n, mu) for n, y in enumerate(yields)) for mu in s.intensities]


def cmd_solve_yields(cfg: ScenarioConfig, args) -> int:
    if cfg.solver is None:
        raise ConfigError("solver: section required for this command")
    s = cfg.solver
    try:
        result = truncated_yield_solver(list(zip(s.intensities, solver_rates(cfg))), s.n_max)
    except (UnderdeterminedError, ValueError) as exc:
        raise ConfigError(f"{cfg.where('solver', 'intensities')}: {exc}") from exc
    columns = ["n_max", "residual", "condition_number"] + [f"y{n}" for n in range(s.n_max + 1)]
    rows = [[s.n_max, result.residual, result.condition_number] + [float(y) for y in result.y]]
    write_outputs(args.out, columns, rows, cfg)
    if args.max_residual is not None and result.residual > args.max_residual:
        raise ResidualError(f"residual {result.residual:.3e} exceeds {args.max_residual:.3e}")
    return EXIT_OK


COMMANDS = {
    "estimate": cmd_estimate,
    "feasibility": cmd_feasibility,
    "simulate": cmd_simulate,
    "coverage": cmd_coverage,
    "sweep": cmd_sweep,
    "solve-yields": cmd_solve_yields,
}


def u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be a 64-bit unsigned integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decoy-bench",
        description="Finite-statistics analysis of the vacuum + weak decoy-state scheme.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="scenario config (INI)")
        p.add_argument("--out", help="CSV output path; a .json mirror is written alongside")
        p.add_argument("--seed", type=u64, help="override run.seed")
        p.add_argument("--trials", type=int, help="override run.trials")
        p.add_argument("--workers", type=int, default=1, help="threads for independent trials")
        if name == "estimate":
            p.add_argument("--target-fraction", type=float, default=0.5,
                           help="certify s1 >= fraction * eta (default 0.5)")
        if name == "solve-yields":
            p.add_argument("--max-residual", type=float, default=None,
                           help="fail if the fit residual exceeds this")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(seed=args.seed, trials=args.trials)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, ResidualError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
