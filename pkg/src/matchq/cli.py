"""Command-line surface binding the modules into reproducible runs.

Subcommands: exact, oracle, simulate, metrics, sweep, validate.
Parameters come from ``--config`` (key=value lines, ``#`` comments) and
flags; flags win.  Artifacts carry the tolerance actually used and are
byte-identical across repeated invocations with the same inputs.
Exit status: 0 success, 1 failed validation or computation, 2 argument
errors; failures emit one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import balance_oracle, metrics, product_form, simulator
from .model import (
    ONE_SIDED,
    SYSTEMS,
    TWO_SIDED,
    DivergenceError,
    NSystemParams,
    OneSidedState,
    Truncation,
    params_from_dict,
    read_params_file,
    stability_check,
)
from .serialize import csv_text, json_dumps


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(json_dumps({"error": message, "type": "ArgumentError"}))
        raise SystemExit(2)


def _add_param_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="parameter file with key=value lines")
    for key in ("lambda1", "lambda2", "mu1", "mu2"):
        p.add_argument(f"--{key}", type=float)
    p.add_argument("--theta-s", dest="theta_s", type=float)
    p.add_argument("--theta-d", dest="theta_d", type=float)


def _add_common_flags(p: argparse.ArgumentParser, default_format: str = "json") -> None:
    p.add_argument("--system", choices=SYSTEMS, default=ONE_SIDED)
    p.add_argument("--tol", type=float, default=product_form.DEFAULT_TOLERANCE)
    p.add_argument("--out", type=Path, help="artifact path (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default=default_format)


def _add_truncation_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-m", dest="max_m", type=int)
    p.add_argument("--max-n", dest="max_n", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="matchq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    cmd_validate = sub.add_parser("validate", help="run the identity suite")
    cmd_exact = sub.add_parser("exact", help="closed-form stationary distribution")
    cmd_oracle = sub.add_parser("oracle", help="truncated-generator stationary solution")
    cmd_simulate = sub.add_parser("simulate", help="seeded stochastic simulation")
    cmd_metrics = sub.add_parser("metrics", help="derived performance measures")
    cmd_sweep = sub.add_parser("sweep", help="flexibility-ratio parameter sweep")

    for cmd in (cmd_validate, cmd_exact, cmd_oracle, cmd_simulate, cmd_metrics, cmd_sweep):
        _add_param_flags(cmd)
    for cmd in (cmd_validate, cmd_exact, cmd_oracle, cmd_simulate, cmd_metrics):
        _add_common_flags(cmd)
    _add_common_flags(cmd_sweep, default_format="csv")
    for cmd in (cmd_exact, cmd_oracle):
        _add_truncation_flags(cmd)

    cmd_simulate.add_argument("--seed", type=int, default=0)
    cmd_simulate.add_argument("--horizon-events", dest="horizon_events", type=int, default=1_000_000)
    cmd_simulate.add_argument("--warmup", type=float, default=0.2)
    cmd_simulate.add_argument("--mode", choices=simulator.MODES, default=simulator.PARSIMONIOUS)
    cmd_simulate.add_argument("--replications", type=int, default=1)

    cmd_sweep.add_argument("--gamma-grid", dest="gamma_grid", required=True,
                           help="comma-separated flexibility ratios in (0,1)")
    cmd_sweep.add_argument("--total-rate", dest="total_rate", type=float,
                           help="total supply arrival rate (default lambda1+lambda2)")
    return parser


def _params_from_args(args) -> NSystemParams:
    values: dict[str, float] = {}
    if args.config is not None:
        values.update(read_params_file(args.config))
    for key in ("lambda1", "lambda2", "mu1", "mu2", "theta_s", "theta_d"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return params_from_dict(values)


def _bounds_from_args(args) -> Truncation | None:
    max_m = getattr(args, "max_m", None)
    max_n = getattr(args, "max_n", None)
    if max_m is None and max_n is None:
        return None
    if max_m is None or max_n is None:
        raise ValueError("--max-m and --max-n must be given together")
    return Truncation(max_m=max_m, max_n=max_n, max_i=max_m, max_j=max_n)


def _emit(args, text: str) -> None:
    if args.out is not None:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)


def _require_json(args) -> None:
    if args.format != "json":
        raise ValueError(f"subcommand {args.command!r} only emits json")


def _cmd_exact(args) -> int:
    _require_json(args)
    params = _params_from_args(args)
    dist = product_form.normalize(params, args.system, args.tol, bounds=_bounds_from_args(args))
    payload = product_form.distribution_to_json_dict(dist)
    payload["tolerance"] = args.tol
    _emit(args, json_dumps(payload))
    return 0


def _build_generator(params, system, bounds, tol):
    if bounds is None:
        bounds = product_form.normalize(params, system, tol).truncation
    if system == ONE_SIDED:
        gen = balance_oracle.build_generator_one_sided(params, bounds.max_m, bounds.max_n)
    else:
        gen = balance_oracle.build_generator_two_sided(params, bounds)
    return gen


def _cmd_oracle(args) -> int:
    _require_json(args)
    params = _params_from_args(args)
    gen = _build_generator(params, args.system, _bounds_from_args(args), args.tol)
    solution = balance_oracle.solve_stationary(gen)
    reference = product_form.normalize(params, args.system, args.tol, bounds=gen.truncation)
    payload = product_form.distribution_to_json_dict(solution)
    payload["tolerance"] = args.tol
    payload["tv_to_product_form"] = balance_oracle.total_variation(solution, reference)
    _emit(args, json_dumps(payload))
    return 0


def _cmd_simulate(args) -> int:
    _require_json(args)
    params = _params_from_args(args)
    cfg = simulator.SimConfig(
        system=args.system,
        mode=args.mode,
        horizon_events=args.horizon_events,
        seed=args.seed,
        warmup_fraction=args.warmup,
    )
    summaries = simulator.run_replications(params, cfg, args.replications)
    pooled = simulator.pooled_occupancy(summaries)

    reference = product_form.normalize(params, args.system, args.tol)
    if args.mode == simulator.PARSIMONIOUS:
        target = reference.probabilities
    elif args.system == ONE_SIDED:
        target = metrics.lump_total_supply(reference)
    else:
        target = metrics.lump_side_counts(reference)
    keys = set(pooled) | set(target)
    tv = 0.5 * sum(abs(pooled.get(k, 0.0) - target.get(k, 0.0)) for k in keys)

    payload = {
        "system": args.system,
        "mode": args.mode,
        "params": params.to_dict(),
        "config": {
            "horizon_events": args.horizon_events,
            "seed": args.seed,
            "warmup_fraction": args.warmup,
            "replications": args.replications,
        },
        "tolerance": args.tol,
        "tv_to_product_form": tv,
        "replications": [simulator.summary_to_json_dict(s) for s in summaries],
    }
    _emit(args, json_dumps(payload))
    return 0


def _cmd_metrics(args) -> int:
    _require_json(args)
    params = _params_from_args(args)
    dist = product_form.normalize(params, args.system, args.tol)
    report = metrics.compute_metrics(params, dist)
    payload = report.to_dict()
    payload["tail_mass_bound"] = dist.tail_mass_bound
    payload["tolerance"] = args.tol
    _emit(args, json_dumps(payload))
    return 0


def _cmd_sweep(args) -> int:
    params = _params_from_args(args)
    try:
        grid = [float(v) for v in args.gamma_grid.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"bad --gamma-grid: {args.gamma_grid!r}") from None
    if not grid:
        raise ValueError("empty --gamma-grid")
    rows = metrics.sweep_flexibility(
        params, grid, fixed_total_supply_rate=args.total_rate,
        system=args.system, tolerance=args.tol,
    )
    if args.format == "csv":
        _emit(args, metrics.sweep_rows_to_csv(rows))
    else:
        _emit(args, json_dumps({"tolerance": args.tol, "rows": rows}))
    return 0


def _validate_checks(params: NSystemParams, system: str, tol: float) -> list[dict]:
    import numpy as np
    from dataclasses import replace

    checks: list[dict] = []

    def add(name: str, residual: float, tolerance: float) -> None:
        checks.append({
            "name": name,
            "residual": float(residual),
            "tolerance": tolerance,
            "passed": bool(residual < tolerance),
        })

    add(
        "partial_balance_m1_50",
        max(product_form.partial_balance_residual(params, m) for m in range(1, 51)),
        1e-10,
    )
    add(
        "revealed_count_recurrence_m100",
        max(product_form.f_recurrence_residual(params, m) for m in range(1, 101)),
        1e-10,
    )
    add(
        "total_count_recursion_m100",
        max(product_form.g_recursion_residual(params, m) for m in range(2, 101)),
        1e-10,
    )
    add(
        "total_count_seed",
        abs(product_form.g_total(params, 1) - product_form.g_seed_closed_form(params))
        / product_form.g_seed_closed_form(params),
        1e-12,
    )
    worst = 0.0
    for m in range(31):
        for n in range(31):
            state = OneSidedState(m, n)
            a = product_form.unnormalized_weight_one_sided(params, state)
            b = product_form.alternative_form_weight(params, state)
            worst = max(worst, abs(a - b) / a)
    add("alternative_form_equivalence", worst, 1e-12)

    dist = product_form.normalize(params, system, tol)
    add("global_balance", product_form.global_balance_residual(params, dist, system), 1e-10)

    reduced = replace(params, theta_s=0.0)
    if stability_check(reduced):
        b0 = product_form.no_reneging_normalizer(reduced)
        worst = 0.0
        for m in range(51):
            for n in range(51):
                state = OneSidedState(m, n)
                got = product_form.unnormalized_weight_one_sided(reduced, state) * b0
                want = product_form.no_reneging_distribution(reduced, state)
                worst = max(worst, abs(got - want) / want)
        add("no_reneging_reduction", worst, 1e-12)
    return checks


def _cmd_validate(args) -> int:
    _require_json(args)
    params = _params_from_args(args)
    if args.system == TWO_SIDED and (params.theta_s <= 0 or params.theta_d <= 0):
        raise DivergenceError("two-sided validation requires theta_s > 0 and theta_d > 0")
    checks = _validate_checks(params, args.system, args.tol)
    passed = all(c["passed"] for c in checks)
    for c in checks:
        sys.stdout.write(
            f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: "
            f"residual={c['residual']:.3e} tolerance={c['tolerance']:.1e}\n"
        )
    payload = {
        "system": args.system,
        "params": params.to_dict(),
        "tolerance": args.tol,
        "passed": passed,
        "checks": checks,
    }
    if args.out is not None:
        args.out.write_text(json_dumps(payload))
    return 0 if passed else 1


_COMMANDS = {
    "exact": _cmd_exact,
    "oracle": _cmd_oracle,
    "simulate": _cmd_simulate,
    "metrics": _cmd_metrics,
    "sweep": _cmd_sweep,
    "validate": _cmd_validate,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError, RuntimeError) as exc:
        sys.stderr.write(json_dumps({"error": str(exc), "type": type(exc).__name__}))
        return 1


def main() -> None:
    raise SystemExit(run())
