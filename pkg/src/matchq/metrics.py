"""Steady-state performance measures derived from a stationary distribution.

All quantities are deterministic functionals of the distribution and are
cross-validated three ways elsewhere (closed form, generator oracle,
simulation).  Loss probabilities exist only for the one-sided system;
two-sided demand queues instead of being lost.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .model import (
    ONE_SIDED,
    TWO_SIDED,
    BothQueues,
    Empty,
    LeftQueue,
    NSystemParams,
    OneSidedState,
    RightQueue,
    StationaryDistribution,
    validate,
)
from .product_form import DEFAULT_TOLERANCE, normalize

MAX_TAIL_FOR_METRICS = 1e-6

SWEEP_FIELDS = [
    "gamma",
    "lambda1",
    "lambda2",
    "mu1",
    "mu2",
    "theta_s",
    "theta_d",
    "p_empty",
    "mean_supply",
    "mean_demand",
    "abandonment_rate_supply",
    "abandonment_rate_demand",
    "match_throughput",
    "loss_prob_type1_demand",
    "loss_prob_type2_demand",
    "tail_mass_bound",
    "tolerance",
]


@dataclass(frozen=True)
class MetricsReport:
    """Derived steady-state measures; demand-side fields are None one-sided."""

    system: str
    p_empty: float
    mean_supply: float
    abandonment_rate_supply: float
    match_throughput: float
    mean_demand: float | None = None
    abandonment_rate_demand: float | None = None
    loss_prob_type1_demand: float | None = None
    loss_prob_type2_demand: float | None = None

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "p_empty": self.p_empty,
            "mean_supply": self.mean_supply,
            "mean_demand": self.mean_demand,
            "abandonment_rate_supply": self.abandonment_rate_supply,
            "abandonment_rate_demand": self.abandonment_rate_demand,
            "match_throughput": self.match_throughput,
            "loss_prob_type1_demand": self.loss_prob_type1_demand,
            "loss_prob_type2_demand": self.loss_prob_type2_demand,
        }


def compute_metrics(params: NSystemParams, dist: StationaryDistribution) -> MetricsReport:
    """Performance measures of a (well-truncated) stationary distribution.

    The match throughput is computed from the demand side, so the
    supply-side flow balance lambda1 + lambda2 = throughput +
    theta_s * E[supply] stays an independent consistency check.
    """
    validate(params)
    if not dist.tail_mass_bound < MAX_TAIL_FOR_METRICS:
        raise ValueError(
            f"distribution tail mass bound {dist.tail_mass_bound!r} is too large "
            f"for metrics (needs < {MAX_TAIL_FOR_METRICS})"
        )
    if dist.system == ONE_SIDED:
        gs = params.gamma_s
        mean_supply = 0.0
        loss1 = 0.0
        for state, p in dist.probabilities.items():
            mean_supply += (state.m + state.n) * p
            loss1 += p * (1.0 - gs) ** state.n
        loss2 = dist.normalizer
        throughput = params.mu1 * (1.0 - loss1) + params.mu2 * (1.0 - loss2)
        return MetricsReport(
            system=ONE_SIDED,
            p_empty=dist.normalizer,
            mean_supply=mean_supply,
            abandonment_rate_supply=params.theta_s * mean_supply,
            match_throughput=throughput,
            loss_prob_type1_demand=loss1,
            loss_prob_type2_demand=loss2,
        )
    if dist.system != TWO_SIDED:
        raise ValueError(f"unknown system {dist.system!r}")
    mean_supply = 0.0
    mean_demand = 0.0
    for state, p in dist.probabilities.items():
        if isinstance(state, LeftQueue):
            mean_supply += (state.m + state.n) * p
        elif isinstance(state, RightQueue):
            mean_demand += (state.m + state.n) * p
        elif isinstance(state, BothQueues):
            mean_supply += state.i * p
            mean_demand += state.j * p
    throughput = params.total_demand_rate - params.theta_d * mean_demand
    return MetricsReport(
        system=TWO_SIDED,
        p_empty=dist.normalizer,
        mean_supply=mean_supply,
        mean_demand=mean_demand,
        abandonment_rate_supply=params.theta_s * mean_supply,
        abandonment_rate_demand=params.theta_d * mean_demand,
        match_throughput=throughput,
    )


def lump_total_supply(dist: StationaryDistribution) -> dict[int, float]:
    """One-sided distribution of the total in-system supply count."""
    if dist.system != ONE_SIDED:
        raise ValueError("lump_total_supply applies to one-sided distributions")
    out: dict[int, float] = {}
    for state, p in dist.probabilities.items():
        k = state.m + state.n
        out[k] = out.get(k, 0.0) + p
    return {k: out[k] for k in sorted(out)}


def lump_side_counts(dist: StationaryDistribution) -> dict[tuple[int, int], float]:
    """Two-sided distribution of (supply count, demand count) pairs."""
    if dist.system != TWO_SIDED:
        raise ValueError("lump_side_counts applies to two-sided distributions")
    out: dict[tuple[int, int], float] = {}
    for state, p in dist.probabilities.items():
        if isinstance(state, Empty):
            key = (0, 0)
        elif isinstance(state, LeftQueue):
            key = (state.m + state.n, 0)
        elif isinstance(state, RightQueue):
            key = (0, state.m + state.n)
        else:
            key = (state.i, state.j)
        out[key] = out.get(key, 0.0) + p
    return {k: out[k] for k in sorted(out)}


def sweep_flexibility(
    base: NSystemParams,
    gamma_grid: list[float],
    fixed_total_supply_rate: float | None = None,
    system: str = ONE_SIDED,
    tolerance: float = DEFAULT_TOLERANCE,
) -> list[dict]:
    """Re-split the supply arrival rate across a flexibility grid.

    Each grid value gamma sets lambda1 = gamma * total and lambda2 =
    (1 - gamma) * total, recomputes the stationary distribution and the
    metrics, and contributes one row.  Normalization errors of a row
    propagate to the caller.
    """
    validate(base)
    total = fixed_total_supply_rate if fixed_total_supply_rate is not None else base.total_supply_rate
    if total <= 0:
        raise ValueError("total supply rate must be positive")
    rows: list[dict] = []
    for gamma in gamma_grid:
        if not 0.0 < gamma < 1.0:
            raise ValueError("gamma grid values must lie strictly inside (0, 1)")
        params = validate(
            replace(base, lambda1=gamma * total, lambda2=(1.0 - gamma) * total)
        )
        dist = normalize(params, system, tolerance)
        report = compute_metrics(params, dist)
        row = {"gamma": gamma}
        row.update(params.to_dict())
        row.update(report.to_dict())
        del row["system"]
        row["tail_mass_bound"] = dist.tail_mass_bound
        row["tolerance"] = tolerance
        rows.append(row)
    return rows


def sweep_rows_to_csv(rows: list[dict]) -> str:
    from .serialize import csv_text

    return csv_text(SWEEP_FIELDS, rows)
