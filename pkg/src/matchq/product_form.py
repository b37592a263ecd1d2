"""Closed-form stationary weights of the N-system matching queue.

Every weight is evaluated as a sum of logarithms and exponentiated once;
normalization uses max-shifted log-sum-exp.  Products of sub-unity ratios
would underflow double precision near total counts of a few hundred
otherwise.

The module also exposes the identities behind the closed forms as
checkable residual functions (partial balance, the revealed-count
recurrence, the total-count birth-death recursion) and a certified
geometric bound on the probability mass outside a truncation box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .model import (
    EMPTY,
    ONE_SIDED,
    SYSTEMS,
    TWO_SIDED,
    BothQueues,
    DivergenceError,
    Empty,
    LeftQueue,
    NSystemParams,
    OneSidedState,
    RightQueue,
    StationaryDistribution,
    Truncation,
    TwoSidedState,
    state_sort_key,
    state_to_json,
    stability_check,
    validate,
)

DEFAULT_TOLERANCE = 1e-10

_MIN_BOUND = 2
_START_BOUND = 8


# ---------------------------------------------------------------------------
# revealed-count factor f and total-count factor g


def _ab(params: NSystemParams) -> tuple[float, float]:
    return params.mu2 / params.mu1, params.theta_s / params.mu1


def _log_f(params: NSystemParams, m: int) -> float:
    if m == 0:
        return 0.0
    a, b = _ab(params)
    acc = m * math.log1p(-params.gamma_s) - math.log(a + b)
    for i in range(2, m + 1):
        acc += math.log(1.0 + a + (i - 1) * b) - math.log(a + i * b)
    return acc


def f_known(params: NSystemParams, m: int) -> float:
    """Factor attached to the count of revealed inflexible supplies.

    f(0) = 1 and f satisfies the scan-revelation recurrence
    sum_{k=1..m} f(m-k) (1-gamma_s)^k = f(m) (a + m b) with a = mu2/mu1,
    b = theta_s/mu1.
    """
    if m < 0:
        raise ValueError("m must be non-negative")
    return math.exp(_log_f(params, m))


def _log_g(params: NSystemParams, k: int) -> float:
    lam = params.total_supply_rate
    mu = params.total_demand_rate
    theta = params.theta_s
    return sum(math.log(lam) - math.log(mu + i * theta) for i in range(1, k + 1))


def g_total(params: NSystemParams, k: int) -> float:
    """Factor attached to the total supply count.

    Birth-death weights with birth rate lambda1+lambda2 and death rate
    mu1+mu2+k*theta_s at level k; g(0) = 1.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    return math.exp(_log_g(params, k))


@dataclass(frozen=True)
class FGDecomposition:
    """Tabulated f/g factorization of the one-sided weights."""

    f_values: np.ndarray
    g_values: np.ndarray
    a: float
    b: float


def fg_decomposition(params: NSystemParams, max_m: int, max_k: int) -> FGDecomposition:
    validate(params)
    a, b = _ab(params)
    f = np.array([f_known(params, m) for m in range(max_m + 1)])
    g = np.array([g_total(params, k) for k in range(max_k + 1)])
    return FGDecomposition(f_values=f, g_values=g, a=a, b=b)


def g_seed_closed_form(params: NSystemParams) -> float:
    """Level-one total-count factor solved directly from the empty-state balance."""
    a, b = _ab(params)
    gs = params.gamma_s
    denom = (params.theta_s + params.mu1 * gs + params.mu2) + (1.0 - gs) / (a + b) * (
        params.mu2 + params.theta_s
    )
    return params.total_supply_rate / denom


def f_recurrence_residual(params: NSystemParams, m: int) -> float:
    """Relative defect of the scan-revelation recurrence at depth m."""
    if m < 1:
        raise ValueError("m must be at least 1")
    a, b = _ab(params)
    log1mg = math.log1p(-params.gamma_s)
    lhs_terms = [_log_f(params, m - k) + k * log1mg for k in range(1, m + 1)]
    lhs = logsumexp(lhs_terms)
    rhs = _log_f(params, m) + math.log(a + m * b)
    return abs(math.expm1(lhs - rhs))


def g_recursion_residual(params: NSystemParams, m: int) -> float:
    """Relative defect of the total-count recursion at level m >= 2.

    Checked in ratio form (divided through by g(m-1)) so deep levels do
    not underflow.
    """
    if m < 2:
        raise ValueError("m must be at least 2")
    a, b = _ab(params)
    gs = params.gamma_s
    lam = params.total_supply_rate
    mu = params.total_demand_rate
    theta = params.theta_s

    def ratio(k: int) -> float:  # g(k)/g(k-1)
        return lam / (mu + k * theta)

    denom = (m * theta + params.mu1 * gs + params.mu2) + (1.0 - gs) / (a + b) * (
        params.mu2 + theta
    )
    coeff = mu + lam + (m - 1) * theta
    lhs = ratio(m) * denom + lam / ratio(m - 1)
    return abs(lhs - coeff) / coeff


# ---------------------------------------------------------------------------
# one-sided stationary weights


def _require_one_sided_normalizable(params: NSystemParams) -> None:
    if params.theta_s == 0.0 and not stability_check(params):
        raise DivergenceError(
            "normalizer diverges: without supply reneging the system needs "
            "lambda1 + lambda2 < mu1 + mu2 and lambda2 < mu2"
        )


def _log_weight_one_sided(params: NSystemParams, m: int, n: int) -> float:
    lam = params.total_supply_rate
    mu = params.total_demand_rate
    theta = params.theta_s
    if m == 0:
        return sum(math.log(lam) - math.log(mu + i * theta) for i in range(1, n + 1))
    acc = math.log(params.mu1) - math.log(mu + m * theta)
    for i in range(1, m + 1):
        acc += math.log(params.lambda2) - math.log(params.mu2 + i * theta)
    shift = m * theta
    for i in range(1, n + 1):
        acc += math.log(lam) - math.log(mu + shift + i * theta)
    return acc


def unnormalized_weight_one_sided(params: NSystemParams, state: OneSidedState) -> float:
    """Stationary weight of a one-sided state relative to the empty state."""
    validate(params)
    _require_one_sided_normalizable(params)
    return math.exp(_log_weight_one_sided(params, state.m, state.n))


def alternative_form_weight(params: NSystemParams, state: OneSidedState) -> float:
    """Equivalent factorization of the one-sided weight.

    Total-count factor g(m+n) times the revealed-count factor f(m); must
    agree with :func:`unnormalized_weight_one_sided` for every state.
    """
    validate(params)
    _require_one_sided_normalizable(params)
    m, n = state.m, state.n
    theta = params.theta_s
    log1mg = math.log1p(-params.gamma_s)
    acc = _log_g(params, m + n)
    for i in range(1, m + 1):
        num = params.mu1 + (params.mu2 if i > 1 else 0.0) + (i - 1) * theta
        acc += math.log(num) + log1mg - math.log(params.mu2 + i * theta)
    return math.exp(acc)


def no_reneging_normalizer(params: NSystemParams) -> float:
    """Closed-form empty-state probability when theta_s = 0."""
    lam = params.total_supply_rate
    mu = params.total_demand_rate
    return (mu - lam) * (params.mu2 - params.lambda2) / ((mu - params.lambda2) * params.mu2)


def no_reneging_distribution(params: NSystemParams, state: OneSidedState) -> float:
    """Exact stationary probability of the stable one-sided system without reneging."""
    validate(params)
    if params.theta_s != 0.0:
        raise ValueError("no_reneging_distribution requires theta_s = 0")
    if not stability_check(params):
        raise DivergenceError(
            "normalizer diverges: without supply reneging the system needs "
            "lambda1 + lambda2 < mu1 + mu2 and lambda2 < mu2"
        )
    b = no_reneging_normalizer(params)
    x = params.lambda2 / params.mu2
    y = params.total_supply_rate / params.total_demand_rate
    if state.m == 0:
        return y**state.n * b
    c = params.mu1 / params.total_demand_rate
    return c * x**state.m * y**state.n * b


# ---------------------------------------------------------------------------
# two-sided stationary weights


def _require_two_sided_normalizable(params: NSystemParams) -> None:
    if params.theta_s <= 0.0 or params.theta_d <= 0.0:
        raise DivergenceError(
            "two-sided weights require theta_s > 0 and theta_d > 0"
        )


def _log_weight_both(params: NSystemParams, i: int, j: int) -> float:
    acc = 0.0
    for k in range(1, i + 1):
        acc += math.log(params.lambda2) - math.log(params.mu2 + k * params.theta_s)
    for k in range(1, j + 1):
        acc += math.log(params.mu1) - math.log(params.lambda1 + k * params.theta_d)
    return acc


def unnormalized_weight_two_sided(params: NSystemParams, state: TwoSidedState) -> float:
    """Stationary weight of a two-sided state relative to the empty state."""
    validate(params)
    _require_two_sided_normalizable(params)
    if isinstance(state, Empty):
        return 1.0
    if isinstance(state, LeftQueue):
        return math.exp(_log_weight_one_sided(params, state.m, state.n))
    if isinstance(state, RightQueue):
        return math.exp(_log_weight_one_sided(params.mirrored(), state.m, state.n))
    if isinstance(state, BothQueues):
        return math.exp(_log_weight_both(params, state.i, state.j))
    raise TypeError(f"not a two-sided state: {state!r}")


# ---------------------------------------------------------------------------
# truncation, certified tail bounds, normalization


def _log_weight_grid(params: NSystemParams, max_m: int, max_n: int) -> np.ndarray:
    """log weights for all 0 <= m <= max_m, 0 <= n <= max_n."""
    lam = params.total_supply_rate
    mu = params.total_demand_rate
    theta = params.theta_s
    m = np.arange(max_m + 1)
    logx = np.concatenate(
        ([0.0], np.cumsum(np.log(params.lambda2) - np.log(params.mu2 + theta * m[1:])))
    )
    prefix = np.concatenate(
        ([0.0], np.log(params.mu1) - np.log(mu + theta * m[1:]))
    )
    i = np.arange(1, max_n + 1)
    denom = mu + theta * m[:, None] + theta * i[None, :]
    rowcum = np.concatenate(
        (np.zeros((max_m + 1, 1)), np.cumsum(np.log(lam) - np.log(denom), axis=1)),
        axis=1,
    )
    return (prefix + logx)[:, None] + rowcum


def _one_sided_tail_logs(
    params: NSystemParams, max_m: int, max_n: int, log_grid: np.ndarray
) -> tuple[float, float]:
    """(log of n-direction tail bound, log of m-direction tail bound)."""
    lam = params.total_supply_rate
    mu = params.total_demand_rate
    theta = params.theta_s
    m = np.arange(max_m + 1)

    r = lam / (mu + theta * m + theta * (max_n + 1))
    if np.any(r >= 1.0):
        log_a = math.inf
    else:
        log_a = float(logsumexp(log_grid[:, max_n] + np.log(r) - np.log1p(-r)))

    x = params.lambda2 / (params.mu2 + (max_m + 1) * theta)
    rho = lam / (mu + (max_m + 2) * theta)
    if x >= 1.0 or rho >= 1.0:
        log_c = math.inf
    else:
        log_x_cum = float(log_grid[max_m, 0])
        if max_m >= 1:
            # strip the m-prefix factor to recover the plain product
            log_x_cum -= math.log(params.mu1) - math.log(mu + theta * max_m)
        log_prefix = math.log(params.mu1) - math.log(mu + (max_m + 1) * theta)
        log_c = (
            log_prefix
            + log_x_cum
            + math.log(x)
            - math.log1p(-x)
            - math.log1p(-rho)
        )
    return log_a, log_c


def _grow(bound: int) -> int:
    return int(bound * 1.5) + 1


def _normalize_one_sided(
    params: NSystemParams, tolerance: float, bounds: Truncation | None
) -> StationaryDistribution:
    _require_one_sided_normalizable(params)
    log_tol = math.log(tolerance)

    if bounds is not None:
        max_m = max(bounds.max_m, _MIN_BOUND)
        max_n = max(bounds.max_n, _MIN_BOUND)
        log_grid = _log_weight_grid(params, max_m, max_n)
        log_tail = float(np.logaddexp(*_one_sided_tail_logs(params, max_m, max_n, log_grid)))
    else:
        max_m = max_n = _START_BOUND
        for _ in range(200):
            log_grid = _log_weight_grid(params, max_m, max_n)
            log_total = float(logsumexp(log_grid))
            log_a, log_c = _one_sided_tail_logs(params, max_m, max_n, log_grid)
            log_budget = log_tol + log_total - math.log(2.0)
            if max(log_a, log_c) <= log_budget:
                log_tail = float(np.logaddexp(log_a, log_c))
                break
            if log_a > log_budget:
                max_n = _grow(max_n)
            if log_c > log_budget:
                max_m = _grow(max_m)
        else:
            raise RuntimeError("truncation search did not converge")

    log_total = float(logsumexp(log_grid))
    probs_grid = np.exp(log_grid - log_total)
    probabilities = {
        OneSidedState(m, n): float(probs_grid[m, n])
        for m in range(max_m + 1)
        for n in range(max_n + 1)
    }
    empty = OneSidedState(0, 0)
    return StationaryDistribution(
        system=ONE_SIDED,
        params=params,
        probabilities=probabilities,
        truncation=Truncation(max_m=max_m, max_n=max_n),
        normalizer=probabilities[empty],
        tail_mass_bound=float(math.exp(log_tail - log_total)),
    )


def _both_log_factors(
    params: NSystemParams, max_i: int, max_j: int
) -> tuple[np.ndarray, np.ndarray]:
    i = np.arange(1, max_i + 1)
    j = np.arange(1, max_j + 1)
    log_x = np.cumsum(np.log(params.lambda2) - np.log(params.mu2 + params.theta_s * i))
    log_y = np.cumsum(np.log(params.mu1) - np.log(params.lambda1 + params.theta_d * j))
    return log_x, log_y


def _both_tail_logs(
    params: NSystemParams, max_i: int, max_j: int, log_x: np.ndarray, log_y: np.ndarray
) -> tuple[float, float]:
    u = params.lambda2 / (params.mu2 + (max_i + 1) * params.theta_s)
    v = params.mu1 / (params.lambda1 + (max_j + 1) * params.theta_d)
    log_sx = float(logsumexp(log_x))
    log_sy = float(logsumexp(log_y))
    log_tx = (
        float(log_x[-1]) + math.log(u) - math.log1p(-u) if u < 1.0 else math.inf
    )
    log_ty = (
        float(log_y[-1]) + math.log(v) - math.log1p(-v) if v < 1.0 else math.inf
    )
    # mass with i beyond the box (any j), plus mass with i in the box and j beyond
    tail_i = log_tx + np.logaddexp(log_sy, log_ty) if math.isfinite(log_tx) else math.inf
    tail_j = log_sx + log_ty if math.isfinite(log_ty) else math.inf
    return float(tail_i), float(tail_j)


def _normalize_two_sided(
    params: NSystemParams, tolerance: float, bounds: Truncation | None
) -> StationaryDistribution:
    _require_two_sided_normalizable(params)
    mirrored = params.mirrored()
    log_tol = math.log(tolerance)

    def build(max_m, max_n, max_i, max_j):
        left = _log_weight_grid(params, max_m, max_n)
        right = _log_weight_grid(mirrored, max_m, max_n)
        log_x, log_y = _both_log_factors(params, max_i, max_j)
        both = log_x[:, None] + log_y[None, :]
        mask = np.ones_like(left, dtype=bool)
        mask[0, 0] = False
        log_total = float(
            logsumexp(
                np.concatenate(([0.0], left[mask], right[mask], both.ravel()))
            )
        )
        pieces = (
            *_one_sided_tail_logs(params, max_m, max_n, left),
            *_one_sided_tail_logs(mirrored, max_m, max_n, right),
            *_both_tail_logs(params, max_i, max_j, log_x, log_y),
        )
        return left, right, both, log_total, pieces

    if bounds is not None:
        max_m = max(bounds.max_m, _MIN_BOUND)
        max_n = max(bounds.max_n, _MIN_BOUND)
        max_i = max(bounds.max_i if bounds.max_i is not None else bounds.max_m, 1)
        max_j = max(bounds.max_j if bounds.max_j is not None else bounds.max_n, 1)
        left, right, both, log_total, pieces = build(max_m, max_n, max_i, max_j)
        log_tail = float(logsumexp(list(pieces)))
    else:
        max_m = max_n = max_i = max_j = _START_BOUND
        targets = ("n", "m", "n", "m", "i", "j")
        for _ in range(200):
            left, right, both, log_total, pieces = build(max_m, max_n, max_i, max_j)
            log_budget = log_tol + log_total - math.log(6.0)
            if max(pieces) <= log_budget:
                log_tail = float(logsumexp(list(pieces)))
                break
            grow = {t for t, piece in zip(targets, pieces) if piece > log_budget}
            if "m" in grow:
                max_m = _grow(max_m)
            if "n" in grow:
                max_n = _grow(max_n)
            if "i" in grow:
                max_i = _grow(max_i)
            if "j" in grow:
                max_j = _grow(max_j)
        else:
            raise RuntimeError("truncation search did not converge")

    probabilities: dict[TwoSidedState, float] = {EMPTY: float(math.exp(-log_total))}
    for m in range(max_m + 1):
        for n in range(max_n + 1):
            if m + n == 0:
                continue
            probabilities[LeftQueue(m, n)] = float(math.exp(left[m, n] - log_total))
            probabilities[RightQueue(m, n)] = float(math.exp(right[m, n] - log_total))
    for i in range(1, max_i + 1):
        for j in range(1, max_j + 1):
            probabilities[BothQueues(i, j)] = float(
                math.exp(both[i - 1, j - 1] - log_total)
            )
    return StationaryDistribution(
        system=TWO_SIDED,
        params=params,
        probabilities=probabilities,
        truncation=Truncation(max_m=max_m, max_n=max_n, max_i=max_i, max_j=max_j),
        normalizer=probabilities[EMPTY],
        tail_mass_bound=float(math.exp(log_tail - log_total)),
    )


def normalize(
    params: NSystemParams,
    system: str,
    tolerance: float = DEFAULT_TOLERANCE,
    bounds: Truncation | None = None,
) -> StationaryDistribution:
    """Normalized stationary distribution over a truncated box.

    With ``bounds=None`` the box is grown adaptively until a certified
    geometric bound on the omitted mass drops below ``tolerance`` times
    the included weight.  With explicit ``bounds`` the box is fixed and
    the certified bound for that box is reported as-is.
    """
    validate(params)
    if not (0.0 < tolerance <= 1e-3):
        raise ValueError("tolerance must lie in (0, 1e-3]")
    if system == ONE_SIDED:
        return _normalize_one_sided(params, tolerance, bounds)
    if system == TWO_SIDED:
        return _normalize_two_sided(params, tolerance, bounds)
    raise ValueError(f"system must be one of {SYSTEMS}")


# ---------------------------------------------------------------------------
# balance residuals


def partial_balance_residual(params: NSystemParams, m: int) -> float:
    """Relative defect of the revealed-count partial balance at state (m, 0).

    Flow into (m, 0) from full scan revelations must equal the outflow
    carried by inflexible-supply departures (service plus reneging).
    """
    validate(params)
    if m < 1:
        raise ValueError("m must be at least 1")
    log1mg = math.log1p(-params.gamma_s)
    log_mu1 = math.log(params.mu1)
    lhs_terms = [
        _log_weight_one_sided(params, m - k, k) + log_mu1 + k * log1mg
        for k in range(1, m + 1)
    ]
    lhs = float(logsumexp(lhs_terms))
    rhs = _log_weight_one_sided(params, m, 0) + math.log(
        params.mu2 + params.theta_s * m
    )
    return abs(math.expm1(lhs - rhs))


def _one_sided_residuals(params: NSystemParams, dist: StationaryDistribution, cutoff: float):
    lam = params.total_supply_rate
    mu = params.total_demand_rate
    th = params.theta_s
    gs = params.gamma_s
    mu1, mu2 = params.mu1, params.mu2
    max_m, max_n = dist.truncation.max_m, dist.truncation.max_n

    w = np.zeros((max_m + 1, max_n + 1))
    for state, p in dist.probabilities.items():
        w[state.m, state.n] = p

    for m in range(max_m + 1):
        for n in range(max_n + 1):
            p = w[m, n]
            if p <= cutoff:
                continue
            if m == 0 and n == 0:
                out = p * lam
                inflow = w[0, 1] * (th + mu1 * gs + mu2) + w[1, 0] * (mu2 + th)
            elif m == 0:
                if n + 1 > max_n:
                    continue
                out = p * (mu + lam + n * th)
                inflow = (
                    w[0, n + 1] * ((n + 1) * th + mu1 * gs + mu2)
                    + w[1, n] * (mu2 + th)
                    + w[0, n - 1] * lam
                )
            elif n == 0:
                if m + 1 > max_m or m + 1 > max_n:
                    continue
                out = p * (mu2 + lam + m * th)
                inflow = w[m, 1] * th + w[m + 1, 0] * (mu2 + (m + 1) * th)
                inflow += sum(
                    w[m - k, k + 1] * mu1 * gs * (1 - gs) ** k for k in range(m + 1)
                )
                inflow += sum(
                    w[m - k, k] * mu1 * (1 - gs) ** k for k in range(1, m + 1)
                )
            else:
                if m + 1 > max_m or n + 1 > max_n or m + n + 1 > max_n:
                    continue
                out = p * (mu + lam + (m + n) * th)
                inflow = (
                    w[m, n + 1] * (n + 1) * th
                    + w[m + 1, n] * (mu2 + (m + 1) * th)
                    + w[m, n - 1] * lam
                )
                inflow += sum(
                    w[m - k, n + k + 1] * mu1 * gs * (1 - gs) ** k
                    for k in range(m + 1)
                )
            yield abs(out - inflow) / out


def _two_sided_residuals(params: NSystemParams, dist: StationaryDistribution, cutoff: float):
    lam = params.total_supply_rate
    mu = params.total_demand_rate
    ths, thd = params.theta_s, params.theta_d
    gs, gd = params.gamma_s, params.gamma_d
    l1, l2, mu1, mu2 = params.lambda1, params.lambda2, params.mu1, params.mu2
    t = dist.truncation
    max_m, max_n, max_i, max_j = t.max_m, t.max_n, t.max_i, t.max_j

    e = 0.0
    left = np.zeros((max_m + 1, max_n + 1))
    right = np.zeros((max_m + 1, max_n + 1))
    q = np.zeros((max_i + 1, max_j + 1))
    for state, p in dist.probabilities.items():
        if isinstance(state, Empty):
            e = p
        elif isinstance(state, LeftQueue):
            left[state.m, state.n] = p
        elif isinstance(state, RightQueue):
            right[state.m, state.n] = p
        else:
            q[state.i, state.j] = p

    def queue_residuals(w, th_side, gamma, join, head, scan, cross):
        # join: rate joining the queue; head: rate consuming the queue head;
        # scan: rate of scanning arrivals; cross: q-coupling for (m, 0) rows
        for m in range(max_m + 1):
            for n in range(max_n + 1):
                if m + n == 0:
                    continue
                p = w[m, n]
                if p <= cutoff:
                    continue
                if m == 0:
                    if n + 1 > max_n:
                        continue
                    out = p * (mu + lam + n * th_side)
                    inflow = (
                        w[0, n + 1] * ((n + 1) * th_side + scan * gamma + head)
                        + w[1, n] * (head + th_side)
                        + (w[0, n - 1] if n >= 2 else e) * join
                    )
                elif n == 0:
                    if m + 1 > max_m or m + 1 > max_n or not cross(m):
                        continue
                    out = p * (mu + lam + m * th_side)
                    inflow = (
                        w[m, 1] * th_side
                        + w[m + 1, 0] * (head + (m + 1) * th_side)
                        + cross(m)
                    )
                    inflow += sum(
                        w[m - k, k + 1] * scan * gamma * (1 - gamma) ** k
                        for k in range(m + 1)
                    )
                else:
                    if m + 1 > max_m or n + 1 > max_n or m + n + 1 > max_n:
                        continue
                    out = p * (mu + lam + (m + n) * th_side)
                    inflow = (
                        w[m, n + 1] * (n + 1) * th_side
                        + w[m + 1, n] * (head + (m + 1) * th_side)
                        + w[m, n - 1] * join
                    )
                    inflow += sum(
                        w[m - k, n + k + 1] * scan * gamma * (1 - gamma) ** k
                        for k in range(m + 1)
                    )
                yield abs(out - inflow) / out

    def left_cross(m):
        if m > max_i:
            return None
        return q[m, 1] * (l1 + thd)

    def right_cross(m):
        if m > max_j:
            return None
        return q[1, m] * (mu2 + ths)

    yield from queue_residuals(left, ths, gs, lam, mu2, mu1, left_cross)
    yield from queue_residuals(right, thd, gd, mu, l1, l2, right_cross)

    for i in range(1, max_i + 1):
        for j in range(1, max_j + 1):
            p = q[i, j]
            if p <= cutoff or i + 1 > max_i or j + 1 > max_j:
                continue
            out = p * (i * ths + j * thd + mu + lam)
            inflow = q[i + 1, j] * ((i + 1) * ths + mu2) + q[i, j + 1] * (
                (j + 1) * thd + l1
            )
            if i >= 2 and j >= 2:
                inflow += q[i - 1, j] * l2 + q[i, j - 1] * mu1
            elif i == 1 and j >= 2:
                if j > min(max_m, max_n):
                    continue
                inflow += q[1, j - 1] * mu1
                inflow += sum(
                    right[j - k, k] * l2 * (1 - gd) ** k for k in range(j + 1)
                )
            elif i >= 2 and j == 1:
                if i > min(max_m, max_n):
                    continue
                inflow += q[i - 1, 1] * l2
                inflow += sum(
                    left[i - k, k] * mu1 * (1 - gs) ** k for k in range(i + 1)
                )
            else:  # i == j == 1
                inflow += (
                    right[1, 0] * l2
                    + right[0, 1] * l2 * (1 - gd)
                    + left[1, 0] * mu1
                    + left[0, 1] * mu1 * (1 - gs)
                )
            yield abs(out - inflow) / out

    if e > cutoff:
        out = e * (lam + mu)
        inflow = (
            left[0, 1] * (ths + mu1 * gs + mu2)
            + left[1, 0] * (mu2 + ths)
            + right[1, 0] * (thd + l1)
            + right[0, 1] * (thd + l1 + l2 * gd)
        )
        yield abs(out - inflow) / out


def global_balance_residual(
    params: NSystemParams,
    dist: StationaryDistribution,
    system: str,
    floor: float = 1e-10,
) -> float:
    """Worst relative defect of the equilibrium equations over interior states.

    States whose equation references anything outside the truncation are
    skipped.  So are states carrying less than ``floor`` times the peak
    probability: below that depth a double-precision probability vector
    (in particular a linear-solver output) no longer determines the
    relative residual, because the equations reference neighbors whose
    values sit at the absolute noise floor of the vector.
    """
    validate(params)
    cutoff = floor * max(dist.probabilities.values(), default=0.0)
    if system == ONE_SIDED:
        residuals = _one_sided_residuals(params, dist, cutoff)
    elif system == TWO_SIDED:
        residuals = _two_sided_residuals(params, dist, cutoff)
    else:
        raise ValueError(f"system must be one of {SYSTEMS}")
    return max(residuals, default=0.0)


# ---------------------------------------------------------------------------
# serialization


def distribution_to_json_dict(dist: StationaryDistribution) -> dict:
    states = sorted(dist.probabilities, key=state_sort_key)
    return {
        "system": dist.system,
        "params": dist.params.to_dict(),
        "truncation": dist.truncation.to_dict(),
        "normalizer": dist.normalizer,
        "tail_mass_bound": dist.tail_mass_bound,
        "states": [
            {"state": state_to_json(s), "p": dist.probabilities[s]} for s in states
        ],
    }
