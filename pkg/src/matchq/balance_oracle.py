"""Truncated-generator oracle for the N-system matching queue.

The generator is assembled directly from the transition structure of the
parsimonious chain (scan revelations included), so its stationary vector
is an independent ground truth for the closed-form weights.  Transitions
that would leave the truncation box are dropped; the truncated chain is a
sub-stochastic approximation whose error is controlled by the certified
tail bound of the normalization routine.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import (
    EMPTY,
    ONE_SIDED,
    TWO_SIDED,
    BothQueues,
    Empty,
    LeftQueue,
    NSystemParams,
    OneSidedState,
    RightQueue,
    StationaryDistribution,
    Truncation,
    state_to_json,
    validate,
)

DIRECT_STATE_LIMIT = 200_000
AUTO_DIRECT_LIMIT = 40_000
DEFAULT_SOLVE_TOL = 1e-12
DEFAULT_POWER_CAP = 10_000_000

# transition type tags; the oracle ignores them, the exact-event simulator
# uses them to attribute event tallies
T_SUPPLY_ARRIVAL = 0
T_DEMAND_ARRIVAL = 1
T_SUPPLY_ABANDON = 2
T_DEMAND_ABANDON = 3
T_MATCH_D1 = 4
T_MATCH_D2 = 5
T_REVEAL = 6
T_ARRIVAL_MATCH_S = 7
T_ARRIVAL_MATCH_D = 8


def transitions_one_sided(
    params: NSystemParams, state: tuple[int, int]
) -> list[tuple[tuple[int, int], float, int]]:
    """Outgoing transitions of the one-sided parsimonious chain.

    Returns (target, rate, type) triples; self-loops (demand arrivals
    that cannot change the state) are omitted.
    """
    m, n = state
    lam = params.total_supply_rate
    theta = params.theta_s
    gs = params.gamma_s
    out: list[tuple[tuple[int, int], float, int]] = [
        ((m, n + 1), lam, T_SUPPLY_ARRIVAL)
    ]
    if n >= 1:
        out.append(((m, n - 1), n * theta, T_SUPPLY_ABANDON))
    if m >= 1:
        out.append(((m - 1, n), m * theta, T_SUPPLY_ABANDON))
        out.append(((m - 1, n), params.mu2, T_MATCH_D2))
    elif n >= 1:
        out.append(((0, n - 1), params.mu2, T_MATCH_D2))
    if n >= 1:
        fail = 1.0
        for k in range(n):
            out.append(((m + k, n - k - 1), params.mu1 * gs * fail, T_MATCH_D1))
            fail *= 1.0 - gs
        out.append(((m + n, 0), params.mu1 * fail, T_REVEAL))
    return [(target, rate, kind) for target, rate, kind in out if rate > 0.0]


def transitions_two_sided(
    params: NSystemParams, state: tuple
) -> list[tuple[tuple, float, int]]:
    """Outgoing transitions of the two-sided chain over tagged tuples.

    States are ('E',), ('L', m, n), ('R', m, n) and ('B', i, j).
    """
    lam = params.total_supply_rate
    mu = params.total_demand_rate
    ths, thd = params.theta_s, params.theta_d
    out: list[tuple[tuple, float, int]] = []
    tag = state[0]

    if tag == "E":
        out.append((("L", 0, 1), lam, T_SUPPLY_ARRIVAL))
        out.append((("R", 0, 1), mu, T_DEMAND_ARRIVAL))
        return out

    def left(m: int, n: int) -> tuple:
        return ("E",) if m + n == 0 else ("L", m, n)

    def right(m: int, n: int) -> tuple:
        return ("E",) if m + n == 0 else ("R", m, n)

    if tag == "L":
        _, m, n = state
        gs = params.gamma_s
        out.append((("L", m, n + 1), lam, T_SUPPLY_ARRIVAL))
        if n >= 1:
            out.append((left(m, n - 1), n * ths, T_SUPPLY_ABANDON))
        if m >= 1:
            out.append((left(m - 1, n), m * ths, T_SUPPLY_ABANDON))
            out.append((left(m - 1, n), params.mu2, T_ARRIVAL_MATCH_D))
        else:
            out.append((left(0, n - 1), params.mu2, T_ARRIVAL_MATCH_D))
        fail = 1.0
        for k in range(n):
            out.append((left(m + k, n - k - 1), params.mu1 * gs * fail, T_ARRIVAL_MATCH_D))
            fail *= 1.0 - gs
        out.append((("B", m + n, 1), params.mu1 * fail, T_DEMAND_ARRIVAL))
    elif tag == "R":
        _, m, n = state
        gd = params.gamma_d
        out.append((("R", m, n + 1), mu, T_DEMAND_ARRIVAL))
        if n >= 1:
            out.append((right(m, n - 1), n * thd, T_DEMAND_ABANDON))
        if m >= 1:
            out.append((right(m - 1, n), m * thd, T_DEMAND_ABANDON))
            out.append((right(m - 1, n), params.lambda1, T_ARRIVAL_MATCH_S))
        else:
            out.append((right(0, n - 1), params.lambda1, T_ARRIVAL_MATCH_S))
        fail = 1.0
        for k in range(n):
            out.append(
                (right(m + k, n - k - 1), params.lambda2 * gd * fail, T_ARRIVAL_MATCH_S)
            )
            fail *= 1.0 - gd
        out.append((("B", 1, m + n), params.lambda2 * fail, T_SUPPLY_ARRIVAL))
    elif tag == "B":
        _, i, j = state
        out.append((("B", i + 1, j), params.lambda2, T_SUPPLY_ARRIVAL))
        out.append((("B", i, j + 1), params.mu1, T_DEMAND_ARRIVAL))
        down_i = ("B", i - 1, j) if i >= 2 else ("R", j, 0)
        out.append((down_i, i * ths, T_SUPPLY_ABANDON))
        out.append((down_i, params.mu2, T_ARRIVAL_MATCH_D))
        down_j = ("B", i, j - 1) if j >= 2 else ("L", i, 0)
        out.append((down_j, j * thd, T_DEMAND_ABANDON))
        out.append((down_j, params.lambda1, T_ARRIVAL_MATCH_S))
    else:
        raise ValueError(f"unknown state tag: {state!r}")
    return [(target, rate, kind) for target, rate, kind in out if rate > 0.0]


@dataclass
class TruncatedGenerator:
    """Rate matrix of the chain restricted to a finite box."""

    system: str
    params: NSystemParams
    truncation: Truncation
    states: list
    index: dict
    rates: list[tuple[int, int, float]]
    exit_rates: np.ndarray

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def empty_index(self) -> int:
        key = OneSidedState(0, 0) if self.system == ONE_SIDED else EMPTY
        return self.index[key]


def _assemble(system, params, truncation, states, index, raw_transitions):
    combined: dict[tuple[int, int], float] = {}
    exit_rates = np.zeros(len(states))
    for src, transitions in raw_transitions:
        i = index[src]
        for target, rate in transitions:
            j = index.get(target)
            if j is None or j == i:
                continue
            combined[(i, j)] = combined.get((i, j), 0.0) + rate
            exit_rates[i] += rate
    rates = [(i, j, r) for (i, j), r in sorted(combined.items())]
    return TruncatedGenerator(
        system=system,
        params=params,
        truncation=truncation,
        states=states,
        index=index,
        rates=rates,
        exit_rates=exit_rates,
    )


def build_generator_one_sided(
    params: NSystemParams, max_m: int, max_n: int
) -> TruncatedGenerator:
    """Generator of the one-sided chain on the box m <= max_m, n <= max_n."""
    validate(params)
    if max_m < 2 or max_n < 2:
        raise ValueError("truncation bounds must be at least 2")
    states = [OneSidedState(m, n) for m in range(max_m + 1) for n in range(max_n + 1)]
    index = {s: i for i, s in enumerate(states)}
    raw = (
        (s, [(OneSidedState(*t), r) for t, r, _ in transitions_one_sided(params, (s.m, s.n))])
        for s in states
    )
    return _assemble(
        ONE_SIDED, params, Truncation(max_m=max_m, max_n=max_n), states, index, raw
    )


def _two_sided_state_object(t: tuple):
    if t[0] == "E":
        return EMPTY
    if t[0] == "L":
        return LeftQueue(t[1], t[2])
    if t[0] == "R":
        return RightQueue(t[1], t[2])
    return BothQueues(t[1], t[2])


def _two_sided_tuple(state) -> tuple:
    if isinstance(state, Empty):
        return ("E",)
    if isinstance(state, LeftQueue):
        return ("L", state.m, state.n)
    if isinstance(state, RightQueue):
        return ("R", state.m, state.n)
    return ("B", state.i, state.j)


def build_generator_two_sided(
    params: NSystemParams, bounds: Truncation
) -> TruncatedGenerator:
    """Generator of the two-sided chain on the given regime boxes."""
    validate(params)
    max_i = bounds.max_i if bounds.max_i is not None else bounds.max_m
    max_j = bounds.max_j if bounds.max_j is not None else bounds.max_n
    if min(bounds.max_m, bounds.max_n, max_i, max_j) < 2:
        raise ValueError("truncation bounds must be at least 2")
    truncation = Truncation(bounds.max_m, bounds.max_n, max_i, max_j)
    states: list = [EMPTY]
    for m in range(bounds.max_m + 1):
        for n in range(bounds.max_n + 1):
            if m + n > 0:
                states.append(LeftQueue(m, n))
    for m in range(bounds.max_m + 1):
        for n in range(bounds.max_n + 1):
            if m + n > 0:
                states.append(RightQueue(m, n))
    for i in range(1, max_i + 1):
        for j in range(1, max_j + 1):
            states.append(BothQueues(i, j))
    index = {s: i for i, s in enumerate(states)}
    raw = (
        (
            s,
            [
                (_two_sided_state_object(t), r)
                for t, r, _ in transitions_two_sided(params, _two_sided_tuple(s))
            ],
        )
        for s in states
    )
    return _assemble(TWO_SIDED, params, truncation, states, index, raw)


def check_irreducible(gen: TruncatedGenerator) -> bool:
    """Reachability from the empty state in both edge directions."""
    n = gen.n_states
    fwd: list[list[int]] = [[] for _ in range(n)]
    bwd: list[list[int]] = [[] for _ in range(n)]
    for i, j, _ in gen.rates:
        fwd[i].append(j)
        bwd[j].append(i)

    def full_reach(adj) -> bool:
        seen = bytearray(n)
        start = gen.empty_index
        seen[start] = 1
        queue = deque([start])
        count = 1
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = 1
                    count += 1
                    queue.append(v)
        return count == n

    return full_reach(fwd) and full_reach(bwd)


def _generator_matrix(gen: TruncatedGenerator) -> sp.csr_matrix:
    n = gen.n_states
    rows = [i for i, _, _ in gen.rates]
    cols = [j for _, j, _ in gen.rates]
    vals = [r for _, _, r in gen.rates]
    rows += list(range(n))
    cols += list(range(n))
    vals += list(-gen.exit_rates)
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def _solve_direct(gen: TruncatedGenerator, q: sp.csr_matrix) -> np.ndarray:
    n = gen.n_states
    if n > DIRECT_STATE_LIMIT:
        raise ValueError(
            f"direct solve limited to {DIRECT_STATE_LIMIT} states, got {n}"
        )
    k = gen.empty_index
    qt = q.T.tocoo()
    keep = qt.row != k
    rows = np.concatenate((qt.row[keep], np.full(n, k)))
    cols = np.concatenate((qt.col[keep], np.arange(n)))
    vals = np.concatenate((qt.data[keep], np.ones(n)))
    a = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()
    b = np.zeros(n)
    b[k] = 1.0
    x = spla.spsolve(a, b)
    return x


def _solve_power(
    gen: TruncatedGenerator, q: sp.csr_matrix, tol: float, cap: int
) -> np.ndarray:
    n = gen.n_states
    rate = 1.01 * float(gen.exit_rates.max())
    pt = (sp.identity(n, format="csr") + q / rate).T.tocsr()
    x = np.full(n, 1.0 / n)
    for _ in range(cap):
        y = pt @ x
        diff = float(np.max(np.abs(y - x)))
        x = y
        if diff < tol and rate * diff < 5.0 * tol * float(np.max(np.abs(x))):
            return x
    raise RuntimeError(f"power iteration did not converge within {cap} steps")


def solve_stationary(
    gen: TruncatedGenerator,
    method: str = "auto",
    tol: float = DEFAULT_SOLVE_TOL,
    max_iterations: int = DEFAULT_POWER_CAP,
) -> StationaryDistribution:
    """Stationary vector of the truncated chain.

    ``direct`` replaces one balance equation by the normalization and
    solves the sparse linear system; ``power`` iterates the uniformized
    transition matrix.  ``auto`` picks direct below 40k states.
    """
    if method == "auto":
        method = "direct" if gen.n_states <= AUTO_DIRECT_LIMIT else "power"
    if method not in ("direct", "power"):
        raise ValueError("method must be 'direct', 'power' or 'auto'")
    if not check_irreducible(gen):
        raise ValueError("truncated generator is not irreducible")
    q = _generator_matrix(gen)
    if method == "direct":
        x = _solve_direct(gen, q)
    else:
        x = _solve_power(gen, q, tol, max_iterations)

    floor = -1e-9 * float(np.max(np.abs(x)))
    if float(x.min()) < floor:
        raise RuntimeError("stationary solve produced significantly negative mass")
    x = np.clip(x, 0.0, None)
    x /= x.sum()
    residual = float(np.max(np.abs(x @ q))) / float(np.max(np.abs(x)))
    if residual >= 10.0 * tol:
        raise RuntimeError(
            f"stationary residual {residual:.3e} exceeds 10*tol = {10 * tol:.3e}"
        )
    probabilities = {s: float(p) for s, p in zip(gen.states, x)}
    return StationaryDistribution(
        system=gen.system,
        params=gen.params,
        probabilities=probabilities,
        truncation=gen.truncation,
        normalizer=probabilities[gen.states[gen.empty_index]],
        tail_mass_bound=0.0,
    )


def total_variation(
    d1: StationaryDistribution, d2: StationaryDistribution
) -> float:
    """Half the L1 distance; states missing on one side count as zero."""
    keys = set(d1.probabilities) | set(d2.probabilities)
    return 0.5 * sum(
        abs(d1.probabilities.get(k, 0.0) - d2.probabilities.get(k, 0.0)) for k in keys
    )


def write_generator_csv(gen: TruncatedGenerator, path: str | Path) -> Path:
    """Dump the rate triples as ``from,to,rate`` CSV plus a JSON state header."""
    from .serialize import fmt_float

    path = Path(path)
    lines = ["from,to,rate"]
    lines += [f"{i},{j},{fmt_float(r)}" for i, j, r in gen.rates]
    path.write_text("\n".join(lines) + "\n")
    header = {
        "system": gen.system,
        "params": gen.params.to_dict(),
        "truncation": gen.truncation.to_dict(),
        "states": [state_to_json(s) for s in gen.states],
    }
    sidecar = path.with_suffix(path.suffix + ".states.json")
    sidecar.write_text(json.dumps(header, indent=2) + "\n")
    return sidecar
