"""Seeded simulation of the N-system matching queue.

Two modes:

* ``parsimonious`` samples the exact continuous-time chain over the
  parsimonious states (holding times from the total exit rate, next state
  proportional to rates, scan outcomes via the geometric split).
* ``physical`` is a discrete-event simulation of the real system: typed
  agents wait in FCFS queues, each with its own exponential patience
  deadline sampled at arrival; the next event is the earliest of the next
  arrival and the earliest deadline.

Randomness comes from PCG64; run ``r`` of a replication batch draws from
``SeedSequence([seed, r])`` (a single run is replication 0), and
exponential variates are produced by inverse CDF from a single uniform
stream consumed in event order, so identical configurations reproduce
byte-identical summaries.  Occupancy is time-weighted over the window
that remains after discarding the warmup fraction of total simulated
time; the event trajectory is buffered at 13 bytes per event to make the
time cut exact.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from heapq import heappop, heappush
from itertools import accumulate

import numpy as np

from . import balance_oracle as _chain
from .model import (
    EMPTY,
    ONE_SIDED,
    SYSTEMS,
    TWO_SIDED,
    BothQueues,
    LeftQueue,
    NSystemParams,
    OneSidedState,
    RightQueue,
    state_to_json,
    validate,
)

PARSIMONIOUS = "parsimonious"
PHYSICAL = "physical"
MODES = (PARSIMONIOUS, PHYSICAL)

_BLOCK = 1 << 16

# physical-mode event tags sharing the numbering of the chain transitions
_T_LOST_D1 = 9
_T_LOST_D2 = 10
_T_MATCH_S1D1 = 11
_T_MATCH_S1D2 = 12
_T_MATCH_S2D2 = 13

_EVENT_KEYS = {
    (ONE_SIDED, PARSIMONIOUS): {
        _chain.T_SUPPLY_ARRIVAL: ("supply_arrivals",),
        _chain.T_SUPPLY_ABANDON: ("supply_abandonments",),
        _chain.T_MATCH_D1: ("matches", "matches_demand1"),
        _chain.T_MATCH_D2: ("matches", "matches_demand2"),
        _chain.T_REVEAL: ("demand1_scan_failures",),
    },
    (TWO_SIDED, PARSIMONIOUS): {
        _chain.T_SUPPLY_ARRIVAL: ("supply_arrivals",),
        _chain.T_DEMAND_ARRIVAL: ("demand_arrivals",),
        _chain.T_SUPPLY_ABANDON: ("supply_abandonments",),
        _chain.T_DEMAND_ABANDON: ("demand_abandonments",),
        _chain.T_ARRIVAL_MATCH_S: ("supply_arrivals", "matches"),
        _chain.T_ARRIVAL_MATCH_D: ("demand_arrivals", "matches"),
    },
    (ONE_SIDED, PHYSICAL): {
        _chain.T_SUPPLY_ARRIVAL: ("supply_arrivals",),
        _chain.T_SUPPLY_ABANDON: ("supply_abandonments",),
        _T_MATCH_S1D1: ("matches", "matches_flexible_demand1"),
        _T_MATCH_S1D2: ("matches", "matches_flexible_demand2"),
        _T_MATCH_S2D2: ("matches", "matches_inflexible_demand2"),
        _T_LOST_D1: ("demand_lost_type1",),
        _T_LOST_D2: ("demand_lost_type2",),
    },
    (TWO_SIDED, PHYSICAL): {
        _chain.T_SUPPLY_ARRIVAL: ("supply_arrivals",),
        _chain.T_DEMAND_ARRIVAL: ("demand_arrivals",),
        _chain.T_SUPPLY_ABANDON: ("supply_abandonments",),
        _chain.T_DEMAND_ABANDON: ("demand_abandonments",),
        _T_MATCH_S1D1: ("matches", "matches_flexible_demand1"),
        _T_MATCH_S1D2: ("matches", "matches_flexible_demand2"),
        _T_MATCH_S2D2: ("matches", "matches_inflexible_demand2"),
    },
}


@dataclass(frozen=True)
class SimConfig:
    """Run configuration: horizon is an event count or a time budget."""

    system: str = ONE_SIDED
    mode: str = PARSIMONIOUS
    horizon_events: int | None = None
    horizon_time: float | None = None
    seed: int = 0
    warmup_fraction: float = 0.2


def _check_config(cfg: SimConfig) -> None:
    if cfg.system not in SYSTEMS:
        raise ValueError(f"system must be one of {SYSTEMS}")
    if cfg.mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if (cfg.horizon_events is None) == (cfg.horizon_time is None):
        raise ValueError("exactly one of horizon_events and horizon_time is required")
    if cfg.horizon_events is not None and cfg.horizon_events <= 0:
        raise ValueError("horizon_events must be positive")
    if cfg.horizon_time is not None and cfg.horizon_time <= 0:
        raise ValueError("horizon_time must be positive")
    if not 0.0 <= cfg.warmup_fraction < 1.0:
        raise ValueError("warmup_fraction must lie in [0, 1)")


@dataclass(frozen=True)
class SimulationSummary:
    """Empirical occupancy and event tallies of one seeded run.

    ``occupancy`` maps states (parsimonious) or in-system counts
    (physical: supply total one-sided, (supply, demand) pair two-sided)
    to post-warmup time fractions.  ``events`` holds whole-run tallies
    plus the final in-system counts, so per-side flow conservation is an
    exact integer identity.  Standard errors come from batch means over
    the post-warmup window.
    """

    system: str
    mode: str
    occupancy: dict
    occupancy_se: dict
    state_visits: dict
    events: dict[str, int]
    event_rates: dict[str, float]
    event_rate_se: dict[str, float]
    elapsed: float
    measured: float


class _Buffer:
    """Growable (state index, holding time, event tag) trajectory."""

    def __init__(self) -> None:
        self.cap = 1 << 16
        self.state = np.empty(self.cap, np.int32)
        self.dt = np.empty(self.cap, np.float64)
        self.tag = np.empty(self.cap, np.uint8)
        self.n = 0

    def grow(self) -> None:
        self.cap *= 2
        self.state = np.concatenate((self.state, np.empty(self.state.size, np.int32)))
        self.dt = np.concatenate((self.dt, np.empty(self.dt.size, np.float64)))
        self.tag = np.concatenate((self.tag, np.empty(self.tag.size, np.uint8)))


def _summarize(
    system: str,
    mode: str,
    buf: _Buffer,
    catalog: list,
    warmup_fraction: float,
    final_counts: dict[str, int],
) -> SimulationSummary:
    n = buf.n
    state = buf.state[:n]
    dt = buf.dt[:n]
    tag = buf.tag[:n]
    k = len(catalog)

    elapsed = float(dt.sum())
    cum = np.cumsum(dt)
    cut_time = warmup_fraction * elapsed
    cut = int(np.searchsorted(cum, cut_time, side="left"))
    measured = elapsed - cut_time

    occ_time = np.bincount(state[cut + 1 :], weights=dt[cut + 1 :], minlength=k)
    occ_time[state[cut]] += cum[cut] - cut_time
    fractions = occ_time / measured
    visits = np.bincount(state[cut:], minlength=k)

    key_map = _EVENT_KEYS[(system, mode)]
    events: dict[str, int] = {}
    whole_counts = np.bincount(tag, minlength=16)
    for t, keys in key_map.items():
        for key in keys:
            events[key] = events.get(key, 0) + int(whole_counts[t])
    events.update(final_counts)

    post = slice(cut, n)
    post_counts = np.bincount(tag[post], minlength=16)
    rates: dict[str, float] = {}
    for t, keys in key_map.items():
        for key in keys:
            rates[key] = rates.get(key, 0.0) + float(post_counts[t]) / measured

    n_post = n - cut
    n_batches = max(1, min(50, n_post // 200))
    edges = cut + (np.arange(n_batches + 1) * n_post) // n_batches
    frac_batches = np.zeros((n_batches, k))
    rate_batches: dict[str, np.ndarray] = {key: np.zeros(n_batches) for key in rates}
    for b in range(n_batches):
        seg = slice(edges[b], edges[b + 1])
        seg_time = float(dt[seg].sum())
        if seg_time <= 0.0:
            continue
        frac_batches[b] = np.bincount(state[seg], weights=dt[seg], minlength=k) / seg_time
        seg_counts = np.bincount(tag[seg], minlength=16)
        for t, keys in key_map.items():
            for key in keys:
                rate_batches[key][b] += float(seg_counts[t]) / seg_time
    if n_batches > 1:
        frac_se = frac_batches.std(axis=0, ddof=1) / math.sqrt(n_batches)
        rate_se = {
            key: float(vals.std(ddof=1)) / math.sqrt(n_batches)
            for key, vals in rate_batches.items()
        }
    else:
        frac_se = np.zeros(k)
        rate_se = {key: 0.0 for key in rates}

    order = sorted(range(k), key=lambda i: _sort_key(catalog[i]))
    occupancy = {catalog[i]: float(fractions[i]) for i in order}
    occupancy_se = {catalog[i]: float(frac_se[i]) for i in order}
    state_visits = {catalog[i]: int(visits[i]) for i in order}
    return SimulationSummary(
        system=system,
        mode=mode,
        occupancy=occupancy,
        occupancy_se=occupancy_se,
        state_visits=state_visits,
        events=dict(sorted(events.items())),
        event_rates={key: rates[key] for key in sorted(rates)},
        event_rate_se={key: rate_se[key] for key in sorted(rate_se)},
        elapsed=elapsed,
        measured=measured,
    )


def _sort_key(key):
    if isinstance(key, int):
        return (key,)
    if isinstance(key, tuple):
        return key
    return tuple(state_to_json(key))


def _rng_for(seed: int, replication: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, replication])))


# ---------------------------------------------------------------------------
# parsimonious mode


def _parsimonious_catalog_key(system: str, state: tuple):
    if system == ONE_SIDED:
        return OneSidedState(state[0], state[1])
    if state[0] == "E":
        return EMPTY
    if state[0] == "L":
        return LeftQueue(state[1], state[2])
    if state[0] == "R":
        return RightQueue(state[1], state[2])
    return BothQueues(state[1], state[2])


def _final_counts_parsimonious(system: str, state: tuple) -> dict[str, int]:
    if system == ONE_SIDED:
        return {"final_supply_in_system": state[0] + state[1]}
    tag = state[0]
    if tag == "E":
        supply = demand = 0
    elif tag == "L":
        supply, demand = state[1] + state[2], 0
    elif tag == "R":
        supply, demand = 0, state[1] + state[2]
    else:
        supply, demand = state[1], state[2]
    return {"final_supply_in_system": supply, "final_demand_in_system": demand}


def _run_parsimonious(params: NSystemParams, cfg: SimConfig, replication: int) -> SimulationSummary:
    if cfg.system == ONE_SIDED:
        if params.theta_s <= 0.0:
            raise ValueError("parsimonious one-sided simulation requires theta_s > 0")
        enumerate_transitions = _chain.transitions_one_sided
        start: tuple = (0, 0)
    else:
        if params.theta_s <= 0.0 or params.theta_d <= 0.0:
            raise ValueError(
                "parsimonious two-sided simulation requires theta_s > 0 and theta_d > 0"
            )
        enumerate_transitions = _chain.transitions_two_sided
        start = ("E",)

    rng = _rng_for(cfg.seed, replication)
    ubuf = rng.random(_BLOCK)
    ui = 0
    buf = _Buffer()
    catalog: list = []
    table: dict[tuple, tuple] = {}

    def entry_for(state: tuple) -> tuple:
        transitions = enumerate_transitions(params, state)
        total = sum(rate for _, rate, _ in transitions)
        cum = list(accumulate(rate / total for _, rate, _ in transitions))
        cum[-1] = 1.0
        targets = [t for t, _, _ in transitions]
        tags = [kind for _, _, kind in transitions]
        idx = len(catalog)
        catalog.append(_parsimonious_catalog_key(cfg.system, state))
        return (total, cum, targets, tags, idx)

    state = start
    entry = table.get(state)
    if entry is None:
        entry = entry_for(state)
        table[state] = entry
    log1p = math.log1p
    horizon_events = cfg.horizon_events
    horizon_time = cfg.horizon_time
    t = 0.0
    ev = 0
    while True:
        if horizon_events is not None and ev >= horizon_events:
            break
        total, cum, targets, tags, sidx = entry
        u = ubuf[ui]
        ui += 1
        if ui == _BLOCK:
            ubuf = rng.random(_BLOCK)
            ui = 0
        dt = -log1p(-u) / total
        if horizon_time is not None and t + dt >= horizon_time:
            if buf.n == buf.cap:
                buf.grow()
            buf.state[buf.n] = sidx
            buf.dt[buf.n] = horizon_time - t
            buf.tag[buf.n] = 15  # truncated final holding, no event fired
            buf.n += 1
            break
        u = ubuf[ui]
        ui += 1
        if ui == _BLOCK:
            ubuf = rng.random(_BLOCK)
            ui = 0
        j = bisect_right(cum, u)
        if j == len(cum):
            j -= 1
        if buf.n == buf.cap:
            buf.grow()
        buf.state[buf.n] = sidx
        buf.dt[buf.n] = dt
        buf.tag[buf.n] = tags[j]
        buf.n += 1
        t += dt
        ev += 1
        state = targets[j]
        entry = table.get(state)
        if entry is None:
            entry = entry_for(state)
            table[state] = entry

    return _summarize(
        cfg.system,
        PARSIMONIOUS,
        buf,
        catalog,
        cfg.warmup_fraction,
        _final_counts_parsimonious(cfg.system, state),
    )


def simulate_parsimonious(params: NSystemParams, cfg: SimConfig) -> SimulationSummary:
    """Exact event-by-event simulation of the parsimonious chain."""
    validate(params)
    _check_config(cfg)
    return _run_parsimonious(params, cfg, replication=0)


# ---------------------------------------------------------------------------
# physical mode


class _AgentQueue:
    """FCFS queue of agents with lazy removal of matched/expired entries."""

    __slots__ = ("items", "head")

    def __init__(self) -> None:
        self.items: list = []
        self.head = 0

    def push(self, record: list) -> None:
        self.items.append(record)

    def peek(self):
        items = self.items
        head = self.head
        while head < len(items) and not items[head][2]:
            head += 1
        self.head = head
        if head == len(items):
            if items:
                del items[:]
                self.head = 0
            return None
        return items[head]

    def pop(self) -> None:
        self.head += 1
        if self.head > 512 and self.head * 2 > len(self.items):
            del self.items[: self.head]
            self.head = 0


def _run_physical_one_sided(params: NSystemParams, cfg: SimConfig, replication: int) -> SimulationSummary:
    lam = params.total_supply_rate
    mu = params.total_demand_rate
    gs = params.gamma_s
    p_d2 = params.gamma_d
    theta = params.theta_s

    rng = _rng_for(cfg.seed, replication)
    ubuf = rng.random(_BLOCK)
    ui = 0

    def unif() -> float:
        nonlocal ubuf, ui
        u = ubuf[ui]
        ui += 1
        if ui == _BLOCK:
            ubuf = rng.random(_BLOCK)
            ui = 0
        return u

    log1p = math.log1p
    flex = _AgentQueue()
    inflex = _AgentQueue()
    heap: list = []
    n_wait = 0
    seq = 0
    t = 0.0
    next_s = -log1p(-unif()) / lam
    next_d = -log1p(-unif()) / mu

    buf = _Buffer()
    catalog: list[int] = []
    level_index: dict[int, int] = {}
    events = {
        "supply_arrivals": 0,
        "supply_arrivals_flexible": 0,
        "supply_arrivals_inflexible": 0,
        "demand_arrivals_type1": 0,
        "demand_arrivals_type2": 0,
        "matches": 0,
        "matches_flexible_demand1": 0,
        "matches_flexible_demand2": 0,
        "matches_inflexible_demand2": 0,
        "demand_lost_type1": 0,
        "demand_lost_type2": 0,
        "supply_abandonments": 0,
    }

    def record(dt: float, tag: int) -> None:
        idx = level_index.get(n_wait)
        if idx is None:
            idx = len(catalog)
            level_index[n_wait] = idx
            catalog.append(n_wait)
        if buf.n == buf.cap:
            buf.grow()
        buf.state[buf.n] = idx
        buf.dt[buf.n] = dt
        buf.tag[buf.n] = tag
        buf.n += 1

    horizon = cfg.horizon_events
    horizon_time = cfg.horizon_time
    ev = 0
    while True:
        if horizon is not None and ev >= horizon:
            break
        top = heap[0] if heap else None
        while top is not None and not top[2][2]:
            heappop(heap)
            top = heap[0] if heap else None
        t_ab = top[0] if top is not None else math.inf
        t_next = min(next_s, next_d, t_ab)
        if horizon_time is not None and t_next >= horizon_time:
            record(horizon_time - t, 15)
            break

        if next_s <= next_d and next_s <= t_ab:
            record(next_s - t, _chain.T_SUPPLY_ARRIVAL)
            t = next_s
            next_s = t - log1p(-unif()) / lam
            flexible = unif() < gs
            deadline = t - log1p(-unif()) / theta if theta > 0.0 else math.inf
            rec = [deadline, seq, True]
            seq += 1
            (flex if flexible else inflex).push(rec)
            if deadline < math.inf:
                heappush(heap, (deadline, rec[1], rec))
            n_wait += 1
            events["supply_arrivals"] += 1
            events["supply_arrivals_flexible" if flexible else "supply_arrivals_inflexible"] += 1
        elif next_d <= t_ab:
            dt = next_d - t
            t = next_d
            next_d = t - log1p(-unif()) / mu
            type2 = unif() < p_d2
            f_head = flex.peek()
            if type2:
                events["demand_arrivals_type2"] += 1
                i_head = inflex.peek()
                pick = None
                if f_head is not None and (i_head is None or f_head[1] < i_head[1]):
                    pick, queue, key = f_head, flex, "matches_flexible_demand2"
                elif i_head is not None:
                    pick, queue, key = i_head, inflex, "matches_inflexible_demand2"
                if pick is None:
                    record(dt, _T_LOST_D2)
                    events["demand_lost_type2"] += 1
                else:
                    tag = _T_MATCH_S1D2 if queue is flex else _T_MATCH_S2D2
                    record(dt, tag)
                    pick[2] = False
                    queue.pop()
                    n_wait -= 1
                    events["matches"] += 1
                    events[key] += 1
            else:
                events["demand_arrivals_type1"] += 1
                if f_head is None:
                    record(dt, _T_LOST_D1)
                    events["demand_lost_type1"] += 1
                else:
                    record(dt, _T_MATCH_S1D1)
                    f_head[2] = False
                    flex.pop()
                    n_wait -= 1
                    events["matches"] += 1
                    events["matches_flexible_demand1"] += 1
        else:
            record(t_ab - t, _chain.T_SUPPLY_ABANDON)
            t = t_ab
            rec = heappop(heap)[2]
            rec[2] = False
            n_wait -= 1
            events["supply_abandonments"] += 1
        ev += 1

    events["final_supply_in_system"] = n_wait
    final = {"final_supply_in_system": n_wait}
    summary = _summarize(ONE_SIDED, PHYSICAL, buf, catalog, cfg.warmup_fraction, final)
    # the in-loop tallies carry the per-type detail the trajectory tags lack
    merged = dict(summary.events)
    merged.update({k: v for k, v in events.items()})
    merged = dict(sorted(merged.items()))
    return SimulationSummary(
        system=summary.system,
        mode=summary.mode,
        occupancy=summary.occupancy,
        occupancy_se=summary.occupancy_se,
        state_visits=summary.state_visits,
        events=merged,
        event_rates=summary.event_rates,
        event_rate_se=summary.event_rate_se,
        elapsed=summary.elapsed,
        measured=summary.measured,
    )


def _run_physical_two_sided(params: NSystemParams, cfg: SimConfig, replication: int) -> SimulationSummary:
    lam = params.total_supply_rate
    mu = params.total_demand_rate
    gs = params.gamma_s
    p_d2 = params.gamma_d
    ths, thd = params.theta_s, params.theta_d

    rng = _rng_for(cfg.seed, replication)
    ubuf = rng.random(_BLOCK)
    ui = 0

    def unif() -> float:
        nonlocal ubuf, ui
        u = ubuf[ui]
        ui += 1
        if ui == _BLOCK:
            ubuf = rng.random(_BLOCK)
            ui = 0
        return u

    log1p = math.log1p
    # record = [deadline, seq, alive, kind]; kinds index _COUNTS below
    K_SF, K_SI, K_D1, K_D2 = 0, 1, 2, 3
    queues = {K_SF: _AgentQueue(), K_SI: _AgentQueue(), K_D1: _AgentQueue(), K_D2: _AgentQueue()}
    counts = [0, 0, 0, 0]
    s_heap: list = []
    d_heap: list = []
    seq = 0
    t = 0.0
    next_s = -log1p(-unif()) / lam
    next_d = -log1p(-unif()) / mu

    buf = _Buffer()
    catalog: list[tuple[int, int]] = []
    pair_index: dict[tuple[int, int], int] = {}
    events = {
        "supply_arrivals": 0,
        "supply_arrivals_flexible": 0,
        "supply_arrivals_inflexible": 0,
        "demand_arrivals": 0,
        "demand_arrivals_type1": 0,
        "demand_arrivals_type2": 0,
        "matches": 0,
        "matches_flexible_demand1": 0,
        "matches_flexible_demand2": 0,
        "matches_inflexible_demand2": 0,
        "supply_abandonments": 0,
        "demand_abandonments": 0,
    }

    def record(dt: float, tag: int) -> None:
        pair = (counts[K_SF] + counts[K_SI], counts[K_D1] + counts[K_D2])
        idx = pair_index.get(pair)
        if idx is None:
            idx = len(catalog)
            pair_index[pair] = idx
            catalog.append(pair)
        if buf.n == buf.cap:
            buf.grow()
        buf.state[buf.n] = idx
        buf.dt[buf.n] = dt
        buf.tag[buf.n] = tag
        buf.n += 1

    def oldest(kind_a: int, kind_b: int):
        a, b = queues[kind_a].peek(), queues[kind_b].peek()
        if a is not None and (b is None or a[1] < b[1]):
            return a
        return b

    def consume(rec: list, match_key: str, tag: int, dt: float) -> None:
        record(dt, tag)
        rec[2] = False
        kind = rec[3]
        queues[kind].pop()
        counts[kind] -= 1
        events["matches"] += 1
        events[match_key] += 1

    def enqueue(kind: int, deadline: float, heap: list) -> None:
        nonlocal seq
        rec = [deadline, seq, True, kind]
        seq += 1
        queues[kind].push(rec)
        if deadline < math.inf:
            heappush(heap, (deadline, rec[1], rec))
        counts[kind] += 1

    def check_no_compatible_pair() -> None:
        supply = counts[K_SF] + counts[K_SI]
        demand = counts[K_D1] + counts[K_D2]
        assert not (
            (counts[K_SF] > 0 and demand > 0) or (supply > 0 and counts[K_D2] > 0)
        ), "compatible pair left waiting after an event"

    horizon = cfg.horizon_events
    horizon_time = cfg.horizon_time
    ev = 0
    while True:
        if horizon is not None and ev >= horizon:
            break
        top_s = s_heap[0] if s_heap else None
        while top_s is not None and not top_s[2][2]:
            heappop(s_heap)
            top_s = s_heap[0] if s_heap else None
        top_d = d_heap[0] if d_heap else None
        while top_d is not None and not top_d[2][2]:
            heappop(d_heap)
            top_d = d_heap[0] if d_heap else None
        t_abs = top_s[0] if top_s is not None else math.inf
        t_abd = top_d[0] if top_d is not None else math.inf
        t_next = min(next_s, next_d, t_abs, t_abd)
        if horizon_time is not None and t_next >= horizon_time:
            record(horizon_time - t, 15)
            break

        if t_next == next_s:
            dt = next_s - t
            t = next_s
            next_s = t - log1p(-unif()) / lam
            flexible = unif() < gs
            events["supply_arrivals"] += 1
            events["supply_arrivals_flexible" if flexible else "supply_arrivals_inflexible"] += 1
            pick = oldest(K_D1, K_D2) if flexible else queues[K_D2].peek()
            if pick is not None:
                if pick[3] == K_D1:
                    consume(pick, "matches_flexible_demand1", _T_MATCH_S1D1, dt)
                elif flexible:
                    consume(pick, "matches_flexible_demand2", _T_MATCH_S1D2, dt)
                else:
                    consume(pick, "matches_inflexible_demand2", _T_MATCH_S2D2, dt)
            else:
                record(dt, _chain.T_SUPPLY_ARRIVAL)
                deadline = t - log1p(-unif()) / ths if ths > 0.0 else math.inf
                enqueue(K_SF if flexible else K_SI, deadline, s_heap)
        elif t_next == next_d:
            dt = next_d - t
            t = next_d
            next_d = t - log1p(-unif()) / mu
            type2 = unif() < p_d2
            events["demand_arrivals"] += 1
            events["demand_arrivals_type2" if type2 else "demand_arrivals_type1"] += 1
            pick = oldest(K_SF, K_SI) if type2 else queues[K_SF].peek()
            if pick is not None:
                if not type2:
                    consume(pick, "matches_flexible_demand1", _T_MATCH_S1D1, dt)
                elif pick[3] == K_SF:
                    consume(pick, "matches_flexible_demand2", _T_MATCH_S1D2, dt)
                else:
                    consume(pick, "matches_inflexible_demand2", _T_MATCH_S2D2, dt)
            else:
                record(dt, _chain.T_DEMAND_ARRIVAL)
                deadline = t - log1p(-unif()) / thd if thd > 0.0 else math.inf
                enqueue(K_D2 if type2 else K_D1, deadline, d_heap)
        elif t_abs <= t_abd:
            record(t_abs - t, _chain.T_SUPPLY_ABANDON)
            t = t_abs
            rec = heappop(s_heap)[2]
            rec[2] = False
            counts[rec[3]] -= 1
            events["supply_abandonments"] += 1
        else:
            record(t_abd - t, _chain.T_DEMAND_ABANDON)
            t = t_abd
            rec = heappop(d_heap)[2]
            rec[2] = False
            counts[rec[3]] -= 1
            events["demand_abandonments"] += 1
        check_no_compatible_pair()
        ev += 1

    final = {
        "final_supply_in_system": counts[K_SF] + counts[K_SI],
        "final_demand_in_system": counts[K_D1] + counts[K_D2],
    }
    summary = _summarize(TWO_SIDED, PHYSICAL, buf, catalog, cfg.warmup_fraction, final)
    merged = dict(summary.events)
    merged.update(events)
    merged.update(final)
    merged = dict(sorted(merged.items()))
    return SimulationSummary(
        system=summary.system,
        mode=summary.mode,
        occupancy=summary.occupancy,
        occupancy_se=summary.occupancy_se,
        state_visits=summary.state_visits,
        events=merged,
        event_rates=summary.event_rates,
        event_rate_se=summary.event_rate_se,
        elapsed=summary.elapsed,
        measured=summary.measured,
    )


def simulate_physical(params: NSystemParams, cfg: SimConfig) -> SimulationSummary:
    """Discrete-event simulation of the physical FCFS matching system."""
    validate(params)
    _check_config(cfg)
    if cfg.system == ONE_SIDED:
        return _run_physical_one_sided(params, cfg, replication=0)
    return _run_physical_two_sided(params, cfg, replication=0)


def simulate(params: NSystemParams, cfg: SimConfig, replication: int = 0) -> SimulationSummary:
    """Run one replication in the mode selected by the configuration."""
    validate(params)
    _check_config(cfg)
    if cfg.mode == PARSIMONIOUS:
        return _run_parsimonious(params, cfg, replication)
    if cfg.system == ONE_SIDED:
        return _run_physical_one_sided(params, cfg, replication)
    return _run_physical_two_sided(params, cfg, replication)


def run_replications(
    params: NSystemParams, cfg: SimConfig, replications: int
) -> list[SimulationSummary]:
    """Independent replications; run r draws from SeedSequence([seed, r])."""
    if replications < 1:
        raise ValueError("replications must be at least 1")
    return [simulate(params, cfg, replication=r) for r in range(replications)]


def pooled_occupancy(summaries: list[SimulationSummary]) -> dict:
    """Time-weighted pooling of post-warmup occupancy across replications."""
    total = sum(s.measured for s in summaries)
    pooled: dict = {}
    for s in summaries:
        for key, fraction in s.occupancy.items():
            pooled[key] = pooled.get(key, 0.0) + fraction * s.measured / total
    return {key: pooled[key] for key in sorted(pooled, key=_sort_key)}


def _occupancy_key_json(key):
    if isinstance(key, int):
        return [key]
    if isinstance(key, tuple):
        return list(key)
    return state_to_json(key)


def summary_to_json_dict(summary: SimulationSummary) -> dict:
    occupancy = [
        {
            "state": _occupancy_key_json(key),
            "fraction": summary.occupancy[key],
            "se": summary.occupancy_se[key],
            "visits": summary.state_visits[key],
        }
        for key in summary.occupancy
    ]
    return {
        "system": summary.system,
        "mode": summary.mode,
        "elapsed": summary.elapsed,
        "measured": summary.measured,
        "events": summary.events,
        "event_rates": summary.event_rates,
        "event_rate_se": summary.event_rate_se,
        "occupancy": occupancy,
    }
