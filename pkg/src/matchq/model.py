"""Parameter and state types for the N-system matching queue.

The N-system has two supply types (flexible supply serves both demand
types, inflexible supply serves only type-2 demand) and two demand types.
Waiting units abandon after exponential patience.  All types here are
immutable value objects and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

ONE_SIDED = "one-sided"
TWO_SIDED = "two-sided"
SYSTEMS = (ONE_SIDED, TWO_SIDED)

PARAM_KEYS = ("lambda1", "lambda2", "mu1", "mu2", "theta_s", "theta_d")


class DivergenceError(ValueError):
    """Raised when a normalizing constant does not exist (divergent weight sum)."""


@dataclass(frozen=True)
class NSystemParams:
    """Arrival, service-side and reneging rates of the N-system.

    lambda1/lambda2 are flexible/inflexible supply arrival rates, mu1/mu2
    type-1/type-2 demand arrival rates, theta_s/theta_d per-unit reneging
    rates on the supply/demand side.  theta_d only matters when demand
    queues (two-sided system).
    """

    lambda1: float
    lambda2: float
    mu1: float
    mu2: float
    theta_s: float = 0.0
    theta_d: float = 0.0

    @property
    def gamma_s(self) -> float:
        """Probability that an arriving supply unit is flexible."""
        return self.lambda1 / (self.lambda1 + self.lambda2)

    @property
    def gamma_d(self) -> float:
        """Probability that an arriving demand unit is type 2."""
        return self.mu2 / (self.mu1 + self.mu2)

    @property
    def total_supply_rate(self) -> float:
        return self.lambda1 + self.lambda2

    @property
    def total_demand_rate(self) -> float:
        return self.mu1 + self.mu2

    def mirrored(self) -> "NSystemParams":
        """Parameters of the demand side re-read as a supply side.

        The universal matcher on the demand side is type-2 demand (any
        supply can serve it) and the restricted type is type-1 demand, so
        the role map is (lambda1, lambda2, mu1, mu2, theta_s) ->
        (mu2, mu1, lambda2, lambda1, theta_d).
        """
        return NSystemParams(
            lambda1=self.mu2,
            lambda2=self.mu1,
            mu1=self.lambda2,
            mu2=self.lambda1,
            theta_s=self.theta_d,
            theta_d=self.theta_s,
        )

    def to_dict(self) -> dict[str, float]:
        return {k: float(getattr(self, k)) for k in PARAM_KEYS}


def validate(params: NSystemParams) -> NSystemParams:
    """Return ``params`` unchanged if all rate invariants hold.

    Raises ValueError naming the offending field otherwise.
    """
    for name in ("lambda1", "lambda2", "mu1", "mu2"):
        value = getattr(params, name)
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite")
        if value <= 0:
            raise ValueError(f"{name} must be positive")
    for name in ("theta_s", "theta_d"):
        value = getattr(params, name)
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite")
        if value < 0:
            raise ValueError(f"{name} must be non-negative")
    return params


def stability_check(params: NSystemParams) -> bool:
    """Raw stability condition of the one-sided system without reneging.

    True iff lambda1 + lambda2 < mu1 + mu2 and lambda2 < mu2.  Only
    decisive for theta_s = 0; with reneging the system is stable anyway.
    The raw condition is reported regardless of theta_s.
    """
    return (
        params.lambda1 + params.lambda2 < params.mu1 + params.mu2
        and params.lambda2 < params.mu2
    )


@dataclass(frozen=True, order=True)
class OneSidedState:
    """Parsimonious supply-queue state.

    ``m`` counts revealed inflexible supplies at the head of the queue,
    ``n`` counts tail supplies whose type is still unknown (each is
    flexible with probability gamma_s, independently).
    """

    m: int
    n: int

    def __post_init__(self) -> None:
        if self.m < 0 or self.n < 0:
            raise ValueError("state counts must be non-negative")

    @property
    def total(self) -> int:
        return self.m + self.n


@dataclass(frozen=True, order=True)
class Empty:
    """Two-sided system with nobody waiting on either side."""


@dataclass(frozen=True, order=True)
class LeftQueue:
    """Supply waiting, demand side empty: m revealed inflexible + n unknown."""

    m: int
    n: int

    def __post_init__(self) -> None:
        if self.m < 0 or self.n < 0:
            raise ValueError("state counts must be non-negative")
        if self.m + self.n == 0:
            raise ValueError("LeftQueue requires at least one waiting unit; use Empty")


@dataclass(frozen=True, order=True)
class RightQueue:
    """Demand waiting, supply side empty: m revealed type-1 + n unknown."""

    m: int
    n: int

    def __post_init__(self) -> None:
        if self.m < 0 or self.n < 0:
            raise ValueError("state counts must be non-negative")
        if self.m + self.n == 0:
            raise ValueError("RightQueue requires at least one waiting unit; use Empty")


@dataclass(frozen=True, order=True)
class BothQueues:
    """Incompatible units on both sides: i inflexible supplies, j type-1 demands."""

    i: int
    j: int

    def __post_init__(self) -> None:
        if self.i < 1 or self.j < 1:
            raise ValueError("BothQueues requires positive counts on both sides")


TwoSidedState = Empty | LeftQueue | RightQueue | BothQueues
State = OneSidedState | TwoSidedState

EMPTY = Empty()


def state_to_json(state: State) -> list:
    """JSON-serializable tag/count list for a state."""
    if isinstance(state, OneSidedState):
        return [state.m, state.n]
    if isinstance(state, Empty):
        return ["empty"]
    if isinstance(state, LeftQueue):
        return ["left", state.m, state.n]
    if isinstance(state, RightQueue):
        return ["right", state.m, state.n]
    if isinstance(state, BothQueues):
        return ["both", state.i, state.j]
    raise TypeError(f"not a state: {state!r}")


def state_sort_key(state: State) -> tuple:
    """Lexicographic key over the JSON form; gives byte-stable orderings."""
    return tuple(state_to_json(state))


@dataclass(frozen=True)
class Truncation:
    """Box bounds of a truncated state space.

    ``max_m``/``max_n`` bound the (m, n) coordinates of queue states (both
    left and right regimes in the two-sided system); ``max_i``/``max_j``
    bound the two BothQueues coordinates and are unused one-sided.
    """

    max_m: int
    max_n: int
    max_i: int | None = None
    max_j: int | None = None

    def to_dict(self) -> dict[str, int]:
        out = {"max_m": self.max_m, "max_n": self.max_n}
        if self.max_i is not None:
            out["max_i"] = self.max_i
        if self.max_j is not None:
            out["max_j"] = self.max_j
        return out


@dataclass(frozen=True)
class StationaryDistribution:
    """Truncated stationary distribution with normalization metadata.

    ``probabilities`` sums to one over the truncated box; ``normalizer``
    is the probability of the empty state; ``tail_mass_bound`` is a
    certified upper bound on the probability mass the truncation omitted
    (relative to the full, untruncated normalization).
    """

    system: str
    params: NSystemParams
    probabilities: dict
    truncation: Truncation
    normalizer: float
    tail_mass_bound: float

    def probability(self, state: State) -> float:
        return self.probabilities.get(state, 0.0)


def parse_params_text(text: str) -> dict[str, float]:
    """Parse ``key = value`` parameter lines; ``#`` starts a comment."""
    values: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in PARAM_KEYS:
            raise ValueError(f"line {lineno}: unknown parameter {key!r}")
        try:
            values[key] = float(val.strip())
        except ValueError:
            raise ValueError(f"line {lineno}: bad number for {key}: {val.strip()!r}") from None
    return values


def read_params_file(path: str | Path) -> dict[str, float]:
    return parse_params_text(Path(path).read_text())


def params_from_dict(values: dict[str, float]) -> NSystemParams:
    """Build validated params from a key-value mapping; thetas default to 0."""
    missing = [k for k in ("lambda1", "lambda2", "mu1", "mu2") if k not in values]
    if missing:
        raise ValueError(f"missing parameters: {', '.join(missing)}")
    return validate(
        NSystemParams(
            lambda1=values["lambda1"],
            lambda2=values["lambda2"],
            mu1=values["mu1"],
            mu2=values["mu2"],
            theta_s=values.get("theta_s", 0.0),
            theta_d=values.get("theta_d", 0.0),
        )
    )
