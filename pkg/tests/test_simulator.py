import math

import pytest

from matchq import (
    ONE_SIDED,
    TWO_SIDED,
    BothQueues,
    NSystemParams,
    OneSidedState,
    SimConfig,
    build_generator_one_sided,
    normalize,
    pooled_occupancy,
    run_replications,
    simulate,
    simulate_parsimonious,
    simulate_physical,
)
from matchq.metrics import lump_side_counts, lump_total_supply
from matchq.serialize import json_dumps
from matchq.simulator import summary_to_json_dict

REF = NSystemParams(1.0, 1.0, 2.0, 2.0, theta_s=1.0)
TWO = NSystemParams(1.0, 1.0, 2.0, 2.0, theta_s=1.0, theta_d=0.7)


def tv(occupancy: dict, target: dict) -> float:
    keys = set(occupancy) | set(target)
    return 0.5 * sum(abs(occupancy.get(k, 0.0) - target.get(k, 0.0)) for k in keys)


def supply_conservation_defect(ev: dict) -> int:
    return ev["supply_arrivals"] - (
        ev["matches"] + ev["supply_abandonments"] + ev["final_supply_in_system"]
    )


def demand_conservation_defect(ev: dict) -> int:
    return ev["demand_arrivals"] - (
        ev["matches"] + ev["demand_abandonments"] + ev["final_demand_in_system"]
    )


class TestConfigValidation:
    def test_requires_exactly_one_horizon(self):
        with pytest.raises(ValueError):
            simulate(REF, SimConfig(system=ONE_SIDED))
        with pytest.raises(ValueError):
            simulate(REF, SimConfig(horizon_events=10, horizon_time=1.0))

    def test_warmup_range(self):
        with pytest.raises(ValueError):
            simulate(REF, SimConfig(horizon_events=10, warmup_fraction=1.0))

    def test_parsimonious_needs_reneging(self):
        with pytest.raises(ValueError, match="theta_s > 0"):
            simulate_parsimonious(NSystemParams(1, 1, 2, 2), SimConfig(horizon_events=10))
        with pytest.raises(ValueError, match="theta_d > 0"):
            simulate_parsimonious(
                NSystemParams(1, 1, 2, 2, theta_s=1.0),
                SimConfig(system=TWO_SIDED, horizon_events=10),
            )


class TestDeterminism:
    @pytest.mark.parametrize("mode", ["parsimonious", "physical"])
    @pytest.mark.parametrize("system", [ONE_SIDED, TWO_SIDED])
    def test_identical_runs_are_byte_identical(self, system, mode):
        params = TWO if system == TWO_SIDED else REF
        cfg = SimConfig(system=system, mode=mode, horizon_events=20_000, seed=99)
        s1 = simulate(params, cfg)
        s2 = simulate(params, cfg)
        assert s1 == s2
        assert json_dumps(summary_to_json_dict(s1)) == json_dumps(summary_to_json_dict(s2))

    def test_different_seeds_differ(self):
        cfg_a = SimConfig(horizon_events=5_000, seed=1)
        cfg_b = SimConfig(horizon_events=5_000, seed=2)
        assert simulate(REF, cfg_a) != simulate(REF, cfg_b)


PARS_CFG = SimConfig(system=ONE_SIDED, mode="parsimonious", horizon_events=400_000, seed=11)


@pytest.fixture(scope="module")
def parsimonious_summary():
    return simulate_parsimonious(REF, PARS_CFG)


class TestParsimoniousOneSided:
    CFG = PARS_CFG

    @pytest.fixture()
    def summary(self, parsimonious_summary):
        return parsimonious_summary

    def test_occupancy_normalized(self, summary):
        assert abs(sum(summary.occupancy.values()) - 1.0) < 1e-9

    def test_flow_conservation_exact(self, summary):
        ev = summary.events
        assert supply_conservation_defect(ev) == 0
        assert ev["matches"] == ev["matches_demand1"] + ev["matches_demand2"]

    def test_agrees_with_product_form(self, summary):
        dist = normalize(REF, ONE_SIDED, 1e-10)
        assert tv(summary.occupancy, dist.probabilities) < 0.02

    def test_empty_state_within_three_se(self, summary):
        dist = normalize(REF, ONE_SIDED, 1e-10)
        state = OneSidedState(0, 0)
        halfwidth = 3.0 * summary.occupancy_se[state]
        assert abs(summary.occupancy[state] - dist.normalizer) < halfwidth

    def test_warmup_window(self, summary):
        expected = (1.0 - self.CFG.warmup_fraction) * summary.elapsed
        assert summary.measured == pytest.approx(expected, rel=1e-12)

    def test_exit_rates_converge(self, summary):
        gen = build_generator_one_sided(REF, 30, 30)
        top = sorted(summary.state_visits, key=summary.state_visits.get, reverse=True)[:10]
        for state in top:
            visits = summary.state_visits[state]
            time_in_state = summary.occupancy[state] * summary.measured
            empirical = visits / time_in_state
            exact = gen.exit_rates[gen.index[state]]
            assert abs(empirical - exact) / exact < 0.05

    def test_time_budget_horizon(self):
        cfg = SimConfig(horizon_time=2_000.0, seed=4, warmup_fraction=0.1)
        summary = simulate_parsimonious(REF, cfg)
        assert summary.elapsed == pytest.approx(2_000.0)
        assert abs(sum(summary.occupancy.values()) - 1.0) < 1e-9


PHYS_CFG = SimConfig(system=ONE_SIDED, mode="physical", horizon_events=400_000, seed=23)


@pytest.fixture(scope="module")
def physical_summary():
    return simulate_physical(REF, PHYS_CFG)


class TestPhysicalOneSided:
    CFG = PHYS_CFG

    @pytest.fixture()
    def summary(self, physical_summary):
        return physical_summary

    def test_flow_conservation_exact(self, summary):
        ev = summary.events
        assert supply_conservation_defect(ev) == 0
        # demand units never queue one-sided: arrivals = matches + losses
        demand_in = ev["demand_arrivals_type1"] + ev["demand_arrivals_type2"]
        demand_out = ev["matches"] + ev["demand_lost_type1"] + ev["demand_lost_type2"]
        assert demand_in == demand_out

    def test_total_count_matches_lumped_product_form(self, summary):
        lump = lump_total_supply(normalize(REF, ONE_SIDED, 1e-10))
        assert tv(summary.occupancy, lump) < 0.02

    def test_match_type_split(self, summary):
        ev = summary.events
        assert ev["matches"] == (
            ev["matches_flexible_demand1"]
            + ev["matches_flexible_demand2"]
            + ev["matches_inflexible_demand2"]
        )

    def test_no_reneging_runs(self):
        p = NSystemParams(1, 1, 2, 2, theta_s=0.0)
        summary = simulate_physical(p, SimConfig(mode="physical", horizon_events=50_000, seed=3))
        assert summary.events["supply_abandonments"] == 0
        assert supply_conservation_defect(summary.events) == 0


@pytest.fixture(scope="module")
def two_sided_parsimonious():
    cfg = SimConfig(system=TWO_SIDED, mode="parsimonious", horizon_events=400_000, seed=31)
    return simulate_parsimonious(TWO, cfg)


@pytest.fixture(scope="module")
def two_sided_physical():
    cfg = SimConfig(system=TWO_SIDED, mode="physical", horizon_events=400_000, seed=37)
    return simulate_physical(TWO, cfg)


class TestTwoSided:
    @pytest.fixture()
    def parsimonious(self, two_sided_parsimonious):
        return two_sided_parsimonious

    @pytest.fixture()
    def physical(self, two_sided_physical):
        return two_sided_physical

    def test_conservation_both_sides(self, parsimonious, physical):
        for summary in (parsimonious, physical):
            assert supply_conservation_defect(summary.events) == 0
            assert demand_conservation_defect(summary.events) == 0

    def test_parsimonious_agrees_with_product_form(self, parsimonious):
        dist = normalize(TWO, TWO_SIDED, 1e-10)
        assert tv(parsimonious.occupancy, dist.probabilities) < 0.02

    def test_physical_agrees_with_lumped_product_form(self, physical):
        lump = lump_side_counts(normalize(TWO, TWO_SIDED, 1e-10))
        assert tv(physical.occupancy, lump) < 0.02

    def test_both_sides_nonempty_fraction(self, physical):
        dist = normalize(TWO, TWO_SIDED, 1e-10)
        target = sum(p for s, p in dist.probabilities.items() if isinstance(s, BothQueues))
        got = sum(f for key, f in physical.occupancy.items() if key[0] > 0 and key[1] > 0)
        allowance = 3.0 * sum(
            se for key, se in physical.occupancy_se.items() if key[0] > 0 and key[1] > 0
        )
        assert abs(got - target) < max(allowance, 0.01)


class TestReplications:
    def test_replications_are_independent_and_deterministic(self):
        cfg = SimConfig(horizon_events=5_000, seed=77)
        batch1 = run_replications(REF, cfg, 3)
        batch2 = run_replications(REF, cfg, 3)
        assert batch1 == batch2
        assert batch1[0] != batch1[1]
        # first replication of a batch is the plain single run
        assert batch1[0] == simulate_parsimonious(REF, cfg)

    def test_pooled_occupancy_normalized(self):
        cfg = SimConfig(horizon_events=5_000, seed=77)
        pooled = pooled_occupancy(run_replications(REF, cfg, 4))
        assert abs(sum(pooled.values()) - 1.0) < 1e-9
