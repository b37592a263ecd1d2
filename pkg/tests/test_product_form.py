import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import params_with_reneging, random_params
from matchq import (
    EMPTY,
    ONE_SIDED,
    TWO_SIDED,
    BothQueues,
    DivergenceError,
    LeftQueue,
    NSystemParams,
    OneSidedState,
    RightQueue,
    Truncation,
    alternative_form_weight,
    f_known,
    fg_decomposition,
    g_total,
    global_balance_residual,
    no_reneging_distribution,
    normalize,
    partial_balance_residual,
    unnormalized_weight_one_sided,
    unnormalized_weight_two_sided,
)
from matchq.product_form import (
    distribution_to_json_dict,
    f_recurrence_residual,
    g_recursion_residual,
    g_seed_closed_form,
    no_reneging_normalizer,
)

REF = NSystemParams(1.0, 1.0, 2.0, 2.0, theta_s=1.0)
REF0 = NSystemParams(1.0, 1.0, 2.0, 2.0, theta_s=0.0)


class TestRevealedCountFactor:
    def test_base_value(self):
        assert f_known(REF, 0) == 1.0

    def test_first_level(self):
        # (1 - gamma_s) / (a + b) with gamma_s = 1/2, a = 1, b = 1/2
        assert f_known(REF, 1) == pytest.approx(1.0 / 3.0, rel=1e-14)

    def test_second_level_frozen(self):
        # recurrence: f(1)(1-gs) + (1-gs)^2 = f(2)(a + 2b) => f(2) = 5/24
        assert f_known(REF, 2) == pytest.approx(5.0 / 24.0, rel=1e-13)

    @given(params_with_reneging, st.integers(min_value=1, max_value=60))
    def test_recurrence_holds(self, p, m):
        assert f_recurrence_residual(p, m) < 1e-11


class TestTotalCountFactor:
    def test_base_and_first_levels(self):
        assert g_total(REF, 0) == 1.0
        assert g_total(REF, 1) == pytest.approx(0.4, rel=1e-15)
        assert g_total(REF, 2) == pytest.approx(2.0 / 15.0, rel=1e-14)

    def test_geometric_without_reneging(self):
        assert g_total(REF0, 3) == pytest.approx(0.125, rel=1e-14)

    def test_seed_matches_closed_form(self):
        for p in random_params(8):
            seed = g_seed_closed_form(p)
            assert abs(g_total(p, 1) - seed) / seed < 1e-12

    def test_recursion_holds_deep(self):
        for p in random_params(5):
            worst = max(g_recursion_residual(p, m) for m in range(2, 101))
            assert worst < 1e-10


class TestDecomposition:
    def test_tabulation_invariants(self):
        fg = fg_decomposition(REF, 20, 20)
        assert fg.f_values[0] == 1.0 and fg.g_values[0] == 1.0
        assert fg.a == pytest.approx(1.0) and fg.b == pytest.approx(0.5)
        lam, mu, th = REF.total_supply_rate, REF.total_demand_rate, REF.theta_s
        for k in range(1, 21):
            assert fg.g_values[k] == pytest.approx(
                fg.g_values[k - 1] * lam / (mu + k * th), rel=1e-13
            )

    def test_weight_factorizes(self):
        fg = fg_decomposition(REF, 10, 20)
        for m in range(6):
            for n in range(6):
                w = unnormalized_weight_one_sided(REF, OneSidedState(m, n))
                assert w == pytest.approx(fg.f_values[m] * fg.g_values[m + n], rel=1e-12)


class TestOneSidedWeights:
    def test_empty_state(self):
        assert unnormalized_weight_one_sided(REF, OneSidedState(0, 0)) == 1.0

    @pytest.mark.parametrize(
        "state, expected",
        [
            (OneSidedState(0, 1), 2.0 / 5.0),
            (OneSidedState(1, 0), 2.0 / 15.0),
            (OneSidedState(1, 1), 2.0 / 45.0),
            (OneSidedState(2, 0), 1.0 / 36.0),
        ],
    )
    def test_frozen_values(self, state, expected):
        assert unnormalized_weight_one_sided(REF, state) == pytest.approx(expected, rel=1e-14)

    def test_rejects_unstable_without_reneging(self):
        with pytest.raises(DivergenceError):
            unnormalized_weight_one_sided(NSystemParams(3, 1, 2, 2), OneSidedState(0, 0))

    def test_alternative_form_frozen_value(self):
        assert alternative_form_weight(REF, OneSidedState(1, 0)) == pytest.approx(
            2.0 / 15.0, rel=1e-14
        )

    def test_alternative_form_equivalence_exhaustive(self):
        for p in [REF, *random_params(5)]:
            for m in range(0, 31):
                for n in range(0, 31):
                    s = OneSidedState(m, n)
                    a = unnormalized_weight_one_sided(p, s)
                    b = alternative_form_weight(p, s)
                    assert abs(a - b) / a < 1e-12

    @given(params_with_reneging, st.integers(0, 40), st.integers(0, 40))
    def test_monotone_tail_ratio(self, p, m, n):
        s0 = unnormalized_weight_one_sided(p, OneSidedState(m, n))
        s1 = unnormalized_weight_one_sided(p, OneSidedState(m, n + 1))
        s2 = unnormalized_weight_one_sided(p, OneSidedState(m, n + 2))
        assert s2 / s1 < s1 / s0


class TestNoRenegingClosedForm:
    def test_normalizer(self):
        assert no_reneging_normalizer(REF0) == pytest.approx(1.0 / 3.0, rel=1e-15)

    @pytest.mark.parametrize(
        "state, expected",
        [(OneSidedState(0, 0), 1.0 / 3.0), (OneSidedState(0, 1), 1.0 / 6.0),
         (OneSidedState(1, 0), 1.0 / 12.0)],
    )
    def test_frozen_probabilities(self, state, expected):
        assert no_reneging_distribution(REF0, state) == pytest.approx(expected, rel=1e-14)

    def test_mass_sums_to_one(self):
        mass = sum(
            no_reneging_distribution(REF0, OneSidedState(m, n))
            for m in range(201)
            for n in range(201)
        )
        assert abs(mass - 1.0) < 1e-10

    def test_rejects_reneging_params(self):
        with pytest.raises(ValueError):
            no_reneging_distribution(REF, OneSidedState(0, 0))

    def test_rejects_unstable(self):
        with pytest.raises(DivergenceError):
            no_reneging_distribution(NSystemParams(1, 3, 2, 2), OneSidedState(0, 0))

    def test_reduction_from_general_weights(self):
        b = no_reneging_normalizer(REF0)
        for m in range(0, 51, 5):
            for n in range(0, 51, 5):
                s = OneSidedState(m, n)
                got = unnormalized_weight_one_sided(REF0, s) * b
                assert got == pytest.approx(no_reneging_distribution(REF0, s), rel=1e-12)


class TestTwoSidedWeights:
    P = NSystemParams(1, 1, 2, 2, theta_s=1.0, theta_d=1.0)

    def test_empty(self):
        assert unnormalized_weight_two_sided(self.P, EMPTY) == 1.0

    def test_both_frozen(self):
        assert unnormalized_weight_two_sided(self.P, BothQueues(1, 1)) == pytest.approx(
            1.0 / 3.0, rel=1e-14
        )

    def test_left_equals_one_sided(self):
        for m in range(4):
            for n in range(4):
                if m + n == 0:
                    continue
                left = unnormalized_weight_two_sided(self.P, LeftQueue(m, n))
                one = unnormalized_weight_one_sided(self.P, OneSidedState(m, n))
                assert left == one

    @given(params_with_reneging, st.integers(0, 12), st.integers(0, 12))
    def test_left_right_mirror_symmetry(self, p, m, n):
        # swapping the roles of the universal and restricted types on both
        # sides maps right-queue weights onto left-queue weights exactly
        if m + n == 0:
            return
        right = unnormalized_weight_two_sided(p, RightQueue(m, n))
        mirrored_left = unnormalized_weight_two_sided(p.mirrored(), LeftQueue(m, n))
        assert right == mirrored_left

    def test_rejects_zero_reneging(self):
        with pytest.raises(DivergenceError):
            unnormalized_weight_two_sided(NSystemParams(1, 1, 2, 2, 1.0, 0.0), EMPTY)
        with pytest.raises(DivergenceError):
            unnormalized_weight_two_sided(NSystemParams(1, 1, 2, 2, 0.0, 1.0), EMPTY)


class TestNormalization:
    def test_no_reneging_normalizer_matches_closed_form(self):
        dist = normalize(REF0, ONE_SIDED, 1e-10)
        assert abs(dist.normalizer - 1.0 / 3.0) < 1e-10

    def test_probabilities_sum_to_one(self):
        for p in [REF, REF0, *random_params(3)]:
            dist = normalize(p, ONE_SIDED, 1e-8)
            total = sum(dist.probabilities.values())
            assert 1.0 - dist.tail_mass_bound <= total <= 1.0 + 1e-12
            assert dist.normalizer == dist.probabilities[OneSidedState(0, 0)]
            assert dist.tail_mass_bound < 1e-8

    def test_two_sided_sums_to_one(self):
        p = NSystemParams(1, 1, 2, 2, 1.0, 0.7)
        dist = normalize(p, TWO_SIDED, 1e-10)
        assert sum(dist.probabilities.values()) == pytest.approx(1.0, abs=1e-12)
        assert dist.normalizer == dist.probabilities[EMPTY]
        assert dist.tail_mass_bound < 1e-10

    def test_explicit_bounds_respected(self):
        dist = normalize(REF, ONE_SIDED, 1e-4, bounds=Truncation(6, 9))
        assert dist.truncation == Truncation(6, 9)
        assert max(s.m for s in dist.probabilities) == 6
        assert max(s.n for s in dist.probabilities) == 9
        assert dist.tail_mass_bound > 0.0

    def test_certified_bound_dominates_true_tail(self):
        small = normalize(REF, ONE_SIDED, 1e-4, bounds=Truncation(5, 5))
        big = normalize(REF, ONE_SIDED, 1e-12)
        omitted = sum(
            p
            for s, p in big.probabilities.items()
            if s.m > 5 or s.n > 5
        )
        assert omitted <= small.tail_mass_bound

    def test_divergence_without_reneging(self):
        with pytest.raises(DivergenceError):
            normalize(NSystemParams(3, 1, 2, 2), ONE_SIDED)

    def test_tolerance_domain(self):
        with pytest.raises(ValueError):
            normalize(REF, ONE_SIDED, 1e-2)
        with pytest.raises(ValueError):
            normalize(REF, ONE_SIDED, 0.0)


class TestBalanceResiduals:
    def test_partial_balance_hand_value(self):
        # flow into (1,0): w(0,1)*mu1*(1-gs) = 0.4; outflow w(1,0)*(mu2+th) = 0.4
        assert partial_balance_residual(REF, 1) < 1e-14

    @given(params_with_reneging)
    def test_partial_balance_level_one(self, p):
        assert partial_balance_residual(p, 1) < 1e-12

    def test_partial_balance_deep(self):
        assert partial_balance_residual(REF, 50) < 1e-10

    def test_partial_balance_no_reneging(self):
        assert partial_balance_residual(REF0, 1) < 1e-12

    def test_global_balance_product_form(self):
        dist = normalize(REF, ONE_SIDED, 1e-10, bounds=Truncation(16, 32))
        assert global_balance_residual(REF, dist, ONE_SIDED) < 1e-10

    def test_global_balance_two_sided(self):
        p = NSystemParams(1, 1, 2, 2, 1.0, 0.7)
        dist = normalize(p, TWO_SIDED, 1e-10, bounds=Truncation(10, 20, 10, 10))
        assert global_balance_residual(p, dist, TWO_SIDED) < 1e-10

    def test_perturbation_is_detected(self):
        dist = normalize(REF, ONE_SIDED, 1e-10, bounds=Truncation(12, 24))
        dist.probabilities[OneSidedState(2, 2)] *= 1.01
        assert global_balance_residual(REF, dist, ONE_SIDED) > 1e-3


class TestSerialization:
    def test_schema_and_order(self):
        dist = normalize(REF, ONE_SIDED, 1e-6, bounds=Truncation(3, 3))
        doc = distribution_to_json_dict(dist)
        assert list(doc) == [
            "system", "params", "truncation", "normalizer", "tail_mass_bound", "states",
        ]
        states = [tuple(entry["state"]) for entry in doc["states"]]
        assert states == sorted(states)
        assert doc["system"] == ONE_SIDED
        assert doc["params"]["lambda1"] == 1.0

    def test_two_sided_states_tagged(self):
        p = NSystemParams(1, 1, 2, 2, 1.0, 1.0)
        dist = normalize(p, TWO_SIDED, 1e-6, bounds=Truncation(2, 2, 2, 2))
        doc = distribution_to_json_dict(dist)
        tags = {entry["state"][0] for entry in doc["states"]}
        assert tags == {"empty", "left", "right", "both"}
