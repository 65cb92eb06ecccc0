import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from replica_aloha.occupancy import (
    NumericalInstabilityError,
    PolicyTable,
    SuccessParams,
    TableMismatchError,
    _prob_exactly_n_empty_raw,
    build_policy_table,
    load_policy_table,
    optimal_replicas,
    prob_all_occupied,
    prob_exactly_n_empty,
    prob_lost_given_empty,
    prob_success,
    save_policy_table,
)

from oracles import (
    enum_empty_count_pmf,
    enum_success_probability,
    exact_empty_count_pmf,
    exact_loss_given_empty,
    exact_success_probability,
)


class TestProbAllOccupied:
    def test_no_devices(self):
        assert prob_all_occupied(0, 0, 1) == 1.0

    def test_no_devices_nonempty_pool(self):
        # zero devices cannot cover a non-empty pool; replicas <= m still
        # has to hold for the arguments to make sense
        assert prob_all_occupied(2, 0, 2) == 0.0

    def test_single_device_covers_exactly_its_replicas(self):
        assert prob_all_occupied(2, 1, 2) == 1.0
        assert prob_all_occupied(3, 1, 2) == 0.0

    def test_too_few_replica_slots(self):
        # 5 channels cannot all be hit by 2 devices with 2 replicas each
        assert prob_all_occupied(5, 2, 2) == 0.0

    def test_rejects_oversized_replicas(self):
        with pytest.raises(ValueError):
            prob_all_occupied(2, 3, 3)

    def test_two_devices_two_channels_single_replica(self):
        # both channels hit iff the devices pick different channels: 1/2
        assert prob_all_occupied(2, 2, 1) == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize("m,k", [(3, 1), (4, 2), (5, 2), (6, 3)])
    def test_matches_exact_rational(self, m, k):
        denom = math.comb(m, k)
        for devices in range(1, 7):
            acc = Fraction(0)
            for v in range(m - k + 1):
                term = Fraction(
                    math.comb(m, v) * math.comb(m - v, k) ** devices,
                    denom**devices,
                )
                acc += term if v % 2 == 0 else -term
            got = prob_all_occupied(m, devices, k)
            assert got == pytest.approx(float(acc), abs=1e-13)


class TestEmptyCountDistribution:
    def test_frozen_single_replica_example(self):
        # three devices on three channels, one replica each: the two
        # devices other than the tagged one leave exactly one channel
        # untouched with probability 2/3 (enumeration oracle)
        got = prob_exactly_n_empty(1, SuccessParams(3, 3, 0.0, 1))
        assert got == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_single_device_sees_all_empty(self):
        params = SuccessParams(1, 5, 0.0, 2)
        assert prob_exactly_n_empty(5, params) == 1.0
        assert prob_exactly_n_empty(3, params) == 0.0

    def test_out_of_support(self):
        params = SuccessParams(3, 6, 0.0, 2)
        # two other devices occupy between 2 and 4 channels
        assert prob_exactly_n_empty(5, params) == 0.0
        assert prob_exactly_n_empty(1, params) == 0.0
        assert prob_exactly_n_empty(-1, params) == 0.0

    @pytest.mark.parametrize("n_devices,m,k", [(2, 4, 2), (3, 5, 2), (4, 4, 1), (3, 6, 3)])
    def test_matches_enumeration(self, n_devices, m, k):
        pmf = enum_empty_count_pmf(n_devices, m, k)
        params = SuccessParams(n_devices, m, 0.0, k)
        for n in range(m + 1):
            expect = float(pmf.get(n, Fraction(0)))
            assert prob_exactly_n_empty(n, params) == pytest.approx(
                expect, abs=1e-13
            )

    @pytest.mark.parametrize("n_devices,m,k", [(5, 9, 2), (7, 12, 3), (8, 11, 1)])
    def test_matches_exact_rational(self, n_devices, m, k):
        pmf = exact_empty_count_pmf(n_devices, m, k)
        params = SuccessParams(n_devices, m, 0.0, k)
        for n in range(m + 1):
            expect = float(pmf.get(n, Fraction(0)))
            assert prob_exactly_n_empty(n, params) == pytest.approx(
                expect, abs=1e-12
            )

    @given(
        n_devices=st.integers(1, 9),
        m=st.integers(1, 13),
        k=st.integers(1, 4),
    )
    @settings(max_examples=80, deadline=None)
    def test_normalizes(self, n_devices, m, k):
        k = min(k, m)
        params = SuccessParams(n_devices, m, 0.0, k)
        total = math.fsum(
            prob_exactly_n_empty(n, params) for n in range(m + 1)
        )
        assert total == pytest.approx(1.0, abs=1e-11)

    def test_raw_values_stay_close_to_unit_interval(self):
        # inclusion-exclusion cancellation stays far below the clamp budget
        worst = 0.0
        for n_devices in range(1, 9):
            for m in range(1, 13):
                for k in range(1, min(3, m) + 1):
                    params = SuccessParams(n_devices, m, 0.0, k)
                    for n in range(m + 1):
                        raw = _prob_exactly_n_empty_raw(n, params)
                        worst = max(worst, -raw, raw - 1.0)
        assert worst < 1e-9

    def test_clamp_rejects_garbage(self):
        with pytest.raises(NumericalInstabilityError):
            from replica_aloha.occupancy import _clamp01

            _clamp01(1.5, "test")


class TestLossGivenEmpty:
    def test_no_idle_channels_means_certain_loss(self):
        assert prob_lost_given_empty(0, 4, 2, 0.0) == 1.0

    def test_all_idle_leaves_only_erasures(self):
        assert prob_lost_given_empty(4, 4, 2, 0.5) == pytest.approx(0.25)
        assert prob_lost_given_empty(4, 4, 2, 0.0) == 0.0

    def test_frozen_halfway_example(self):
        # 2 idle of 4, K=2, gamma=1/2: exact hypergeometric mixture is 13/24
        got = prob_lost_given_empty(2, 4, 2, 0.5)
        assert got == pytest.approx(13.0 / 24.0, abs=1e-15)

    def test_binomial_variant_is_the_printed_approximation(self):
        got = prob_lost_given_empty(2, 4, 2, 0.5, placement="binomial")
        assert got == pytest.approx(0.5625, abs=1e-15)

    def test_rejects_unknown_placement(self):
        with pytest.raises(ValueError):
            prob_lost_given_empty(2, 4, 2, 0.5, placement="poisson")

    @pytest.mark.parametrize("n", range(7))
    @pytest.mark.parametrize("gamma", [0.0, 0.3, 0.9])
    def test_matches_exact_rational(self, n, gamma):
        expect = float(exact_loss_given_empty(n, 6, 2, Fraction(gamma).limit_denominator()))
        assert prob_lost_given_empty(n, 6, 2, gamma) == pytest.approx(
            expect, abs=1e-14
        )


class TestProbSuccess:
    def test_lonely_device(self):
        assert prob_success(SuccessParams(1, 8, 0.3, 2)) == pytest.approx(
            1 - 0.09, abs=1e-15
        )
        assert prob_success(SuccessParams(1, 8, 0.0, 3)) == 1.0

    def test_frozen_pair_example(self):
        # two devices, four channels, two replicas, no erasures: 5/6
        got = prob_success(SuccessParams(2, 4, 0.0, 2))
        assert got == pytest.approx(5.0 / 6.0, abs=1e-13)

    def test_frozen_replica_sweep(self):
        # same system, K = 1..4: more replicas help until they crowd
        sweep = [
            prob_success(SuccessParams(2, 4, 0.0, k)) for k in range(1, 5)
        ]
        expect = [0.75, 5.0 / 6.0, 0.75, 0.0]
        assert sweep == pytest.approx(expect, abs=1e-13)

    @pytest.mark.parametrize("gamma", [0.0, 0.3])
    def test_matches_enumeration_small_grid(self, gamma):
        for m in range(2, 6):
            for k in range(1, min(3, m) + 1):
                for n_devices in range(1, 5):
                    expect = float(
                        enum_success_probability(n_devices, m, gamma, k)
                    )
                    got = prob_success(SuccessParams(n_devices, m, gamma, k))
                    assert got == pytest.approx(expect, abs=1e-12), (
                        n_devices, m, gamma, k,
                    )

    def test_matches_exact_rational_larger(self):
        for n_devices, m, k in [(6, 9, 2), (9, 12, 3), (12, 7, 1)]:
            expect = float(
                exact_success_probability(n_devices, m, Fraction(3, 10), k)
            )
            got = prob_success(SuccessParams(n_devices, m, 0.3, k))
            assert got == pytest.approx(expect, abs=1e-12)

    def test_binomial_placement_differs(self):
        exact = prob_success(SuccessParams(2, 4, 0.0, 3))
        approx = prob_success(SuccessParams(2, 4, 0.0, 3), placement="binomial")
        assert exact == pytest.approx(0.75, abs=1e-13)
        assert approx != pytest.approx(exact, abs=1e-3)


class TestOptimalReplicas:
    def test_pair_on_four_channels_wants_two(self):
        assert optimal_replicas(2, 4, 0.0) == 2

    def test_lonely_device_with_erasures_floods(self):
        assert optimal_replicas(1, 6, 0.4) == 6

    def test_lonely_device_without_erasures_sends_once(self):
        assert optimal_replicas(1, 6, 0.0) == 1

    def test_single_channel(self):
        assert optimal_replicas(5, 1, 0.2) == 1

    def test_ties_break_to_smallest(self):
        # with gamma = 0 and N = 1 every K achieves certainty
        assert optimal_replicas(1, 4, 0.0) == 1


class TestPolicyTable:
    def test_matches_direct_argmax(self, table_m10_g04):
        for n in range(1, 41):
            assert table_m10_g04.replicas_for(n) == optimal_replicas(n, 10, 0.4)

    def test_small_system_table(self, table_m4_g0):
        assert table_m4_g0.replicas_for(1) == 1
        assert table_m4_g0.replicas_for(2) == 2
        # crowded regime never replicates without erasures
        for n in range(4, 17):
            assert table_m4_g0.replicas_for(n) == 1

    def test_stored_success_is_the_maximum(self, table_m10_g04):
        for n in (1, 2, 5, 9, 15):
            best = max(
                prob_success(SuccessParams(n, 10, 0.4, k)) for k in range(1, 11)
            )
            assert table_m10_g04.success[n] == pytest.approx(best, abs=1e-10)

    def test_lookup_beyond_range_falls_back_to_single(self, table_m4_g0):
        assert table_m4_g0.replicas_for(17) == 1

    def test_lookup_rejects_nonpositive(self, table_m4_g0):
        with pytest.raises(ValueError):
            table_m4_g0.replicas_for(0)

    def test_single_channel_table(self):
        table = build_policy_table(1, 0.5, n_max=4)
        assert all(table.replicas[n] == 1 for n in range(1, 5))

    def test_roundtrip(self, tmp_path, table_m4_g0):
        path = tmp_path / "table.json"
        save_policy_table(table_m4_g0, path)
        loaded = load_policy_table(path)
        assert loaded == table_m4_g0

    def test_rejects_bad_version(self, tmp_path, table_m4_g0):
        payload = table_m4_g0.to_dict()
        payload["version"] = 999
        with pytest.raises(TableMismatchError):
            PolicyTable.from_dict(payload)

    def test_matches_guard(self, table_m4_g0):
        assert table_m4_g0.matches(4, 0.0)
        assert not table_m4_g0.matches(4, 0.1)
        assert not table_m4_g0.matches(5, 0.0)
