import math

import numpy as np
import pytest
from scipy.special import lambertw as scipy_lambertw

from replica_aloha.asymptotics import (
    UnstableLoadError,
    h1_limit,
    hk_fixed_point,
    hk_limit,
    lambert_w0,
)

from oracles import bisect_eta


class TestLambertW:
    def test_fixed_points(self):
        assert lambert_w0(0.0) == 0.0
        assert lambert_w0(math.e) == pytest.approx(1.0, rel=1e-14)
        assert lambert_w0(-math.exp(-1.0)) == -1.0

    def test_defining_identity_on_a_grid(self):
        xs = np.concatenate([
            np.linspace(-math.exp(-1.0) + 1e-9, -1e-6, 40),
            np.linspace(1e-6, 5.0, 40),
            np.geomspace(5.0, 1e8, 20),
        ])
        for x in xs:
            w = lambert_w0(float(x))
            assert w * math.exp(w) == pytest.approx(
                float(x), abs=1e-12 * max(1.0, abs(x))
            )

    def test_matches_scipy_away_from_branch_point(self):
        for x in [-0.36, -0.3, -0.1, 0.5, 1.0, 10.0, 1e4]:
            ref = float(scipy_lambertw(x).real)
            assert lambert_w0(x) == pytest.approx(ref, rel=1e-10)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            lambert_w0(-0.4)
        with pytest.raises(ValueError):
            lambert_w0(float("nan"))


class TestH1Limit:
    def test_frozen_anchor_no_erasure(self):
        res = h1_limit(0.3, 0.0)
        assert res.total_intensity == pytest.approx(0.489402227180215, abs=1e-12)
        assert res.eta_star == pytest.approx(0.189402227180215, abs=1e-12)
        assert res.k_star == 1

    def test_frozen_anchor_light_load(self):
        assert h1_limit(0.2, 0.0).eta_star == pytest.approx(
            0.0591711018190739, abs=1e-12
        )

    def test_erasure_rescales_the_load(self):
        # lam / (1 - gamma) is all that matters for the total intensity
        assert h1_limit(0.15, 0.5).total_intensity == pytest.approx(
            h1_limit(0.3, 0.0).total_intensity, abs=1e-14
        )
        assert h1_limit(0.15, 0.5).eta_star == pytest.approx(
            0.489402227180215 - 0.15, abs=1e-12
        )

    def test_identity_reconstructs_load(self):
        for lam in [0.01, 0.1, 0.2, 0.3, 0.35]:
            for gamma in [0.0, 0.2, 0.5]:
                if lam >= (1.0 - gamma) * math.exp(-1.0):
                    continue
                eta = h1_limit(lam, gamma).total_intensity
                assert eta * math.exp(-eta) * (1.0 - gamma) == pytest.approx(
                    lam, abs=1e-12
                )

    def test_matches_bisection_oracle(self):
        for lam in [0.02, 0.1, 0.25, 0.35]:
            assert h1_limit(lam, 0.0).total_intensity == pytest.approx(
                bisect_eta(lam, 0.0), abs=1e-11
            )
        assert h1_limit(0.1, 0.4).total_intensity == pytest.approx(
            bisect_eta(0.1, 0.4), abs=1e-11
        )

    def test_zero_load(self):
        res = h1_limit(0.0, 0.0)
        assert res.eta_star == 0.0
        assert res.total_intensity == 0.0

    def test_stability_region_is_strict(self):
        edge = math.exp(-1.0)
        with pytest.raises(UnstableLoadError):
            h1_limit(edge, 0.0)
        with pytest.raises(UnstableLoadError):
            h1_limit(0.4, 0.0)
        with pytest.raises(UnstableLoadError):
            h1_limit(0.2, 0.5)
        h1_limit(edge - 1e-6, 0.0)  # just inside: fine

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            h1_limit(-0.1, 0.0)
        with pytest.raises(ValueError):
            h1_limit(0.1, 1.0)
        with pytest.raises(ValueError):
            h1_limit(0.1, -0.2)


class TestHKFixedPoint:
    def test_single_replica_reduces_to_h1(self):
        for lam in [0.02, 0.1, 0.2, 0.3]:
            for gamma in [0.0, 0.2, 0.4]:
                if lam >= (1.0 - gamma) * math.exp(-1.0):
                    continue
                assert hk_fixed_point(lam, gamma, 1) == pytest.approx(
                    h1_limit(lam, gamma).total_intensity, abs=1e-10
                )

    def test_fixed_point_identity(self):
        for lam, gamma, k in [
            (0.2, 0.2, 2),
            (0.2, 0.2, 3),
            (0.05, 0.4, 5),
            (0.05, 0.4, 8),
        ]:
            eta = hk_fixed_point(lam, gamma, k)
            miss = 1.0 - (1.0 - gamma) * math.exp(-k * eta)
            assert eta * (1.0 - miss**k) == pytest.approx(lam, abs=1e-10)

    def test_zero_load(self):
        assert hk_fixed_point(0.0, 0.3, 4) == 0.0

    def test_infeasible_replica_count_raises(self):
        # single replica cannot carry this load at this erasure rate
        with pytest.raises(UnstableLoadError):
            hk_fixed_point(0.3, 0.5, 1)

    def test_validation(self):
        with pytest.raises(ValueError):
            hk_fixed_point(0.1, 0.0, 0)
        with pytest.raises(ValueError):
            hk_fixed_point(-0.1, 0.0, 1)
        with pytest.raises(ValueError):
            hk_fixed_point(0.1, 1.0, 1)


class TestHKLimit:
    def test_frozen_anchor(self):
        res = hk_limit(0.2, 0.2)
        assert res.k_star == 3
        assert res.eta_star == pytest.approx(0.0758833981891725, abs=1e-10)
        assert res.total_intensity == pytest.approx(res.eta_star + 0.2, abs=1e-14)

    def test_replication_beats_single_replica_under_erasure(self):
        best = hk_limit(0.05, 0.4, k_max=8)
        single = h1_limit(0.05, 0.4)
        assert best.eta_star < single.eta_star
        assert best.k_star == 8

    def test_no_erasure_light_load_keeps_one_replica(self):
        assert hk_limit(0.02, 0.0).k_star >= 1

    def test_literal_selection_never_below_default(self):
        for lam in [0.02, 0.1, 0.2]:
            for gamma in [0.0, 0.2, 0.4]:
                lo = hk_limit(lam, gamma, k_max=8, selection="min")
                hi = hk_limit(lam, gamma, k_max=8, selection="literal_max")
                assert hi.eta_star >= lo.eta_star - 1e-12

    def test_result_at_least_one_feasible_k(self):
        # beyond every replica count's peak: nothing can carry the load
        with pytest.raises(UnstableLoadError):
            hk_limit(0.5, 0.0, k_max=8)

    def test_validation(self):
        with pytest.raises(ValueError):
            hk_limit(0.1, 0.0, k_max=0)
        with pytest.raises(ValueError):
            hk_limit(0.1, 0.0, selection="best")

    def test_curve_below_h1_everywhere_on_a_grid(self):
        # the replica-optimized limit can only improve on the K = 1 limit
        for lam in [0.01, 0.05, 0.1, 0.15, 0.2]:
            for gamma in [0.0, 0.2, 0.4]:
                if lam >= (1.0 - gamma) * math.exp(-1.0):
                    continue
                assert (
                    hk_limit(lam, gamma).eta_star
                    <= h1_limit(lam, gamma).eta_star + 1e-10
                )
