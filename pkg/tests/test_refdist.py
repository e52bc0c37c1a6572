"""Reference-distribution fits, p-values, and multiplicity adjustment."""

import numpy as np
import pytest

from gsmoments import moments, refdist
from gsmoments.errors import DegenerateError, InputError
from gsmoments.moments import LinearMoments, QuadraticMoments

from conftest import random_instance


def lm(variance, lo=-1.0, hi=1.0):
    return LinearMoments(0.0, variance, lo, hi, None)


class TestFitNormal:
    def test_passthrough(self):
        assert refdist.fit_normal(lm(2 / 3)).variance == pytest.approx(2 / 3)

    def test_zero_variance_rejected(self):
        with pytest.raises(DegenerateError):
            refdist.fit_normal(lm(0.0))

    def test_symmetric_p_at_zero(self):
        pv = refdist.pvalues_normal(refdist.fit_normal(lm(1.0)), 0.0)
        assert pv.p_left == pytest.approx(0.5)


class TestFitScaledBeta:
    def test_uniform_case(self):
        ref = refdist.fit_scaled_beta(lm(1 / 3))
        assert (ref.alpha, ref.beta) == pytest.approx((1.0, 1.0))

    def test_quarter_shapes(self):
        # lo=-1, hi=1, variance 2/3 pins both shapes at 1/4; the fitted
        # beta then reproduces the target variance
        ref = refdist.fit_scaled_beta(lm(2 / 3))
        assert (ref.alpha, ref.beta) == pytest.approx((0.25, 0.25))
        assert ref.variance() == pytest.approx(2 / 3, rel=1e-12)
        assert ref.mean() == pytest.approx(0.0, abs=1e-12)

    def test_variance_bound_rejected(self):
        with pytest.raises(DegenerateError, match="bound"):
            refdist.fit_scaled_beta(lm(1.0))

    def test_one_sided_range_rejected(self):
        with pytest.raises(DegenerateError):
            refdist.fit_scaled_beta(lm(0.1, lo=0.0, hi=1.0))

    def test_fit_reproduces_targets_on_random_instances(self, rng):
        for _ in range(50):
            n = int(rng.integers(4, 12))
            p = int(rng.integers(1, 6))
            matrix, ph, resolved = random_instance(rng, n, p)
            lmo = moments.linear_moments(moments.build_pseudo_gene(resolved, matrix), ph)
            ref = refdist.fit_scaled_beta(lmo)
            width = lmo.range_hi - lmo.range_lo
            assert abs(ref.mean()) <= 1e-10 * width
            assert ref.variance() == pytest.approx(lmo.variance, rel=1e-10)


class TestFitScaledChiSq:
    def test_identity_case(self):
        ref = refdist.fit_scaled_chisq(QuadraticMoments(mean=1.0, variance=2.0))
        assert (ref.nu, ref.sigma2) == pytest.approx((1.0, 1.0))

    def test_hand_case(self):
        ref = refdist.fit_scaled_chisq(QuadraticMoments(mean=4 / 9, variance=2 / 81))
        assert ref.nu == pytest.approx(16.0)
        assert ref.sigma2 == pytest.approx(1 / 36)

    def test_moment_match_by_construction(self, rng):
        for _ in range(50):
            mean = float(rng.uniform(0.01, 5.0))
            var = float(rng.uniform(0.001, 4.0))
            ref = refdist.fit_scaled_chisq(QuadraticMoments(mean=mean, variance=var))
            assert ref.mean() == pytest.approx(mean, rel=1e-12)
            assert ref.variance() == pytest.approx(var, rel=1e-12)

    def test_unavailable_variance_rejected(self):
        with pytest.raises(InputError):
            refdist.fit_scaled_chisq(QuadraticMoments(mean=1.0, variance=None))

    def test_nonpositive_rejected(self):
        with pytest.raises(DegenerateError):
            refdist.fit_scaled_chisq(QuadraticMoments(mean=0.0, variance=1.0))


class TestPValuesNormal:
    def test_at_zero(self):
        pv = refdist.pvalues_normal(refdist.NormalRef(1.0), 0.0)
        assert pv.p_left == pytest.approx(0.5)
        assert pv.p_central == pytest.approx(1.0)

    def test_standard_quantile(self):
        sigma = 2.0
        pv = refdist.pvalues_normal(refdist.NormalRef(sigma**2), -1.6448536269514722 * sigma)
        assert pv.p_left == pytest.approx(0.05, abs=1e-9)

    def test_right_tail_vanishes_monotonically(self):
        ref = refdist.NormalRef(1.0)
        grid = np.linspace(-8.0, 8.0, 1000)
        lefts = [refdist.pvalues_normal(ref, t).p_left for t in grid]
        assert all(b >= a for a, b in zip(lefts, lefts[1:]))
        assert refdist.pvalues_normal(ref, 40.0).p_right < 1e-300


class TestPValuesBeta:
    def test_uniform_fit(self):
        ref = refdist.ScaledBetaRef(-1.0, 1.0, 1.0, 1.0)
        assert refdist.pvalues_beta(ref, 0.5).p_left == pytest.approx(0.75)

    def test_boundary(self):
        ref = refdist.ScaledBetaRef(-1.0, 1.0, 1.0, 1.0)
        assert refdist.pvalues_beta(ref, -1.0).p_left == 0.0

    def test_symmetric_quarter_shapes_at_zero(self):
        ref = refdist.ScaledBetaRef(-1.0, 1.0, 0.25, 0.25)
        assert refdist.pvalues_beta(ref, 0.0).p_left == pytest.approx(0.5, abs=1e-12)

    def test_left_plus_right_is_one(self, rng):
        ref = refdist.ScaledBetaRef(-0.7, 1.3, 2.5, 3.5)
        for t in rng.uniform(-0.7, 1.3, 100):
            pv = refdist.pvalues_beta(ref, float(t))
            assert pv.p_left + pv.p_right == pytest.approx(1.0, abs=1e-12)

    def test_monotone_p_left(self):
        ref = refdist.ScaledBetaRef(-0.5, 2.0, 0.8, 4.0)
        grid = np.linspace(-0.5, 2.0, 1000)
        lefts = [refdist.pvalues_beta(ref, float(t)).p_left for t in grid]
        assert all(b >= a for a, b in zip(lefts, lefts[1:]))

    def test_interior_never_exactly_zero_or_one(self, rng):
        # the fit's whole point: an observed value inside the attainable
        # range never falls outside the reference's support
        for _ in range(30):
            matrix, ph, resolved = random_instance(rng, int(rng.integers(4, 10)), 3)
            lmo = moments.linear_moments(moments.build_pseudo_gene(resolved, matrix), ph)
            ref = refdist.fit_scaled_beta(lmo)
            for frac in (0.01, 0.3, 0.77, 0.99):
                t = lmo.range_lo + frac * (lmo.range_hi - lmo.range_lo)
                pv = refdist.pvalues_beta(ref, t)
                assert 0.0 < pv.p_left < 1.0
                assert 0.0 < pv.p_central <= 1.0

    def test_small_excursion_clamps_silently(self):
        ref = refdist.ScaledBetaRef(-1.0, 1.0, 1.0, 1.0)
        pv = refdist.pvalues_beta(ref, 1.0 + 1e-12)
        assert pv.p_left == 1.0 and pv.notes == ()

    def test_large_excursion_warns(self):
        ref = refdist.ScaledBetaRef(-1.0, 1.0, 1.0, 1.0)
        pv = refdist.pvalues_beta(ref, 1.5)
        assert pv.p_left == 1.0
        assert pv.notes and "clamped" in pv.notes[0]


class TestPValuesChiSq:
    def test_two_dof_closed_form(self):
        ref = refdist.ScaledChiSqRef(sigma2=1.0, nu=2.0)
        pv = refdist.pvalues_chisq(ref, 2.0)
        assert pv.p_right == pytest.approx(np.exp(-1.0), rel=1e-12)
        assert pv.p_central == pv.p_right  # quadratic convention

    def test_at_zero(self):
        ref = refdist.ScaledChiSqRef(sigma2=1.0, nu=2.0)
        assert refdist.pvalues_chisq(ref, 0.0).p_right == 1.0

    def test_95th_percentile_one_dof(self):
        ref = refdist.ScaledChiSqRef(sigma2=1.0, nu=1.0)
        pv = refdist.pvalues_chisq(ref, 3.841458820694124)
        assert pv.p_right == pytest.approx(0.05, abs=1e-8)

    def test_negative_observed_rejected(self):
        with pytest.raises(InputError):
            refdist.pvalues_chisq(refdist.ScaledChiSqRef(1.0, 1.0), -0.1)

    def test_monotone_p_right(self):
        ref = refdist.ScaledChiSqRef(sigma2=0.5, nu=3.7)
        grid = np.linspace(0.0, 30.0, 1000)
        rights = [refdist.pvalues_chisq(ref, float(c)).p_right for c in grid]
        assert all(b <= a for a, b in zip(rights, rights[1:]))


class TestAdjustPValues:
    def test_bonferroni(self):
        out = refdist.adjust_pvalues([0.01, 0.02, 0.03], "bonferroni")
        assert out == pytest.approx([0.03, 0.06, 0.09])

    def test_single_p_bh_unchanged(self):
        assert refdist.adjust_pvalues([0.2], "bh") == pytest.approx([0.2])

    def test_bh_step_up_hand_case(self):
        out = refdist.adjust_pvalues([0.01, 0.04, 0.03, 0.005], "bh")
        assert out == pytest.approx([0.02, 0.04, 0.04, 0.02])

    def test_out_of_range_rejected(self):
        with pytest.raises(InputError):
            refdist.adjust_pvalues([0.5, 1.2], "bh")

    def test_empty(self):
        assert refdist.adjust_pvalues([], "bh").size == 0


class TestRankingInvariance:
    def test_weight_rescaling_keeps_ordering(self, rng):
        # positive rescaling of all weights must not reorder set p-values
        instances = [random_instance(rng, 8, int(rng.integers(2, 6))) for _ in range(12)]
        for c in (1.0, 4.2):
            ps = []
            for matrix, ph, resolved in instances:
                scaled = type(resolved)(
                    name=resolved.name,
                    row_indices=resolved.row_indices,
                    weights=c * resolved.weights,
                )
                lmo = moments.linear_moments(moments.build_pseudo_gene(scaled, matrix), ph)
                obs = moments.observed_statistics(scaled, matrix, ph)
                ps.append(refdist.pvalues_beta(refdist.fit_scaled_beta(lmo), obs.t_hat).p_left)
            if c == 1.0:
                baseline = np.argsort(ps)
            else:
                assert (np.argsort(ps) == baseline).all()
