"""Tests for divergence quadrature, the quadratic expansion, and estimators."""

import numpy as np
import pytest

from tempersmc.diagnostics import (
    empirical_fisher,
    empirical_kl_between_iterates,
    f_divergence_1d,
    moment_error,
    prop2_check,
)
from tempersmc.model import (
    GaussianPair,
    GaussianState,
    LogDensityPair,
    fisher_info,
    gaussian_state,
    kl_gaussian,
)
from tempersmc.smc import ParticleCloud


def chi2_centered_gaussians(var_num, var_den):
    """Closed-form chi-square divergence of N(0, var_num) from N(0, var_den).

    chi2(p|q) = int p^2/q - 1 = var_den / (sd_num * sqrt(2 var_den - var_num)) - 1,
    valid while var_num < 2 var_den.
    """
    assert var_num < 2 * var_den
    return var_den / (np.sqrt(var_num) * np.sqrt(2 * var_den - var_num)) - 1.0


class TestFDivergence:
    @pytest.mark.parametrize("f", ["kl", "reverse-kl", "chi2"])
    def test_zero_gap_vanishes(self, f):
        pair = GaussianPair(1, mean=1.0, var=4.0)
        assert f_divergence_1d(pair, 0.4, 0.4, f) == pytest.approx(0.0, abs=1e-12)

    def test_kl_variant_matches_closed_form(self):
        pair = GaussianPair(1, mean=1.0, var=4.0)
        for lam, lam2 in [(0.0, 0.3), (0.2, 0.7), (0.5, 0.52)]:
            quad_value = f_divergence_1d(pair, lam, lam2, "kl")
            closed = kl_gaussian(gaussian_state(pair, lam2), gaussian_state(pair, lam))
            assert abs(quad_value - closed) <= 1e-8

    def test_reverse_kl_variant_matches_closed_form(self):
        pair = GaussianPair(1, mean=0.5, var=0.25)
        quad_value = f_divergence_1d(pair, 0.1, 0.6, "reverse-kl")
        closed = kl_gaussian(gaussian_state(pair, 0.1), gaussian_state(pair, 0.6))
        assert abs(quad_value - closed) <= 1e-8

    def test_chi2_variant_matches_centered_oracle(self):
        # variance path of (m=0, var=4): 1 at lam=0, 1.25 at lam=0.2/0.75
        pair = GaussianPair(1, mean=0.0, var=4.0)
        lam2 = 0.2 / 0.75
        assert gaussian_state(pair, lam2).var[0] == pytest.approx(1.25, abs=1e-12)
        oracle = chi2_centered_gaussians(1.25, 1.0)
        assert oracle == pytest.approx(0.03279556773944294, abs=1e-12)
        quad_value = f_divergence_1d(pair, 0.0, lam2, "chi2")
        assert quad_value == pytest.approx(oracle, abs=1e-8)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            f_divergence_1d(GaussianPair(2, mean=1.0), 0.1, 0.2, "kl")
        with pytest.raises(ValueError):
            f_divergence_1d(GaussianPair(1, mean=1.0), 0.1, 0.2, "tv")


class TestQuadraticExpansion:
    def test_ratio_near_one_at_small_gap(self):
        pair = GaussianPair(1, mean=0.0, var=4.0)
        for f in ("kl", "reverse-kl", "chi2"):
            report = prop2_check(pair, 0.5, [1e-3], f)[0]
            assert 0.99 <= report.ratio <= 1.01

    def test_chi2_expansion_is_twice_kl(self):
        pair = GaussianPair(1, mean=0.0, var=4.0)
        kl = prop2_check(pair, 0.5, [1e-3], "kl")[0]
        chi2 = prop2_check(pair, 0.5, [1e-3], "chi2")[0]
        assert chi2.expansion_value == 2.0 * kl.expansion_value

    def test_remainder_decays_with_gap(self):
        pair = GaussianPair(1, mean=0.0, var=4.0)
        reports = prop2_check(pair, 0.5, [1e-3, 5e-4], "kl")
        err_large = abs(reports[0].ratio - 1.0)
        err_small = abs(reports[1].ratio - 1.0)
        assert err_large / err_small >= 1.5

    def test_holds_across_randomized_pairs(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            pair = GaussianPair(1, mean=1.0, var=float(rng.uniform(0.25, 4.0)))
            lam = float(rng.uniform(0.1, 0.9))
            for f in ("kl", "reverse-kl", "chi2"):
                report = prop2_check(pair, lam, [1e-3], f)[0]
                assert 0.99 <= report.ratio <= 1.01

    def test_gap_overflow_rejected(self):
        pair = GaussianPair(1, mean=1.0, var=2.0)
        with pytest.raises(ValueError):
            prop2_check(pair, 0.9, [0.2], "kl")


class TestEmpiricalFisher:
    def test_point_mass_has_zero_information(self):
        pair = GaussianPair(1, mean=1.0, var=1.0)
        cloud = ParticleCloud.uniform(np.full((5, 1), 0.3), 0.0)
        assert empirical_fisher(cloud, pair) == 0.0

    def test_two_point_population_variance(self):
        # score of the unit pair is x - 1/2: values {0, 2} at x = 0.5, 2.5
        pair = GaussianPair(1, mean=1.0, var=1.0)
        cloud = ParticleCloud.uniform(np.array([[0.5], [2.5]]), 0.0)
        assert empirical_fisher(cloud, pair) == pytest.approx(1.0, abs=1e-12)

    def test_single_particle_rejected(self):
        pair = GaussianPair(1)
        cloud = ParticleCloud.uniform(np.zeros((1, 1)), 0.0)
        with pytest.raises(ValueError):
            empirical_fisher(cloud, pair)

    def test_matches_closed_form_on_exact_draws(self):
        pair = GaussianPair(1, mean=0.0, var=4.0)
        rng = np.random.default_rng(22)
        draws = gaussian_state(pair, 0.3).sample(rng, 10**5)
        cloud = ParticleCloud.uniform(draws, 0.3)
        estimate = empirical_fisher(cloud, pair)
        from tempersmc.model import score

        s = score(pair.to_pair(), draws)
        centered = s - s.mean()
        se = np.sqrt((np.mean(centered**4) - estimate**2) / s.size)
        assert abs(estimate - fisher_info(pair, 0.3)) < 3 * se

    def test_invariant_to_target_rescaling(self):
        gp = GaussianPair(2, mean=1.0, var=0.5)
        base = gp.to_pair()
        shifted = LogDensityPair(
            dim=2,
            log_mu0=base.log_mu0,
            log_pi_unnorm=lambda x: base.log_pi_unnorm(x) + 123.4,
            sampler_mu0=base.sampler_mu0,
        )
        rng = np.random.default_rng(23)
        cloud = ParticleCloud.uniform(rng.standard_normal((100, 2)), 0.0)
        assert empirical_fisher(cloud, shifted) == pytest.approx(
            empirical_fisher(cloud, base), abs=1e-9
        )


class TestEmpiricalKl:
    def test_zero_jump_is_exactly_zero(self):
        pair = GaussianPair(1, mean=1.0, var=2.0)
        rng = np.random.default_rng(24)
        cloud = ParticleCloud.uniform(rng.standard_normal((50, 1)), 0.4)
        assert empirical_kl_between_iterates(cloud, pair, 0.4) == 0.0

    def test_identical_pair_any_jump_is_zero(self):
        pair = GaussianPair(2)
        rng = np.random.default_rng(25)
        cloud = ParticleCloud.uniform(rng.standard_normal((50, 2)), 0.0)
        assert empirical_kl_between_iterates(cloud, pair, 0.8) == pytest.approx(
            0.0, abs=1e-12
        )

    def test_matches_closed_form_on_exact_draws(self):
        pair = GaussianPair(1, mean=0.0, var=4.0)
        rng = np.random.default_rng(26)
        draws = gaussian_state(pair, 0.3).sample(rng, 10**5)
        cloud = ParticleCloud.uniform(draws, 0.3)
        estimate = empirical_kl_between_iterates(cloud, pair, 0.4)
        closed = kl_gaussian(gaussian_state(pair, 0.3), gaussian_state(pair, 0.4))
        # delta-method standard error of -mean(l) + log mean(w)
        from tempersmc.model import score

        log_w = 0.1 * score(pair.to_pair(), draws)
        w = np.exp(log_w)
        influence = w / w.mean() - log_w
        se = influence.std() / np.sqrt(log_w.size)
        assert abs(estimate - closed) < 3 * se

    def test_jensen_nonnegativity(self):
        rng = np.random.default_rng(27)
        from scipy.special import logsumexp

        for _ in range(200):
            log_w = rng.normal(scale=rng.uniform(0.1, 5.0), size=50)
            value = float(logsumexp(log_w) - np.log(50) - log_w.mean())
            assert value >= 0.0


class TestMomentError:
    def test_exact_draws_land_within_3_se(self):
        ref = GaussianState(mean=np.array([1.0, -1.0]), var=np.array([0.5, 2.0]))
        rng = np.random.default_rng(28)
        n = 10**5
        cloud = ParticleCloud.uniform(ref.sample(rng, n), 1.0)
        mean_err, var_err = moment_error(cloud, ref)
        assert mean_err < 3 * np.sqrt(ref.var.max() / n)
        assert var_err < 3 * ref.var.max() * np.sqrt(2.0 / n)

    def test_single_particle_at_reference_mean(self):
        ref = GaussianState(mean=np.array([0.7]), var=np.array([1.3]))
        cloud = ParticleCloud.uniform(np.array([[0.7]]), 1.0)
        mean_err, var_err = moment_error(cloud, ref)
        assert mean_err == 0.0
        assert var_err == pytest.approx(1.3)

    def test_shifted_cloud_reports_unit_mean_error(self):
        ref = GaussianState(mean=np.zeros(2), var=np.ones(2))
        rng = np.random.default_rng(29)
        draws = ref.sample(rng, 10**5)
        draws[:, 0] += 1.0
        mean_err, _ = moment_error(ParticleCloud.uniform(draws, 1.0), ref)
        assert mean_err == pytest.approx(1.0, abs=0.02)

    def test_dimension_mismatch_rejected(self):
        ref = GaussianState(mean=np.zeros(2), var=np.ones(2))
        cloud = ParticleCloud.uniform(np.zeros((5, 1)), 0.0)
        with pytest.raises(ValueError):
            moment_error(cloud, ref)
