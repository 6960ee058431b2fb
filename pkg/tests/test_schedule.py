"""Tests for schedule calculus, convergence rates, and the schedule ODE."""

from fractions import Fraction

import numpy as np
import pytest

from tempersmc.errors import BudgetExceededError, NumericError
from tempersmc.model import GaussianPair, fisher_info, gaussian_state, kl_gaussian
from tempersmc.schedule import (
    Schedule,
    StepSizes,
    analytic_shape,
    gammas_to_lambdas,
    lambdas_to_gammas,
    rate_bound,
    rate_cn,
    schedule_from_csv,
    schedule_from_json,
    schedule_to_csv,
    schedule_to_json,
    solve_schedule_ode,
)


def random_schedule(rng, max_interior=8):
    k = int(rng.integers(1, max_interior + 1))
    interior = np.sort(rng.uniform(0.02, 0.98, size=k))
    interior = np.unique(interior)
    return Schedule(np.concatenate([[0.0], interior, [1.0]]))


def rate_cn_fraction_oracle(gammas):
    """Exact-rational evaluation of the certificate sum."""
    gammas = [Fraction(g).limit_denominator(10**12) for g in gammas]
    out = []
    inv_c = Fraction(0)
    prod = Fraction(1)
    for k, gam in enumerate(gammas):
        prod *= 1 / (1 - gam)
        inv_c += gam / gammas[0] * prod
        out.append(1 / inv_c)
    return [float(v) for v in out]


class TestScheduleTypes:
    def test_valid_schedule(self):
        s = Schedule(np.array([0.0, 0.5, 1.0]))
        assert s.n_steps == 2

    @pytest.mark.parametrize(
        "lams",
        [[0.0, 1.0, 0.5], [0.1, 0.5, 1.0], [0.0, 0.5, 0.9], [0.0, 0.5, 0.5, 1.0], [1.0]],
    )
    def test_invalid_schedules_rejected(self, lams):
        with pytest.raises(ValueError):
            Schedule(np.asarray(lams, dtype=float))

    @pytest.mark.parametrize("gams", [[0.0, 1.0], [1.2], [-0.5, 1.0]])
    def test_invalid_step_sizes_rejected(self, gams):
        with pytest.raises(ValueError):
            StepSizes(np.asarray(gams, dtype=float))


class TestCorrespondence:
    def test_lambdas_to_gammas_examples(self):
        g = lambdas_to_gammas(Schedule(np.array([0.0, 0.5, 0.75, 1.0])))
        np.testing.assert_allclose(g.gammas, [0.5, 0.5, 1.0], atol=1e-15)
        g = lambdas_to_gammas(Schedule(np.array([0.0, 1.0])))
        np.testing.assert_array_equal(g.gammas, [1.0])

    def test_geometric_sequence_gives_constant_steps(self):
        lams = np.array([0.0, 0.5, 0.75, 0.875, 1.0])
        g = lambdas_to_gammas(Schedule(lams))
        np.testing.assert_allclose(g.gammas, [0.5, 0.5, 0.5, 1.0], atol=1e-15)

    def test_gammas_to_lambdas_examples(self):
        s = gammas_to_lambdas(StepSizes(np.array([0.5, 0.5, 1.0])))
        np.testing.assert_allclose(s.lambdas, [0.0, 0.5, 0.75, 1.0], atol=1e-15)
        s = gammas_to_lambdas(StepSizes(np.array([0.25, 0.25, 1.0])))
        np.testing.assert_allclose(s.lambdas, [0.0, 0.25, 0.4375, 1.0], atol=1e-15)
        s = gammas_to_lambdas(StepSizes(np.array([1.0])))
        np.testing.assert_array_equal(s.lambdas, [0.0, 1.0])

    def test_gammas_to_lambdas_requires_terminal_one(self):
        with pytest.raises(ValueError):
            gammas_to_lambdas(StepSizes(np.array([0.5, 0.5])))
        with pytest.raises(ValueError):
            gammas_to_lambdas(StepSizes(np.array([0.5, 1.0, 1.0])))

    def test_round_trip_randomized(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            s = random_schedule(rng)
            back = gammas_to_lambdas(lambdas_to_gammas(s))
            np.testing.assert_allclose(back.lambdas, s.lambdas, atol=1e-12)


class TestRates:
    def test_constant_half_steps(self):
        cn = rate_cn(StepSizes(np.array([0.5, 0.5])))
        np.testing.assert_allclose(cn, [0.5, 1.0 / 6.0], atol=1e-15)

    def test_first_entry_is_one_minus_gamma(self):
        for gam in (0.1, 0.4, 0.9):
            cn = rate_cn(StepSizes(np.array([gam])))
            assert cn[0] == pytest.approx(1.0 - gam, abs=1e-15)

    def test_two_step_hand_value(self):
        cn = rate_cn(StepSizes(np.array([0.5, 0.25])))
        assert cn[-1] == pytest.approx(0.3, abs=1e-15)

    def test_matches_fraction_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            gams = rng.uniform(0.05, 0.9, size=int(rng.integers(1, 7)))
            np.testing.assert_allclose(
                rate_cn(StepSizes(gams)), rate_cn_fraction_oracle(gams), rtol=1e-9
            )

    def test_excludes_terminal_bridging_step(self):
        with_bridge = rate_cn(StepSizes(np.array([0.5, 0.25, 1.0])))
        without = rate_cn(StepSizes(np.array([0.5, 0.25])))
        np.testing.assert_array_equal(with_bridge, without)

    def test_rejects_interior_unit_step(self):
        with pytest.raises(ValueError):
            rate_cn(StepSizes(np.array([0.5, 1.0, 0.5])))
        with pytest.raises(ValueError):
            rate_cn(StepSizes(np.array([1.0])))

    def test_rate_bound_examples(self):
        np.testing.assert_allclose(
            rate_bound(Schedule(np.array([0.0, 0.5, 0.75, 1.0]))), [0.5, 0.25]
        )
        np.testing.assert_allclose(rate_bound(Schedule(np.array([0.0, 0.9, 1.0]))), [0.1])

    def test_bound_equals_product_of_survivals(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            s = random_schedule(rng)
            gam = lambdas_to_gammas(s).gammas
            np.testing.assert_allclose(
                rate_bound(s), np.cumprod(1.0 - gam[:-1]), atol=1e-12
            )

    def test_certificate_below_bound_strict_after_first(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            s = random_schedule(rng)
            if s.n_steps < 2:
                continue
            cn = rate_cn(lambdas_to_gammas(s))
            bound = rate_bound(s)
            assert np.all(cn <= bound + 1e-12)
            assert np.all(cn[1:] < bound[1:])


class TestDescentAgainstOracle:
    """The certificate and monotonicity claims, checked on exact Gaussians."""

    def test_kl_bound_holds_on_randomized_instances(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            d = int(rng.integers(1, 4))
            pair = GaussianPair(d, rng.normal(size=d), rng.uniform(0.2, 5.0, size=d))
            s = random_schedule(rng)
            target = gaussian_state(pair, 1.0)
            start = gaussian_state(pair, 0.0)
            budget = kl_gaussian(target, start) / s.lambdas[1]
            for lam in s.lambdas[1:-1]:
                lhs = kl_gaussian(gaussian_state(pair, lam), target)
                assert lhs <= (1.0 - lam) * budget + 1e-10

    def test_per_step_descent_and_decrement_bound(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            pair = GaussianPair(1, rng.normal(), rng.uniform(0.2, 5.0))
            s = random_schedule(rng)
            target = gaussian_state(pair, 1.0)
            kls = [
                kl_gaussian(gaussian_state(pair, lam), target) for lam in s.lambdas
            ]
            for n in range(1, len(kls)):
                decrement = kls[n - 1] - kls[n]
                assert decrement >= -1e-12
                step_kl = kl_gaussian(
                    gaussian_state(pair, s.lambdas[n - 1]),
                    gaussian_state(pair, s.lambdas[n]),
                )
                assert decrement >= step_kl - 1e-10

    def test_kl_integration_identity(self):
        from scipy.integrate import quad

        pair = GaussianPair(1, mean=1.0, var=4.0)
        for lo, hi in [(0.1, 0.3), (0.2, 0.9), (0.55, 0.6)]:
            closed = kl_gaussian(gaussian_state(pair, lo), gaussian_state(pair, hi))
            integral, _ = quad(
                lambda u: (hi - u) * fisher_info(pair, u), lo, hi, epsabs=1e-12
            )
            assert abs(closed - integral) <= 1e-6


class TestScheduleOde:
    def test_constant_information_gives_linear_path(self):
        pair = GaussianPair(1, mean=2.0, var=1.0)
        path = solve_schedule_ode(lambda lam: fisher_info(pair, lam), c=1.0)
        k = int(np.searchsorted(path.times, 1.0))
        assert path.lambdas[k] == pytest.approx(0.5, abs=2e-3)
        steps = np.diff(path.lambdas[:-1])
        np.testing.assert_allclose(steps, steps[0], atol=1e-12)

    def test_matches_fine_step_euler_oracle(self):
        # hand-derived for mean 0, variance 4: I(lam) = 0.28125 / (1 - 0.75 lam)^2
        def info(lam):
            return 0.28125 / (1.0 - 0.75 * lam) ** 2

        pair = GaussianPair(1, mean=0.0, var=4.0)
        assert info(0.3) == pytest.approx(fisher_info(pair, 0.3), abs=1e-15)
        coarse = solve_schedule_ode(info, c=1.0, step=1e-3)

        lam, fine = 0.0, [0.0]
        h = 1e-6
        while lam < 1.0 and len(fine) < 2 * 10**6:
            lam = min(1.0, lam + h * (1.0 - 0.75 * lam) / 0.530330085889911)
            fine.append(lam)
        fine = np.asarray(fine)
        # compare on the coarse grid times (every 1000th fine step)
        idx = np.minimum(np.round(coarse.times / h).astype(int), fine.size - 1)
        gap = np.max(np.abs(coarse.lambdas - fine[idx]))
        assert gap <= 1e-3

    def test_narrow_target_path_is_convex_increasing(self):
        pair = GaussianPair(1, mean=0.0, var=0.25)
        path = solve_schedule_ode(lambda lam: fisher_info(pair, lam), c=1.0)
        interior = path.lambdas[:-1]  # drop the clamped endpoint
        assert np.all(np.diff(interior) > 0)
        assert np.all(np.diff(interior, 2) > -1e-15)

    def test_nonpositive_information_raises(self):
        with pytest.raises(NumericError):
            solve_schedule_ode(lambda lam: -1.0, c=1.0)

    def test_budget_error_carries_partial_path(self):
        pair = GaussianPair(1, mean=2.0, var=1.0)
        with pytest.raises(BudgetExceededError) as err:
            solve_schedule_ode(lambda lam: fisher_info(pair, lam), c=1.0, max_steps=10)
        partial = err.value.partial
        assert partial.lambdas.size == 11
        assert partial.lambdas[-1] < 1.0


class TestAnalyticShape:
    def test_wide_target(self):
        assert analytic_shape(GaussianPair(3, mean=1.0, var=100.0)) == "negative-exponential"

    def test_narrow_target(self):
        assert analytic_shape(GaussianPair(3, mean=1.0, var=0.01)) == "exponential-growth"

    def test_mean_shift_only(self):
        assert analytic_shape(GaussianPair(2, mean=1.0, var=1.0)) == "linear"

    def test_mixed_variances(self):
        var = np.where(np.arange(4) < 2, 0.01, 100.0)
        assert analytic_shape(GaussianPair(4, mean=1.0, var=var)) == "mixed"

    def test_degenerate_pair_rejected(self):
        with pytest.raises(ValueError):
            analytic_shape(GaussianPair(2, mean=0.0, var=1.0))


class TestSerialization:
    def test_csv_round_trip(self, tmp_path):
        s = Schedule(np.array([0.0, 0.123456789123, 0.75, 1.0]))
        path = tmp_path / "sched.csv"
        schedule_to_csv(s, path)
        back = schedule_from_csv(path)
        np.testing.assert_array_equal(back.lambdas, s.lambdas)

    def test_json_round_trip(self, tmp_path):
        s = Schedule(np.array([0.0, 1.0 / 3.0, 1.0]))
        path = tmp_path / "sched.json"
        schedule_to_json(s, path)
        back = schedule_from_json(path)
        np.testing.assert_array_equal(back.lambdas, s.lambdas)

    def test_csv_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            schedule_from_csv(path)
