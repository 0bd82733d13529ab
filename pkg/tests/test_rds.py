"""Tests for the switching dynamics, seeding and outcome classification."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import certify
import maps
import rds
from conftest import INCREASING_DELTA, rational_a_maps, increasing_maps
from errors import ConfigurationError, InputError
from rds import Classifier, NoiseLaw, Outcome, PerturbationSpec, RdsConfig


class TestConfig:
    @pytest.mark.parametrize("p", [0.0, 1.0, 1.2, -0.1])
    def test_p_outside_open_interval_rejected(self, rat_a_maps, p):
        with pytest.raises(ConfigurationError):
            RdsConfig.build(*rat_a_maps, p)

    def test_build_shares_bound(self, rat_a_config):
        assert rat_a_config.f.domain_bound == rat_a_config.g.domain_bound == rat_a_config.b

    def test_mismatched_bounds_rejected(self, inc_maps):
        f, g = inc_maps
        with pytest.raises(ConfigurationError):
            RdsConfig(f, g, 0.5)

    def test_with_p_keeps_everything_else(self, noisy_inc_config):
        other = noisy_inc_config.with_p(0.3)
        assert other.p == 0.3
        assert other.perturbation == noisy_inc_config.perturbation
        assert other.b == noisy_inc_config.b

    def test_non_positive_delta_rejected(self):
        with pytest.raises(ConfigurationError):
            PerturbationSpec(0.0)

    def test_perturbation_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ConfigurationError):
            PerturbationSpec.from_dict({"delta": 0.1, "sigma": 1.0})

    def test_perturbation_from_dict_bad_law(self):
        with pytest.raises(ConfigurationError):
            PerturbationSpec.from_dict({"delta": 0.1, "distribution": "gaussian"})


class TestNoise:
    @pytest.mark.parametrize("law", list(NoiseLaw))
    def test_noise_stays_inside_delta(self, law):
        spec = PerturbationSpec(0.2, law)
        u = np.random.Generator(np.random.PCG64(3)).random(10_000)
        eps = spec.from_uniform(u)
        assert np.all(np.abs(eps) < 0.2)

    @pytest.mark.parametrize("law", list(NoiseLaw))
    def test_noise_is_symmetric(self, law):
        spec = PerturbationSpec(0.3, law)
        u = np.linspace(0.01, 0.49, 25)
        np.testing.assert_allclose(spec.from_uniform(u), -spec.from_uniform(1.0 - u), atol=1e-15)
        assert spec.from_uniform(np.array([0.5]))[0] == pytest.approx(0.0, abs=1e-15)

    def test_triangular_concentrates_near_zero(self):
        u = np.random.Generator(np.random.PCG64(5)).random(50_000)
        uniform = PerturbationSpec(1.0, NoiseLaw.UNIFORM).from_uniform(u)
        triangular = PerturbationSpec(1.0, NoiseLaw.TRUNCATED_TRIANGULAR).from_uniform(u)
        assert np.var(triangular) < np.var(uniform)
        assert np.var(triangular) == pytest.approx(1.0 / 6.0, rel=0.05)


class TestStep:
    def test_upper_fixed_point_under_f(self, rat_a_config):
        K_f = 3.0 + math.sqrt(0.2)
        assert rds.step(rat_a_config, K_f, True) == pytest.approx(K_f, abs=1e-12)

    def test_zero_is_absorbing(self, rat_a_config):
        assert rds.step(rat_a_config, 0.0, True) == 0.0
        assert rds.step(rat_a_config, 0.0, False) == 0.0

    def test_state_outside_domain_rejected(self, rat_a_config):
        with pytest.raises(InputError):
            rds.step(rat_a_config, rat_a_config.b + 0.1, True)

    def test_model2_takes_no_noise(self, rat_a_config):
        with pytest.raises(InputError):
            rds.step(rat_a_config, 1.0, True, eps=0.01)

    def test_noise_bound_enforced(self, noisy_inc_config):
        with pytest.raises(InputError):
            rds.step(noisy_inc_config, 1.0, True, eps=0.05)

    def test_clamp_at_zero(self, noisy_inc_config):
        assert rds.step(noisy_inc_config, 0.0, True, eps=-0.04) == 0.0

    def test_clamp_at_bound(self, noisy_inc_config):
        b = noisy_inc_config.b
        assert rds.step(noisy_inc_config, b, False, eps=0.0) < b
        big = RdsConfig.build(*increasing_maps(), 0.5, PerturbationSpec(2.0))
        assert rds.step(big, 2.4, False, eps=1.9) == big.b

    def test_clamp_helper(self):
        assert rds.clamp(-0.5, 3.0) == 0.0
        assert rds.clamp(4.0, 3.0) == 3.0
        assert rds.clamp(1.5, 3.0) == 1.5
        np.testing.assert_array_equal(rds.clamp(np.array([-1.0, 1.0, 5.0]), 3.0), [0.0, 1.0, 3.0])
        with pytest.raises(InputError):
            rds.clamp(1.0, 0.0)

    def test_upper_fixed_points_bound_a_trap(self, inc_config):
        K_f, K_g = maps.analyze(inc_config.f).K, maps.analyze(inc_config.g).K
        for x in np.linspace(K_f, K_g, 201):
            for coin in (True, False):
                assert K_f - 1e-9 <= rds.step(inc_config, float(x), coin) <= K_g + 1e-9

    def test_low_trap_holds_for_all_noise(self, noisy_inc_config):
        sets = certify.theorem2_sets(noisy_inc_config.f, noisy_inc_config.g, INCREASING_DELTA)
        for x in np.linspace(0.0, sets.w1, 101)[:-1]:
            for eps in np.linspace(-INCREASING_DELTA, INCREASING_DELTA, 21)[1:-1]:
                for coin in (True, False):
                    assert rds.step(noisy_inc_config, float(x), coin, float(eps)) < sets.w1


class TestSeeding:
    def test_negative_seed_rejected(self):
        with pytest.raises(InputError):
            rds.make_rng(-1)

    def test_trial_seeds_deterministic_and_distinct(self):
        seeds = [rds.trial_seed(7, i) for i in range(100)]
        assert seeds == [rds.trial_seed(7, i) for i in range(100)]
        assert len(set(seeds)) == 100
        assert rds.trial_seed(7, 0) != rds.trial_seed(8, 0)

    def test_draw_consumes_coin_then_noise(self, noisy_inc_config):
        coins, eps = rds.draw(noisy_inc_config, rds.make_rng(11), 40)
        u = rds.make_rng(11).random((40, 2))
        np.testing.assert_array_equal(coins, u[:, 0] < noisy_inc_config.p)
        np.testing.assert_allclose(eps, noisy_inc_config.perturbation.from_uniform(u[:, 1]))

    def test_draw_model2_has_no_noise(self, rat_a_config):
        coins, eps = rds.draw(rat_a_config, rds.make_rng(1), 10)
        assert eps is None
        assert coins.dtype == bool


class TestSimulate:
    def test_same_seed_same_trajectory(self, rat_b_config):
        a = rds.simulate(rat_b_config, 3.0, 42, 500)
        b = rds.simulate(rat_b_config, 3.0, 42, 500)
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.choices, b.choices)
        assert a.outcome == b.outcome

    def test_different_seeds_differ(self, rat_b_config):
        a = rds.simulate(rat_b_config, 3.0, 1, 200)
        b = rds.simulate(rat_b_config, 3.0, 2, 200)
        assert not np.array_equal(a.choices, b.choices)

    def test_choices_replay_states(self, rat_a_config):
        traj = rds.simulate(rat_a_config, 3.0, 9, 300)
        f, g = maps.vectorized(rat_a_config.f), maps.vectorized(rat_a_config.g)
        for k in range(traj.n_steps):
            expected = f(traj.states[k]) if traj.choices[k] else g(traj.states[k])
            assert traj.states[k + 1] == pytest.approx(expected, abs=1e-15)

    def test_zero_start_is_extinct(self, rat_a_config):
        traj = rds.simulate(rat_a_config, 0.0, 0, 100)
        assert np.all(traj.states == 0.0)
        assert traj.outcome is Outcome.EXTINCT
        assert traj.outcome_step == 0

    def test_rational_a_mostly_extinct(self, rat_a_config):
        outcomes = [rds.simulate(rat_a_config, 3.0, seed, 10_000).outcome for seed in range(20)]
        assert outcomes.count(Outcome.EXTINCT) >= 18

    def test_bad_inputs(self, rat_a_config):
        with pytest.raises(InputError):
            rds.simulate(rat_a_config, -1.0, 0, 10)
        with pytest.raises(InputError):
            rds.simulate(rat_a_config, 1.0, 0, 0)
        with pytest.raises(InputError):
            rds.simulate(rat_a_config, 1.0, -3, 10)

    def test_extinction_reaches_zero_and_stays(self, rat_a_config):
        for seed in range(5):
            traj = rds.simulate(rat_a_config, 1.0, seed, 3000)
            zeros = np.flatnonzero(traj.states == 0.0)
            assert len(zeros) > 0
            assert np.all(traj.states[zeros[0]:] == 0.0)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32), x0=st.floats(0.0, 1.0), p=st.floats(0.05, 0.95))
    def test_zero_is_absorbing_along_trajectories(self, seed, x0, p):
        config = RdsConfig.build(*rational_a_maps(), p)
        traj = rds.simulate(config, x0 * config.b, seed, 1000)
        zeros = np.flatnonzero(traj.states == 0.0)
        if len(zeros):
            assert np.all(traj.states[zeros[0]:] == 0.0)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32), x0=st.floats(0.0, 1.0))
    def test_states_stay_in_domain(self, seed, x0):
        config = RdsConfig.build(*rational_a_maps(), 0.5)
        traj = rds.simulate(config, x0 * config.b, seed, 200)
        assert np.all(traj.states >= 0.0)
        assert np.all(traj.states <= config.b)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32), x0=st.floats(0.0, 3.0), p=st.floats(0.05, 0.95))
    def test_noisy_states_stay_in_domain(self, seed, x0, p):
        config = RdsConfig.build(*increasing_maps(), p, PerturbationSpec(0.3))
        traj = rds.simulate(config, x0, seed, 200)
        assert np.all((traj.states >= 0.0) & (traj.states <= config.b))

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**32), n=st.integers(1, 300), m=st.integers(1, 300))
    def test_extend_equals_longer_run(self, seed, n, m):
        config = RdsConfig.build(*increasing_maps(), 0.4, PerturbationSpec(0.05))
        short = rds.simulate(config, 1.0, seed, n)
        longer = rds.simulate(config, 1.0, seed, n + m)
        extended = rds.extend(config, short, m)
        np.testing.assert_array_equal(extended.states, longer.states)
        np.testing.assert_array_equal(extended.choices, longer.choices)
        assert extended.outcome == longer.outcome

    def test_extend_needs_steps(self, rat_a_config):
        traj = rds.simulate(rat_a_config, 1.0, 0, 10)
        with pytest.raises(InputError):
            rds.extend(rat_a_config, traj, 0)


class TestClassification:
    def _traj(self, states):
        states = np.asarray(states, dtype=float)
        return rds.Trajectory(float(states[0]), 0, states, np.ones(len(states) - 1, dtype=bool))

    def test_extinct_tail(self, inc_maps):
        ff, fg = maps.analyze(inc_maps[0]), maps.analyze(inc_maps[1])
        states = [1.0, 0.4] + [0.001] * 60
        assert rds.classify_outcome(self._traj(states), ff, fg, b=3.0) == (Outcome.EXTINCT, 2)

    def test_survival_trap_for_interleaved_increasing_maps(self, inc_maps):
        ff, fg = maps.analyze(inc_maps[0]), maps.analyze(inc_maps[1])
        inside = [2.1] * 60
        assert rds.classify_outcome(self._traj([1.0] + inside), ff, fg, b=3.0) == (Outcome.SURVIVED, 1)
        above = [2.6] * 60
        assert rds.classify_outcome(self._traj(above), ff, fg, b=3.0)[0] is Outcome.UNDECIDED

    def test_short_trajectory_undecided(self, inc_maps):
        ff, fg = maps.analyze(inc_maps[0]), maps.analyze(inc_maps[1])
        assert rds.classify_outcome(self._traj([0.0] * 10), ff, fg, b=3.0) == (Outcome.UNDECIDED, None)

    def test_unimodal_survival_means_above_threshold(self, rat_a_maps):
        ff, fg = maps.analyze(rat_a_maps[0]), maps.analyze(rat_a_maps[1])
        states = [3.2, 3.6] * 40
        assert rds.classify_outcome(self._traj(states), ff, fg)[0] is Outcome.SURVIVED

    def test_explicit_open_trap(self, inc_maps):
        ff, fg = maps.analyze(inc_maps[0]), maps.analyze(inc_maps[1])
        states = [1.0] * 60
        assert rds.classify_outcome(self._traj(states), ff, fg, b=3.0, trap=(1.0, 2.0),
                                    open_trap=True)[0] is Outcome.UNDECIDED
        assert rds.classify_outcome(self._traj(states), ff, fg, b=3.0, trap=(1.0, 2.0))[0] is Outcome.SURVIVED

    def test_classifier_regions(self):
        c = Classifier(0.01, 1.0, 2.0, window=5, open_trap=True)
        np.testing.assert_array_equal(c.in_extinct(np.array([0.0, 0.02])), [True, False])
        np.testing.assert_array_equal(c.in_trap(np.array([1.0, 1.5, 2.0])), [False, True, False])

    def test_threshold_itself_is_not_survival(self, rat_a_config):
        ff, fg = maps.analyze(rat_a_config.f), maps.analyze(rat_a_config.g)
        low_a, b = min(ff.A, fg.A), rat_a_config.b
        on_threshold = self._traj([low_a] * 60)
        assert rds.classify_outcome(on_threshold, ff, fg, b=b)[0] is Outcome.UNDECIDED
        just_above = self._traj([low_a + 1e-6] * 60)
        assert rds.classify_outcome(just_above, ff, fg, b=b)[0] is Outcome.SURVIVED
        at_bound = self._traj([b] * 60)
        assert rds.classify_outcome(at_bound, ff, fg, b=b)[0] is Outcome.SURVIVED
