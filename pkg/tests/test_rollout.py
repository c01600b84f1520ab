import numpy as np
import pytest
from scipy.stats import nbinom

from gamma_models.gamma_td import GammaModelTable
from gamma_models.mdp import policy_transition_matrix, random_mdp, random_policy, uniform_policy
from gamma_models.oracle import exact_occupancy, exact_state_occupancy, total_variation
from gamma_models.rollout import (
    geometric_pmf,
    n_step_distribution,
    negative_binomial_pmf,
    reweighted_distribution,
    rollout_weights,
    sample_rollout,
    step_distributions,
    steps_to_mass,
    timestep_mixture,
    weighted_components,
)


def exact_model(mdp, policy, gamma):
    return GammaModelTable.from_probs(exact_occupancy(mdp, policy, gamma).mu, gamma)


class TestRolloutWeights:
    def test_example(self):
        """Test weights for gamma 0.5, gamma_tilde 0.9 and H 3"""
        weights = rollout_weights(0.5, 0.9, 3)
        np.testing.assert_allclose(weights.alphas, [0.2, 0.16, 0.128])
        assert weights.tail_mass == pytest.approx(0.512)
        assert weights.assigned_mass + weights.tail_mass == pytest.approx(1.0)

    def test_equal_discounts(self):
        """Test gamma_tilde = gamma puts all mass on the first step"""
        weights = rollout_weights(0.7, 0.7, 4)
        np.testing.assert_allclose(weights.alphas, [1.0, 0.0, 0.0, 0.0])
        assert weights.tail_mass == 0.0

    def test_zero_discount_model(self):
        """Test a one-step model recovers the geometric weights"""
        weights = rollout_weights(0.0, 0.9, 5)
        np.testing.assert_allclose(weights.alphas, 0.1 * 0.9 ** np.arange(5))
        assert weights.tail_mass == pytest.approx(0.9 ** 5)

    @pytest.mark.parametrize('gamma, gamma_tilde, H', [
        (0.9, 0.5, 3),
        (0.5, 1.0, 3),
        (-0.1, 0.5, 3),
        (0.5, 0.9, 0),
        (0.5, 0.9, 2.5),
    ])
    def test_invalid_arguments(self, gamma, gamma_tilde, H):
        """Test invalid discounts and horizons are rejected"""
        with pytest.raises(ValueError):
            rollout_weights(gamma, gamma_tilde, H)


class TestTimestepDistributions:
    def test_negative_binomial_example(self):
        """Test p_2(3) at gamma 0.5"""
        assert negative_binomial_pmf(2, 0.5, 3) == pytest.approx(0.25)

    @pytest.mark.parametrize('n, gamma', [(1, 0.3), (4, 0.5), (10, 0.9)])
    def test_matches_scipy(self, n, gamma):
        """Test the pmf agrees with scipy's failure-count parameterization"""
        t = np.arange(1, 200)
        expected = np.where(t >= n, nbinom.pmf(t - n, n, 1 - gamma), 0.0)
        np.testing.assert_allclose(negative_binomial_pmf(n, gamma, t), expected, atol=1e-14)

    def test_zero_before_n(self):
        """Test the n-th step cannot land before timestep n"""
        np.testing.assert_array_equal(negative_binomial_pmf(5, 0.5, np.arange(1, 5)), 0.0)

    def test_zero_discount_is_point_mass(self):
        """Test gamma = 0 puts step n on timestep n"""
        np.testing.assert_allclose(negative_binomial_pmf(3, 0.0, np.arange(1, 6)), [0, 0, 1, 0, 0])

    @pytest.mark.parametrize('gamma', [0.0, 0.3, 0.5, 0.8])
    @pytest.mark.parametrize('gamma_tilde', [0.9, 0.99])
    @pytest.mark.parametrize('H', [1, 5, 20])
    def test_mixture_is_geometric_up_to_horizon(self, gamma, gamma_tilde, H):
        """Test the reweighted mixture matches the long-discount geometric pmf for t <= H"""
        mixture = timestep_mixture(gamma, gamma_tilde, H, H)
        np.testing.assert_allclose(mixture, geometric_pmf(gamma_tilde, H), atol=1e-12)

    def test_components_carry_assigned_mass(self):
        """Test each component carries its weight when summed over time"""
        components = weighted_components(0.5, 0.9, 4, 400)
        np.testing.assert_allclose(components.sum(axis=1), rollout_weights(0.5, 0.9, 4).alphas, atol=1e-12)

    def test_mixture_below_geometric_after_horizon(self):
        """Test the missing tail mass shows up after the horizon"""
        mixture = timestep_mixture(0.5, 0.9, 3, 50)
        assert np.all(mixture[3:] <= geometric_pmf(0.9, 50)[3:] + 1e-15)


class TestStepDistributions:
    def test_swap_chain_second_step(self, chain, chain_policy):
        """Test two chained swap-chain steps from state 0"""
        model = exact_model(chain, chain_policy, 0.5)
        np.testing.assert_allclose(n_step_distribution(model, chain_policy, 0, 1), [1 / 3, 2 / 3])
        np.testing.assert_allclose(n_step_distribution(model, chain_policy, 0, 2), [5 / 9, 4 / 9])

    def test_action_start_uses_action_row(self, make_problem):
        """Test a (state, action) start uses that row first"""
        mdp, policy = make_problem(seed=12)
        model = exact_model(mdp, policy, 0.5)
        steps = step_distributions(model, policy, (2, 1), 3)
        np.testing.assert_allclose(steps[0], model.probs[2, 1])
        np.testing.assert_allclose(steps.sum(axis=1), 1.0)

    def test_out_of_bounds_start(self, chain, chain_policy):
        """Test starts outside the state space are rejected"""
        model = exact_model(chain, chain_policy, 0.5)
        with pytest.raises(ValueError):
            step_distributions(model, chain_policy, 5, 2)
        with pytest.raises(ValueError):
            step_distributions(model, chain_policy, (0, 3), 2)

    @pytest.mark.parametrize('gamma, gamma_tilde', [(0.0, 0.9), (0.5, 0.9), (0.8, 0.99)])
    @pytest.mark.parametrize('H', [1, 3, 10])
    def test_tail_bounds_error(self, make_problem, gamma, gamma_tilde, H):
        """Test the reweighted rollout is within the tail mass of the long-discount occupancy"""
        mdp, policy = make_problem(seed=13)
        model = exact_model(mdp, policy, gamma)
        target = exact_occupancy(mdp, policy, gamma_tilde).mu
        for start in [(0, 0), (4, 2)]:
            dist, tail = reweighted_distribution(model, policy, start, gamma_tilde, H)
            assert dist.sum() == pytest.approx(1 - tail)
            assert total_variation(dist, target[start]) <= tail + 1e-10

    def test_long_rollout_recovers_occupancy(self, make_problem):
        """Test a long rollout reproduces the longer-discount occupancy"""
        mdp, policy = make_problem(seed=14)
        model = exact_model(mdp, policy, 0.5)
        dist, tail = reweighted_distribution(model, policy, (3, 0), 0.9, 200)
        assert tail < 1e-15
        np.testing.assert_allclose(dist, exact_occupancy(mdp, policy, 0.9).mu[3, 0], atol=1e-10)

    def test_state_start_recovers_state_occupancy(self, make_problem):
        """Test a state start reproduces the policy-averaged occupancy"""
        mdp, policy = make_problem(seed=15)
        model = exact_model(mdp, policy, 0.6)
        dist, _ = reweighted_distribution(model, policy, 5, 0.95, 400)
        expected = exact_state_occupancy(policy_transition_matrix(mdp, policy), 0.95)[5]
        np.testing.assert_allclose(dist, expected, atol=1e-9)


class TestStepsToMass:
    @pytest.mark.parametrize('gamma, expected', [(0.0, 299), (0.8, 59), (0.99, 1)])
    def test_anchor_values(self, gamma, expected):
        """Test horizons needed for 95% of the mass at gamma_tilde 0.99"""
        assert steps_to_mass(gamma, 0.99, 0.95) == expected

    def test_decreasing_in_gamma(self):
        """Test longer model discounts need fewer steps"""
        gammas = [0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95, 0.99]
        steps = [steps_to_mass(gamma, 0.99, 0.95) for gamma in gammas]
        assert steps == sorted(steps, reverse=True)

    def test_smallest_horizon(self):
        """Test the returned horizon is the smallest that suffices"""
        H = steps_to_mass(0.5, 0.9, 0.9)
        assert rollout_weights(0.5, 0.9, H).tail_mass <= 0.1
        assert rollout_weights(0.5, 0.9, H - 1).tail_mass > 0.1

    @pytest.mark.parametrize('q', [0.0, 1.0, 1.5])
    def test_invalid_mass(self, q):
        """Test q outside (0, 1) is rejected"""
        with pytest.raises(ValueError):
            steps_to_mass(0.5, 0.9, q)


class TestSampleRollout:
    def test_deterministic_given_seed(self, make_problem):
        """Test same seed, same rollouts"""
        mdp, policy = make_problem(seed=16)
        model = exact_model(mdp, policy, 0.5)
        first = sample_rollout(model, policy, 0, 6, np.random.default_rng(3), size=10)
        second = sample_rollout(model, policy, 0, 6, np.random.default_rng(3), size=10)
        np.testing.assert_array_equal(first, second)
        assert first.shape == (10, 6)

    def test_single_rollout_shape(self, chain, chain_policy, rng):
        """Test without size a single trajectory is returned"""
        model = exact_model(chain, chain_policy, 0.5)
        assert sample_rollout(model, chain_policy, 0, 4, rng).shape == (4,)

    def test_step_frequencies(self, chain, chain_policy, rng):
        """Test sampled steps follow the chained distributions"""
        model = exact_model(chain, chain_policy, 0.5)
        rollouts = sample_rollout(model, chain_policy, 0, 2, rng, size=20_000)
        assert rollouts[:, 0].mean() == pytest.approx(2 / 3, abs=0.02)
        assert rollouts[:, 1].mean() == pytest.approx(4 / 9, abs=0.02)

    def test_first_action_is_honored(self, rng):
        """Test a (state, action) start takes the given action first"""
        probs = np.zeros((3, 2, 3))
        probs[:, 0, 1] = 1.0
        probs[:, 1, 2] = 1.0
        model = GammaModelTable.from_probs(probs, 0.0)
        policy = uniform_policy(3, 2)
        rollouts = sample_rollout(model, policy, (0, 1), 1, rng, size=50)
        np.testing.assert_array_equal(rollouts[:, 0], 2)


def discount_grid():
    for gamma in np.round(np.arange(0.0, 1.0, 0.1), 2):
        for gamma_tilde in np.round(np.arange(gamma, 0.995, 0.01), 2):
            yield float(gamma), float(gamma_tilde)


class TestDiscountGrid:
    def test_tail_mass_identity(self):
        """Test one minus the summed weights equals the closed-form tail on the full grid"""
        for gamma, gamma_tilde in discount_grid():
            weights = rollout_weights(gamma, gamma_tilde, 100)
            ratio = (gamma_tilde - gamma) / (1 - gamma)
            residuals = np.abs(1 - np.cumsum(weights.alphas) - ratio ** np.arange(1, 101))
            assert residuals.max() <= 1e-12, (gamma, gamma_tilde)

    def test_mixture_matches_geometric(self):
        """Test the timestep mixture equals the geometric pmf up to H = 50 on the full grid"""
        for gamma, gamma_tilde in discount_grid():
            mixture = timestep_mixture(gamma, gamma_tilde, 50, 50)
            np.testing.assert_allclose(mixture, geometric_pmf(gamma_tilde, 50), rtol=0, atol=1e-12)

    @pytest.mark.parametrize('gamma', [0.0, 0.5, 0.8])
    def test_random_mdps(self, gamma):
        """Test the tail bound on random MDPs and random policies for H up to 50"""
        rng = np.random.default_rng(int(gamma * 10))
        for _ in range(20):
            n_states = int(rng.integers(2, 21))
            mdp = random_mdp(n_states, 2, rng)
            policy = random_policy(n_states, 2, rng)
            model = exact_model(mdp, policy, gamma)
            target = exact_occupancy(mdp, policy, 0.95).mu[0, 1]
            steps = step_distributions(model, policy, (0, 1), 600)
            weights = rollout_weights(gamma, 0.95, 600)
            partial = np.cumsum(weights.alphas[:, None] * steps, axis=0)
            for H in range(1, 51):
                tail = rollout_weights(gamma, 0.95, H).tail_mass
                assert total_variation(partial[H - 1], target) <= tail + 1e-10
            H = steps_to_mass(gamma, 0.95, 1 - 1e-9)
            assert total_variation(partial[H - 1], target) <= 1e-9
