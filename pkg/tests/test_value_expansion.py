import logging

import numpy as np
import pytest

from gamma_models.discretize import DiscretizationSpec
from gamma_models.gamma_td import GammaModelTable
from gamma_models.mdp import VTable, uniform_policy
from gamma_models.oracle import exact_occupancy, policy_evaluation
from gamma_models.value_expansion import (
    effective_horizon_match,
    gamma_mve_estimate,
    mve_estimate,
    q_from_model,
    q_table_from_model,
    sampled_gamma_mve_estimate,
    terminal_weight,
    v_table_from_model,
    value_deviation,
    write_value_map,
)


def exact_model(mdp, policy, gamma):
    return GammaModelTable.from_probs(exact_occupancy(mdp, policy, gamma).mu, gamma)


class TestModelValues:
    def test_q_from_exact_model(self, make_problem):
        """Test exact model rows give exact action-values"""
        mdp, policy = make_problem(seed=20)
        model = exact_model(mdp, policy, 0.9)
        _, Q = policy_evaluation(mdp, policy, 0.9)
        assert q_from_model(model, mdp.reward, 4, 1) == pytest.approx(Q.values[4, 1], abs=1e-9)
        np.testing.assert_allclose(q_table_from_model(model, mdp.reward), Q.values, atol=1e-9)

    def test_v_from_exact_model(self, make_problem):
        """Test policy-averaged rows give exact state values"""
        mdp, policy = make_problem(seed=21)
        V, _ = policy_evaluation(mdp, policy, 0.8)
        np.testing.assert_allclose(
            v_table_from_model(exact_model(mdp, policy, 0.8), policy, mdp.reward), V.values, atol=1e-9
        )

    def test_swap_chain(self, chain, chain_policy):
        """Test the swap chain value from its model"""
        model = exact_model(chain, chain_policy, 0.5)
        assert q_from_model(model, chain.reward, 0, 0) == pytest.approx(4 / 3)

    def test_reward_shape_checked(self, chain, chain_policy):
        """Test a reward vector of the wrong length is rejected"""
        with pytest.raises(ValueError):
            q_from_model(exact_model(chain, chain_policy, 0.5), [1.0, 0.0, 0.0], 0, 0)


class TestGammaMve:
    @pytest.mark.parametrize('H', [1, 2, 5, 10, 20])
    def test_exact_identity(self, make_problem, H):
        """Test exact models and exact terminal values reproduce the long-discount value"""
        mdp, policy = make_problem(seed=22)
        model = exact_model(mdp, policy, 0.5)
        V, Q = policy_evaluation(mdp, policy, 0.9)
        for s in range(mdp.n_states):
            estimate = gamma_mve_estimate(model, V, mdp.reward, s, H, 0.9, policy)
            assert estimate.value == pytest.approx(V.values[s], abs=1e-8)
        estimate = gamma_mve_estimate(model, V, mdp.reward, (2, 1), H, 0.9, policy)
        assert estimate.value == pytest.approx(Q.values[2, 1], abs=1e-8)

    @pytest.mark.parametrize('H', [1, 7, 20])
    def test_exact_identity_gridworld(self, grid, H):
        """Test the identity on the gridworld under a uniform policy"""
        policy = uniform_policy(25, 4)
        model = exact_model(grid, policy, 0.8)
        V, _ = policy_evaluation(grid, policy, 0.99)
        for s in range(25):
            estimate = gamma_mve_estimate(model, V, grid.reward, s, H, 0.99, policy)
            assert estimate.value == pytest.approx(V.values[s], abs=1e-8)

    def test_components(self, make_problem):
        """Test the value splits into model and terminal terms"""
        mdp, policy = make_problem(seed=23)
        V, _ = policy_evaluation(mdp, policy, 0.99)
        estimate = gamma_mve_estimate(exact_model(mdp, policy, 0.8), V, mdp.reward, 0, 3, 0.99, policy)
        assert estimate.value == pytest.approx(estimate.model_term + estimate.terminal_term)
        assert (estimate.horizon, estimate.gamma, estimate.gamma_tilde) == (3, 0.8, 0.99)

    def test_zero_discount_matches_mve(self, make_problem):
        """Test a one-step model reduces to ordinary value expansion"""
        mdp, policy = make_problem(seed=24)
        model = exact_model(mdp, policy, 0.0)
        V = VTable(np.random.default_rng(0).normal(size=mdp.n_states))
        for H in (1, 4, 9):
            for start in (3, (5, 2)):
                expected = mve_estimate(model, V, mdp.reward, start, H, 0.9, policy)
                estimate = gamma_mve_estimate(model, V, mdp.reward, start, H, 0.9, policy)
                assert estimate.value == pytest.approx(expected, abs=1e-12)

    def test_terminal_error_is_scaled(self, make_problem):
        """Test a constant terminal error passes through with the terminal weight"""
        mdp, policy = make_problem(seed=25)
        model = exact_model(mdp, policy, 0.8)
        V, _ = policy_evaluation(mdp, policy, 0.99)
        perturbed = VTable(V.values + 0.5)
        for H in (1, 3, 10):
            exact = gamma_mve_estimate(model, V, mdp.reward, 1, H, 0.99, policy).value
            shifted = gamma_mve_estimate(model, perturbed, mdp.reward, 1, H, 0.99, policy).value
            assert shifted - exact == pytest.approx(0.5 * terminal_weight(0.8, 0.99, H), abs=1e-10)

    def test_shorter_value_discount_rejected(self, chain, chain_policy):
        """Test gamma_tilde below the model discount is rejected"""
        model = exact_model(chain, chain_policy, 0.5)
        with pytest.raises(ValueError):
            gamma_mve_estimate(model, VTable(np.zeros(2)), chain.reward, 0, 2, 0.3, chain_policy)

    def test_sampled_estimate_is_unbiased(self, make_problem):
        """Test sampled rollouts average to the expected estimate"""
        mdp, policy = make_problem(seed=26)
        model = exact_model(mdp, policy, 0.5)
        V, _ = policy_evaluation(mdp, policy, 0.9)
        expected = gamma_mve_estimate(model, V, mdp.reward, 0, 4, 0.9, policy).value
        sampled = sampled_gamma_mve_estimate(
            model, V, mdp.reward, 0, 4, 0.9, policy, np.random.default_rng(4), n_rollouts=40_000
        ).value
        assert sampled == pytest.approx(expected, rel=0.02)


class TestMve:
    @pytest.mark.parametrize('H', [0, 1, 3, 8])
    def test_exact_identity(self, make_problem, H):
        """Test the true MDP and the exact value are consistent at every horizon"""
        mdp, policy = make_problem(seed=27)
        V, _ = policy_evaluation(mdp, policy, 0.9)
        assert mve_estimate(mdp, V, mdp.reward, 6, H, 0.9, policy) == pytest.approx(V.values[6], abs=1e-9)

    def test_action_start(self, make_problem):
        """Test an action start reproduces the action-value"""
        mdp, policy = make_problem(seed=28)
        V, Q = policy_evaluation(mdp, policy, 0.9)
        assert mve_estimate(mdp, V, mdp.reward, (1, 2), 4, 0.9, policy) == pytest.approx(Q.values[1, 2], abs=1e-9)

    def test_multi_step_model_rejected(self, chain, chain_policy):
        """Test models with gamma > 0 are not single-step models"""
        with pytest.raises(ValueError, match='single-step'):
            mve_estimate(exact_model(chain, chain_policy, 0.5), VTable(np.zeros(2)), chain.reward, 0, 1, 0.9, chain_policy)


class TestHorizons:
    def test_terminal_weight(self):
        """Test the terminal weight for gamma 0.8, gamma_tilde 0.99, H 1"""
        assert terminal_weight(0.8, 0.99, 1) == pytest.approx(0.95)

    def test_no_residual_warning(self, caplog):
        """Test the closed form agrees with the summed weights"""
        with caplog.at_level(logging.WARNING, logger='gamma_models.value_expansion'):
            terminal_weight(0.5, 0.9, 30)
        assert caplog.text == ''

    def test_effective_horizon(self):
        """Test one gamma-model step matches about five single steps"""
        horizon = effective_horizon_match(0.8, 0.99, 1)
        assert horizon.value == pytest.approx(5.10, abs=0.01)
        assert horizon.rounded == 5
        assert abs(0.99 ** 5 - terminal_weight(0.8, 0.99, 1)) <= 0.002
        assert not horizon.infinite

    def test_effective_horizon_scales_with_steps(self):
        """Test the matched horizon is linear in the rollout length"""
        assert effective_horizon_match(0.8, 0.99, 4).value == pytest.approx(4 * effective_horizon_match(0.8, 0.99, 1).value)

    def test_equal_discounts_are_infinite(self):
        """Test a model at the value discount needs no terminal value"""
        horizon = effective_horizon_match(0.9, 0.9, 3)
        assert horizon.infinite
        assert horizon.rounded is None


class TestValueMap:
    def test_grid_header_and_rows(self, tmp_path):
        """Test a grid value map lists cell centers"""
        spec = DiscretizationSpec(((0.0, 1.0, 2), (0.0, 2.0, 2)), (0.0,))
        path = write_value_map(tmp_path / 'values.csv', [1.0, 2.0, 3.0, 4.0], spec)
        lines = path.read_text().splitlines()
        assert lines[0] == 'state_index,dim0_center,dim1_center,value'
        assert lines[2] == '1,0.25,1.5,2.0'
        assert len(lines) == 5

    def test_plain_header(self, tmp_path):
        """Test a tabular value map has two columns"""
        path = write_value_map(tmp_path / 'values.csv', [0.5, 1.5])
        assert path.read_text().splitlines() == ['state_index,value', '0,0.5', '1,1.5']

    def test_size_mismatch(self, tmp_path):
        """Test a value map must cover the grid"""
        spec = DiscretizationSpec(((0.0, 1.0, 2),), (0.0,))
        with pytest.raises(ValueError):
            write_value_map(tmp_path / 'values.csv', [1.0, 2.0, 3.0], spec)

    def test_deviation(self):
        """Test max and mean absolute deviation"""
        assert value_deviation([1.0, 2.0, 3.0], [1.0, 2.5, 2.0]) == (1.0, 0.5)
