from .mdp import (
    TabularMdp, PolicyTable, VTable, QTable,
    validate_mdp, validate_policy, policy_transition_matrix,
    swap_chain, gridworld, random_mdp, uniform_policy, deterministic_policy, random_policy,
)
from .discretize import DiscretizationSpec, discretize, bin_center
from .envs import ContinuousEnvState, env_step, state_reward, discretized_mdp, default_discretization
from .dataset import TransitionSample, TransitionDataset, collect_dataset, read_dataset_csv, write_dataset_csv
from .oracle import (
    exact_successor, exact_occupancy, monte_carlo_occupancy, policy_evaluation, value_iteration,
)
from .gamma_td import (
    GammaModelTable, TargetModel, TrainConfig, GammaTdTrainer,
    bootstrapped_target, expected_td_sweep, sampled_td_train, density_regression_loss, state_conditioned,
)
from .rollout import (
    RolloutWeights, rollout_weights, negative_binomial_pmf, timestep_mixture,
    n_step_distribution, reweighted_distribution, steps_to_mass, sample_rollout,
)
from .value_expansion import (
    ValueEstimate, q_from_model, mve_estimate, gamma_mve_estimate, sampled_gamma_mve_estimate,
    terminal_weight, effective_horizon_match,
)
from .control import (
    SoftPolicy, AcConfig, LearningCurve,
    run_actor_critic, run_experiments, q_update, v_update, policy_update, evaluate_policy,
)

__all__ = [
    'TabularMdp', 'PolicyTable', 'VTable', 'QTable',
    'validate_mdp', 'validate_policy', 'policy_transition_matrix',
    'swap_chain', 'gridworld', 'random_mdp', 'uniform_policy', 'deterministic_policy', 'random_policy',
    'DiscretizationSpec', 'discretize', 'bin_center',
    'ContinuousEnvState', 'env_step', 'state_reward', 'discretized_mdp', 'default_discretization',
    'TransitionSample', 'TransitionDataset', 'collect_dataset', 'read_dataset_csv', 'write_dataset_csv',
    'exact_successor', 'exact_occupancy', 'monte_carlo_occupancy', 'policy_evaluation', 'value_iteration',
    'GammaModelTable', 'TargetModel', 'TrainConfig', 'GammaTdTrainer',
    'bootstrapped_target', 'expected_td_sweep', 'sampled_td_train', 'density_regression_loss',
    'state_conditioned',
    'RolloutWeights', 'rollout_weights', 'negative_binomial_pmf', 'timestep_mixture',
    'n_step_distribution', 'reweighted_distribution', 'steps_to_mass', 'sample_rollout',
    'ValueEstimate', 'q_from_model', 'mve_estimate', 'gamma_mve_estimate', 'sampled_gamma_mve_estimate',
    'terminal_weight', 'effective_horizon_match',
    'SoftPolicy', 'AcConfig', 'LearningCurve',
    'run_actor_critic', 'run_experiments', 'q_update', 'v_update', 'policy_update', 'evaluate_policy',
]
