import numpy as np
import pytest

from gamma_models.config import (
    DEFAULTS,
    build_problem,
    coerce_value,
    load_config,
    normalize_key,
    parse_config,
    resolve_config,
)


class TestParseConfig:
    def test_parse(self):
        """Test parsing keys, values, lists and comments"""
        text = '\n'.join([
            '# control run',
            'env = gridworld',
            'Gamma Tilde = 0.99',
            'gamma = 0.8  # model discount',
            'H = 3',
            'estimators = mve, model_free',
            'behavior = none',
            '',
        ])
        assert parse_config(text) == {
            'env': 'gridworld',
            'gamma_tilde': 0.99,
            'gamma': 0.8,
            'H': 3,
            'estimators': ['mve', 'model_free'],
            'behavior': None,
        }

    def test_malformed_line(self):
        """Test a line without = names its line number"""
        with pytest.raises(ValueError, match='line 2'):
            parse_config('gamma = 0.5\nnot a pair\n')

    def test_normalize_key(self):
        """Test key spelling variants"""
        assert normalize_key('Steps-Per Episode') == 'steps_per_episode'
        assert normalize_key('H') == 'H'

    @pytest.mark.parametrize('text, expected', [
        ('1e-2', 0.01),
        ('42', 42),
        ('yes', True),
        ('False', False),
        ('pendulum', 'pendulum'),
        ('9, 9, 5', [9, 9, 5]),
    ])
    def test_coerce_value(self, text, expected):
        """Test value coercion"""
        assert coerce_value(text) == expected

    def test_load_config(self, tmp_path):
        """Test loading from a file"""
        path = tmp_path / 'run.cfg'
        path.write_text('seed = 7\n')
        assert load_config(path) == {'seed': 7}


class TestResolveConfig:
    def test_precedence(self):
        """Test overrides beat the file, the file beats defaults"""
        config = resolve_config({'seed': 3, 'env': 'gridworld'}, {'seed': 9, 'model': None})
        assert config['seed'] == 9
        assert config['env'] == 'gridworld'
        assert 'model' not in config
        assert config['n_transitions'] == DEFAULTS['n_transitions']

    def test_defaults_are_not_shared(self):
        """Test resolved configs are independent copies"""
        resolve_config({'mass': 0.5})
        assert DEFAULTS['mass'] == 0.95

    def test_actions_alias(self):
        """Test ``actions`` is read as ``n_actions``"""
        config = resolve_config({'env': 'pendulum', 'bins': 5, 'actions': 3})
        assert config['n_actions'] == 3
        assert 'actions' not in config
        assert build_problem(config).spec.n_actions == 3

    def test_alias_and_name_together(self):
        """Test a key given under both spellings is rejected"""
        with pytest.raises(ValueError, match='given twice'):
            resolve_config({'actions': 3, 'n_actions': 4})

    @pytest.mark.parametrize('key', ['gama', 'bins_velocity', 'n_action'])
    def test_unknown_key(self, key):
        """Test misspelled keys are rejected instead of ignored"""
        with pytest.raises(ValueError, match=f'Unknown config keys: {key}'):
            resolve_config({key: 1})

    def test_command_keys_are_known(self):
        """Test keys read by the commands pass"""
        config = resolve_config({'gamma': 0.9, 'H': 5, 'q_step': 0.5, 'batch_size': 8, 'bins_theta': 7})
        assert config['bins_theta'] == 7


class TestBuildProblem:
    def test_swap_chain(self):
        """Test the default problem"""
        problem = build_problem(resolve_config())
        assert problem.mdp.n_states == 2
        assert problem.behavior is problem.policy
        assert problem.spec is None
        assert problem.collect_source is problem.mdp

    def test_gridworld_optimal_policy(self):
        """Test an optimal gridworld policy moves toward the goal"""
        problem = build_problem(resolve_config({'env': 'gridworld', 'policy': 'optimal', 'gamma': 0.9}))
        assert problem.policy.probs.max(axis=1).min() == 1.0
        assert problem.mdp.n_states == 25

    def test_random_mdp_seed(self):
        """Test the random MDP follows mdp_seed independently of the run seed"""
        config = {'env': 'random', 'mdp_seed': 4, 'mdp_states': 6, 'mdp_actions': 3}
        first = build_problem(resolve_config({**config, 'seed': 0}))
        second = build_problem(resolve_config({**config, 'seed': 1}))
        np.testing.assert_array_equal(first.mdp.transition, second.mdp.transition)
        assert first.mdp.transition.shape == (6, 3, 6)

    def test_off_policy_behavior(self):
        """Test a separate behavior policy"""
        problem = build_problem(resolve_config({'env': 'random', 'policy': 'random', 'behavior': 'uniform'}))
        np.testing.assert_allclose(problem.behavior.probs, 0.5)
        assert problem.behavior is not problem.policy

    def test_discretized_environment(self):
        """Test per-dimension bin counts for a continuous environment"""
        config = resolve_config({'env': 'pendulum', 'bins': 9, 'bins_thetadot': 5, 'n_actions': 3})
        problem = build_problem(config)
        assert problem.spec.n_states == 45
        assert problem.mdp.transition.shape == (45, 3, 45)
        assert not problem.continuous

    def test_continuous_dynamics(self):
        """Test continuous dynamics collect from the environment"""
        problem = build_problem(resolve_config({'env': 'mountain_car', 'bins': [6, 4], 'dynamics': 'continuous'}))
        assert problem.continuous
        assert problem.collect_source == 'mountain_car'

    @pytest.mark.parametrize('overrides, message', [
        ({'env': 'cartpole'}, 'Unknown environment'),
        ({'policy': 'greedy'}, 'Unknown policy'),
        ({'env': 'pendulum', 'bins': [3, 3, 3]}, 'bin counts'),
        ({'env': 'pendulum', 'bins': 3, 'dynamics': 'stochastic'}, 'dynamics'),
        ({'env': 'acrobot'}, 'tabular limit of 2500'),
        ({'env': 'pendulum', 'bins': 51}, 'tabular limit'),
    ])
    def test_invalid(self, overrides, message):
        """Test invalid problem options"""
        with pytest.raises(ValueError, match=message):
            build_problem(resolve_config(overrides))
