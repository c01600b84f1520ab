"""
Tabular entropy-regularized actor-critic with model-based critic targets.

The critic target for a transition ``(s, a, r, s')`` is ``r + gamma_tilde * V_est(s')``
where ``V_est`` is the value table itself (model_free), a single-step model
rollout (mve) or a gamma-model rollout (gamma_mve).
"""
import asyncio
import csv
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import List, Literal, NamedTuple, Optional, Sequence, Tuple, TypedDict, Union

import numpy as np
from scipy.special import entr, softmax

from .dataset import TransitionDataset, TransitionSample
from .discretize import DiscretizationSpec
from .envs import make_env
from .gamma_td import GammaModelTable, GammaTdTrainer
from .mdp import PolicyTable, QTable, TabularMdp, VTable, sample_rows
from .oracle import greedy_actions, value_iteration
from .validators import is_count, is_discount, is_positive, is_unit_interval
from .value_expansion import gamma_mve_estimate, mve_estimate, sampled_gamma_mve_estimate, terminal_weight

logger = logging.getLogger(__name__)

ESTIMATORS = ('gamma_mve', 'mve', 'model_free')
CURVE_HEADER = ['episode', 'return_mean', 'return_std', 'estimator', 'seed']


@dataclass(frozen=True)
class SoftPolicy:
    """
    Boltzmann policy ``pi(.|s) = softmax(logits[s] / temperature)``.

    A temperature of 0 is the greedy limit: all mass on the highest logit, lowest
    index among exact ties.
    """
    logits: np.ndarray
    temperature: float = 1.0

    def __post_init__(self):
        logits = np.array(self.logits, dtype=float, copy=True)
        if logits.ndim != 2 or not np.all(np.isfinite(logits)):
            raise ValueError('policy logits must be a finite (S, A) matrix')
        if not (is_positive(self.temperature) or self.temperature == 0):
            raise ValueError('"temperature" must be non-negative')
        logits.flags.writeable = False
        object.__setattr__(self, 'logits', logits)

    @cached_property
    def probs(self) -> np.ndarray:
        if self.temperature == 0:
            probs = np.zeros_like(self.logits)
            probs[np.arange(len(probs)), greedy_actions(self.logits, atol=0.0)] = 1.0
        else:
            probs = softmax(self.logits / self.temperature, axis=1)
        probs.flags.writeable = False
        return probs

    @property
    def table(self) -> PolicyTable:
        return PolicyTable(self.probs)

    def greedy(self) -> 'SoftPolicy':
        return SoftPolicy(self.logits, 0.0)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int, temperature: float = 1.0) -> 'SoftPolicy':
        return cls(np.zeros((n_states, n_actions)), temperature)


class AcConfig(TypedDict, total=False):
    estimator: Literal['gamma_mve', 'mve', 'model_free']
    rollout: Literal['expected', 'sampled']
    gamma: float
    gamma_tilde: float
    H: int
    mve_horizon: int
    q_step: float
    v_step: float
    policy_step: Optional[float]
    model_step: float
    model_tau: float
    model_batch: int
    temperature: float
    episodes: int
    steps_per_episode: int
    model_every: int
    updates_per_step: int
    eval_every: int
    eval_episodes: int
    capacity: int
    seed: int


AC_DEFAULTS: AcConfig = {
    'estimator': 'gamma_mve',
    'rollout': 'expected',
    'gamma': 0.8,
    'gamma_tilde': 0.99,
    'H': 1,
    'mve_horizon': 5,
    'q_step': 0.5,
    'v_step': 0.5,
    'policy_step': None,
    'model_step': 0.1,
    'model_tau': 0.01,
    'model_batch': 32,
    'temperature': 1.0,
    'episodes': 500,
    'steps_per_episode': 50,
    'model_every': 1,
    'updates_per_step': 4,
    'eval_every': 10,
    'eval_episodes': 10,
    'capacity': 200_000,
    'seed': 0,
}

ENV_TEMPERATURE = {'pendulum': 0.1}


def validate_ac_config(params: AcConfig) -> None:
    """
    Validate actor-critic options.

    Args:
        params: Options to validate

    Raises:
        ValueError: If any option is invalid
    """
    unknown = set(params) - set(AC_DEFAULTS)
    if unknown:
        raise ValueError(f'Unknown control options: {", ".join(sorted(unknown))}')
    if 'estimator' in params and params['estimator'] not in ESTIMATORS:
        raise ValueError(f'"estimator" must be one of {", ".join(ESTIMATORS)}')
    if 'rollout' in params and params['rollout'] not in ('expected', 'sampled'):
        raise ValueError('"rollout" must be "expected" or "sampled"')
    for key in ('gamma', 'gamma_tilde'):
        if key in params and not is_discount(params[key]):
            raise ValueError(f'"{key}" must be in [0, 1)')
    if params.get('gamma', 0.0) > params.get('gamma_tilde', 1.0):
        raise ValueError('"gamma" must not exceed "gamma_tilde"')
    for key in ('q_step', 'v_step', 'model_step'):
        if key in params and not is_unit_interval(params[key]):
            raise ValueError(f'"{key}" must be in (0, 1]')
    if params.get('policy_step') is not None and not is_positive(params['policy_step']):
        raise ValueError('"policy_step" must be positive')
    if 'model_tau' in params and not is_unit_interval(params['model_tau']):
        raise ValueError('"model_tau" must be in (0, 1]')
    if 'temperature' in params and not (is_positive(params['temperature']) or params['temperature'] == 0):
        raise ValueError('"temperature" must be non-negative')
    for key in ('H', 'mve_horizon', 'model_batch', 'episodes', 'steps_per_episode',
                'updates_per_step', 'eval_every', 'eval_episodes', 'capacity'):
        if key in params and not is_count(params[key]):
            raise ValueError(f'"{key}" must be a positive integer')
    for key in ('model_every', 'seed'):
        if key in params and not is_count(params[key], minimum=0):
            raise ValueError(f'"{key}" must be a non-negative integer')


def process_ac_config(params: Optional[AcConfig] = None, env: Optional[str] = None) -> AcConfig:
    """
    Validates options and fills in defaults.

    The default temperature depends on the environment when one is named.
    """
    params = dict(params or {})
    validate_ac_config(params)
    defaults = dict(AC_DEFAULTS)
    if env in ENV_TEMPERATURE:
        defaults['temperature'] = ENV_TEMPERATURE[env]
    resolved = {**defaults, **params}
    validate_ac_config(resolved)
    if resolved['policy_step'] is not None and resolved['temperature'] == 0:
        raise ValueError('"policy_step" needs a positive temperature')
    return resolved


def bootstrap_weight(config: AcConfig) -> float:
    """Weight the configured critic estimate puts on the value table: 1, ``gamma_tilde^H`` or the gamma-MVE tail."""
    estimator = config['estimator']
    if estimator == 'model_free':
        return 1.0
    if estimator == 'mve':
        return config['gamma_tilde'] ** config['mve_horizon']
    return terminal_weight(config['gamma'], config['gamma_tilde'], config['H'])


def initial_values(config: AcConfig, n_states: int, n_actions: int) -> Tuple[QTable, VTable]:
    """
    Starting tables at the fixed point of the configured backup for a uniform
    policy in a reward-free problem.

    ``V0 = temperature * ln|A| / (1 - gamma_tilde * w)`` and ``Q0 = V0 - temperature * ln|A|``
    with ``w`` the bootstrap weight. Untried actions then start level with tried actions
    that found no reward.
    """
    entropy = config['temperature'] * np.log(n_actions)
    v0 = entropy / (1.0 - config['gamma_tilde'] * bootstrap_weight(config))
    return QTable(np.full((n_states, n_actions), v0 - entropy)), VTable(np.full(n_states, v0))


def q_update(
    Q: QTable,
    sample: TransitionSample,
    target_value: float,
    step_size: float,
    gamma_tilde: float,
) -> QTable:
    """``Q[s][a] += step_size * (r + gamma_tilde * target_value - Q[s][a])``."""
    values = np.array(Q.values)
    _q_step(values, sample, target_value, step_size, gamma_tilde)
    return QTable(values)


def _q_step(values, sample, target_value, step_size, gamma_tilde) -> None:
    s, a, r, _ = sample
    values[s, a] += step_size * (r + gamma_tilde * target_value - values[s, a])


def soft_state_value(q_row: np.ndarray, probs_row: np.ndarray, temperature: float) -> float:
    """``sum_a pi(a) (Q(a) - temperature * log pi(a))``; zero-probability actions contribute nothing."""
    return float(probs_row @ q_row + temperature * entr(probs_row).sum())


def v_update(
    V: VTable,
    s: int,
    Q: QTable,
    policy: Union[SoftPolicy, PolicyTable],
    temperature: float,
    step_size: float,
) -> VTable:
    """Moves ``V[s]`` toward the soft value of ``Q[s]`` under ``policy``."""
    values = np.array(V.values)
    target = soft_state_value(Q.values[s], policy.probs[s], temperature)
    values[s] += step_size * (target - values[s])
    return VTable(values)


def _policy_logits(logits: np.ndarray, s: int, q_row: np.ndarray, temperature: float,
                   step_size: Optional[float]) -> None:
    if step_size is None:
        logits[s] = q_row
        return
    probs = softmax(logits[s] / temperature)
    objective_terms = temperature * np.log(np.maximum(probs, 1e-300)) - q_row
    objective = probs @ objective_terms
    logits[s] -= step_size * probs * (objective_terms - objective) / temperature


def policy_update(
    policy: SoftPolicy,
    s: int,
    Q: QTable,
    temperature: Optional[float] = None,
    step_size: Optional[float] = None,
) -> SoftPolicy:
    """
    Improves ``policy`` at state ``s`` against ``Q``.

    Without ``step_size`` the row is set to its exact minimizer
    ``softmax(Q[s] / temperature)``; with one, a gradient step is taken on
    ``E_{a~pi}[temperature * log pi(a|s) - Q(s, a)]``.
    """
    temperature = policy.temperature if temperature is None else temperature
    if step_size is not None and temperature == 0:
        raise ValueError('gradient policy updates need a positive temperature')
    logits = np.array(policy.logits)
    _policy_logits(logits, s, np.asarray(Q.values[s], dtype=float), temperature, step_size)
    return SoftPolicy(logits, temperature)


def evaluate_policy(
    source,
    policy: Union[SoftPolicy, PolicyTable],
    episodes: int,
    horizon: int,
    rng: np.random.Generator,
    greedy: bool = False,
    spec: Optional[DiscretizationSpec] = None,
) -> Tuple[float, float]:
    """
    Mean and standard deviation of the undiscounted return over ``episodes`` episodes.

    Args:
        source: A TabularMdp, environment name (with ``spec``) or discrete env.
        policy: Policy to run.
        episodes: Number of episodes, at least 1.
        horizon: Steps per episode.
        rng: Random generator.
        greedy: Act with the highest-probability action, lowest index on ties.
        spec: Discretization for continuous environments.
    """
    if not is_count(episodes):
        raise ValueError('"episodes" must be a positive integer')
    if not is_count(horizon):
        raise ValueError('"horizon" must be a positive integer')
    env = make_env(source, spec)
    probs = policy.probs
    actions = greedy_actions(probs, atol=0.0) if greedy else None
    returns = np.zeros(episodes)
    for episode in range(episodes):
        state = env.reset(rng)
        for _ in range(horizon):
            action = int(actions[state]) if greedy else int(sample_rows(probs[state], rng))
            reward, state = env.step(action, rng)
            returns[episode] += reward
    return float(returns.mean()), float(returns.std())


@dataclass
class LearningCurve:
    estimator: str
    seed: int
    episodes: List[int] = field(default_factory=list)
    return_means: List[float] = field(default_factory=list)
    return_stds: List[float] = field(default_factory=list)

    def append(self, episode: int, mean: float, std: float) -> None:
        self.episodes.append(episode)
        self.return_means.append(mean)
        self.return_stds.append(std)

    def rows(self) -> list:
        return [
            [episode, mean, std, self.estimator, self.seed]
            for episode, mean, std in zip(self.episodes, self.return_means, self.return_stds)
        ]

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        with path.open('w', newline='', encoding='utf-8') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(CURVE_HEADER)
            for episode, mean, std, estimator, seed in self.rows():
                writer.writerow([episode, repr(float(mean)), repr(float(std)), estimator, seed])
        return path


def episodes_to_threshold(curve: LearningCurve, threshold: float) -> Optional[int]:
    """First evaluated episode whose mean return reaches ``threshold``."""
    for episode, mean in zip(curve.episodes, curve.return_means):
        if mean >= threshold:
            return episode
    return None


def reference_return(
    mdp: TabularMdp,
    config: Optional[AcConfig] = None,
    source=None,
    spec: Optional[DiscretizationSpec] = None,
) -> float:
    """
    Greedy evaluation return of the value-iteration policy at ``gamma_tilde``.

    Uses the evaluation protocol of ``run_actor_critic`` (same episode count,
    horizon and evaluation seed), on ``source`` when given and on ``mdp`` otherwise.
    """
    env = source if isinstance(source, str) else None
    config = process_ac_config(config, env)
    _, optimal = value_iteration(mdp, config['gamma_tilde'])
    mean, _ = evaluate_policy(
        mdp if source is None else source, optimal, config['eval_episodes'],
        config['steps_per_episode'], np.random.default_rng([config['seed'], 1]), greedy=True, spec=spec,
    )
    return mean


def critic_estimate(
    s_next: int,
    config: AcConfig,
    V: VTable,
    reward: np.ndarray,
    policy: PolicyTable,
    model: Optional[GammaModelTable] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """
    ``V_est(s')`` for the configured estimator.

    Args:
        s_next: State to evaluate.
        config: Resolved options; ``estimator``, ``H``, ``mve_horizon``,
            ``gamma_tilde`` and ``rollout`` are read.
        V: Current value table.
        reward: State rewards used inside model rollouts.
        policy: Policy followed by the rollouts.
        model: gamma-model (mve expects a gamma = 0 model).
        rng: Needed for sampled rollouts.
    """
    estimator = config['estimator']
    if estimator == 'model_free':
        return float(V.values[s_next])
    if model is None:
        raise ValueError(f'"{estimator}" needs a model')
    if estimator == 'mve':
        return mve_estimate(model, V, reward, s_next, config['mve_horizon'], config['gamma_tilde'], policy)
    if config['rollout'] == 'sampled':
        if rng is None:
            raise ValueError('sampled rollouts need an rng')
        return sampled_gamma_mve_estimate(
            model, V, reward, s_next, config['H'], config['gamma_tilde'], policy, rng
        ).value
    return gamma_mve_estimate(model, V, reward, s_next, config['H'], config['gamma_tilde'], policy).value


class ActorCriticResult(NamedTuple):
    curve: LearningCurve
    Q: QTable
    V: VTable
    policy: SoftPolicy
    model: Optional[GammaModelTable]


def run_actor_critic(
    source,
    config: Optional[AcConfig],
    rng: np.random.Generator,
    spec: Optional[DiscretizationSpec] = None,
    model: Optional[GammaModelTable] = None,
    reward: Optional[np.ndarray] = None,
    V: Optional[VTable] = None,
) -> ActorCriticResult:
    """
    Runs the actor-critic loop and records a learning curve.

    Every environment step appends the transition to the replay buffer, updates
    the model every ``model_every`` steps (never when 0), and then applies
    ``updates_per_step`` rounds of critic, value and policy updates; the first on
    the new transition, the rest on replayed ones. Every ``eval_every`` episodes
    the greedy policy is evaluated with a fixed evaluation seed.
    Q starts at ``initial_values`` and so does V unless one is given.

    Args:
        source: A TabularMdp or environment name (with ``spec``).
        config: Options (see AcConfig).
        rng: Random generator for training.
        spec: Discretization for continuous environments.
        model: Optional initial model; its discount must match the estimator.
        reward: Optional fixed state rewards; otherwise a running mean of the
            rewards observed on arrival in each state is used.
        V: Optional initial value table.

    Returns:
        The learning curve, final tables, policy and model (None for model_free).
    """
    config = process_ac_config(config, source if isinstance(source, str) else None)
    env = make_env(source, spec)
    eval_env = make_env(source, spec)
    n_states, n_actions = env.n_states, env.n_actions
    estimator = config['estimator']
    gamma_tilde = config['gamma_tilde']

    trainer = None
    if estimator != 'model_free':
        model_gamma = 0.0 if estimator == 'mve' else config['gamma']
        if model is not None and model.gamma != model_gamma:
            raise ValueError(f'initial model has gamma {model.gamma}, "{estimator}" needs {model_gamma}')
        trainer = GammaTdTrainer(n_states, n_actions, model_gamma, {
            'step_size': config['model_step'],
            'tau': config['model_tau'],
            'batch_size': config['model_batch'],
        }, model=model)

    Q0, V0 = initial_values(config, n_states, n_actions)
    q_values = np.array(Q0.values)
    v_values = np.array(V0.values if V is None else V.values, dtype=float)
    logits = np.zeros((n_states, n_actions))
    temperature = config['temperature']
    learn_reward = reward is None
    reward_sums = np.zeros(n_states)
    reward_counts = np.zeros(n_states)
    reward_table = np.zeros(n_states) if learn_reward else np.asarray(reward, dtype=float)
    buffer = TransitionDataset(capacity=config['capacity'])
    curve = LearningCurve(estimator, config['seed'])
    step_count = 0

    for episode in range(1, config['episodes'] + 1):
        state = env.reset(rng)
        for _ in range(config['steps_per_episode']):
            policy = SoftPolicy(logits, temperature)
            action = int(sample_rows(policy.probs[state], rng))
            r, next_state = env.step(action, rng)
            buffer.append(TransitionSample(state, action, r, next_state))
            step_count += 1
            if learn_reward:
                reward_sums[next_state] += r
                reward_counts[next_state] += 1
                reward_table[next_state] = reward_sums[next_state] / reward_counts[next_state]

            current_model = None
            if trainer is not None:
                if config['model_every'] and step_count % config['model_every'] == 0:
                    trainer.step(buffer, policy.table, rng)
                current_model = trainer.model

            for update in range(config['updates_per_step']):
                if update == 0:
                    sample = buffer[-1]
                else:
                    sample = TransitionSample(*(column[0].item() for column in buffer.sample_batch(1, rng)))
                policy = SoftPolicy(logits, temperature)
                target = critic_estimate(
                    sample.s_next, config, VTable(v_values), reward_table, policy.table,
                    current_model, rng,
                )
                _q_step(q_values, sample, target, config['q_step'], gamma_tilde)
                s = sample.s
                soft_value = soft_state_value(q_values[s], policy.probs[s], temperature)
                v_values[s] += config['v_step'] * (soft_value - v_values[s])
                _policy_logits(logits, s, q_values[s], temperature, config['policy_step'])
            state = next_state

        if episode % config['eval_every'] == 0 or episode == config['episodes']:
            eval_rng = np.random.default_rng([config['seed'], 1])
            mean, std = evaluate_policy(
                eval_env, SoftPolicy(logits, temperature), config['eval_episodes'],
                config['steps_per_episode'], eval_rng, greedy=True,
            )
            curve.append(episode, mean, std)
            logger.info('estimator=%s seed=%d episode=%d return=%.3f', estimator, config['seed'], episode, mean)

    final_model = trainer.model if trainer is not None else None
    return ActorCriticResult(
        curve, QTable(q_values), VTable(v_values), SoftPolicy(logits, temperature), final_model
    )


async def run_experiments(
    source,
    configs: Sequence[AcConfig],
    spec: Optional[DiscretizationSpec] = None,
) -> List[ActorCriticResult]:
    """
    Runs independent actor-critic configurations concurrently.

    Each run gets its own generator seeded from its ``seed`` option.

    Example:
        ```python
        results = await run_experiments(gridworld(5), [
            {'estimator': 'gamma_mve', 'seed': 0},
            {'estimator': 'model_free', 'seed': 0},
        ])
        ```
    """
    async def run_one(config: AcConfig) -> ActorCriticResult:
        seed = config.get('seed', AC_DEFAULTS['seed'])
        return await asyncio.to_thread(
            run_actor_critic, source, config, np.random.default_rng(seed), spec
        )

    return list(await asyncio.gather(*(run_one(config) for config in configs)))


