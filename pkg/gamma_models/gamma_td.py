"""
Categorical gamma-models trained by generative temporal-difference learning.

A model stores logits ``[state][action][exit_state]``; probabilities are their
row-wise softmax, so every update stays on the simplex. Tables built from
probabilities keep those exact rows.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import List, Literal, NamedTuple, Optional, TypedDict

import numpy as np
from scipy.special import softmax

from .dataset import TransitionDataset, TransitionSample
from .mdp import PolicyTable, TabularMdp, sample_rows
from .oracle import total_variation
from .validators import is_count, is_discount, is_positive, is_unit_interval, row_sum_violations

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-12
# log of the smallest normal double; keeps logits finite for zero-probability entries
_LOGIT_FLOOR = np.log(np.finfo(float).tiny)


@dataclass(frozen=True)
class GammaModelTable:
    logits: np.ndarray
    gamma: float

    def __post_init__(self):
        logits = np.array(self.logits, dtype=float, copy=True)
        if logits.ndim != 3:
            raise ValueError(f'logits must have shape (S, A, S), got {logits.shape}')
        if not np.all(np.isfinite(logits)):
            raise ValueError('logits must be finite')
        if not is_discount(self.gamma):
            raise ValueError(f'"gamma" must be in [0, 1), got {self.gamma}')
        logits.flags.writeable = False
        object.__setattr__(self, 'logits', logits)
        object.__setattr__(self, 'gamma', float(self.gamma))

    @cached_property
    def probs(self) -> np.ndarray:
        probs = softmax(self.logits, axis=-1)
        probs.flags.writeable = False
        return probs

    @property
    def n_states(self) -> int:
        return self.logits.shape[0]

    @property
    def n_actions(self) -> int:
        return self.logits.shape[1]

    @classmethod
    def uniform(cls, n_states: int, n_actions: int, gamma: float) -> 'GammaModelTable':
        return cls(np.zeros((n_states, n_actions, n_states)), gamma)

    @classmethod
    def from_probs(cls, probs: np.ndarray, gamma: float) -> 'GammaModelTable':
        """
        Model whose ``probs`` are exactly the given rows.

        The logits used for further training are their logs, with zero entries
        floored at the smallest representable mass.
        """
        probs = np.array(probs, dtype=float)
        violations = row_sum_violations(probs, ('s', 'a'), atol=1e-9)
        if violations:
            raise ValueError('Invalid model rows: ' + '; '.join(violations[:10]))
        with np.errstate(divide='ignore'):
            logits = np.maximum(np.log(probs), _LOGIT_FLOOR)
        model = cls(logits, gamma)
        probs.flags.writeable = False
        # seeds the cached_property
        model.__dict__['probs'] = probs
        return model


@dataclass(frozen=True)
class TargetModel:
    """Delayed copy of a model, tracked as an exponential moving average of its logits."""
    model: GammaModelTable
    tau: float

    def __post_init__(self):
        if not is_unit_interval(self.tau):
            raise ValueError('"tau" must be in (0, 1]')

    def updated(self, live: GammaModelTable) -> 'TargetModel':
        if live.logits.shape != self.model.logits.shape or live.gamma != self.model.gamma:
            raise ValueError('Target and live models must share shape and gamma')
        logits = ema_update(np.array(self.model.logits), live.logits, self.tau)
        return TargetModel(GammaModelTable(logits, live.gamma), self.tau)


def ema_update(target_logits: np.ndarray, live_logits: np.ndarray, tau: float) -> np.ndarray:
    """In-place ``target <- tau * live + (1 - tau) * target``; returns ``target_logits``."""
    target_logits *= 1.0 - tau
    target_logits += tau * live_logits
    return target_logits


class TrainConfig(TypedDict, total=False):
    mode: Literal['expected', 'sampled']
    loss: Literal['cross_entropy', 'log_density']
    step_size: float
    tau: float
    batch_size: int
    n_steps: int
    n_exit_samples: int
    log_every: int
    seed: int


TRAIN_DEFAULTS: TrainConfig = {
    'mode': 'sampled',
    'loss': 'cross_entropy',
    'step_size': 1e-2,
    'tau': 5e-3,
    'batch_size': 128,
    'n_steps': 50_000,
    'n_exit_samples': 1,
    'log_every': 1000,
    'seed': 0,
}


def validate_train_config(params: TrainConfig) -> None:
    """
    Validate training options.

    Args:
        params: Options to validate

    Raises:
        ValueError: If any option is invalid
    """
    unknown = set(params) - set(TRAIN_DEFAULTS)
    if unknown:
        raise ValueError(f'Unknown training options: {", ".join(sorted(unknown))}')
    if 'mode' in params and params['mode'] not in ('expected', 'sampled'):
        raise ValueError('"mode" must be "expected" or "sampled"')
    if 'loss' in params and params['loss'] not in ('cross_entropy', 'log_density'):
        raise ValueError('"loss" must be "cross_entropy" or "log_density"')
    if 'step_size' in params and not is_positive(params['step_size']):
        raise ValueError('"step_size" must be positive')
    if 'tau' in params and not is_unit_interval(params['tau']):
        raise ValueError('"tau" must be in (0, 1]')
    for key in ('batch_size', 'n_steps', 'n_exit_samples', 'log_every'):
        if key in params and not is_count(params[key]):
            raise ValueError(f'"{key}" must be a positive integer')
    if 'seed' in params and not is_count(params['seed'], minimum=0):
        raise ValueError('"seed" must be a non-negative integer')


def process_train_config(params: Optional[TrainConfig] = None) -> TrainConfig:
    """Validates options and fills in defaults."""
    params = dict(params or {})
    validate_train_config(params)
    return {**TRAIN_DEFAULTS, **params}


def state_conditioned(model: GammaModelTable, policy: PolicyTable) -> np.ndarray:
    """
    Policy-averaged model ``U[s] = sum_a pi(a|s) mu(.|s,a)``.
    """
    if policy.probs.shape != (model.n_states, model.n_actions):
        raise ValueError(
            f'policy shape {policy.probs.shape} does not match model '
            f'({model.n_states}, {model.n_actions})'
        )
    return np.einsum('sa,sat->st', policy.probs, model.probs)


def bootstrapped_target(
    sample: TransitionSample,
    target_model: TargetModel,
    policy: PolicyTable,
) -> np.ndarray:
    """
    Exit-state distribution ``(1 - gamma) delta_{s'} + gamma mu_bar_pi(.|s')``.
    """
    model = target_model.model
    s_next = sample.s_next
    if not 0 <= s_next < model.n_states:
        raise ValueError(f'next state {s_next} out of bounds')
    target = model.gamma * np.einsum('a,at->t', policy.probs[s_next], model.probs[s_next])
    target[s_next] += 1.0 - model.gamma
    return target


def expected_td_sweep(model: GammaModelTable, mdp: TabularMdp, policy: PolicyTable) -> GammaModelTable:
    """
    Applies the bootstrapped target operator to every row in expectation.

    ``mu'(.|s,a) = (1 - gamma) p(.|s,a) + gamma sum_s' p(s'|s,a) U(.|s')``, which is
    a gamma-contraction in sup-L1.
    """
    bootstrap = state_conditioned(model, policy)
    probs = (1.0 - model.gamma) * mdp.transition + model.gamma * np.einsum(
        'sat,tu->sau', mdp.transition, bootstrap
    )
    return GammaModelTable.from_probs(probs, model.gamma)


def density_regression_loss(
    model: GammaModelTable,
    target_model: TargetModel,
    sample: TransitionSample,
    policy: PolicyTable,
    rng: Optional[np.random.Generator] = None,
    n_exit_samples: int = 1,
) -> float:
    """
    Squared log-density error against the bootstrapped target.

    Exit states are drawn from the bootstrapped target with ``rng``; without an
    ``rng`` the expectation over exit states is taken exactly. Masses are floored
    at 1e-12 before the log.
    """
    if model.logits.shape != target_model.model.logits.shape:
        raise ValueError('Model and target shapes must agree')
    target = bootstrapped_target(sample, target_model, policy)
    log_model = np.log(np.maximum(model.probs[sample.s, sample.a], LOG_FLOOR))
    log_target = np.log(np.maximum(target, LOG_FLOOR))
    squared = (log_model - log_target) ** 2
    if rng is None:
        return float(target @ squared)
    exits = sample_rows(np.broadcast_to(target, (n_exit_samples, len(target))), rng)
    return float(squared[exits].mean())


def expected_regression_loss(model: GammaModelTable, target_probs: np.ndarray) -> float:
    """
    Mean over ``(s, a)`` of the target-weighted squared log-density error of
    ``model`` against full target rows, e.g. an expected sweep of the model.
    """
    target_probs = np.asarray(target_probs, dtype=float)
    if target_probs.shape != model.probs.shape:
        raise ValueError(f'target rows must have shape {model.probs.shape}, got {target_probs.shape}')
    log_model = np.log(np.maximum(model.probs, LOG_FLOOR))
    log_target = np.log(np.maximum(target_probs, LOG_FLOOR))
    return float((target_probs * (log_model - log_target) ** 2).sum(axis=-1).mean())


class TrainRecord(NamedTuple):
    step: int
    loss: float
    tv_to_oracle: Optional[float]


class GammaTdTrainer:
    """
    Sampled generative TD training with a delayed target model.

    Each step draws a batch of transitions, samples exit states from the
    bootstrapped target built on the target model, moves the live logits along
    the row-averaged gradient of the configured loss, and EMA-updates the target.

    Args:
        n_states: Number of states.
        n_actions: Number of actions.
        gamma: Model discount.
        config: Training options (see TrainConfig).
        model: Optional initial model, uniform rows otherwise.
    """

    def __init__(
        self,
        n_states: int,
        n_actions: int,
        gamma: float,
        config: Optional[TrainConfig] = None,
        model: Optional[GammaModelTable] = None,
    ):
        if not is_discount(gamma):
            raise ValueError(f'"gamma" must be in [0, 1), got {gamma}')
        self.config = process_train_config(config)
        self.gamma = float(gamma)
        self.n_states = n_states
        self.n_actions = n_actions
        initial = model.logits if model is not None else np.zeros((n_states, n_actions, n_states))
        if initial.shape != (n_states, n_actions, n_states):
            raise ValueError(f'initial model shape {initial.shape} does not match ({n_states}, {n_actions})')
        self._live = np.array(initial, dtype=float)
        self._target = np.array(initial, dtype=float)
        self._visits = np.zeros((n_states, n_actions), dtype=int)
        self.steps = 0

    @property
    def model(self) -> GammaModelTable:
        return GammaModelTable(self._live, self.gamma)

    @property
    def target(self) -> TargetModel:
        return TargetModel(GammaModelTable(self._target, self.gamma), self.config['tau'])

    def unvisited_pairs(self) -> List[tuple]:
        return [tuple(int(i) for i in pair) for pair in zip(*np.nonzero(self._visits == 0))]

    def _exit_counts(self, s_next: np.ndarray, policy: PolicyTable, rng: np.random.Generator):
        """
        Histogram over exit states of ``n_exit_samples`` draws per transition.

        A draw stops at ``s_next`` with probability ``1 - gamma`` and otherwise
        comes from the target rows of ``s_next`` averaged over the policy's next
        action. Also returns those averaged rows.
        """
        n_draws = self.config['n_exit_samples']
        batch = np.arange(len(s_next))
        stops = rng.binomial(n_draws, 1.0 - self.gamma, size=len(s_next))
        target_rows = softmax(self._target[s_next], axis=-1)
        bootstrap = np.einsum('ba,bat->bt', policy.probs[s_next], target_rows)
        counts = rng.multinomial(n_draws - stops, bootstrap).astype(float)
        counts[batch, s_next] += stops
        return counts, bootstrap

    def step(self, dataset: TransitionDataset, policy: PolicyTable, rng: np.random.Generator) -> float:
        """
        Performs one update on a batch drawn from ``dataset``; returns the batch loss.
        """
        config = self.config
        n_draws = config['n_exit_samples']
        s, a, _, s_next = dataset.sample_batch(config['batch_size'], rng)
        counts, bootstrap = self._exit_counts(s_next, policy, rng)

        probs = softmax(self._live[s, a], axis=-1)
        log_probs = np.log(np.maximum(probs, LOG_FLOOR))
        if config['loss'] == 'cross_entropy':
            grads = n_draws * probs - counts
            losses = -(counts * log_probs).sum(axis=-1)
        else:
            mass = self.gamma * bootstrap
            mass[np.arange(len(s)), s_next] += 1.0 - self.gamma
            error = log_probs - np.log(np.maximum(mass, LOG_FLOOR))
            weighted = counts * error
            grads = 2.0 * (weighted - weighted.sum(axis=-1, keepdims=True) * probs)
            losses = (weighted * error).sum(axis=-1)

        pairs, inverse, visits = np.unique(s * self.n_actions + a, return_inverse=True, return_counts=True)
        summed = np.zeros((len(pairs), self.n_states))
        np.add.at(summed, inverse, grads)
        flat_live = self._live.reshape(-1, self.n_states)
        flat_live[pairs] -= config['step_size'] * summed / (visits[:, None] * n_draws)

        ema_update(self._target, self._live, config['tau'])
        self._visits.reshape(-1)[pairs] += visits
        self.steps += 1
        return float(losses.sum() / (len(s) * n_draws))

    def train(
        self,
        dataset: TransitionDataset,
        policy: PolicyTable,
        rng: np.random.Generator,
        n_steps: Optional[int] = None,
        oracle: Optional[np.ndarray] = None,
    ) -> List[TrainRecord]:
        """
        Runs ``n_steps`` updates (``config['n_steps']`` by default).

        Args:
            dataset: Transitions to train on.
            policy: Policy whose occupancy is learned.
            rng: Random generator.
            n_steps: Number of updates.
            oracle: Optional exact occupancy rows; enables ``tv_to_oracle`` logging.

        Returns:
            One record every ``log_every`` steps and one for the final step.
        """
        if len(dataset) == 0:
            raise ValueError('Cannot train on an empty dataset')
        dataset.check_bounds(self.n_states, self.n_actions)
        if policy.probs.shape != (self.n_states, self.n_actions):
            raise ValueError('policy shape does not match the model')

        n_steps = self.config['n_steps'] if n_steps is None else n_steps
        log_every = self.config['log_every']
        history: List[TrainRecord] = []
        for step in range(1, n_steps + 1):
            loss = self.step(dataset, policy, rng)
            if step % log_every == 0 or step == n_steps:
                tv = None
                if oracle is not None:
                    tv = float(total_variation(self.model.probs, oracle).max())
                history.append(TrainRecord(self.steps, loss, tv))
                logger.info('step=%d loss=%.6f tv_to_oracle=%s', self.steps, loss, tv)

        unvisited = self.unvisited_pairs()
        if unvisited:
            logger.warning('%d (s, a) pairs never observed, rows left unchanged: %s',
                           len(unvisited), unvisited[:20])
        return history


def sampled_td_train(
    dataset: TransitionDataset,
    policy: PolicyTable,
    config: TrainConfig,
    rng: np.random.Generator,
    gamma: float,
) -> GammaModelTable:
    """
    Trains a gamma-model from off-policy transitions.

    Args:
        dataset: Transitions ``(s, a, r, s')``; may come from any behavior policy.
        policy: Policy whose discounted occupancy is learned.
        config: Training options.
        rng: Random generator.
        gamma: Model discount.

    Returns:
        The trained live model.

    Raises:
        ValueError: If the dataset is empty or the options are invalid.
    """
    if len(dataset) == 0:
        raise ValueError('Cannot train on an empty dataset')
    trainer = GammaTdTrainer(policy.n_states, policy.n_actions, gamma, config)
    trainer.train(dataset, policy, rng)
    return trainer.model


def expected_td_train(
    mdp: TabularMdp,
    policy: PolicyTable,
    gamma: float,
    n_sweeps: int,
    model: Optional[GammaModelTable] = None,
) -> GammaModelTable:
    """Iterates ``expected_td_sweep`` from ``model`` (uniform rows by default)."""
    if not is_count(n_sweeps, minimum=0):
        raise ValueError('"n_sweeps" must be a non-negative integer')
    model = model or GammaModelTable.uniform(mdp.n_states, mdp.n_actions, gamma)
    for _ in range(n_sweeps):
        model = expected_td_sweep(model, mdp, policy)
    return model


def sup_l1(first: np.ndarray, second: np.ndarray) -> float:
    """Largest L1 distance between corresponding rows."""
    return float(np.abs(np.asarray(first) - np.asarray(second)).sum(axis=-1).max())


