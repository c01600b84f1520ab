"""
Value estimates built from model predictions.

Rewards follow the exit-state convention of ``oracle.policy_evaluation``:
``V(s) = sum_{t>=1} gamma^(t-1) E[r(s_t)]``.
"""
import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from .discretize import DiscretizationSpec, grid_centers
from .gamma_td import GammaModelTable, state_conditioned
from .mdp import PolicyTable, TabularMdp, VTable, policy_transition_matrix
from .rollout import Start, decay_ratio, rollout_weights, sample_rollout, step_distributions
from .validators import is_count, is_discount

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ValueEstimate:
    value: float
    model_term: float
    terminal_term: float
    horizon: int
    gamma: float
    gamma_tilde: float


@dataclass(frozen=True)
class EffectiveHorizon:
    """Single-step rollout length whose terminal weight matches a gamma-model rollout."""
    value: float
    rounded: Optional[int]

    @property
    def infinite(self) -> bool:
        return math.isinf(self.value)


def _reward_vector(reward, n_states: int) -> np.ndarray:
    reward = np.asarray(reward, dtype=float)
    if reward.shape != (n_states,):
        raise ValueError(f'reward must have shape ({n_states},), got {reward.shape}')
    return reward


def q_from_model(model: GammaModelTable, reward, s: int, a: int) -> float:
    """``Q(s, a) = E_{s_e ~ mu(.|s,a)}[r(s_e)] / (1 - gamma)``."""
    reward = _reward_vector(reward, model.n_states)
    return float(model.probs[s, a] @ reward / (1.0 - model.gamma))


def q_table_from_model(model: GammaModelTable, reward) -> np.ndarray:
    reward = _reward_vector(reward, model.n_states)
    return model.probs @ reward / (1.0 - model.gamma)


def v_table_from_model(model: GammaModelTable, policy: PolicyTable, reward) -> np.ndarray:
    reward = _reward_vector(reward, model.n_states)
    return state_conditioned(model, policy) @ reward / (1.0 - model.gamma)


def _single_step_kernel(source: Union[TabularMdp, GammaModelTable], policy: PolicyTable) -> np.ndarray:
    if isinstance(source, TabularMdp):
        return policy_transition_matrix(source, policy)
    if source.gamma != 0.0:
        raise ValueError(f'MVE needs a single-step model (gamma = 0), got gamma = {source.gamma}')
    return state_conditioned(source, policy)


def _single_step_rows(source: Union[TabularMdp, GammaModelTable]) -> np.ndarray:
    return source.transition if isinstance(source, TabularMdp) else source.probs


def mve_estimate(
    source: Union[TabularMdp, GammaModelTable],
    V: VTable,
    reward,
    start: Start,
    H: int,
    gamma_tilde: float,
    policy: PolicyTable,
) -> float:
    """
    Truncated rollout value with a terminal value function.

    ``sum_{n=1..H} gamma_tilde^(n-1) E[r(s_n)] + gamma_tilde^H E[V(s_H)]`` with the
    expectations taken exactly under powers of the single-step kernel. ``H = 0``
    returns ``V(s)`` for a state start.

    Args:
        source: An MDP or a gamma = 0 model.
        V: Terminal value function.
        reward: State rewards.
        start: State, or ``(state, action)`` for an action-value.
        H: Rollout length, at least 0.
        gamma_tilde: Value discount.
        policy: Policy followed by the rollout.
    """
    if not is_count(H, minimum=0):
        raise ValueError('"H" must be a non-negative integer')
    if not is_discount(gamma_tilde):
        raise ValueError(f'"gamma_tilde" must be in [0, 1), got {gamma_tilde}')
    kernel = _single_step_kernel(source, policy)
    reward = _reward_vector(reward, kernel.shape[0])
    values = np.asarray(V.values)

    if H == 0:
        if isinstance(start, tuple):
            raise ValueError('H = 0 needs a state start')
        return float(values[start])
    if isinstance(start, tuple):
        s, a = start
        distribution = np.array(_single_step_rows(source)[s, a])
    else:
        distribution = np.array(kernel[start])

    total = 0.0
    for n in range(1, H + 1):
        if n > 1:
            distribution = distribution @ kernel
        total += gamma_tilde ** (n - 1) * float(distribution @ reward)
    return total + gamma_tilde ** H * float(distribution @ values)


def terminal_weight(gamma: float, gamma_tilde: float, H: int) -> float:
    """
    Weight on the terminal value after ``H`` model steps, ``((gamma_tilde - gamma) / (1 - gamma))^H``.

    Equals one minus the total rollout weight.
    """
    weights = rollout_weights(gamma, gamma_tilde, H)
    closed_form = decay_ratio(gamma, gamma_tilde) ** H
    residual = abs((1.0 - weights.assigned_mass) - closed_form)
    if residual > 1e-12:
        logger.warning('terminal weight residual %.3e for gamma=%s gamma_tilde=%s H=%d',
                       residual, gamma, gamma_tilde, H)
    return closed_form


def gamma_mve_estimate(
    model: GammaModelTable,
    V: VTable,
    reward,
    start: Start,
    H: int,
    gamma_tilde: float,
    policy: PolicyTable,
) -> ValueEstimate:
    """
    Value at discount ``gamma_tilde`` from ``H`` gamma-model steps and a terminal value.

    ``V = sum_n alpha_n E_{mu_n}[r] / (1 - gamma_tilde) + tail * E_{mu_H}[V]``.
    With the exact occupancy as model and the exact ``gamma_tilde`` value function as
    ``V`` this reproduces the exact value for every ``H``.

    Raises:
        ValueError: If ``gamma_tilde < model.gamma`` or ``H`` is not positive.
    """
    weights = rollout_weights(model.gamma, gamma_tilde, H)
    reward = _reward_vector(reward, model.n_states)
    steps = step_distributions(model, policy, start, H)
    model_term = float(weights.alphas @ (steps @ reward)) / (1.0 - gamma_tilde)
    terminal_term = weights.tail_mass * float(steps[-1] @ np.asarray(V.values))
    return ValueEstimate(
        model_term + terminal_term, model_term, terminal_term, H, model.gamma, float(gamma_tilde)
    )


def sampled_gamma_mve_estimate(
    model: GammaModelTable,
    V: VTable,
    reward,
    start: Start,
    H: int,
    gamma_tilde: float,
    policy: PolicyTable,
    rng: np.random.Generator,
    n_rollouts: int = 1,
) -> ValueEstimate:
    """
    Monte Carlo version of ``gamma_mve_estimate`` over ``n_rollouts`` sampled rollouts.

    Step ``n`` of each rollout stands in for ``mu_n``; the last step feeds the
    terminal value.
    """
    if not is_count(n_rollouts):
        raise ValueError('"n_rollouts" must be a positive integer')
    weights = rollout_weights(model.gamma, gamma_tilde, H)
    reward = _reward_vector(reward, model.n_states)
    trajectories = sample_rollout(model, policy, start, H, rng, size=n_rollouts)
    model_term = float((reward[trajectories] @ weights.alphas).mean()) / (1.0 - gamma_tilde)
    terminal_term = weights.tail_mass * float(np.asarray(V.values)[trajectories[:, -1]].mean())
    return ValueEstimate(
        model_term + terminal_term, model_term, terminal_term, H, model.gamma, float(gamma_tilde)
    )


def effective_horizon_match(gamma: float, gamma_tilde: float, H: int) -> EffectiveHorizon:
    """
    Rollout length ``H'`` of single-step MVE with ``gamma_tilde^H' = terminal_weight(gamma, gamma_tilde, H)``.

    Returns an infinite value with no rounding when ``gamma == gamma_tilde``.

    Raises:
        ValueError: If ``gamma_tilde`` is 0 or the discounts are invalid.
    """
    ratio = decay_ratio(gamma, gamma_tilde)
    if gamma_tilde <= 0.0:
        raise ValueError('"gamma_tilde" must be positive')
    if ratio == 0.0:
        return EffectiveHorizon(math.inf, None)
    value = H * math.log(ratio) / math.log(gamma_tilde)
    return EffectiveHorizon(value, int(round(value)))


def value_map_rows(spec: DiscretizationSpec, values) -> list:
    """One ``[state_index, dim0_center, ..., value]`` row per grid cell."""
    values = np.asarray(values, dtype=float)
    if values.shape != (spec.n_states,):
        raise ValueError(f'value map has {values.size} entries, grid has {spec.n_states} cells')
    centers = grid_centers(spec)
    return [[index, *centers[index], values[index]] for index in range(spec.n_states)]


def write_value_map(
    path: Union[str, Path],
    values,
    spec: Optional[DiscretizationSpec] = None,
) -> Path:
    """
    Writes a value CSV.

    With a discretization the header is ``state_index,dim0_center,...,value``,
    otherwise ``state_index,value``.
    """
    path = Path(path)
    values = np.asarray(values, dtype=float)
    if spec is None:
        header = ['state_index', 'value']
        rows = [[index, value] for index, value in enumerate(values)]
    else:
        header = ['state_index', *(f'dim{d}_center' for d in range(spec.dim)), 'value']
        rows = value_map_rows(spec, values)
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([int(row[0]), *(repr(float(x)) for x in row[1:])])
    return path


def value_deviation(estimate, oracle) -> Tuple[float, float]:
    """Max and mean absolute deviation between two value maps."""
    deviation = np.abs(np.asarray(estimate, dtype=float) - np.asarray(oracle, dtype=float))
    return float(deviation.max()), float(deviation.mean())
