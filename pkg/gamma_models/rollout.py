"""
Chaining gamma-model steps and reweighting them toward a longer discount.

An H-step rollout of a model with discount ``gamma`` covers the occupancy of a
larger discount ``gamma_tilde`` once step ``n`` is weighted by

    alpha_n = (1 - gamma_tilde) (gamma_tilde - gamma)^(n-1) / (1 - gamma)^n

and the mass left over after H steps is ``((gamma_tilde - gamma) / (1 - gamma))^H``.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .gamma_td import GammaModelTable, state_conditioned
from .mdp import PolicyTable, sample_rows
from .validators import is_count, is_discount, is_unit_interval

logger = logging.getLogger(__name__)

Start = Union[int, Tuple[int, int]]


def _check_discounts(gamma: float, gamma_tilde: float) -> None:
    if not is_discount(gamma):
        raise ValueError(f'"gamma" must be in [0, 1), got {gamma}')
    if not is_discount(gamma_tilde):
        raise ValueError(f'"gamma_tilde" must be in [0, 1), got {gamma_tilde}')
    if gamma_tilde < gamma:
        raise ValueError(f'"gamma_tilde" ({gamma_tilde}) must be at least "gamma" ({gamma})')


def _check_horizon(H: int) -> None:
    if not is_count(H):
        raise ValueError('"H" must be a positive integer')


def decay_ratio(gamma: float, gamma_tilde: float) -> float:
    """``(gamma_tilde - gamma) / (1 - gamma)``, the per-step survival of unassigned mass."""
    _check_discounts(gamma, gamma_tilde)
    return (gamma_tilde - gamma) / (1.0 - gamma)


@dataclass(frozen=True)
class RolloutWeights:
    gamma: float
    gamma_tilde: float
    horizon: int
    alphas: np.ndarray
    tail_mass: float

    @property
    def assigned_mass(self) -> float:
        return float(self.alphas.sum())


def rollout_weights(gamma: float, gamma_tilde: float, H: int) -> RolloutWeights:
    """
    Mixture weights over the first ``H`` model steps.

    Raises:
        ValueError: If ``gamma_tilde < gamma``, either discount is outside [0, 1),
            or ``H`` is not a positive integer.
    """
    _check_horizon(H)
    ratio = decay_ratio(gamma, gamma_tilde)
    first = (1.0 - gamma_tilde) / (1.0 - gamma)
    alphas = first * ratio ** np.arange(H)
    alphas.flags.writeable = False
    return RolloutWeights(float(gamma), float(gamma_tilde), H, alphas, ratio ** H)


def negative_binomial_pmf(n: int, gamma: float, t) -> np.ndarray:
    """
    Probability that the ``n``-th chained model step lands on timestep ``t``.

    ``p_n(t) = C(t-1, t-n) gamma^(t-n) (1-gamma)^n`` for ``t >= n`` and 0 otherwise,
    evaluated in log space. Returns a float for scalar ``t``.
    """
    if not is_count(n):
        raise ValueError('"n" must be a positive integer')
    if not is_discount(gamma):
        raise ValueError(f'"gamma" must be in [0, 1), got {gamma}')
    t = np.asarray(t)
    scalar = t.ndim == 0
    t = np.atleast_1d(t).astype(float)
    pmf = np.zeros_like(t)
    support = t >= n
    k = t[support] - n  # failures before the n-th success
    log_pmf = (
        gammaln(t[support]) - gammaln(k + 1.0) - gammaln(float(n))
        + xlogy(k, gamma) + xlog1py(float(n), -gamma)
    )
    pmf[support] = np.exp(log_pmf)
    return float(pmf[0]) if scalar else pmf


def weighted_components(gamma: float, gamma_tilde: float, H: int, t_max: int) -> np.ndarray:
    """``alpha_n * p_n(t)`` for ``n = 1..H`` (rows) and ``t = 1..t_max`` (columns)."""
    if not is_count(t_max):
        raise ValueError('"t_max" must be a positive integer')
    weights = rollout_weights(gamma, gamma_tilde, H)
    t = np.arange(1, t_max + 1)
    return np.stack([
        alpha * negative_binomial_pmf(n, gamma, t) for n, alpha in enumerate(weights.alphas, start=1)
    ])


def timestep_mixture(gamma: float, gamma_tilde: float, H: int, t_max: int) -> np.ndarray:
    """
    Timestep distribution ``q(t) = sum_n alpha_n p_n(t)`` for ``t = 1..t_max``.

    Up to ``t = H`` it coincides with the geometric pmf of ``gamma_tilde``.
    """
    return weighted_components(gamma, gamma_tilde, H, t_max).sum(axis=0)


def geometric_pmf(gamma: float, t_max: int) -> np.ndarray:
    """``(1 - gamma) gamma^(t-1)`` for ``t = 1..t_max``."""
    t = np.arange(1, t_max + 1)
    return (1.0 - gamma) * np.power(gamma, t - 1.0)


def _first_step(model: GammaModelTable, policy: PolicyTable, start: Start) -> np.ndarray:
    if isinstance(start, tuple):
        s, a = start
        if not (0 <= s < model.n_states and 0 <= a < model.n_actions):
            raise ValueError(f'start {start} out of bounds')
        return np.array(model.probs[s, a])
    if not 0 <= start < model.n_states:
        raise ValueError(f'start state {start} out of bounds')
    return policy.probs[start] @ model.probs[start]


def step_distributions(model: GammaModelTable, policy: PolicyTable, start: Start, H: int) -> np.ndarray:
    """
    Exit-state distributions of rollout steps ``1..H`` stacked as rows.

    A state start uses the policy-averaged row first; a ``(state, action)`` start
    uses that action's row first. Later steps always use the policy-averaged kernel.
    """
    _check_horizon(H)
    kernel = state_conditioned(model, policy)
    steps = np.empty((H, model.n_states))
    steps[0] = _first_step(model, policy, start)
    for n in range(1, H):
        steps[n] = steps[n - 1] @ kernel
    return steps


def n_step_distribution(model: GammaModelTable, policy: PolicyTable, start: Start, n: int) -> np.ndarray:
    """Exit-state distribution after ``n`` chained model steps from ``start``."""
    return step_distributions(model, policy, start, n)[-1]


def reweighted_distribution(
    model: GammaModelTable,
    policy: PolicyTable,
    start: Start,
    gamma_tilde: float,
    H: int,
) -> Tuple[np.ndarray, float]:
    """
    ``sum_n alpha_n mu_n`` over the first ``H`` steps and the unassigned tail mass.

    The returned distribution is not renormalized; it carries ``1 - tail`` mass.
    """
    weights = rollout_weights(model.gamma, gamma_tilde, H)
    steps = step_distributions(model, policy, start, H)
    return weights.alphas @ steps, weights.tail_mass


def steps_to_mass(gamma: float, gamma_tilde: float, q: float) -> int:
    """
    Smallest horizon whose reweighted rollout assigns at least ``q`` of the mass.

    Raises:
        ValueError: If the discounts are invalid or ``q`` is not in (0, 1).
    """
    if not is_unit_interval(q) or q >= 1.0:
        raise ValueError('"q" must be in (0, 1)')
    ratio = decay_ratio(gamma, gamma_tilde)
    if ratio == 0.0:
        return 1
    threshold = 1.0 - q
    H = max(1, math.ceil(math.log(threshold) / math.log(ratio)))
    # the log quotient can land a step off at exact boundaries
    while H > 1 and ratio ** (H - 1) <= threshold:
        H -= 1
    while ratio ** H > threshold:
        H += 1
    return H


def sample_rollout(
    model: GammaModelTable,
    policy: PolicyTable,
    start: Start,
    H: int,
    rng: np.random.Generator,
    size: Optional[int] = None,
) -> np.ndarray:
    """
    Samples ``H`` chained model steps.

    Each step draws an action from ``policy`` at the previous state (or uses the
    given first action for a ``(state, action)`` start) and an exit state from
    that model row.

    Returns:
        Array of shape ``(H,)``, or ``(size, H)`` when ``size`` is given.
    """
    _check_horizon(H)
    n_rollouts = 1 if size is None else size
    if isinstance(start, tuple):
        state, first_action = start
    else:
        state, first_action = start, None
    if not 0 <= state < model.n_states:
        raise ValueError(f'start state {state} out of bounds')

    states = np.full(n_rollouts, state, dtype=int)
    trajectory = np.empty((n_rollouts, H), dtype=int)
    for n in range(H):
        if n == 0 and first_action is not None:
            actions = np.full(n_rollouts, first_action, dtype=int)
        else:
            actions = sample_rows(policy.probs[states], rng)
        states = sample_rows(model.probs[states, actions], rng)
        trajectory[:, n] = states
    return trajectory[0] if size is None else trajectory
