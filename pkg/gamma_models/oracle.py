"""
Exact ground truth by dense linear algebra.

Every solve factors ``I - gamma * P_pi`` with LU and partial pivoting.
"""
import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .discretize import DiscretizationSpec
from .envs import DiscretizedEnv, get_environment
from .mdp import PolicyTable, QTable, TabularMdp, VTable, policy_transition_matrix, sample_rows
from .validators import is_count, is_discount, is_positive

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SuccessorTable:
    """Expected discounted visitation counts ``M[s][a][s_e]``."""
    M: np.ndarray
    gamma: float


@dataclass(frozen=True)
class OccupancyTable:
    """Discounted occupancy ``mu[s][a][s_e]``; each row is a distribution."""
    mu: np.ndarray
    gamma: float


def _check_gamma(gamma: float) -> None:
    if not is_discount(gamma):
        raise ValueError(f'"gamma" must be in [0, 1), got {gamma}')


def _factor(kernel: np.ndarray, gamma: float):
    return lu_factor(np.eye(kernel.shape[0]) - gamma * kernel)


def exact_successor(mdp: TabularMdp, policy: PolicyTable, gamma: float) -> SuccessorTable:
    """
    Successor representation ``M[s][a] = p(.|s,a) (I - gamma P_pi)^-1``.

    Raises:
        ValueError: If ``gamma`` is not in [0, 1).
    """
    _check_gamma(gamma)
    kernel = policy_transition_matrix(mdp, policy)
    visits = lu_solve(_factor(kernel, gamma), np.eye(mdp.n_states))
    M = np.maximum(np.einsum('sat,tu->sau', mdp.transition, visits), 0.0)
    return SuccessorTable(M, float(gamma))


def exact_state_occupancy(kernel: np.ndarray, gamma: float) -> np.ndarray:
    """
    State-conditioned occupancy ``U`` solving ``U = (1 - gamma) P_pi + gamma P_pi U``.
    """
    _check_gamma(gamma)
    # round-off can leave entries a few ulps below zero
    return np.maximum(lu_solve(_factor(kernel, gamma), (1.0 - gamma) * kernel), 0.0)


def exact_occupancy(mdp: TabularMdp, policy: PolicyTable, gamma: float) -> OccupancyTable:
    """
    Discounted occupancy ``mu(.|s,a) = (1 - gamma) p(.|s,a) + gamma E_s'[U(.|s')]``.

    Solved from the bootstrapped fixed point rather than by rescaling the
    successor table, so the two give independent checks of each other.

    Raises:
        ValueError: If ``gamma`` is not in [0, 1).
    """
    _check_gamma(gamma)
    kernel = policy_transition_matrix(mdp, policy)
    state_occupancy = exact_state_occupancy(kernel, gamma)
    mu = (1.0 - gamma) * mdp.transition + gamma * np.einsum(
        'sat,tu->sau', mdp.transition, state_occupancy
    )
    return OccupancyTable(mu, float(gamma))


def occupancy_residual(mdp: TabularMdp, policy: PolicyTable, mu: np.ndarray, gamma: float) -> float:
    """Largest elementwise violation of the bootstrapped fixed point by ``mu``."""
    bootstrap = np.einsum('sa,sat->st', policy.probs, mu)
    target = (1.0 - gamma) * mdp.transition + gamma * np.einsum(
        'sat,tu->sau', mdp.transition, bootstrap
    )
    return float(np.max(np.abs(target - mu)))


def successor_residual(mdp: TabularMdp, policy: PolicyTable, successor: SuccessorTable) -> float:
    """Largest elementwise violation of the successor recurrence."""
    M = successor.M
    bootstrap = np.einsum('sa,sat->st', policy.probs, M)
    target = mdp.transition + successor.gamma * np.einsum('sat,tu->sau', mdp.transition, bootstrap)
    return float(np.max(np.abs(target - M)))


def total_variation(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Total-variation distance along the last axis."""
    return 0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum(axis=-1)


def sample_exit_times(gamma: float, size, rng: np.random.Generator) -> np.ndarray:
    """
    Draws ``dt ~ Geom(1 - gamma)`` on ``{1, 2, ...}`` by inverting the CDF.
    """
    if gamma == 0.0:
        return np.ones(size, dtype=int)
    u = 1.0 - rng.random(size)  # (0, 1]
    return 1 + np.floor(np.log(u) / np.log(gamma)).astype(int)


def monte_carlo_occupancy(
    source: Union[TabularMdp, Tuple[str, DiscretizationSpec]],
    policy: PolicyTable,
    gamma: float,
    s: int,
    a: int,
    n_samples: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Empirical exit-state distribution from ``(s, a)``.

    Each sample draws a termination time ``dt ~ Geom(1 - gamma)``, takes action
    ``a`` and then follows ``policy`` for ``dt`` steps in total, and records the
    final state.

    Args:
        source: A TabularMdp, or ``(env_name, spec)`` for a discretized continuous
            environment started at the center of cell ``s``.
        policy: Policy over discrete states.
        gamma: Discount in [0, 1).
        s: Start state.
        a: First action.
        n_samples: Number of exit states to draw.
        rng: Random generator.

    Returns:
        Normalized counts over exit states.
    """
    _check_gamma(gamma)
    if not is_count(n_samples):
        raise ValueError('"n_samples" must be a positive integer')

    exit_times = sample_exit_times(gamma, n_samples, rng)
    if isinstance(source, TabularMdp):
        n_states = source.n_states
        states = sample_rows(np.broadcast_to(source.transition[s, a], (n_samples, n_states)), rng)
        remaining = exit_times - 1
        while np.any(remaining > 0):
            active = np.nonzero(remaining > 0)[0]
            actions = sample_rows(policy.probs[states[active]], rng)
            states[active] = sample_rows(source.transition[states[active], actions], rng)
            remaining[active] -= 1
    else:
        name, spec = source
        get_environment(name)
        env = DiscretizedEnv(name, spec)
        n_states = spec.n_states
        x, states = env.step_batch(env.start_batch(s, n_samples), np.full(n_samples, a))
        remaining = exit_times - 1
        while np.any(remaining > 0):
            active = np.nonzero(remaining > 0)[0]
            actions = sample_rows(policy.probs[states[active]], rng)
            x[active], states[active] = env.step_batch(x[active], actions)
            remaining[active] -= 1

    counts = np.bincount(states, minlength=n_states).astype(float)
    return counts / n_samples


def policy_evaluation(mdp: TabularMdp, policy: PolicyTable, gamma: float) -> Tuple[VTable, QTable]:
    """
    Exact values with the exit-state reward convention.

    ``Q(s,a) = sum_{dt>=1} gamma^(dt-1) E[r(s_{t+dt})]`` and ``V(s) = E_pi[Q(s,a)]``.

    Raises:
        ValueError: If ``gamma`` is not in [0, 1).
    """
    _check_gamma(gamma)
    kernel = policy_transition_matrix(mdp, policy)
    values = lu_solve(_factor(kernel, gamma), kernel @ mdp.reward)
    q = mdp.transition @ (mdp.reward + gamma * values)
    residual = np.max(np.abs(values - (policy.probs * q).sum(axis=1)))
    logger.debug('policy evaluation Bellman residual %.3e', residual)
    return VTable(values), QTable(q)


def greedy_actions(q: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    """Per-state argmax; actions within ``atol`` of the best count as ties and the lowest index wins."""
    q = np.asarray(q)
    best = q.max(axis=1, keepdims=True)
    return np.argmax(q >= best - atol, axis=1)


def value_iteration(
    mdp: TabularMdp,
    gamma: float,
    tolerance: float = 1e-10,
    max_iterations: int = 1_000_000,
) -> Tuple[VTable, PolicyTable]:
    """
    Optimal values and a deterministic greedy policy.

    Iterates the Bellman optimality operator until successive values differ by at
    most ``tolerance`` in sup-norm, which bounds the returned Bellman residual by
    ``gamma * tolerance``.

    Raises:
        ValueError: If ``gamma`` is not in [0, 1) or ``tolerance`` is not positive.
    """
    _check_gamma(gamma)
    if not is_positive(tolerance):
        raise ValueError('"tolerance" must be positive')
    values = np.zeros(mdp.n_states)
    for iteration in range(max_iterations):
        q = mdp.transition @ (mdp.reward + gamma * values)
        new_values = q.max(axis=1)
        delta = np.max(np.abs(new_values - values))
        values = new_values
        if delta <= tolerance:
            break
    else:
        logger.warning('value iteration stopped after %d iterations (delta %.3e)', max_iterations, delta)
    logger.debug('value iteration converged in %d iterations', iteration + 1)

    q = mdp.transition @ (mdp.reward + gamma * values)
    actions = greedy_actions(q)
    policy = np.zeros((mdp.n_states, mdp.n_actions))
    policy[np.arange(mdp.n_states), actions] = 1.0
    return VTable(values), PolicyTable(policy)
