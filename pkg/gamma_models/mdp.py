"""
Finite MDPs, policies and value tables.

Rewards are attached to states: ``reward[s]`` is collected on arrival in ``s``.
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .validators import is_count, row_sum_violations

UP, RIGHT, DOWN, LEFT = range(4)


def _frozen(array, dtype=float) -> np.ndarray:
    array = np.array(array, dtype=dtype, copy=True)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class TabularMdp:
    """
    A finite MDP ``(S, A, p, r)``.

    Attributes:
        transition: Probabilities indexed ``[state][action][next_state]``.
        reward: Reward of each state.
        initial: Initial-state distribution used when sampling episodes.
    """
    transition: np.ndarray
    reward: np.ndarray
    initial: Optional[np.ndarray] = None

    def __post_init__(self):
        transition = _frozen(self.transition)
        object.__setattr__(self, 'transition', transition)
        object.__setattr__(self, 'reward', _frozen(self.reward))
        initial = self.initial
        if initial is None and transition.ndim == 3:
            initial = np.full(transition.shape[0], 1.0 / transition.shape[0])
        if initial is not None:
            object.__setattr__(self, 'initial', _frozen(initial))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]


@dataclass(frozen=True)
class PolicyTable:
    """Action probabilities indexed ``[state][action]``."""
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'probs', _frozen(self.probs))

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]


@dataclass(frozen=True)
class VTable:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'values', _frozen(self.values))
        if not np.all(np.isfinite(self.values)):
            raise ValueError('VTable entries must be finite')


@dataclass(frozen=True)
class QTable:
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'values', _frozen(self.values))
        if not np.all(np.isfinite(self.values)):
            raise ValueError('QTable entries must be finite')


def validate_mdp(mdp: TabularMdp) -> list[str]:
    """
    Lists every violated TabularMdp invariant.

    Args:
        mdp: The MDP to check.

    Returns:
        An empty list if the MDP is valid, otherwise one message per violation
        naming the offending index and residual.
    """
    transition = mdp.transition
    if transition.ndim != 3 or transition.shape[0] != transition.shape[2]:
        return [f'transition must have shape (S, A, S), got {transition.shape}']
    if mdp.reward.shape != (transition.shape[0],):
        return [f'reward must have shape ({transition.shape[0]},), got {mdp.reward.shape}']

    violations = row_sum_violations(transition, ('s', 'a'))
    for s in np.nonzero(~np.isfinite(mdp.reward))[0]:
        violations.append(f'non-finite reward at s={int(s)}')
    if mdp.initial is not None:
        violations.extend(
            f'initial distribution: {v}' for v in row_sum_violations(mdp.initial[None, :], ('row',))
        )
    return violations


def validate_policy(policy: PolicyTable, mdp: Optional[TabularMdp] = None) -> list[str]:
    """
    Lists every violated PolicyTable invariant, including a shape mismatch with ``mdp``.
    """
    if policy.probs.ndim != 2:
        return [f'policy must have shape (S, A), got {policy.probs.shape}']
    if mdp is not None and policy.probs.shape != (mdp.n_states, mdp.n_actions):
        return [
            f'policy shape {policy.probs.shape} does not match MDP '
            f'({mdp.n_states}, {mdp.n_actions})'
        ]
    return row_sum_violations(policy.probs, ('s',))


def ensure_valid_mdp(mdp: TabularMdp) -> TabularMdp:
    violations = validate_mdp(mdp)
    if violations:
        raise ValueError('Invalid MDP: ' + '; '.join(violations[:10]))
    return mdp


def ensure_valid_policy(policy: PolicyTable, mdp: Optional[TabularMdp] = None) -> PolicyTable:
    violations = validate_policy(policy, mdp)
    if violations:
        raise ValueError('Invalid policy: ' + '; '.join(violations[:10]))
    return policy


def policy_transition_matrix(mdp: TabularMdp, policy: PolicyTable) -> np.ndarray:
    """
    One-step state kernel under a policy.

    Args:
        mdp: The MDP.
        policy: The policy acting in it.

    Returns:
        ``P_pi[s][s'] = sum_a pi(a|s) p(s'|s,a)``.

    Raises:
        ValueError: If the policy and MDP dimensions disagree.
    """
    if policy.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(
            f'policy shape {policy.probs.shape} does not match MDP '
            f'({mdp.n_states}, {mdp.n_actions})'
        )
    kernel = np.einsum('sa,sat->st', policy.probs, mdp.transition)
    violations = row_sum_violations(kernel, ('s',))
    if violations:
        raise ValueError('Policy kernel is not stochastic: ' + '; '.join(violations[:10]))
    return kernel


def sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    Draws one index per row of a batch of distributions.

    Args:
        probs: Array of shape ``(..., n)`` whose last axis holds distributions.
        rng: Random generator.

    Returns:
        Integer array of shape ``probs.shape[:-1]``.
    """
    probs = np.asarray(probs, dtype=float)
    cumulative = np.cumsum(probs, axis=-1)
    u = np.asarray(rng.random(probs.shape[:-1])) * cumulative[..., -1]
    index = (cumulative <= u[..., None]).sum(axis=-1)
    return np.minimum(index, probs.shape[-1] - 1)


def uniform_policy(n_states: int, n_actions: int) -> PolicyTable:
    return PolicyTable(np.full((n_states, n_actions), 1.0 / n_actions))


def deterministic_policy(actions: Sequence[int], n_actions: int) -> PolicyTable:
    """Builds a one-hot policy from one action per state."""
    actions = np.asarray(actions, dtype=int)
    probs = np.zeros((len(actions), n_actions))
    probs[np.arange(len(actions)), actions] = 1.0
    return PolicyTable(probs)


def random_policy(n_states: int, n_actions: int, rng: np.random.Generator) -> PolicyTable:
    return PolicyTable(rng.dirichlet(np.ones(n_actions), size=n_states))


def swap_chain() -> TabularMdp:
    """Two states, one action, every step swaps the state. Reward 1 in state 1."""
    transition = np.array([[[0.0, 1.0]], [[1.0, 0.0]]])
    return ensure_valid_mdp(TabularMdp(transition, np.array([0.0, 1.0]), np.array([1.0, 0.0])))


def random_mdp(
    n_states: int,
    n_actions: int,
    rng: np.random.Generator,
    branching: Optional[int] = None,
) -> TabularMdp:
    """
    Random finite MDP with Dirichlet transition rows and uniform [0, 1] state rewards.

    Args:
        n_states: Number of states.
        n_actions: Number of actions.
        rng: Random generator.
        branching: Number of reachable next states per (s, a); all states if None.
    """
    if not is_count(n_states) or not is_count(n_actions):
        raise ValueError('"n_states" and "n_actions" must be positive integers')
    branching = n_states if branching is None else branching
    if not is_count(branching) or branching > n_states:
        raise ValueError('"branching" must be an integer in [1, n_states]')

    transition = np.zeros((n_states, n_actions, n_states))
    for s in range(n_states):
        for a in range(n_actions):
            connected = rng.choice(n_states, size=branching, replace=False)
            transition[s, a, connected] = rng.dirichlet(np.ones(branching))
    transition /= transition.sum(axis=-1, keepdims=True)
    reward = rng.uniform(0.0, 1.0, size=n_states)
    return ensure_valid_mdp(TabularMdp(transition, reward))


def gridworld(size: int, goal: Optional[int] = None) -> TabularMdp:
    """
    Deterministic N x N grid with four moves.

    States are row-major cells. Moving into a wall leaves the state unchanged.
    The goal is absorbing and is the only state with reward (1). Episodes start
    in cell 0.

    Args:
        size: Grid side length N.
        goal: Goal cell, the last cell by default.
    """
    if not is_count(size):
        raise ValueError('"size" must be a positive integer')
    n_states = size * size
    goal = n_states - 1 if goal is None else goal
    if not 0 <= goal < n_states:
        raise ValueError(f'"goal" must be a cell index in [0, {n_states})')

    moves = {UP: (-1, 0), RIGHT: (0, 1), DOWN: (1, 0), LEFT: (0, -1)}
    transition = np.zeros((n_states, 4, n_states))
    for s in range(n_states):
        row, col = divmod(s, size)
        for a, (d_row, d_col) in moves.items():
            if s == goal:
                transition[s, a, s] = 1.0
                continue
            next_row, next_col = row + d_row, col + d_col
            if 0 <= next_row < size and 0 <= next_col < size:
                transition[s, a, next_row * size + next_col] = 1.0
            else:
                transition[s, a, s] = 1.0

    reward = np.zeros(n_states)
    reward[goal] = 1.0
    initial = np.zeros(n_states)
    initial[0] = 1.0
    return ensure_valid_mdp(TabularMdp(transition, reward, initial))
