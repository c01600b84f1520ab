"""
Continuous benchmark dynamics and discrete environment wrappers.

All dynamics functions are vectorized over leading batch axes: ``x`` has shape
``(..., dim)`` and ``u`` has shape ``(...)``.
"""
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Protocol, Tuple, Union

import numpy as np

from .discretize import DiscretizationSpec, bin_center, discretize, grid_centers, uniform_spec
from .mdp import TabularMdp, ensure_valid_mdp, sample_rows

# pendulum
PENDULUM_DT = 0.05
PENDULUM_G = 10.0
PENDULUM_M = 1.0
PENDULUM_L = 1.0
PENDULUM_MAX_TORQUE = 2.0
PENDULUM_MAX_SPEED = 8.0

# mountain car
CAR_MIN_X, CAR_MAX_X = -1.2, 0.6
CAR_MAX_SPEED = 0.07
CAR_POWER = 0.0015
CAR_GOAL_X = 0.45

# acrobot
ACROBOT_DT = 0.2
ACROBOT_MAX_VEL_1 = 4 * np.pi
ACROBOT_MAX_VEL_2 = 9 * np.pi
ACROBOT_G = 9.8

# dense tables grow with n_states squared
MAX_TABULAR_STATES = 2_500


@dataclass(frozen=True)
class ContinuousEnvState:
    env: str
    x: np.ndarray

    def __post_init__(self):
        spec = get_environment(self.env)
        x = np.array(self.x, dtype=float, copy=True)
        if x.shape != (spec.dim,):
            raise ValueError(f'"{self.env}" states have dimension {spec.dim}, got shape {x.shape}')
        x.flags.writeable = False
        object.__setattr__(self, 'x', x)


def wrap_angle(theta):
    return (theta + np.pi) % (2 * np.pi) - np.pi


def _pendulum_step(x, u):
    theta, theta_dot = x[..., 0], x[..., 1]
    u = np.clip(u, -PENDULUM_MAX_TORQUE, PENDULUM_MAX_TORQUE)
    accel = (
        3 * PENDULUM_G / (2 * PENDULUM_L) * np.sin(theta)
        + 3.0 / (PENDULUM_M * PENDULUM_L ** 2) * u
    )
    theta_dot = np.clip(theta_dot + accel * PENDULUM_DT, -PENDULUM_MAX_SPEED, PENDULUM_MAX_SPEED)
    theta = wrap_angle(theta + theta_dot * PENDULUM_DT)
    next_x = np.stack([theta, theta_dot], axis=-1)
    return next_x, _pendulum_state_reward(next_x) - 0.001 * u ** 2


def _pendulum_state_reward(x):
    return -(wrap_angle(x[..., 0]) ** 2 + 0.1 * x[..., 1] ** 2)


def _pendulum_reset(rng, size):
    theta = rng.uniform(-np.pi, np.pi, size=size)
    theta_dot = rng.uniform(-1.0, 1.0, size=size)
    return np.stack([theta, theta_dot], axis=-1)


def _mountain_car_step(x, u):
    position, velocity = x[..., 0], x[..., 1]
    u = np.clip(u, -1.0, 1.0)
    velocity = velocity + CAR_POWER * u - 0.0025 * np.cos(3 * position)
    velocity = np.clip(velocity, -CAR_MAX_SPEED, CAR_MAX_SPEED)
    position = np.clip(position + velocity, CAR_MIN_X, CAR_MAX_X)
    velocity = np.where((position == CAR_MIN_X) & (velocity < 0), 0.0, velocity)
    next_x = np.stack([position, velocity], axis=-1)
    return next_x, _mountain_car_state_reward(next_x)


def _mountain_car_state_reward(x):
    return np.asarray(x[..., 0], dtype=float)


def _mountain_car_reset(rng, size):
    position = rng.uniform(-0.6, -0.4, size=size)
    return np.stack([position, np.zeros_like(position)], axis=-1)


def _acrobot_derivatives(state, torque):
    m1 = m2 = 1.0
    l1 = 1.0
    lc1 = lc2 = 0.5
    i1 = i2 = 1.0
    theta1, theta2, dtheta1, dtheta2 = np.moveaxis(state, -1, 0)
    d1 = m1 * lc1 ** 2 + m2 * (l1 ** 2 + lc2 ** 2 + 2 * l1 * lc2 * np.cos(theta2)) + i1 + i2
    d2 = m2 * (lc2 ** 2 + l1 * lc2 * np.cos(theta2)) + i2
    phi2 = m2 * lc2 * ACROBOT_G * np.cos(theta1 + theta2 - np.pi / 2)
    phi1 = (
        -m2 * l1 * lc2 * dtheta2 ** 2 * np.sin(theta2)
        - 2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * np.sin(theta2)
        + (m1 * lc1 + m2 * l1) * ACROBOT_G * np.cos(theta1 - np.pi / 2)
        + phi2
    )
    ddtheta2 = (
        torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 ** 2 * np.sin(theta2) - phi2
    ) / (m2 * lc2 ** 2 + i2 - d2 ** 2 / d1)
    ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
    return np.stack([dtheta1, dtheta2, ddtheta1, ddtheta2], axis=-1)


def _acrobot_step(x, u):
    u = np.clip(u, -1.0, 1.0)
    h = ACROBOT_DT
    k1 = _acrobot_derivatives(x, u)
    k2 = _acrobot_derivatives(x + h / 2 * k1, u)
    k3 = _acrobot_derivatives(x + h / 2 * k2, u)
    k4 = _acrobot_derivatives(x + h * k3, u)
    nxt = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    next_x = np.stack(
        [
            wrap_angle(nxt[..., 0]),
            wrap_angle(nxt[..., 1]),
            np.clip(nxt[..., 2], -ACROBOT_MAX_VEL_1, ACROBOT_MAX_VEL_1),
            np.clip(nxt[..., 3], -ACROBOT_MAX_VEL_2, ACROBOT_MAX_VEL_2),
        ],
        axis=-1,
    )
    return next_x, _acrobot_state_reward(next_x)


def _acrobot_state_reward(x):
    return -np.cos(x[..., 0]) - np.cos(x[..., 0] + x[..., 1])


def _acrobot_reset(rng, size):
    shape = (4,) if size is None else (size, 4)
    return rng.uniform(-0.1, 0.1, size=shape)


@dataclass(frozen=True)
class EnvironmentSpec:
    """
    Static description of a continuous benchmark.

    Attributes:
        dim_names: Config-key suffix of each state dimension (``bins_<name>``).
        bounds: Default discretization box per dimension.
        action_bounds: Continuous action range; actions are clipped to it.
        step: Batched dynamics ``(x, u) -> (next_x, reward)``.
        state_reward: Batched state reward used for discretized MDPs.
        reset: ``(rng, size) -> x`` initial-state sampler.
    """
    name: str
    dim_names: Tuple[str, ...]
    bounds: Tuple[Tuple[float, float], ...]
    action_bounds: Tuple[float, float]
    step: Callable
    state_reward: Callable
    reset: Callable

    @property
    def dim(self) -> int:
        return len(self.dim_names)


ENVIRONMENTS: Dict[str, EnvironmentSpec] = {
    'pendulum': EnvironmentSpec(
        'pendulum',
        ('theta', 'thetadot'),
        ((-np.pi, np.pi), (-PENDULUM_MAX_SPEED, PENDULUM_MAX_SPEED)),
        (-PENDULUM_MAX_TORQUE, PENDULUM_MAX_TORQUE),
        _pendulum_step,
        _pendulum_state_reward,
        _pendulum_reset,
    ),
    'mountain_car': EnvironmentSpec(
        'mountain_car',
        ('x', 'xdot'),
        ((CAR_MIN_X, CAR_MAX_X), (-CAR_MAX_SPEED, CAR_MAX_SPEED)),
        (-1.0, 1.0),
        _mountain_car_step,
        _mountain_car_state_reward,
        _mountain_car_reset,
    ),
    'acrobot': EnvironmentSpec(
        'acrobot',
        ('theta1', 'theta2', 'dtheta1', 'dtheta2'),
        (
            (-np.pi, np.pi),
            (-np.pi, np.pi),
            (-ACROBOT_MAX_VEL_1, ACROBOT_MAX_VEL_1),
            (-ACROBOT_MAX_VEL_2, ACROBOT_MAX_VEL_2),
        ),
        (-1.0, 1.0),
        _acrobot_step,
        _acrobot_state_reward,
        _acrobot_reset,
    ),
}


def get_environment(name: str) -> EnvironmentSpec:
    try:
        return ENVIRONMENTS[name]
    except KeyError:
        raise ValueError(f'Unknown environment "{name}"') from None


def env_step(
    state: ContinuousEnvState,
    action: float,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[ContinuousEnvState, float]:
    """
    Advances a continuous environment by one step.

    Args:
        state: Current state.
        action: Continuous action, clipped to the environment's bounds.
        rng: Unused by the deterministic benchmarks; kept for stochastic variants.

    Returns:
        The next state and the reward collected on arriving there.

    Raises:
        ValueError: If the environment identifier is unknown.
    """
    spec = get_environment(state.env)
    next_x, reward = spec.step(state.x, float(action))
    return ContinuousEnvState(state.env, next_x), float(reward)


def state_reward(state: ContinuousEnvState) -> float:
    return float(get_environment(state.env).state_reward(state.x))


def default_discretization(
    env: str,
    bins: Union[int, Tuple[int, ...]] = 21,
    n_actions: int = 5,
) -> DiscretizationSpec:
    """Uniform grid over the environment's default box with an evenly spaced action grid."""
    spec = get_environment(env)
    bins = (bins,) * spec.dim if isinstance(bins, (int, np.integer)) else tuple(bins)
    if len(bins) != spec.dim:
        raise ValueError(f'"{env}" needs {spec.dim} bin counts, got {len(bins)}')
    bounds = tuple((lo, hi, n) for (lo, hi), n in zip(spec.bounds, bins))
    return uniform_spec(bounds, *spec.action_bounds, n_actions)


def discretized_mdp(env: str, spec: DiscretizationSpec) -> TabularMdp:
    """
    Deterministic tabular MDP obtained by stepping each cell center with each grid action.

    The reward of each cell is the environment's state reward at its center and
    episodes start uniformly over cells.
    """
    env_spec = get_environment(env)
    if spec.dim != env_spec.dim:
        raise ValueError(f'"{env}" states have dimension {env_spec.dim}, discretization has {spec.dim}')
    if spec.n_states > MAX_TABULAR_STATES:
        raise ValueError(
            f'"{env}" discretization has {spec.n_states} states, above the tabular limit of '
            f'{MAX_TABULAR_STATES}; lower the bin counts'
        )
    centers = grid_centers(spec)
    n_states, n_actions = spec.n_states, spec.n_actions
    transition = np.zeros((n_states, n_actions, n_states))
    for a, u in enumerate(spec.actions):
        next_x, _ = env_spec.step(centers, np.full(n_states, u))
        transition[np.arange(n_states), a, discretize(next_x, spec)] = 1.0
    reward = env_spec.state_reward(centers)
    return ensure_valid_mdp(TabularMdp(transition, reward))


class DiscreteEnv(Protocol):
    """Episodic environment over integer states and actions."""
    n_states: int
    n_actions: int

    def reset(self, rng: np.random.Generator) -> int: ...

    def step(self, action: int, rng: np.random.Generator) -> Tuple[float, int]: ...


class MdpEnv:
    """Samples episodes from a TabularMdp."""

    def __init__(self, mdp: TabularMdp):
        self.mdp = mdp
        self.n_states = mdp.n_states
        self.n_actions = mdp.n_actions
        self.state = 0

    def reset(self, rng: np.random.Generator) -> int:
        self.state = int(sample_rows(self.mdp.initial, rng))
        return self.state

    def step(self, action: int, rng: np.random.Generator) -> Tuple[float, int]:
        self.state = int(sample_rows(self.mdp.transition[self.state, action], rng))
        return float(self.mdp.reward[self.state]), self.state


class DiscretizedEnv:
    """
    Runs continuous dynamics and reports discretized states.

    Actions are indices into ``spec.actions``. The continuous state is kept, so
    trajectories are not snapped to cell centers.
    """

    def __init__(self, env: str, spec: DiscretizationSpec):
        self.env_spec = get_environment(env)
        if spec.dim != self.env_spec.dim:
            raise ValueError(
                f'"{env}" states have dimension {self.env_spec.dim}, discretization has {spec.dim}'
            )
        self.name = env
        self.spec = spec
        self.n_states = spec.n_states
        self.n_actions = spec.n_actions
        self.state = ContinuousEnvState(env, np.zeros(self.env_spec.dim))

    def reset(self, rng: np.random.Generator) -> int:
        self.state = ContinuousEnvState(self.name, self.env_spec.reset(rng, None))
        return discretize(self.state, self.spec)

    def step(self, action: int, rng: np.random.Generator) -> Tuple[float, int]:
        self.state, reward = env_step(self.state, self.spec.actions[action], rng)
        return reward, discretize(self.state, self.spec)

    def start_batch(self, state_index: int, size: int) -> np.ndarray:
        """Cell center of ``state_index`` repeated ``size`` times."""
        return np.repeat(bin_center(state_index, self.spec)[None, :], size, axis=0)

    def step_batch(self, x: np.ndarray, actions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Steps a batch of continuous states; returns next states and their cell indices."""
        u = np.asarray(self.spec.actions)[actions]
        next_x, _ = self.env_spec.step(x, u)
        return next_x, discretize(next_x, self.spec)


def make_env(source, spec: Optional[DiscretizationSpec] = None):
    """
    Wraps a TabularMdp, an existing discrete env, or an environment name plus spec.
    """
    if isinstance(source, TabularMdp):
        return MdpEnv(source)
    if isinstance(source, str):
        if spec is None:
            raise ValueError(f'"{source}" needs a DiscretizationSpec')
        return DiscretizedEnv(source, spec)
    if hasattr(source, 'reset') and hasattr(source, 'step'):
        return source
    raise ValueError(f'Cannot build an environment from {type(source).__name__}')
