from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from .validators import is_count, is_number

Bound = Tuple[float, float, int]


@dataclass(frozen=True)
class DiscretizationSpec:
    """
    Uniform grid over a box of continuous states, plus a grid of continuous actions.

    Attributes:
        bounds: One ``(lower, upper, bins)`` triple per state dimension.
        actions: Representative continuous action for each discrete action index.
    """
    bounds: Tuple[Bound, ...]
    actions: Tuple[float, ...]

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi), int(n)) for lo, hi, n in self.bounds)
        object.__setattr__(self, 'bounds', bounds)
        object.__setattr__(self, 'actions', tuple(float(u) for u in self.actions))
        if not bounds:
            raise ValueError('Discretization needs at least one dimension')
        for dim, (lower, upper, bins) in enumerate(bounds):
            if not is_count(bins):
                raise ValueError(f'bin count must be >= 1 (dimension {dim})')
            if not (is_number(lower) and is_number(upper) and lower < upper):
                raise ValueError(f'bounds must be strictly ordered (dimension {dim})')
        if not self.actions:
            raise ValueError('Discretization needs at least one action')

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(bins for _, _, bins in self.bounds)

    @property
    def n_states(self) -> int:
        return int(np.prod(self.shape))

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def dim(self) -> int:
        return len(self.bounds)


def _as_vector(state) -> np.ndarray:
    vector = getattr(state, 'x', state)
    return np.asarray(vector, dtype=float)


def discretize(state, spec: DiscretizationSpec) -> Union[int, np.ndarray]:
    """
    Maps a continuous state to its row-major cell index.

    Values outside the bounds are clamped to the edge bins. Accepts a
    ContinuousEnvState, a vector, or a batch of vectors of shape ``(n, dim)``.

    Raises:
        ValueError: If the state dimension does not match the spec.
    """
    x = _as_vector(state)
    if x.shape[-1] != spec.dim:
        raise ValueError(f'state has dimension {x.shape[-1]}, discretization expects {spec.dim}')
    lower = np.array([lo for lo, _, _ in spec.bounds])
    upper = np.array([hi for _, hi, _ in spec.bounds])
    bins = np.array(spec.shape)
    cells = np.floor((x - lower) / (upper - lower) * bins).astype(int)
    cells = np.clip(cells, 0, bins - 1)
    index = np.ravel_multi_index(tuple(np.moveaxis(cells, -1, 0)), spec.shape)
    return int(index) if np.ndim(index) == 0 else index


def bin_center(index, spec: DiscretizationSpec) -> np.ndarray:
    """
    Midpoint of a cell (or of each cell in an index array).
    """
    cells = np.stack(np.unravel_index(np.asarray(index, dtype=int), spec.shape), axis=-1)
    lower = np.array([lo for lo, _, _ in spec.bounds])
    width = np.array([(hi - lo) / n for lo, hi, n in spec.bounds])
    return lower + (cells + 0.5) * width


def grid_centers(spec: DiscretizationSpec) -> np.ndarray:
    """Centers of all cells in index order, shape ``(n_states, dim)``."""
    return bin_center(np.arange(spec.n_states), spec)


def uniform_spec(
    bounds: Sequence[Bound],
    action_low: float,
    action_high: float,
    n_actions: int,
) -> DiscretizationSpec:
    """Spec whose action grid spreads ``n_actions`` points evenly over the action bounds."""
    if not is_count(n_actions):
        raise ValueError('"n_actions" must be a positive integer')
    if n_actions == 1:
        actions = (0.5 * (action_low + action_high),)
    else:
        actions = tuple(np.linspace(action_low, action_high, n_actions))
    return DiscretizationSpec(tuple(bounds), actions)
