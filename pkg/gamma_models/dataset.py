import csv
import logging
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Optional, Tuple, Union

import numpy as np

from .discretize import DiscretizationSpec
from .envs import make_env
from .mdp import PolicyTable, sample_rows
from .validators import is_count

logger = logging.getLogger(__name__)

CSV_HEADER = ['s', 'a', 'r', 's_next']


class TransitionSample(NamedTuple):
    s: int
    a: int
    r: float
    s_next: int


class TransitionDataset:
    """
    Replay buffer of transitions with optional FIFO capacity.

    Columns live in preallocated arrays used as a ring once ``capacity`` is
    reached. Single writer; readers get ordered copies through ``arrays()``.
    """

    def __init__(self, samples: Iterable[TransitionSample] = (), capacity: Optional[int] = None):
        if capacity is not None and not is_count(capacity):
            raise ValueError('"capacity" must be a positive integer')
        self.capacity = capacity
        self._columns = self._allocate(min(capacity or 1024, 1024))
        self._start = 0
        self._size = 0
        self.extend(samples)

    @staticmethod
    def _allocate(length: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return (
            np.zeros(length, dtype=int),
            np.zeros(length, dtype=int),
            np.zeros(length, dtype=float),
            np.zeros(length, dtype=int),
        )

    def _grow(self) -> None:
        length = len(self._columns[0]) * 2
        if self.capacity is not None:
            length = min(length, self.capacity)
        ordered = self.arrays()
        self._columns = self._allocate(length)
        for column, values in zip(self._columns, ordered):
            column[:self._size] = values
        self._start = 0

    def append(self, sample: TransitionSample) -> None:
        s, a, r, s_next = sample
        length = len(self._columns[0])
        if self._size == length and (self.capacity is None or length < self.capacity):
            self._grow()
            length = len(self._columns[0])
        if self._size == length:
            slot = self._start
            self._start = (self._start + 1) % length
        else:
            slot = (self._start + self._size) % length
            self._size += 1
        for column, value in zip(self._columns, (s, a, r, s_next)):
            column[slot] = value

    def extend(self, samples: Iterable[TransitionSample]) -> None:
        for sample in samples:
            self.append(sample)

    @property
    def samples(self) -> list:
        return list(self)

    def __len__(self) -> int:
        return self._size

    def __iter__(self) -> Iterator[TransitionSample]:
        s, a, r, s_next = self.arrays()
        for row in zip(s.tolist(), a.tolist(), r.tolist(), s_next.tolist()):
            yield TransitionSample(*row)

    def __getitem__(self, index: int) -> TransitionSample:
        if index < 0:
            index += self._size
        if not 0 <= index < self._size:
            raise IndexError('dataset index out of range')
        slot = (self._start + index) % len(self._columns[0])
        s, a, r, s_next = (column[slot] for column in self._columns)
        return TransitionSample(int(s), int(a), float(r), int(s_next))

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Columns ``(s, a, r, s_next)`` as arrays, oldest transition first."""
        order = (self._start + np.arange(self._size)) % len(self._columns[0])
        return tuple(column[order] for column in self._columns)

    def sample_batch(
        self,
        batch_size: int,
        rng: np.random.Generator,
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Columns of ``batch_size`` transitions drawn uniformly with replacement."""
        if not self._size:
            raise ValueError('Cannot sample from an empty dataset')
        # every stored slot lies in [0, size) whether or not the ring has wrapped
        slots = rng.integers(0, self._size, size=batch_size)
        return tuple(column[slots] for column in self._columns)

    def check_bounds(self, n_states: int, n_actions: int) -> None:
        s, a, _, s_next = (column[:self._size] for column in self._columns)
        if self._size and (
            s.min() < 0 or s_next.min() < 0 or a.min() < 0
            or s.max() >= n_states or s_next.max() >= n_states or a.max() >= n_actions
        ):
            raise ValueError(
                f'Dataset indices out of bounds for {n_states} states and {n_actions} actions'
            )


def collect_dataset(
    source,
    policy: PolicyTable,
    n_steps: int,
    rng: np.random.Generator,
    episode_length: int = 200,
    spec: Optional[DiscretizationSpec] = None,
    capacity: Optional[int] = None,
) -> TransitionDataset:
    """
    Rolls a policy in an MDP or discretized environment.

    Args:
        source: A TabularMdp, an environment name (with ``spec``) or a discrete env.
        policy: Behavior policy over discrete states and actions.
        n_steps: Number of transitions to record.
        rng: Random generator; the dataset is a deterministic function of its state.
        episode_length: Steps between resets from the initial-state distribution.
        spec: Discretization for continuous environments.
        capacity: Optional FIFO capacity of the returned dataset.

    Raises:
        ValueError: If ``n_steps`` or ``episode_length`` is not a positive integer.
    """
    if not is_count(n_steps):
        raise ValueError('"n_steps" must be a positive integer')
    if not is_count(episode_length):
        raise ValueError('"episode_length" must be a positive integer')
    env = make_env(source, spec)
    if policy.probs.shape != (env.n_states, env.n_actions):
        raise ValueError(
            f'policy shape {policy.probs.shape} does not match environment '
            f'({env.n_states}, {env.n_actions})'
        )

    dataset = TransitionDataset(capacity=capacity)
    state = env.reset(rng)
    for step in range(n_steps):
        if step and step % episode_length == 0:
            state = env.reset(rng)
        action = int(sample_rows(policy.probs[state], rng))
        reward, next_state = env.step(action, rng)
        dataset.append(TransitionSample(state, action, reward, next_state))
        state = next_state
    logger.debug('collected %d transitions', n_steps)
    return dataset


def write_dataset_csv(dataset: TransitionDataset, path: Union[str, Path]) -> Path:
    path = Path(path)
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(CSV_HEADER)
        for s, a, r, s_next in dataset:
            writer.writerow([int(s), int(a), repr(float(r)), int(s_next)])
    return path


def read_dataset_csv(path: Union[str, Path], capacity: Optional[int] = None) -> TransitionDataset:
    """
    Reads a transition CSV with header ``s,a,r,s_next``.

    Raises:
        ValueError: If the header is missing or a row cannot be parsed.
    """
    path = Path(path)
    with path.open(newline='', encoding='utf-8') as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ValueError(f'Dataset malformed (expected header {",".join(CSV_HEADER)})')
        samples = []
        for line_number, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                s, a, r, s_next = row
                samples.append(TransitionSample(int(s), int(a), float(r), int(s_next)))
            except ValueError:
                raise ValueError(f'Dataset malformed (line {line_number})') from None
    return TransitionDataset(samples, capacity=capacity)
