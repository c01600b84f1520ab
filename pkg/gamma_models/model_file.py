"""
Plain-text table files.

Line 1 is the format tag, line 2 ``n_states n_actions gamma``, then one line per
``(s, a)``: ``s a v_0 ... v_{n_states-1}`` with 17 significant digits, so every
float survives a write/read cycle exactly.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .gamma_td import GammaModelTable
from .oracle import SuccessorTable
from .validators import is_discount, row_sum_violations

GAMMA_MODEL_TAG = 'gamma-model v1'
SUCCESSOR_TAG = 'successor v1'
TAGS = (GAMMA_MODEL_TAG, SUCCESSOR_TAG)


@dataclass(frozen=True)
class ModelFile:
    tag: str
    n_states: int
    n_actions: int
    gamma: float
    rows: np.ndarray

    def to_model(self) -> GammaModelTable:
        if self.tag != GAMMA_MODEL_TAG:
            raise ValueError(f'"{self.tag}" file does not hold a gamma-model')
        return GammaModelTable.from_probs(self.rows, self.gamma)

    def to_successor(self) -> SuccessorTable:
        if self.tag != SUCCESSOR_TAG:
            raise ValueError(f'"{self.tag}" file does not hold a successor table')
        return SuccessorTable(self.rows, self.gamma)


def format_model_file(rows: np.ndarray, gamma: float, tag: str = GAMMA_MODEL_TAG) -> str:
    rows = np.asarray(rows, dtype=float)
    if tag not in TAGS:
        raise ValueError(f'Unknown model file tag "{tag}"')
    if rows.ndim != 3 or rows.shape[0] != rows.shape[2]:
        raise ValueError(f'rows must have shape (S, A, S), got {rows.shape}')
    n_states, n_actions, _ = rows.shape
    lines = [tag, f'{n_states} {n_actions} {float(gamma):.17g}']
    for s in range(n_states):
        for a in range(n_actions):
            lines.append(' '.join([str(s), str(a), *(f'{p:.17g}' for p in rows[s, a])]))
    return '\n'.join(lines) + '\n'


def write_model_file(
    path: Union[str, Path],
    rows: np.ndarray,
    gamma: float,
    tag: str = GAMMA_MODEL_TAG,
) -> Path:
    path = Path(path)
    path.write_text(format_model_file(rows, gamma, tag), encoding='utf-8')
    return path


def write_gamma_model(path: Union[str, Path], model: GammaModelTable) -> Path:
    return write_model_file(path, model.probs, model.gamma)


def write_successor(path: Union[str, Path], successor: SuccessorTable) -> Path:
    return write_model_file(path, successor.M, successor.gamma, SUCCESSOR_TAG)


def parse_model_file(text: str) -> ModelFile:
    """
    Parse the contents of a model file.

    Args:
        text: File contents

    Returns:
        The parsed ModelFile

    Raises:
        ValueError: If the tag is unknown, a line cannot be parsed, rows are
            missing or out of order, or rows do not have the expected mass
    """
    lines = [line for line in text.split('\n') if line.strip()]
    if not lines or lines[0].strip() not in TAGS:
        raise ValueError('Model file malformed (unknown format tag)')
    tag = lines[0].strip()
    try:
        n_states, n_actions, gamma = lines[1].split()
        n_states, n_actions, gamma = int(n_states), int(n_actions), float(gamma)
    except (IndexError, ValueError):
        raise ValueError('Model file malformed (expected "n_states n_actions gamma" on line 2)') from None
    if n_states < 1 or n_actions < 1 or not is_discount(gamma):
        raise ValueError('Model file malformed (invalid dimensions or gamma)')
    if len(lines) - 2 != n_states * n_actions:
        raise ValueError(
            f'Model file malformed (expected {n_states * n_actions} rows, got {len(lines) - 2})'
        )

    rows = np.empty((n_states, n_actions, n_states))
    for offset, line in enumerate(lines[2:]):
        fields = line.split()
        expected = divmod(offset, n_actions)
        try:
            s, a = int(fields[0]), int(fields[1])
            values = [float(field) for field in fields[2:]]
        except (IndexError, ValueError):
            raise ValueError(f'Model file malformed (line {offset + 3})') from None
        if (s, a) != expected or len(values) != n_states:
            raise ValueError(f'Model file malformed (line {offset + 3}: expected s={expected[0]} a={expected[1]})')
        rows[s, a] = values

    # successor rows carry 1 / (1 - gamma) mass
    scale = 1.0 if tag == GAMMA_MODEL_TAG else 1.0 - gamma
    violations = row_sum_violations(rows * scale, ('s', 'a'), atol=1e-9)
    if violations:
        raise ValueError(f'Model file malformed ({violations[0]})')
    return ModelFile(tag, n_states, n_actions, gamma, rows)


def read_model_file(path: Union[str, Path]) -> ModelFile:
    return parse_model_file(Path(path).read_text(encoding='utf-8'))
