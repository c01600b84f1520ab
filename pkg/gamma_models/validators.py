from typing import Any

import numpy as np

ROW_SUM_ATOL = 1e-12


def is_number(value: Any) -> bool:
    """
    Check if a value is a real number.

    Args:
        value: Any value to check

    Returns:
        True if value is an int or float (bools excluded) and not NaN
    """
    if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
        return False
    return not np.isnan(value)


def is_count(value: Any, minimum: int = 1) -> bool:
    """
    Check if a value is an integer count no smaller than ``minimum``.
    """
    return (
        isinstance(value, (int, np.integer))
        and not isinstance(value, bool)
        and value >= minimum
    )


def is_discount(value: Any) -> bool:
    """
    Check if a value is a discount in [0, 1).

    Args:
        value: Any value to check

    Returns:
        True if value is a number with 0 <= value < 1
    """
    return is_number(value) and 0.0 <= value < 1.0


def is_unit_interval(value: Any, include_zero: bool = False) -> bool:
    """
    Check if a value lies in (0, 1], or [0, 1] when ``include_zero`` is set.
    """
    if not is_number(value):
        return False
    lower_ok = value >= 0.0 if include_zero else value > 0.0
    return lower_ok and value <= 1.0


def is_positive(value: Any) -> bool:
    return is_number(value) and value > 0


def row_sum_violations(rows: np.ndarray, label: str, atol: float = ROW_SUM_ATOL) -> list[str]:
    """
    Describe every row of a stochastic array that is negative or does not sum to 1.

    Args:
        rows: Array whose last axis holds distributions
        label: Index names for the leading axes, e.g. ``('s', 'a')``
        atol: Allowed deviation of each row sum from 1

    Returns:
        A list of human-readable violations, empty when every row is valid
    """
    violations: list[str] = []
    rows = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(rows)):
        for index in zip(*np.nonzero(~np.isfinite(rows))):
            violations.append(f'non-finite entry at {_format_index(label, index)}')
        return violations

    for index in zip(*np.nonzero(rows < 0.0)):
        violations.append(
            f'negative entry {rows[index]:.12g} at {_format_index(label, index)}'
        )

    sums = rows.sum(axis=-1)
    for index in zip(*np.nonzero(np.abs(sums - 1.0) > atol)):
        violations.append(f'row sum {sums[index]:.12g} at {_format_index(label, index)}')
    return violations


def _format_index(label, index) -> str:
    names = list(label) + ["s'"] * (len(index) - len(label))
    parts = ','.join(f'{name}={int(i)}' for name, i in zip(names, index))
    return f'({parts})'
