"""
key=value experiment configuration and the problems it describes.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from .control import AC_DEFAULTS
from .discretize import DiscretizationSpec
from .envs import ENVIRONMENTS, default_discretization, discretized_mdp
from .gamma_td import TRAIN_DEFAULTS
from .mdp import (
    PolicyTable,
    TabularMdp,
    ensure_valid_mdp,
    ensure_valid_policy,
    gridworld,
    random_mdp,
    random_policy,
    swap_chain,
    uniform_policy,
)
from .oracle import value_iteration

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = 0.5

DEFAULTS: Dict[str, Any] = {
    'env': 'swap_chain',
    'seed': 0,
    'policy': 'uniform',
    'behavior': None,
    'grid_size': 5,
    'mdp_states': 10,
    'mdp_actions': 2,
    'branching': None,
    'bins': 21,
    'n_actions': 5,
    'dynamics': 'tabular',
    'n_transitions': 10_000,
    'episode_length': 200,
    'mass': 0.95,
    'sweep_gammas': [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99],
    't_max': 100,
    'estimators': ['gamma_mve', 'mve', 'model_free'],
    'seeds': [0, 1, 2, 3, 4],
}

PROBLEMS = ('swap_chain', 'gridworld', 'random') + tuple(sorted(ENVIRONMENTS))

# keys read by individual commands on top of DEFAULTS
COMMAND_KEYS = ('gamma', 'gamma_tilde', 'H', 'mode', 'n_sweeps', 'dataset', 'model', 'mdp_seed')

KEY_ALIASES = {'actions': 'n_actions'}


def parse_config(text: str) -> Dict[str, Any]:
    """
    Parse ``key = value`` lines into a dictionary.

    Args:
        text: Configuration text; ``#`` starts a comment, blank lines are skipped

    Returns:
        Dictionary with normalized keys and coerced values

    Raises:
        ValueError: If a non-empty line has no ``=``
    """
    entries = {}
    for line_number, line in enumerate(text.split('\n'), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ValueError(f'Config malformed (line {line_number}: expected key = value)')
        key, value = line.split('=', 1)
        entries[key.strip()] = value.strip()
    return {normalize_key(key): coerce_value(value) for key, value in entries.items()}


def normalize_key(key: str) -> str:
    """
    Convert a config key to its option name.

    Args:
        key: Key as written, e.g. ``Gamma Tilde`` or ``gamma-tilde``

    Returns:
        Lower-case key with spaces and hyphens replaced by underscores
    """
    normalized = key.strip().replace(' ', '_').replace('-', '_')
    # horizon keys keep their upper-case spelling
    return normalized if normalized == 'H' else normalized.lower()


def coerce_value(value: str) -> Any:
    """Interprets a config value as None, bool, int, float, a comma list of those, or a string."""
    if ',' in value:
        return [coerce_value(item.strip()) for item in value.split(',') if item.strip()]
    lowered = value.lower()
    if lowered in ('none', 'null', ''):
        return None
    if lowered in ('true', 'yes'):
        return True
    if lowered in ('false', 'no'):
        return False
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def load_config(path: Union[str, Path]) -> Dict[str, Any]:
    return parse_config(Path(path).read_text(encoding='utf-8'))


def resolve_config(
    file_config: Optional[Dict[str, Any]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> Dict[str, Any]:
    """
    Defaults, then the config file, then command-line overrides that are not None.

    Raises:
        ValueError: If a key is unknown or given under both its name and its alias
    """
    resolved = dict(DEFAULTS)
    resolved.update(apply_aliases(file_config or {}))
    resolved.update(apply_aliases({key: value for key, value in (overrides or {}).items() if value is not None}))
    unknown = sorted(set(resolved) - known_keys())
    if unknown:
        raise ValueError('Unknown config keys: ' + ', '.join(unknown))
    return resolved


def known_keys() -> set:
    bin_keys = {f'bins_{dim}' for env in ENVIRONMENTS.values() for dim in env.dim_names}
    return set(DEFAULTS) | set(TRAIN_DEFAULTS) | set(AC_DEFAULTS) | set(COMMAND_KEYS) | bin_keys


def apply_aliases(config: Dict[str, Any]) -> Dict[str, Any]:
    renamed = {}
    for key, value in config.items():
        name = KEY_ALIASES.get(key, key)
        if name in renamed:
            raise ValueError(f'Config key "{name}" is given twice (once as "{key}")')
        renamed[name] = value
    return renamed


def pick(config: Dict[str, Any], keys) -> Dict[str, Any]:
    """Subset of ``config`` restricted to ``keys`` that are present."""
    return {key: config[key] for key in keys if key in config}


def as_list(value) -> list:
    return list(value) if isinstance(value, (list, tuple)) else [value]


@dataclass(frozen=True)
class Problem:
    """
    A configured MDP with the policy to study.

    ``env`` and ``spec`` are set for discretized continuous environments; with
    ``dynamics = continuous`` transitions are then collected from the continuous
    system instead of the discretized MDP.
    """
    name: str
    mdp: TabularMdp
    policy: PolicyTable
    behavior: PolicyTable
    env: Optional[str] = None
    spec: Optional[DiscretizationSpec] = None
    continuous: bool = False

    @property
    def collect_source(self):
        return self.env if self.continuous else self.mdp


def build_mdp(config: Dict[str, Any]):
    name = config['env']
    if name not in PROBLEMS:
        raise ValueError(f'Unknown environment "{name}"')
    if name == 'swap_chain':
        return swap_chain(), None
    if name == 'gridworld':
        return gridworld(config['grid_size']), None
    if name == 'random':
        rng = np.random.default_rng(config.get('mdp_seed', config['seed']))
        return random_mdp(config['mdp_states'], config['mdp_actions'], rng, config['branching']), None
    bins = config['bins']
    dim_names = ENVIRONMENTS[name].dim_names
    if not isinstance(bins, list):
        bins = [bins] * len(dim_names)
    if len(bins) != len(dim_names):
        raise ValueError(f'"{name}" needs {len(dim_names)} bin counts, got {len(bins)}')
    bins = tuple(config.get(f'bins_{dim}', count) for dim, count in zip(dim_names, bins))
    spec = default_discretization(name, bins, config['n_actions'])
    return discretized_mdp(name, spec), spec


def build_policy(kind: str, mdp: TabularMdp, gamma: float, seed: int) -> PolicyTable:
    if kind == 'uniform':
        policy = uniform_policy(mdp.n_states, mdp.n_actions)
    elif kind == 'optimal':
        policy = value_iteration(mdp, gamma)[1]
    elif kind == 'random':
        policy = random_policy(mdp.n_states, mdp.n_actions, np.random.default_rng(seed))
    else:
        raise ValueError(f'Unknown policy "{kind}" (expected uniform, optimal or random)')
    return ensure_valid_policy(policy, mdp)


def build_problem(config: Dict[str, Any]) -> Problem:
    """
    Builds the MDP, evaluation policy and behavior policy named by ``config``.

    Raises:
        ValueError: If the environment or policy is unknown or the MDP is invalid.
    """
    mdp, spec = build_mdp(config)
    ensure_valid_mdp(mdp)
    policy = build_policy(config['policy'], mdp, config.get('gamma', DEFAULT_GAMMA), config['seed'])
    behavior_kind = config.get('behavior')
    behavior = policy if behavior_kind is None else build_policy(
        behavior_kind, mdp, config.get('gamma', DEFAULT_GAMMA), config['seed'] + 1
    )
    if config['dynamics'] not in ('tabular', 'continuous'):
        raise ValueError('"dynamics" must be "tabular" or "continuous"')
    continuous = spec is not None and config['dynamics'] == 'continuous'
    env = config['env'] if spec is not None else None
    return Problem(config['env'], mdp, policy, behavior, env, spec, continuous)
