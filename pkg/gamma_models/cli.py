"""
Command-line entry points.

Every command reads a resolved configuration mapping, writes its artifacts into
an output directory and records a manifest there. Exit codes: 0 on success,
1 on invalid input, 2 on I/O errors.
"""
import argparse
import asyncio
import csv
import logging
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np

from .config import DEFAULT_GAMMA, as_list, build_problem, load_config, pick, resolve_config
from .control import AC_DEFAULTS, episodes_to_threshold, reference_return, run_experiments
from .dataset import collect_dataset, read_dataset_csv, write_dataset_csv
from .gamma_td import (
    TRAIN_DEFAULTS,
    GammaModelTable,
    GammaTdTrainer,
    expected_regression_loss,
    expected_td_sweep,
    sup_l1,
)
from .manifest import RunManifest, read_manifest, write_manifest
from .model_file import read_model_file, write_gamma_model, write_model_file, write_successor
from .oracle import exact_occupancy, exact_successor, policy_evaluation, total_variation
from .rollout import geometric_pmf, steps_to_mass, weighted_components
from .validators import row_sum_violations
from .value_expansion import v_table_from_model, value_deviation, write_value_map

logger = logging.getLogger(__name__)

Artifacts = Dict[str, Path]


def _write_rows(path: Path, header: List[str], rows) -> Path:
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _number(value: float) -> str:
    return repr(float(value))


def cmd_oracle(config: Dict[str, Any], out: Path) -> Artifacts:
    """Exact occupancy, successor and value tables of the configured problem."""
    problem = build_problem(config)
    gamma = config.get('gamma', DEFAULT_GAMMA)
    successor = exact_successor(problem.mdp, problem.policy, gamma)
    occupancy = exact_occupancy(problem.mdp, problem.policy, gamma)
    V, Q = policy_evaluation(problem.mdp, problem.policy, gamma)
    residual = float(np.max(np.abs(occupancy.mu - (1.0 - gamma) * successor.M)))
    print(f'scaling_residual={residual:.3e}')

    q_rows = [
        [s, a, _number(Q.values[s, a])]
        for s in range(problem.mdp.n_states) for a in range(problem.mdp.n_actions)
    ]
    return {
        'occupancy': write_model_file(out / 'occupancy.txt', occupancy.mu, gamma),
        'successor': write_successor(out / 'successor.txt', successor),
        'values': write_value_map(out / 'values.csv', V.values, problem.spec),
        'q_values': _write_rows(out / 'q_values.csv', ['state_index', 'action', 'q'], q_rows),
    }


def cmd_collect(config: Dict[str, Any], out: Path) -> Artifacts:
    """Transitions from the configured problem under its behavior policy."""
    problem = build_problem(config)
    rng = np.random.default_rng(config['seed'])
    dataset = collect_dataset(
        problem.collect_source, problem.behavior, config['n_transitions'], rng,
        episode_length=config['episode_length'], spec=problem.spec,
    )
    print(f'transitions={len(dataset)}')
    return {'dataset': write_dataset_csv(dataset, out / 'dataset.csv')}


def cmd_train(config: Dict[str, Any], out: Path) -> Artifacts:
    """
    Trains a gamma-model and writes it with its training log.

    ``mode = expected`` runs ``n_sweeps`` exact sweeps on the problem's MDP;
    ``mode = sampled`` trains on ``dataset`` (a transition CSV) or on freshly
    collected behavior-policy transitions.
    In expected mode each log row is one sweep, its loss the target-weighted
    squared log-density error of the model against its bootstrapped target.
    """
    problem = build_problem(config)
    gamma = config.get('gamma', DEFAULT_GAMMA)
    train_config = pick(config, [key for key in TRAIN_DEFAULTS if key != 'mode'])
    mode = config.get('mode', TRAIN_DEFAULTS['mode'])
    oracle = exact_occupancy(problem.mdp, problem.policy, gamma).mu
    rows = []

    if mode == 'expected':
        model = GammaModelTable.uniform(problem.mdp.n_states, problem.mdp.n_actions, gamma)
        for sweep in range(1, config.get('n_sweeps', 200) + 1):
            updated = expected_td_sweep(model, problem.mdp, problem.policy)
            loss = expected_regression_loss(model, updated.probs)
            logger.debug('sweep=%d change=%.3e', sweep, sup_l1(updated.probs, model.probs))
            model = updated
            tv = float(total_variation(model.probs, oracle).max())
            rows.append([sweep, _number(loss), _number(tv)])
    elif mode == 'sampled':
        rng = np.random.default_rng(config['seed'])
        if config.get('dataset'):
            dataset = read_dataset_csv(config['dataset'])
        else:
            dataset = collect_dataset(
                problem.collect_source, problem.behavior, config['n_transitions'], rng,
                episode_length=config['episode_length'], spec=problem.spec,
            )
        if len(dataset) == 0:
            raise ValueError('Dataset is empty')
        trainer = GammaTdTrainer(problem.mdp.n_states, problem.mdp.n_actions, gamma, train_config)
        history = trainer.train(dataset, problem.policy, rng, oracle=oracle)
        rows = [[record.step, _number(record.loss), _number(record.tv_to_oracle)] for record in history]
        model = trainer.model
    else:
        raise ValueError('"mode" must be "expected" or "sampled"')

    violations = row_sum_violations(model.probs, ('s', 'a'), atol=1e-9)
    if violations:
        raise ValueError('Trained model is invalid: ' + '; '.join(violations[:10]))
    print(f'tv_to_oracle={float(total_variation(model.probs, oracle).max()):.6f}')
    return {
        'model': write_gamma_model(out / 'model.txt', model),
        'log': _write_rows(out / 'train_log.csv', ['step', 'loss', 'tv_to_oracle'], rows),
    }


def cmd_sweep_horizon(config: Dict[str, Any], out: Path) -> Artifacts:
    """Rollout length needed to assign ``mass`` of the probability for each discount pair."""
    gammas = sorted(float(g) for g in as_list(config['sweep_gammas']))
    rows = [
        [f'{gamma:g}', f'{gamma_tilde:g}', steps_to_mass(gamma, gamma_tilde, config['mass'])]
        for gamma in gammas for gamma_tilde in gammas if gamma <= gamma_tilde
    ]
    return {'sweep': _write_rows(out / 'sweep_horizon.csv', ['gamma', 'gamma_tilde', 'steps_to_95'], rows)}


def cmd_sweep_timesteps(config: Dict[str, Any], out: Path) -> Artifacts:
    """Per-step weighted timestep distributions, their mixture and the geometric target."""
    gamma = config.get('gamma', DEFAULT_GAMMA)
    gamma_tilde = config.get('gamma_tilde', AC_DEFAULTS['gamma_tilde'])
    H = config.get('H', 10)
    t_max = config['t_max']
    components = weighted_components(gamma, gamma_tilde, H, t_max)
    mixture = components.sum(axis=0)
    geometric = geometric_pmf(gamma_tilde, t_max)
    header = ['t', 'mixture', 'geometric', *(f'step_{n}' for n in range(1, H + 1))]
    rows = [
        [t, _number(mixture[t - 1]), _number(geometric[t - 1]), *map(_number, components[:, t - 1])]
        for t in range(1, t_max + 1)
    ]
    return {'timesteps': _write_rows(out / 'sweep_timesteps.csv', header, rows)}


def cmd_value_map(config: Dict[str, Any], out: Path) -> Artifacts:
    """
    Value map predicted by a gamma-model next to the policy-evaluation oracle.

    Reads ``model`` (a model file) when configured, otherwise uses the exact
    occupancy at ``gamma``.
    """
    problem = build_problem(config)
    mdp = problem.mdp
    if config.get('model'):
        model = read_model_file(config['model']).to_model()
    else:
        gamma = config.get('gamma', DEFAULT_GAMMA)
        model = GammaModelTable.from_probs(exact_occupancy(mdp, problem.policy, gamma).mu, gamma)
    if (model.n_states, model.n_actions) != (mdp.n_states, mdp.n_actions):
        raise ValueError(
            f'Model shape ({model.n_states}, {model.n_actions}) does not match '
            f'problem ({mdp.n_states}, {mdp.n_actions})'
        )
    estimate = v_table_from_model(model, problem.policy, mdp.reward)
    oracle = policy_evaluation(mdp, problem.policy, model.gamma)[0].values
    max_deviation, mean_deviation = value_deviation(estimate, oracle)
    print(f'max_deviation={max_deviation:.3e} mean_deviation={mean_deviation:.3e}')
    return {
        'model_values': write_value_map(out / 'value_map_model.csv', estimate, problem.spec),
        'oracle_values': write_value_map(out / 'value_map_oracle.csv', oracle, problem.spec),
    }


def cmd_control(config: Dict[str, Any], out: Path) -> Artifacts:
    """One learning curve per (estimator, seed)."""
    problem = build_problem(config)
    options = pick(config, [key for key in AC_DEFAULTS if key not in ('estimator', 'seed')])
    configs = [
        {**options, 'estimator': estimator, 'seed': int(seed)}
        for estimator in as_list(config['estimators']) for seed in as_list(config['seeds'])
    ]
    source = problem.env if problem.continuous else problem.mdp
    spec = problem.spec if problem.continuous else None
    results = asyncio.run(run_experiments(source, configs, spec))

    artifacts = {}
    optimum = {}
    for result in results:
        curve = result.curve
        if curve.seed not in optimum:
            optimum[curve.seed] = reference_return(problem.mdp, {**options, 'seed': curve.seed}, source, spec)
        name = f'curve_{curve.estimator}_seed{curve.seed}'
        artifacts[name] = curve.write_csv(out / f'{name}.csv')
        reached = episodes_to_threshold(curve, 0.9 * optimum[curve.seed])
        print(f'{name} final_return={curve.return_means[-1]:.3f} '
              f'optimal_return={optimum[curve.seed]:.3f} episodes_to_90pct={reached}')
    return artifacts


COMMANDS: Dict[str, Callable[[Dict[str, Any], Path], Artifacts]] = {
    'oracle': cmd_oracle,
    'collect': cmd_collect,
    'train': cmd_train,
    'sweep-horizon': cmd_sweep_horizon,
    'sweep-timesteps': cmd_sweep_timesteps,
    'value-map': cmd_value_map,
    'control': cmd_control,
}


def run_command(command: str, config: Dict[str, Any], out: Union[str, Path]) -> RunManifest:
    """
    Runs ``command`` with a resolved configuration and records its manifest in ``out``.

    Raises:
        ValueError: If the command is unknown or its inputs are invalid
        OSError: If inputs cannot be read or outputs cannot be written
    """
    if command not in COMMANDS:
        raise ValueError(f'Unknown command "{command}"')
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    artifacts = COMMANDS[command](config, out)
    manifest = RunManifest(
        command=command,
        config=dict(config),
        seed=int(config['seed']),
        artifacts={name: str(path) for name, path in artifacts.items()},
        duration=time.perf_counter() - started,
    )
    write_manifest(manifest, out)
    return manifest


def rerun(manifest_path: Union[str, Path], out: Optional[Union[str, Path]] = None) -> RunManifest:
    """Replays a recorded run; outputs go next to the manifest unless ``out`` is given."""
    manifest = read_manifest(manifest_path)
    manifest_path = Path(manifest_path)
    default_out = manifest_path if manifest_path.is_dir() else manifest_path.parent
    config = resolve_config(manifest.config, {'seed': manifest.seed})
    return run_command(manifest.command, config, out or default_out)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, help='Random seed (overrides the config file)')
    common.add_argument('--config', help='Path to a key = value config file')
    common.add_argument('--out', help='Output directory (default: current directory)')
    common.add_argument('--verbose', action='store_true', help='Log debug messages')

    parser = argparse.ArgumentParser(prog='gamma_models', description='Tabular gamma-model experiments')
    commands = parser.add_subparsers(dest='command', required=True)
    commands.add_parser('oracle', parents=[common], help='Exact occupancy, successor and values')
    commands.add_parser('collect', parents=[common], help='Write a transition dataset')
    train = commands.add_parser('train', parents=[common], help='Train a gamma-model')
    train.add_argument('--dataset', help='Transition CSV to train on')
    commands.add_parser('sweep-horizon', parents=[common], help='Rollout steps needed per discount pair')
    commands.add_parser('sweep-timesteps', parents=[common], help='Reweighted timestep distributions')
    value_map = commands.add_parser('value-map', parents=[common], help='Model and oracle value maps')
    value_map.add_argument('--model', help='Model file to evaluate')
    commands.add_parser('control', parents=[common], help='Actor-critic learning curves')
    rerun_parser = commands.add_parser('rerun', parents=[common], help='Replay a recorded run')
    rerun_parser.add_argument('--manifest', required=True, help='Manifest file or its directory')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    try:
        if args.command == 'rerun':
            manifest = rerun(args.manifest, args.out)
        else:
            file_config = load_config(args.config) if args.config else {}
            overrides = {
                'seed': args.seed,
                'dataset': getattr(args, 'dataset', None),
                'model': getattr(args, 'model', None),
            }
            config = resolve_config(file_config, overrides)
            manifest = run_command(args.command, config, args.out or '.')
    except ValueError as error:
        print(f'error: {error}', file=sys.stderr)
        return 1
    except OSError as error:
        print(f'error: {error}', file=sys.stderr)
        return 2
    for name, path in manifest.artifacts.items():
        print(f'{name}: {path}')
    return 0
