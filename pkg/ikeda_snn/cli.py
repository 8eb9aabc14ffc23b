"""
Command-line interface for the excitable Ikeda-map spiking network.

Usage:
    python -m ikeda_snn.cli characterize --config config.yml
    python -m ikeda_snn.cli respond --config config.yml --profile desk
    python -m ikeda_snn.cli train --config config.yml --run runs/run_20260105_145016
    python -m ikeda_snn.cli report --run runs/run_20260105_145016
"""

import argparse
import json
import math
import sys
from dataclasses import asdict
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from ikeda_snn import characterize, readout
from ikeda_snn.config import ExperimentConfig, load_config
from ikeda_snn.features import StimulusSchedule, build_projection, split_dataset
from ikeda_snn.io import hash_config, hash_file, load_idx
from ikeda_snn.report import ReportBuilder
from ikeda_snn.respond import ResponseConfig, ResponseEngine, ResponseSet
from ikeda_snn.spikes import latency_histogram


def dl_tag(delta_l) -> str:
    """File-name tag for a gating window."""
    return 'inf' if math.isinf(delta_l) else f'{float(delta_l):g}'


def make_run_dir(config: ExperimentConfig, run: Optional[str] = None) -> Path:
    """Existing run directory, or a new timestamped one under runs_root."""
    if run:
        run_dir = Path(run)
        if not run_dir.exists():
            raise FileNotFoundError(f"Run directory not found: {run_dir}")
    else:
        timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
        run_dir = Path(config.paths.runs_root) / f'run_{timestamp}'
        run_dir.mkdir(parents=True, exist_ok=True)
    config.save_resolved(run_dir / 'config.resolved.yml')
    return run_dir


def _write_json(path: Path, payload: Dict[str, Any]):
    with path.open('w') as f:
        json.dump(payload, f, indent=2, default=str)


# ----------------------------------------------------------------------
# Characterization

def run_characterize(config: ExperimentConfig, run_dir: Path, progress: bool = True) -> Dict[str, Any]:
    """Run the four single-neuron protocols and write CSV/JSON reports."""
    settings = config.characterize
    params = config.network
    optics = config.optics.build(settings.grid_shape)
    pulse = tuple(settings.pulse)
    out_dir = run_dir / 'characterize'

    print(f"Characterizing {optics.n} neurons ({optics.mode} optics, kappa={optics.nominal_kappa})")

    excitability = characterize.excitability_sweep(
        params, optics, settings.grid('excitability'), pulse=pulse,
        horizon=settings.pulse_horizon, progress=progress)
    excitability.save(out_dir, 'excitability')

    rate = characterize.spike_rate_sweep(
        params, optics, settings.grid('spike_rate'), constant_from=settings.rate_from,
        horizon=settings.rate_horizon, progress=progress)
    rate.save(out_dir, 'spike_rate')

    refractory = {}
    taus = np.arange(1, settings.refractory_tau_max + 1)
    for gain in settings.refractory_gains:
        probe = characterize.refractory_probe(
            params, optics, settings.refractory_gamma, taus, second_pulse_gain=gain, progress=progress)
        probe.save(out_dir, f'refractory_gain{gain:g}')
        refractory[f'{gain:g}'] = {
            'refractory_length': probe.metadata['refractory_length'],
            'all_reexcited': probe.metadata['all_reexcited'],
        }

    latency = characterize.latency_curve(
        params, optics, settings.grid('latency'), pulse=pulse,
        horizon=settings.pulse_horizon, progress=progress)
    latency.save(out_dir, 'latency')

    summary = {
        'kappa': optics.nominal_kappa,
        'n_neurons': optics.n,
        'threshold_gamma': excitability.metadata['threshold'],
        'max_ensemble_spread': float(excitability.frame['ensemble_spread'].max()),
        'rate_onset_gamma': rate.metadata['onset_gamma'],
        'rate_onset': rate.metadata['onset_rate'],
        'rate_monotone': rate.metadata['monotone'],
        'refractory': refractory,
        'latency_first': latency.metadata['first_latency'],
        'latency_last': latency.metadata['last_latency'],
        'latency_monotone': latency.metadata['monotone'],
        'latency_distinct': latency.metadata['distinct_latencies'],
    }
    _write_json(out_dir / 'summary.json', summary)

    print(f"\n✓ Characterization complete")
    print(f"  Threshold gamma*: {summary['threshold_gamma']}")
    print(f"  Rate onset: gamma={summary['rate_onset_gamma']} rate={summary['rate_onset']}")
    print(f"  Refractory length: {refractory}")
    print(f"  Reports: {out_dir}")
    return summary


# ----------------------------------------------------------------------
# MNIST pipeline

def load_split(config: ExperimentConfig):
    """Load the IDX files named in the config and draw the train/test split."""
    ds = config.dataset
    images, labels = load_idx(Path(ds.train_images), Path(ds.train_labels))
    test_images = test_labels = None
    if ds.test_source == 'official':
        test_images, test_labels = load_idx(Path(ds.test_images), Path(ds.test_labels))
    return split_dataset(images, labels, ds.n_train, ds.n_test, ds.split_seed,
                         test_source=ds.test_source, test_images=test_images, test_labels=test_labels)


def response_key(config: ExperimentConfig, split: str) -> str:
    """Cache key over everything that shapes a response set."""
    ds = config.dataset
    files = [ds.train_images, ds.train_labels]
    if ds.test_source == 'official':
        files += [ds.test_images, ds.test_labels]
    return hash_config({
        'split': split,
        'network': config.network.to_dict(),
        'optics': asdict(config.optics),
        'projection_seed': config.input.projection_seed,
        'schedule': [config.input.on_steps, config.input.off_steps],
        'carry_state': config.input.carry_state,
        'dataset': asdict(ds),
        'files': [hash_file(Path(p)) for p in files],
    })


def run_respond(config: ExperimentConfig, run_dir: Path, progress: bool = True) -> Dict[str, Any]:
    """Generate (or reuse cached) train/test response sets."""
    data = load_split(config)
    optics = config.optics.build()
    projection = build_projection(optics.n, data.train_images.shape[1], config.input.projection_seed)
    print(f"✓ Projection {projection.weights.shape}, normalization scale {projection.normalization_scale:.4f}")

    cache_dir = Path(config.paths.cache_dir)
    engine = None
    summary: Dict[str, Any] = {'projection_scale': projection.normalization_scale}

    for split, images, labels in (('train', data.train_images, data.train_labels),
                                  ('test', data.test_images, data.test_labels)):
        key = response_key(config, split)
        cache_path = cache_dir / f'responses_{split}_{key[:16]}.npz'

        if cache_path.exists():
            responses, meta = ResponseSet.load(cache_path, key)
            print(f"✓ Using cached {split} responses: {cache_path}")
            split_summary = meta.get('summary', {})
        else:
            if engine is None:
                engine = ResponseEngine(
                    config.network, optics, projection,
                    ResponseConfig(batch_size=config.input.batch_size,
                                   carry_state=config.input.carry_state,
                                   compress_index=config.compress_index),
                    on_steps=config.input.on_steps, off_steps=config.input.off_steps)
                summary['rest'] = engine.rest_info.to_dict()
            schedule = StimulusSchedule(images, labels, config.input.on_steps, config.input.off_steps)
            responses, split_summary = engine.run(schedule, split, run_dir / f'index_{split}.jsonl', progress)
            responses.save(cache_path, key, {'summary': split_summary})

        responses.save(run_dir / f'responses_{split}.npz', key, {'summary': split_summary})
        summary[split] = {**split_summary, 'key': key}

    _write_json(run_dir / 'respond_summary.json', summary)
    print(f"\n✓ Responses ready in {run_dir}")
    return summary


def _ridge_weights(config: ExperimentConfig, features, labels, targets):
    training = config.training
    if training.ridge_regularizer != 'validate':
        lam = float(training.ridge_regularizer)
        return readout.train_ridge(features, targets, lam), lam, None

    order = np.random.default_rng(config.seed).permutation(features.shape[0])
    n_val = max(1, int(round(training.validation_fraction * features.shape[0])))
    val, fit = np.sort(order[:n_val]), np.sort(order[n_val:])
    lam, table = readout.select_regularizer(features[fit], labels[fit], features[val], labels[val],
                                            grid=training.ridge_grid)
    return readout.train_ridge(features, targets, lam), lam, table


def run_train(config: ExperimentConfig, run_dir: Path, progress: bool = True) -> pd.DataFrame:
    """Gate cached responses at every delta_l, train the readouts and evaluate."""
    train_set, _ = ResponseSet.load(run_dir / 'responses_train.npz', response_key(config, 'train'))
    test_set, _ = ResponseSet.load(run_dir / 'responses_test.npz', response_key(config, 'test'))

    if not config.sparsity.delta_l:
        print("⚠️  No delta_l values configured; responses cached, nothing to train")
        return pd.DataFrame()

    mode = config.sparsity.feature_mode
    targets = readout.one_hot(train_set.labels)
    responses = response_key(config, 'train')
    rows = []
    hist_rows = []
    out_dir = run_dir / 'train'
    out_dir.mkdir(parents=True, exist_ok=True)

    for delta_l in config.sparsity.delta_l:
        tag = dl_tag(delta_l)
        f_train = readout.add_bias(train_set.features(delta_l, mode))
        f_test = readout.add_bias(test_set.features(delta_l, mode))
        active = float(np.concatenate([train_set.active_fraction(delta_l),
                                       test_set.active_fraction(delta_l)]).mean())
        print(f"\nDelta_l={tag}: active fraction {active:.4f} (sparsity {1 - active:.4f})")

        counts = latency_histogram(list(train_set.records()) + list(test_set.records()), delta_l)
        for latency, count in enumerate(counts):
            hist_rows.append({'delta_l': tag, 'latency': latency, 'count': int(count)})

        for trainer in config.training.trainers:
            regularizer = None
            if trainer == 'ridge':
                weights, regularizer, table = _ridge_weights(config, f_train, train_set.labels, targets)
                if table is not None:
                    table.to_csv(out_dir / f'ridge_validation_dl{tag}.csv', index=False)
            else:
                weights, history = readout.train_spsa(
                    f_train, train_set.labels, config.training.spsa_config(), seed=config.seed,
                    test=(f_test, test_set.labels),
                    checkpoint_path=run_dir / 'checkpoints' / f'spsa_dl{tag}.npz',
                    resume=True,
                    data_key=hash_config({'responses': responses, 'delta_l': tag, 'mode': mode}),
                    progress=progress)
                history.to_csv(out_dir / f'history_spsa_dl{tag}.csv', index=False)

            train_eval = readout.evaluate(weights, f_train, train_set.labels)
            test_eval = readout.evaluate(weights, f_test, test_set.labels)
            test_eval.confusion_frame().to_csv(out_dir / f'confusion_{trainer}_dl{tag}.csv')
            weights.save(out_dir / f'weights_{trainer}_dl{tag}.npz', {'delta_l': tag, 'trainer': trainer})

            rows.append({
                'delta_l': tag,
                'trainer': trainer,
                'active_fraction': active,
                'sparsity': 1.0 - active,
                'train_acc': train_eval.accuracy,
                'test_acc': test_eval.accuracy,
                'regularizer': regularizer,
            })
            print(f"  {trainer:<6} train {train_eval.accuracy:.4f}  test {test_eval.accuracy:.4f}")

    table = pd.DataFrame(rows)
    table.to_csv(out_dir / 'accuracy.csv', index=False)
    pd.DataFrame(hist_rows, columns=['delta_l', 'latency', 'count']).to_csv(
        out_dir / 'latency_histogram.csv', index=False)
    print(f"\n✓ Training complete: {out_dir / 'accuracy.csv'}")
    return table


def run_mnist(config: ExperimentConfig, run_dir: Path, progress: bool = True) -> pd.DataFrame:
    """Responses followed by training, in one run directory."""
    run_respond(config, run_dir, progress)
    return run_train(config, run_dir, progress)


# ----------------------------------------------------------------------
# Command handlers

def _load(args) -> ExperimentConfig:
    return load_config(Path(args.config), profile=args.profile, seed=args.seed, out=args.out)


def _guarded(func):
    """Turn library errors into a one-line message and exit code 1."""
    def wrapper(args):
        try:
            return func(args)
        except (FileNotFoundError, ValueError, RuntimeError, FloatingPointError) as e:
            print(f"❌ {e}")
            return 1
    wrapper.__doc__ = func.__doc__
    return wrapper


@_guarded
def cmd_characterize(args):
    """Run characterization sweeps."""
    config = _load(args)
    run_dir = make_run_dir(config, args.run)
    run_characterize(config, run_dir, progress=not args.quiet)
    return 0


@_guarded
def cmd_respond(args):
    """Generate MNIST response sets."""
    config = _load(args)
    run_dir = make_run_dir(config, args.run)
    run_respond(config, run_dir, progress=not args.quiet)
    return 0


@_guarded
def cmd_train(args):
    """Train readouts (generating responses first for a new run)."""
    config = _load(args)
    run_dir = make_run_dir(config, args.run)
    if args.run:
        run_train(config, run_dir, progress=not args.quiet)
    else:
        run_mnist(config, run_dir, progress=not args.quiet)
    return 0


@_guarded
def cmd_report(args):
    """Render figures and a summary from a run directory."""
    run_dir = Path(args.run)
    if not run_dir.exists():
        print(f"❌ Run directory not found: {run_dir}")
        return 1
    ReportBuilder(run_dir).build()
    return 0


def main(argv=None):
    """Main CLI entry point."""
    parser = argparse.ArgumentParser(
        description="Excitable Ikeda-map spiking network CLI",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )

    subparsers = parser.add_subparsers(dest='command', help='Command to run')

    for name, help_text in (('characterize', 'Run single-neuron characterization sweeps'),
                            ('respond', 'Simulate MNIST presentations and cache responses'),
                            ('train', 'Train readouts over the delta_l sweep')):
        p = subparsers.add_parser(name, help=help_text)
        p.add_argument('--config', default='config.yml', help='Config file path')
        p.add_argument('--profile', help='Scale profile (desk or full)')
        p.add_argument('--seed', type=int, help='Override the global seed')
        p.add_argument('--out', help='Override the runs root directory')
        p.add_argument('--run', help='Reuse an existing run directory')
        p.add_argument('--quiet', action='store_true', help='Disable progress bars')

    p_report = subparsers.add_parser('report', help='Render figures from a run directory')
    p_report.add_argument('--run', required=True, help='Run directory')

    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 1

    # Dispatch to command handler
    handlers = {
        'characterize': cmd_characterize,
        'respond': cmd_respond,
        'train': cmd_train,
        'report': cmd_report,
    }

    return handlers[args.command](args)


if __name__ == '__main__':
    sys.exit(main())
