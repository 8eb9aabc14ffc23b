"""
Figures and console summary regenerated from a run directory.
"""

import json
from collections import defaultdict
from pathlib import Path
from typing import Any, Dict, List, Tuple

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import yaml

from ikeda_snn.characterize import SweepResult
from ikeda_snn.io import read_jsonl
from ikeda_snn.respond import ResponseSet
from ikeda_snn.spikes import NO_SPIKE


class ReportBuilder:
    """Render whatever a run directory contains into figures/ plus report.json."""

    def __init__(self, run_dir: Path, dpi: int = 150):
        """
        Initialize builder.

        Args:
            run_dir: Directory written by the characterize/respond/train commands
            dpi: Figure resolution
        """
        self.run_dir = Path(run_dir)
        self.figure_dir = self.run_dir / 'figures'
        self.dpi = dpi
        self.stats = defaultdict(int)
        self.summary: Dict[str, Any] = {}

    def build(self) -> Dict[str, Any]:
        """Render every available figure and write report.json."""
        print(f"Building report for {self.run_dir}")
        self.figure_dir.mkdir(parents=True, exist_ok=True)

        self._characterization()
        self._responses()
        self._training()

        with (self.run_dir / 'report.json').open('w') as f:
            json.dump({'figures': sorted(p.name for p in self.figure_dir.glob('*.png')),
                       **self.summary}, f, indent=2, default=str)

        print(f"\n✓ Report complete")
        print(f"  Figures written: {self.stats['figures']}")
        if self.stats['figures'] == 0:
            print("⚠️  Nothing to plot: run characterize or train first")
        return self.summary

    def _save(self, fig, name: str):
        fig.tight_layout()
        fig.savefig(self.figure_dir / name, dpi=self.dpi, bbox_inches='tight')
        plt.close(fig)
        self.stats['figures'] += 1

    # ------------------------------------------------------------------
    # Characterization

    def _characterization(self):
        char_dir = self.run_dir / 'characterize'
        if not char_dir.exists():
            return

        summary_path = char_dir / 'summary.json'
        if summary_path.exists():
            self.summary['characterize'] = json.loads(summary_path.read_text())

        excitability = char_dir / 'excitability.csv'
        if excitability.exists():
            sweep = SweepResult.load(excitability)
            fig, ax = plt.subplots(figsize=(6, 4))
            ax.plot(sweep.grid, sweep.column('max_amplitude'), 'o-', ms=3)
            threshold = sweep.metadata.get('threshold')
            if threshold is not None:
                ax.axvline(threshold, color='gray', ls='--', label=f'threshold {threshold:.3f}')
                ax.legend()
            ax.set_xlabel('pulse gamma')
            ax.set_ylabel('max s')
            ax.set_title('Excitability')
            self._save(fig, 'excitability.png')

        rate = char_dir / 'spike_rate.csv'
        if rate.exists():
            sweep = SweepResult.load(rate)
            fig, ax = plt.subplots(figsize=(6, 4))
            ax.plot(sweep.grid, sweep.column('spike_rate'), 'o-', ms=3)
            ax.set_xlabel('constant gamma')
            ax.set_ylabel('spikes / step')
            ax.set_title('Spike rate')
            self._save(fig, 'spike_rate.png')

        probes = sorted(char_dir.glob('refractory_gain*.csv'))
        if probes:
            fig, ax = plt.subplots(figsize=(6, 4))
            for path in probes:
                sweep = SweepResult.load(path)
                gain = path.stem.replace('refractory_gain', '')
                ax.step(sweep.grid, sweep.column('reexcited').astype(int), where='mid',
                        label=f'gain {gain} (tau_r={sweep.metadata.get("refractory_length")})')
            ax.set_xlabel('tau')
            ax.set_ylabel('re-excited')
            ax.set_yticks([0, 1])
            ax.legend()
            ax.set_title('Refractory probe')
            self._save(fig, 'refractory.png')

        latency = char_dir / 'latency.csv'
        if latency.exists():
            sweep = SweepResult.load(latency)
            fig, ax = plt.subplots(figsize=(6, 4))
            ax.plot(sweep.grid, sweep.frame['latency'], 'o', ms=3)
            ax.set_xlabel('pulse gamma')
            ax.set_ylabel('latency (steps)')
            ax.set_title('Spike latency')
            self._save(fig, 'latency.png')

    # ------------------------------------------------------------------
    # Responses

    def _grid_shape(self, n: int) -> Tuple[int, int]:
        resolved = self.run_dir / 'config.resolved.yml'
        if resolved.exists():
            shape = (yaml.safe_load(resolved.read_text()) or {}).get('optics', {}).get('grid_shape')
            if shape and int(np.prod(shape)) == n:
                return int(shape[0]), int(shape[1])
        return 1, n

    def _index(self, split: str) -> List[Dict[str, Any]]:
        for name in (f'index_{split}.jsonl', f'index_{split}.jsonl.gz'):
            path = self.run_dir / name
            if path.exists():
                return list(read_jsonl(path))
        return []

    def _responses(self, panels: int = 3):
        """First-spike latency maps and rasters for a few test presentations."""
        path = self.run_dir / 'responses_test.npz'
        if not path.exists():
            return
        responses, _ = ResponseSet.load(path)
        if len(responses) == 0:
            return

        index = self._index('test')
        if index:
            # most active presentations first
            order = [r['index'] for r in sorted(index, key=lambda r: -r['active_count'])
                     if r['index'] < len(responses)]
        else:
            order = list(np.argsort(-(responses.first_spike_time >= 0).sum(axis=1), kind='stable'))
        chosen = [int(i) for i in order[:panels]]

        rows, cols = self._grid_shape(responses.n_neurons)
        t0 = responses.t0()
        fig, axes = plt.subplots(2, len(chosen), figsize=(4 * len(chosen), 7), squeeze=False)
        for k, i in enumerate(chosen):
            first = responses.first_spike_time[i]
            spiked = first != NO_SPIKE
            latency = np.where(spiked, first - t0[i], np.nan).astype(np.float64)

            image = axes[0, k].imshow(latency.reshape(rows, cols), cmap='viridis', aspect='auto')
            fig.colorbar(image, ax=axes[0, k], label='steps after t0')
            axes[0, k].set_title(f'#{i} label {responses.labels[i]}: {int(spiked.sum())} spikes')

            axes[1, k].plot(first[spiked], np.flatnonzero(spiked), '|', ms=2)
            axes[1, k].set_xlabel('first-spike step')
            axes[1, k].set_ylabel('neuron')
        self._save(fig, 'response_raster.png')
        self.summary['raster_presentations'] = chosen

    # ------------------------------------------------------------------
    # Training

    def _training(self):
        train_dir = self.run_dir / 'train'
        if not train_dir.exists():
            return

        accuracy_path = train_dir / 'accuracy.csv'
        if accuracy_path.exists():
            table = pd.read_csv(accuracy_path, dtype={'delta_l': str})
            self.summary['accuracy'] = table.to_dict(orient='records')
            self._accuracy(table)
            self._print_table(table)

        hist_path = train_dir / 'latency_histogram.csv'
        if hist_path.exists():
            hist = pd.read_csv(hist_path, dtype={'delta_l': str})
            if not hist.empty:
                fig, ax = plt.subplots(figsize=(6, 4))
                tags = list(dict.fromkeys(hist['delta_l']))
                width = 0.8 / len(tags)
                for i, (tag, group) in enumerate((t, hist[hist['delta_l'] == t]) for t in tags):
                    ax.bar(group['latency'] + i * width, group['count'], width=width, label=f'delta_l={tag}')
                ax.set_xlabel('latency (steps)')
                ax.set_ylabel('gated-in spikes')
                ax.legend()
                ax.set_title('Latency histogram')
                self._save(fig, 'latency_histogram.png')

        histories = sorted(train_dir.glob('history_spsa_dl*.csv'))
        if histories:
            fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(12, 4))
            for path in histories:
                history = pd.read_csv(path)
                tag = path.stem.replace('history_spsa_dl', '')
                ax1.plot(history['epoch'], history['train_loss'], label=f'delta_l={tag}')
                ax2.plot(history['epoch'], history['test_acc'], label=f'delta_l={tag}')
            ax1.set_yscale('log')
            ax1.set_xlabel('epoch')
            ax1.set_ylabel('training NMSE')
            ax2.set_xlabel('epoch')
            ax2.set_ylabel('test accuracy')
            ax1.legend()
            self._save(fig, 'training_curves.png')

        for path in sorted(train_dir.glob('confusion_*.csv')):
            confusion = pd.read_csv(path, index_col=0)
            fig, ax = plt.subplots(figsize=(5, 4.5))
            image = ax.imshow(confusion.to_numpy(), cmap='Blues')
            fig.colorbar(image, ax=ax)
            ax.set_xlabel('predicted')
            ax.set_ylabel('true')
            ax.set_title(path.stem.replace('confusion_', ''))
            self._save(fig, f'{path.stem}.png')

    def _accuracy(self, table: pd.DataFrame):
        fig, ax = plt.subplots(figsize=(6, 4))
        for trainer, group in table.groupby('trainer', sort=True):
            ax.plot(group['sparsity'], group['test_acc'], 'o-', label=trainer)
            for _, row in group.iterrows():
                ax.annotate(row['delta_l'], (row['sparsity'], row['test_acc']),
                            textcoords='offset points', xytext=(4, 4), fontsize=8)
        ax.set_xlabel('sparsity (fraction of silent neurons)')
        ax.set_ylabel('test accuracy')
        ax.legend()
        ax.set_title('Accuracy vs sparsity')
        self._save(fig, 'accuracy_vs_sparsity.png')

    @staticmethod
    def _print_table(table: pd.DataFrame):
        print(f"\n{'delta_l':>8} {'trainer':>8} {'sparsity':>9} {'train':>7} {'test':>7}")
        print("-" * 43)
        for row in table.itertuples():
            print(f"{row.delta_l:>8} {row.trainer:>8} {row.sparsity:>9.4f} {row.train_acc:>7.4f} {row.test_acc:>7.4f}")


def build_report(run_dir: Path) -> Dict[str, Any]:
    """Convenience wrapper around ReportBuilder."""
    return ReportBuilder(run_dir).build()
