"""
Batch response generation: simulate every image presentation, extract
first spikes, stream a JSONL index and keep a compact response set.
"""

import math
import time
from contextlib import nullcontext
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np
from scipy import sparse
from tqdm.auto import tqdm

from ikeda_snn.dynamics import NetworkParams, NeuronArrays, rest_state, step
from ikeda_snn.features import InputProjection, StimulusSchedule, presentation_drive
from ikeda_snn.io import JSONLWriter, load_cache, save_cache
from ikeda_snn.optics import OpticsModel
from ikeda_snn.spikes import FEATURE_MODES, NO_SPIKE, SpikeRecord, detect_spikes


@dataclass
class ResponseConfig:
    """Configuration for a response-generation run."""
    batch_size: int = 32
    carry_state: bool = False
    compress_index: bool = False


@dataclass
class ResponseSet:
    """
    First-spike times and amplitudes for M presentations of N neurons.

    Times are relative to each presentation's start (stimulus onset 0);
    NO_SPIKE marks silent neurons.
    """
    first_spike_time: np.ndarray
    amplitude: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.first_spike_time = np.asarray(self.first_spike_time, dtype=np.int64)
        self.amplitude = np.asarray(self.amplitude, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.first_spike_time.shape != self.amplitude.shape or self.first_spike_time.ndim != 2:
            raise ValueError("first_spike_time and amplitude must share shape (M, N)")
        if self.labels.shape != (self.first_spike_time.shape[0],):
            raise ValueError("labels must have one entry per presentation")

    def __len__(self) -> int:
        return self.first_spike_time.shape[0]

    @property
    def n_neurons(self) -> int:
        return self.first_spike_time.shape[1]

    def record(self, index: int) -> SpikeRecord:
        return SpikeRecord(self.first_spike_time[index], self.amplitude[index], stimulus_onset=0)

    def records(self) -> Iterator[SpikeRecord]:
        for i in range(len(self)):
            yield self.record(i)

    def t0(self) -> np.ndarray:
        """Population first-spike time per presentation, NO_SPIKE if silent."""
        masked = np.where(self.first_spike_time >= 0, self.first_spike_time, np.iinfo(np.int64).max)
        t0 = masked.min(axis=1)
        return np.where(t0 == np.iinfo(np.int64).max, NO_SPIKE, t0)

    def gate_mask(self, delta_l) -> np.ndarray:
        """Vectorized spikes.gate selection for every presentation."""
        if delta_l < 0:
            raise ValueError(f"delta_l must be >= 0, got {delta_l}")
        spiked = self.first_spike_time >= 0
        if math.isinf(delta_l):
            return spiked
        t0 = self.t0()
        return spiked & (self.first_spike_time <= (t0 + delta_l)[:, None])

    def active_fraction(self, delta_l) -> np.ndarray:
        return self.gate_mask(delta_l).mean(axis=1)

    def features(self, delta_l, mode: str = 'amplitude') -> sparse.csr_matrix:
        """Gated feature matrix (M, N) in sparse CSR form."""
        if mode not in FEATURE_MODES:
            raise ValueError(f"Unknown feature mode {mode!r}, expected one of {FEATURE_MODES}")
        keep = self.gate_mask(delta_l)
        rows, cols = np.nonzero(keep)
        if mode == 'amplitude':
            values = self.amplitude[rows, cols]
        elif mode == 'binary':
            values = np.ones(rows.size)
        else:
            values = 1.0 / (1.0 + (self.first_spike_time[rows, cols] - self.t0()[rows]))
        return sparse.csr_matrix((values, (rows, cols)), shape=self.first_spike_time.shape)

    def save(self, path: Path, key: str, metadata: Optional[Dict[str, Any]] = None):
        save_cache(path, {
            'first_spike_time': self.first_spike_time.astype(np.int32),
            'amplitude': self.amplitude,
            'labels': self.labels,
        }, key, metadata)

    @classmethod
    def load(cls, path: Path, key: Optional[str] = None) -> Tuple['ResponseSet', Dict[str, Any]]:
        arrays, metadata = load_cache(path, expected_key=key)
        return cls(arrays['first_spike_time'], arrays['amplitude'], arrays['labels']), metadata


class ResponseEngine:
    """Simulates image presentations in batches with JSONL streaming output."""

    def __init__(
        self,
        params: NetworkParams,
        optics: OpticsModel,
        projection: InputProjection,
        config: ResponseConfig,
        on_steps: int = 23,
        off_steps: int = 25
    ):
        """
        Initialize engine.

        Args:
            params: Network parameters; params.gamma is the injection strength
            optics: Optics model with projection.n_neurons neurons
            projection: Input projection W_inj
            config: ResponseConfig instance
            on_steps, off_steps: Presentation timing
        """
        if projection.n_neurons != optics.n:
            raise ValueError(f"projection drives {projection.n_neurons} neurons, optics has {optics.n}")
        self.params = params
        self.optics = optics
        self.projection = projection
        self.config = config
        self.on_steps = on_steps
        self.off_steps = off_steps

        self.rest, self.rest_info = rest_state(params, optics)
        self._carried: Optional[NeuronArrays] = None

    @property
    def period(self) -> int:
        return self.on_steps + self.off_steps

    def simulate(self, images: np.ndarray, state: Optional[NeuronArrays] = None) -> Tuple[np.ndarray, NeuronArrays]:
        """
        Run one presentation window for a batch of images.

        Args:
            images: (B, P) pixel vectors in [0, 1]
            state: Starting state of shape (B, N); rest state if None

        Returns:
            (trajectory (period, B, N), final state)
        """
        drive = presentation_drive(self.projection, images)
        zero = np.zeros_like(drive)
        if state is None:
            state = self.rest.broadcast(drive.shape[:-1])

        trajectory = np.empty((self.period,) + drive.shape)
        for t in range(self.period):
            state = step(state, self.params, self.optics, drive if t < self.on_steps else zero)
            trajectory[t] = state.s
        return trajectory, state

    def _respond(self, images: np.ndarray) -> List[SpikeRecord]:
        threshold = self.params.spike_threshold
        if not self.config.carry_state:
            trajectory, _ = self.simulate(images)
            return [detect_spikes(trajectory[:, b, :], 0, threshold) for b in range(images.shape[0])]

        records = []
        for image in images:
            state = self._carried if self._carried is not None else self.rest.broadcast((1,))
            trajectory, self._carried = self.simulate(image[None, :], state)
            records.append(detect_spikes(trajectory[:, 0, :], 0, threshold))
        return records

    def run(
        self,
        schedule: StimulusSchedule,
        split: str,
        index_path: Optional[Path] = None,
        progress: bool = True
    ) -> Tuple[ResponseSet, Dict[str, Any]]:
        """
        Generate responses for every presentation in the schedule.

        Args:
            schedule: Images (and labels) in presentation order
            split: Name stored in the index ('train' or 'test')
            index_path: Optional JSONL index path
            progress: Show a progress bar

        Returns:
            (ResponseSet, summary dict)
        """
        if (schedule.on_steps, schedule.off_steps) != (self.on_steps, self.off_steps):
            raise ValueError("schedule timing differs from the engine's")

        n = self.optics.n
        count = len(schedule)
        labels = schedule.labels if schedule.labels is not None else np.full(count, -1)
        first = np.full((count, n), NO_SPIKE, dtype=np.int64)
        amplitude = np.full((count, n), np.nan)

        batch_size = self.config.batch_size
        batches = [range(i, min(i + batch_size, count)) for i in range(0, count, batch_size)]
        print(f"Simulating {count} {split} presentations in {len(batches)} batches")

        start_time = time.time()
        sink = JSONLWriter(index_path, compressed=self.config.compress_index) if index_path else nullcontext()
        with sink as writer:
            for batch in tqdm(batches, desc=f'Responding ({split})', disable=not progress):
                records = self._respond(schedule.images[batch.start:batch.stop])
                for i, record in zip(batch, records):
                    first[i] = record.first_spike_time
                    amplitude[i] = record.amplitude
                    if writer:
                        writer.write({
                            'index': i,
                            'split': split,
                            'label': int(labels[i]),
                            'onset': schedule.onset(i),
                            't0': record.t0,
                            'active_count': int(record.spiked.sum()),
                        })

        elapsed = time.time() - start_time
        responses = ResponseSet(first, amplitude, labels)
        silent = int(np.sum(responses.t0() == NO_SPIKE))
        print(f"⏱️  {split} responses complete in {elapsed:.2f}s ({count / max(elapsed, 1e-9):.1f} presentations/sec)")
        if silent:
            print(f"⚠️  {silent} presentations elicited no spikes")

        summary = {
            'split': split,
            'presentations': count,
            'silent_presentations': silent,
            'mean_active_fraction': float(responses.active_fraction(math.inf).mean()) if count else 0.0,
            'elapsed_sec': elapsed,
        }
        return responses, summary


def run_quenched(
    params: NetworkParams,
    optics: OpticsModel,
    drive: np.ndarray,
    delta_l: int,
    on_steps: int = 23,
    off_steps: int = 25,
    state: Optional[NeuronArrays] = None
) -> Tuple[np.ndarray, SpikeRecord, int]:
    """
    One presentation with the illumination cut once c(t) = t - t0 exceeds delta_l.

    Args:
        params: Network parameters
        optics: Optics model (powered on)
        drive: Mixed on-window drive W_inj u, shape (N,)
        delta_l: Gating window
        on_steps, off_steps: Presentation timing
        state: Starting state; rest state if None

    Returns:
        (trajectory (T, N), spike record, powered neuron-steps)
    """
    if delta_l < 0:
        raise ValueError(f"delta_l must be >= 0, got {delta_l}")
    if state is None:
        state, _ = rest_state(params, optics)

    drive = np.asarray(drive, dtype=np.float64)
    zero = np.zeros_like(drive)
    threshold = params.spike_threshold
    powered = optics.set_power(True)
    t0 = None
    energy = 0
    frames = []

    for t in range(on_steps + off_steps):
        if t0 is not None and t - t0 > delta_l and powered.powered_on:
            powered = powered.set_power(False)
        state = step(state, params, powered, drive if t < on_steps else zero)
        frames.append(state.s)
        if powered.powered_on:
            energy += optics.n
        if t0 is None and np.any(state.s > threshold):
            t0 = t

    trajectory = np.stack(frames)
    return trajectory, detect_spikes(trajectory, 0, threshold), energy
