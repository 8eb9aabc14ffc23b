"""
Spike detection, rank-order sparsity gating and readout features.

A neuron's first spike is the first step at or after stimulus onset where
its amplitude exceeds the spike threshold. Gating keeps neurons whose first
spike lies within delta_l steps of the population's first spike t0.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd


NO_SPIKE = -1
FEATURE_MODES = ('amplitude', 'binary', 'latency')

DeltaL = Union[int, float]


@dataclass
class SpikeRecord:
    """
    First-spike summary of one stimulus presentation.

    Attributes:
        first_spike_time: Step index per neuron, NO_SPIKE (-1) when silent
        amplitude: s at the first crossing per neuron, NaN when silent
        stimulus_onset: Step index of stimulus onset
    """
    first_spike_time: np.ndarray
    amplitude: np.ndarray
    stimulus_onset: int = 0

    def __post_init__(self):
        self.first_spike_time = np.asarray(self.first_spike_time, dtype=np.int64)
        self.amplitude = np.asarray(self.amplitude, dtype=np.float64)
        if self.first_spike_time.shape != self.amplitude.shape or self.first_spike_time.ndim != 1:
            raise ValueError("first_spike_time and amplitude must be 1D arrays of equal length")

    @property
    def n(self) -> int:
        return self.first_spike_time.shape[0]

    @property
    def spiked(self) -> np.ndarray:
        return self.first_spike_time >= 0

    @property
    def latency(self) -> np.ndarray:
        """Delay from stimulus onset, NO_SPIKE when silent."""
        return np.where(self.spiked, self.first_spike_time - self.stimulus_onset, NO_SPIKE)

    @property
    def t0(self) -> Optional[int]:
        """Population first-spike time, None if nothing spiked."""
        if not self.spiked.any():
            return None
        return int(self.first_spike_time[self.spiked].min())

    def restrict(self, delta_l: DeltaL) -> 'SpikeRecord':
        """Drop spikes later than t0 + delta_l."""
        keep = _gate_mask(self, delta_l)
        return SpikeRecord(
            first_spike_time=np.where(keep, self.first_spike_time, NO_SPIKE),
            amplitude=np.where(keep, self.amplitude, np.nan),
            stimulus_onset=self.stimulus_onset,
        )

    def to_frame(self) -> pd.DataFrame:
        """Columnar view: neuron_id, first_spike_time, latency, amplitude."""
        spiked = self.spiked
        return pd.DataFrame({
            'neuron_id': np.arange(self.n),
            'first_spike_time': pd.Series(self.first_spike_time, dtype='Int64').where(spiked),
            'latency': pd.Series(self.latency, dtype='Int64').where(spiked),
            'amplitude': self.amplitude,
        })

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, stimulus_onset: int = 0) -> 'SpikeRecord':
        frame = frame.sort_values('neuron_id')
        fst = frame['first_spike_time'].astype('Int64').fillna(NO_SPIKE).to_numpy(dtype=np.int64)
        return cls(first_spike_time=fst, amplitude=frame['amplitude'].to_numpy(dtype=np.float64),
                   stimulus_onset=stimulus_onset)

    def save_csv(self, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)

    @classmethod
    def load_csv(cls, path: Path, stimulus_onset: int = 0) -> 'SpikeRecord':
        return cls.from_frame(pd.read_csv(path, dtype={'first_spike_time': 'Int64', 'latency': 'Int64'}),
                              stimulus_onset=stimulus_onset)


@dataclass
class SparseResponse:
    """Gated readout features for one presentation."""
    features: np.ndarray
    delta_l: DeltaL
    t0: Optional[int]
    active_count: int

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def sparsity(self) -> float:
        return 1.0 - self.active_count / self.n if self.n else 1.0


def detect_spikes(
    trajectory: np.ndarray,
    stimulus_onset: int = 0,
    spike_threshold: float = 0.6
) -> SpikeRecord:
    """
    Find each neuron's first threshold crossing at or after stimulus onset.

    Args:
        trajectory: s values, shape (T, N)
        stimulus_onset: First step considered
        spike_threshold: Amplitude that must be exceeded (strictly)

    Returns:
        SpikeRecord for the presentation
    """
    trajectory = np.asarray(trajectory, dtype=np.float64)
    if trajectory.ndim != 2:
        raise ValueError(f"trajectory must have shape (T, N), got {trajectory.shape}")
    if not 0 <= stimulus_onset < trajectory.shape[0]:
        raise ValueError(f"stimulus_onset {stimulus_onset} outside trajectory of length {trajectory.shape[0]}")

    window = trajectory[stimulus_onset:]
    above = window > spike_threshold
    spiked = above.any(axis=0)
    first = above.argmax(axis=0)
    columns = np.arange(trajectory.shape[1])

    return SpikeRecord(
        first_spike_time=np.where(spiked, first + stimulus_onset, NO_SPIKE),
        amplitude=np.where(spiked, window[first, columns], np.nan),
        stimulus_onset=stimulus_onset,
    )


def _gate_mask(record: SpikeRecord, delta_l: DeltaL) -> np.ndarray:
    if delta_l < 0:
        raise ValueError(f"delta_l must be >= 0, got {delta_l}")
    t0 = record.t0
    if t0 is None:
        return np.zeros(record.n, dtype=bool)
    if math.isinf(delta_l):
        return record.spiked
    return record.spiked & (record.first_spike_time <= t0 + delta_l)


def gate(record: SpikeRecord, delta_l: DeltaL, mode: str = 'amplitude') -> SparseResponse:
    """
    Rank-order gate a record: keep neurons with c = t - t0 <= delta_l.

    Args:
        record: Detected first spikes
        delta_l: Gating window in steps (math.inf disables gating)
        mode: Feature value for kept neurons: 'amplitude' (s at crossing),
            'binary' (1.0) or 'latency' (1 / (1 + c))

    Returns:
        SparseResponse; silent presentations give all-zero features
    """
    if mode not in FEATURE_MODES:
        raise ValueError(f"Unknown feature mode {mode!r}, expected one of {FEATURE_MODES}")

    keep = _gate_mask(record, delta_l)
    t0 = record.t0
    features = np.zeros(record.n)

    if keep.any():
        if mode == 'amplitude':
            features[keep] = record.amplitude[keep]
        elif mode == 'binary':
            features[keep] = 1.0
        else:
            features[keep] = 1.0 / (1.0 + (record.first_spike_time[keep] - t0))

    return SparseResponse(features=features, delta_l=delta_l, t0=t0, active_count=int(keep.sum()))


def latency_histogram(
    records: Sequence[SpikeRecord],
    delta_l: DeltaL,
    relative_to: str = 'onset'
) -> np.ndarray:
    """
    Count gated-in latencies across records.

    Args:
        records: Spike records
        delta_l: Gating window
        relative_to: 'onset' bins latency from stimulus onset, 't0' bins the
            rank-order delay c from the population's first spike

    Returns:
        counts[k] = number of gated-in neurons with delay k (empty if no spikes)
    """
    if relative_to not in ('onset', 't0'):
        raise ValueError(f"relative_to must be 'onset' or 't0', got {relative_to!r}")

    delays = []
    for record in records:
        keep = _gate_mask(record, delta_l)
        if not keep.any():
            continue
        origin = record.stimulus_onset if relative_to == 'onset' else record.t0
        delays.append(record.first_spike_time[keep] - origin)

    if not delays:
        return np.zeros(0, dtype=np.int64)
    return np.bincount(np.concatenate(delays))


def rank_order_feature_series(
    records: Sequence[SpikeRecord],
    delta_l_values: Sequence[DeltaL],
    mode: str = 'amplitude'
) -> List[List[SparseResponse]]:
    """
    Gate every record at every window; result[i][j] is record i at delta_l_values[j].

    Raises:
        ValueError: if delta_l_values is not sorted ascending
    """
    values = list(delta_l_values)
    if any(b < a for a, b in zip(values, values[1:])):
        raise ValueError(f"delta_l_values must be sorted ascending, got {values}")
    return [[gate(record, dl, mode=mode) for dl in values] for record in records]


def feature_matrix(responses: Sequence[SparseResponse]) -> np.ndarray:
    """Stack response features into an (M, N) matrix."""
    if not responses:
        return np.zeros((0, 0))
    return np.stack([r.features for r in responses])


def spike_onsets(series: np.ndarray, threshold: float, initially_above=False) -> np.ndarray:
    """
    Rising-edge crossings with hysteresis along axis 0.

    A new spike counts only after the amplitude has dropped back to or below
    the threshold, so samples sitting above threshold for several steps
    count once.

    Returns:
        Boolean array, True where a spike starts
    """
    above = np.asarray(series) > threshold
    before = np.empty_like(above)
    before[0] = initially_above
    before[1:] = above[:-1]
    return above & ~before


def count_spikes(
    series: np.ndarray,
    threshold: float,
    start: int = 0,
    initially_above=False
) -> np.ndarray:
    """Number of spike onsets at or after `start`, per column."""
    onsets = spike_onsets(series, threshold, initially_above=initially_above)
    return onsets[start:].sum(axis=0)
