"""
Single-neuron characterization protocols.

Every protocol drives all N neurons with the same scalar input (weight 1)
and runs all grid points as one batch, so a sweep costs one simulation of
shape (grid, N). Summaries are reported for a probe neuron together with
the largest deviation of any other neuron from it.
"""

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm.auto import tqdm

from ikeda_snn.dynamics import NetworkParams, NeuronArrays, rest_state, step
from ikeda_snn.optics import OpticsModel
from ikeda_snn.spikes import spike_onsets


DEFAULT_PULSE = (50, 75, 1.0)
RATE_TRANSIENT = 100
MIN_RATE_WINDOW = 400


@dataclass
class SweepResult:
    """
    One protocol's output: a table keyed by the swept variable plus metadata.

    The table has one row per grid point; the grid must be strictly increasing.
    """
    variable: str
    frame: pd.DataFrame
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.variable not in self.frame.columns:
            raise ValueError(f"sweep table lacks the swept column {self.variable!r}")
        grid = self.frame[self.variable].to_numpy(dtype=np.float64)
        if np.any(np.diff(grid) <= 0):
            raise ValueError(f"{self.variable} grid must be strictly increasing")

    @property
    def grid(self) -> np.ndarray:
        return self.frame[self.variable].to_numpy(dtype=np.float64)

    def column(self, name: str) -> np.ndarray:
        return self.frame[name].to_numpy()

    def save(self, out_dir: Path, name: str) -> Tuple[Path, Path]:
        """Write <name>.csv and <name>.json (metadata sidecar)."""
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f'{name}.csv'
        json_path = out_dir / f'{name}.json'
        self.frame.to_csv(csv_path, index=False)
        with json_path.open('w') as f:
            json.dump({'variable': self.variable, **self.metadata}, f, indent=2, sort_keys=True)
        return csv_path, json_path

    @classmethod
    def load(cls, csv_path: Path) -> 'SweepResult':
        meta = json.loads(csv_path.with_suffix('.json').read_text())
        variable = meta.pop('variable')
        return cls(variable=variable, frame=pd.read_csv(csv_path), metadata=meta)


def _base_metadata(protocol: str, params: NetworkParams, optics: OpticsModel, rest_info) -> Dict[str, Any]:
    return {
        'protocol': protocol,
        'params': params.to_dict(),
        'optics': optics.to_dict(),
        'rest': rest_info.to_dict(),
        'input_weight': 1.0,
    }


def _relax(params: NetworkParams, optics: OpticsModel) -> Tuple[NetworkParams, NeuronArrays, Any]:
    """Unit-gamma parameters plus the zero-input rest state they share."""
    unit = params.with_gamma(1.0)
    rest, info = rest_state(unit, optics)
    return unit, rest, info


def _simulate(
    unit: NetworkParams,
    optics: OpticsModel,
    rest: NeuronArrays,
    batch: int,
    horizon: int,
    drive_at: Callable[[int], np.ndarray],
    desc: str,
    progress: bool
) -> Iterator[Tuple[int, NeuronArrays]]:
    """
    Run `batch` independent copies of the network from rest.

    drive_at(t) returns the (batch,) scalar drive of step t; it already
    includes the injection strength, so params.gamma is fixed to 1.

    Yields:
        (t, state) after each step
    """
    state = rest.broadcast((batch,))
    shape = (batch, optics.n)

    for t in tqdm(range(horizon), desc=desc, disable=not progress, leave=False):
        drive = np.broadcast_to(drive_at(t)[:, None], shape)
        state = step(state, unit, optics, drive)
        yield t, state


def _check_grid(values: Sequence[float], name: str) -> np.ndarray:
    grid = np.asarray(values, dtype=np.float64).reshape(-1)
    if grid.size == 0:
        raise ValueError(f"{name} must not be empty")
    if np.any(np.diff(grid) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return grid


def _pulse_responses(
    params: NetworkParams,
    optics: OpticsModel,
    gamma_grid: Sequence[float],
    pulse: Tuple[int, int, float],
    horizon: int,
    probe: int,
    progress: bool,
    desc: str
) -> Tuple[pd.DataFrame, Any]:
    """Max amplitude, peak time and latency per gamma for u(start:end)=value."""
    gammas = _check_grid(gamma_grid, 'gamma_grid')
    start, end, value = int(pulse[0]), int(pulse[1]), float(pulse[2])
    if not 0 <= start <= end < horizon:
        raise ValueError(f"pulse ({start}, {end}) must lie within horizon {horizon}")

    threshold = params.spike_threshold
    on = gammas * value
    off = np.zeros_like(gammas)

    unit, rest, rest_info = _relax(params, optics)
    peak = np.broadcast_to(rest.s, (gammas.size, optics.n)).copy()
    peak_time = np.zeros((gammas.size, optics.n), dtype=np.int64)
    first = np.full((gammas.size, optics.n), -1, dtype=np.int64)

    for t, state in _simulate(unit, optics, rest, gammas.size, horizon,
                              lambda t: on if start <= t <= end else off, desc, progress):
        higher = state.s > peak
        peak = np.where(higher, state.s, peak)
        peak_time = np.where(higher, t, peak_time)
        if t >= start:
            first = np.where((first < 0) & (state.s > threshold), t, first)

    latency = np.where(first >= 0, first - start, -1)
    frame = pd.DataFrame({
        'gamma': gammas,
        'max_amplitude': peak[:, probe],
        'peak_time': peak_time[:, probe],
        'latency': pd.Series(latency[:, probe], dtype='Int64').where(latency[:, probe] >= 0),
        'ensemble_spread': np.abs(peak - peak[:, probe:probe + 1]).max(axis=1),
    })
    return frame, rest_info


def steepest_threshold(grid: np.ndarray, response: np.ndarray) -> Optional[float]:
    """Midpoint of the grid interval with the largest response increase."""
    if len(grid) < 2:
        return None
    i = int(np.argmax(np.diff(response)))
    return float((grid[i] + grid[i + 1]) / 2.0)


def excitability_sweep(
    params: NetworkParams,
    optics: OpticsModel,
    gamma_grid: Sequence[float],
    pulse: Tuple[int, int, float] = DEFAULT_PULSE,
    horizon: int = 300,
    probe: int = 0,
    progress: bool = True
) -> SweepResult:
    """
    Max response amplitude versus injection strength for a single pulse.

    Args:
        params: Network parameters (gamma is overridden by the grid)
        optics: Optics model; every neuron receives the same drive
        gamma_grid: Strictly increasing injection strengths
        pulse: (start, end, value), inclusive bounds
        horizon: Simulated steps
        probe: Neuron summarized in the table
        progress: Show a progress bar

    Returns:
        SweepResult with metadata['threshold'] = steepest-interval midpoint
    """
    frame, rest_info = _pulse_responses(params, optics, gamma_grid, pulse, horizon, probe, progress,
                                        'Excitability')
    meta = _base_metadata('excitability', params, optics, rest_info)
    meta.update({
        'pulse': list(pulse),
        'horizon': horizon,
        'threshold': steepest_threshold(frame['gamma'].to_numpy(), frame['max_amplitude'].to_numpy()),
    })
    return SweepResult('gamma', frame, meta)


def latency_curve(
    params: NetworkParams,
    optics: OpticsModel,
    gamma_grid: Sequence[float],
    pulse: Tuple[int, int, float] = DEFAULT_PULSE,
    horizon: int = 300,
    probe: int = 0,
    progress: bool = True
) -> SweepResult:
    """
    First-spike latency versus injection strength.

    Grid points that never cross threshold get a missing latency. The
    metadata flags whether the defined latencies are nonincreasing.
    """
    frame, rest_info = _pulse_responses(params, optics, gamma_grid, pulse, horizon, probe, progress, 'Latency')
    defined = frame['latency'].dropna().to_numpy(dtype=np.int64)
    monotone = bool(np.all(np.diff(defined) <= 0))
    if defined.size and not monotone:
        print("⚠️  Latency curve is not monotone over the requested grid")

    meta = _base_metadata('latency', params, optics, rest_info)
    meta.update({
        'pulse': list(pulse),
        'horizon': horizon,
        'monotone': monotone,
        'distinct_latencies': sorted(int(v) for v in np.unique(defined)),
        'first_latency': int(defined[0]) if defined.size else None,
        'last_latency': int(defined[-1]) if defined.size else None,
    })
    return SweepResult('gamma', frame, meta)


def spike_rate_sweep(
    params: NetworkParams,
    optics: OpticsModel,
    gamma_grid: Sequence[float],
    constant_from: int = 500,
    horizon: int = 3000,
    transient: int = RATE_TRANSIENT,
    value: float = 1.0,
    probe: int = 0,
    progress: bool = True
) -> SweepResult:
    """
    Spike rate under constant stimulation u(constant_from:end) = value.

    Spikes are rising threshold crossings with one-step hysteresis, counted
    after `transient` steps past the stimulus onset.

    Returns:
        SweepResult with onset_gamma, onset_rate and monotone in metadata
    """
    gammas = _check_grid(gamma_grid, 'gamma_grid')
    window = horizon - constant_from - transient
    if constant_from < 0 or window < MIN_RATE_WINDOW:
        raise ValueError(f"observation window of {window} steps is shorter than {MIN_RATE_WINDOW}")

    threshold = params.spike_threshold
    on = gammas * float(value)
    off = np.zeros_like(gammas)
    count_from = constant_from + transient

    unit, rest, rest_info = _relax(params, optics)
    above = np.broadcast_to(rest.s > threshold, (gammas.size, optics.n)).copy()
    counts = np.zeros((gammas.size, optics.n), dtype=np.int64)
    for t, state in _simulate(unit, optics, rest, gammas.size, horizon,
                              lambda t: on if t >= constant_from else off, 'Spike rate', progress):
        onset = spike_onsets(state.s[None], threshold, initially_above=above)[0]
        above = state.s > threshold
        if t >= count_from:
            counts += onset

    rates = counts / float(window)
    frame = pd.DataFrame({
        'gamma': gammas,
        'spike_count': counts[:, probe],
        'spike_rate': rates[:, probe],
        'ensemble_spread': np.abs(rates - rates[:, probe:probe + 1]).max(axis=1),
    })

    spiking = np.flatnonzero(rates[:, probe] > 0)
    meta = _base_metadata('spike_rate', params, optics, rest_info)
    meta.update({
        'constant_from': constant_from,
        'horizon': horizon,
        'transient': transient,
        'value': value,
        'onset_gamma': float(gammas[spiking[0]]) if spiking.size else None,
        'onset_rate': float(rates[spiking[0], probe]) if spiking.size else None,
        'max_rate': float(rates[:, probe].max()),
        'monotone': bool(np.all(np.diff(rates[:, probe]) >= 0)),
    })
    return SweepResult('gamma', frame, meta)


def refractory_probe(
    params: NetworkParams,
    optics: OpticsModel,
    gamma: float,
    tau_grid: Sequence[int],
    second_pulse_gain: float = 1.0,
    first_pulse: Tuple[int, int] = (500, 505),
    second_width: int = 4,
    horizon: int = 700,
    probe: int = 0,
    progress: bool = True
) -> SweepResult:
    """
    Paired-pulse test of the refractory period.

    The first pulse u(a:b) = 1 is followed by u(b+1+tau : b+1+tau+second_width)
    = second_pulse_gain. A second spike is a rising crossing at or after the
    second pulse's onset.

    Returns:
        SweepResult over tau; metadata['refractory_length'] is the smallest
        tau that re-excites the neuron (None if none does)
    """
    taus = _check_grid(tau_grid, 'tau_grid').astype(np.int64)
    if taus[0] < 0:
        raise ValueError("tau values must be >= 0")
    a, b = int(first_pulse[0]), int(first_pulse[1])
    second_on = b + 1 + taus
    second_off = second_on + int(second_width)
    if second_off[-1] >= horizon:
        raise ValueError(f"second pulse for tau={taus[-1]} exceeds horizon {horizon}")

    threshold = params.spike_threshold
    gain = float(second_pulse_gain)

    def drive_at(t: int) -> np.ndarray:
        u = np.where((second_on <= t) & (t <= second_off), gain, 0.0)
        if a <= t <= b:
            u = u + 1.0
        return gamma * u

    unit, rest, rest_info = _relax(params, optics)
    above = np.broadcast_to(rest.s > threshold, (taus.size, optics.n)).copy()
    first_spiked = np.zeros((taus.size, optics.n), dtype=bool)
    second = np.full((taus.size, optics.n), -1, dtype=np.int64)
    for t, state in _simulate(unit, optics, rest, taus.size, horizon, drive_at, 'Refractory', progress):
        onset = spike_onsets(state.s[None], threshold, initially_above=above)[0]
        above = state.s > threshold
        first_spiked |= onset & (t < second_on)[:, None]
        late = onset & (t >= second_on)[:, None] & (second < 0)
        second = np.where(late, t, second)

    reexcited = second[:, probe] >= 0
    frame = pd.DataFrame({
        'tau': taus,
        'reexcited': reexcited,
        'second_spike_time': pd.Series(second[:, probe], dtype='Int64').where(reexcited),
        'ensemble_spread': (second != second[:, probe:probe + 1]).sum(axis=1),
    })

    hits = np.flatnonzero(reexcited)
    meta = _base_metadata('refractory', params, optics, rest_info)
    meta.update({
        'gamma': float(gamma),
        'second_pulse_gain': gain,
        'first_pulse': [a, b],
        'second_width': int(second_width),
        'horizon': horizon,
        'first_pulse_spiked': bool(first_spiked[:, probe].all()),
        'refractory_length': int(taus[hits[0]]) if hits.size else None,
        'all_reexcited': bool(reexcited.all()),
    })
    return SweepResult('tau', frame, meta)


# ----------------------------------------------------------------------
# Convention scan

THETA_UNITS = ('grayscale', 'radians')


@dataclass(frozen=True)
class ReferenceFigures:
    """Single-neuron operating figures a convention is scored against."""
    threshold: float = 0.23
    threshold_tolerance: float = 0.03
    contrast: Tuple[float, float] = (0.3, 0.8)
    latency_gamma: float = 0.42
    latency_range: Tuple[int, int] = (6, 8)
    fast_latency: int = 2
    resolution_range: Tuple[int, int] = (6, 8)
    refractory_range: Tuple[int, int] = (5, 13)
    onset_gamma: float = 0.27
    onset_tolerance: float = 0.05
    onset_rate_range: Tuple[float, float] = (0.02, 0.06)


def theta_in_grayscale(theta0: float, units: str, kappa: float) -> float:
    """Bias in grayscale units; 'radians' reads theta0 as an SLM phase."""
    if units == 'grayscale':
        return float(theta0)
    if units == 'radians':
        return float(theta0) * kappa / (2.0 * np.pi)
    raise ValueError(f"theta units must be one of {THETA_UNITS}, got {units!r}")


def _within(value, bounds) -> bool:
    return value is not None and not np.isnan(value) and bounds[0] <= value <= bounds[1]


def scan_conventions(
    params: NetworkParams,
    kappas: Sequence[float],
    theta_units: Sequence[str] = THETA_UNITS,
    readout_offsets: Sequence[int] = (0, 1, 2),
    figures: ReferenceFigures = ReferenceFigures(),
    include_slow: bool = True,
    progress: bool = True
) -> pd.DataFrame:
    """
    Score readings of the model conventions against the reference figures.

    A convention is a conversion factor kappa, the unit theta0 is given in
    and a readout offset d: the number of steps between the input row that
    reaches a neuron and the s sample it is judged on. The offset only
    shifts latencies; kappa and the bias units change the simulation.
    Every simulation uses a single ideal neuron.

    Args:
        params: Network parameters; theta0 is reinterpreted per unit
        kappas: Conversion factors to try
        theta_units: Subset of THETA_UNITS
        readout_offsets: Latency offsets d to try
        figures: Targets and tolerances
        include_slow: Also run the spike-rate and refractory protocols
        progress: Show a progress bar

    Returns:
        One row per (kappa, theta_units, readout_offset) with the measured
        figures and a meets_* flag per target (None when not measured)
    """
    excitability_grid = np.linspace(0.0, 0.5, 50)
    latency_grid = np.union1d(np.linspace(0.3, 1.5, 50), [figures.latency_gamma])
    target = int(np.flatnonzero(np.isclose(latency_grid, figures.latency_gamma))[0])

    rows = []
    combos = [(float(k), u) for k in kappas for u in theta_units]
    for kappa, units in tqdm(combos, desc='Conventions', disable=not progress):
        optics = OpticsModel.ideal((1, 1), kappa=kappa)
        local = dataclasses.replace(params, theta0=theta_in_grayscale(params.theta0, units, kappa))

        pulses, _ = _pulse_responses(local, optics, excitability_grid, DEFAULT_PULSE, 300, 0, False, 'Excitability')
        amplitude = pulses['max_amplitude'].to_numpy()
        threshold = steepest_threshold(excitability_grid, amplitude)
        low, high = figures.contrast
        graded = int(np.sum((amplitude >= low) & (amplitude <= high)))

        latencies, _ = _pulse_responses(local, optics, latency_grid, DEFAULT_PULSE, 300, 0, False, 'Latency')
        raw = latencies['latency'].to_numpy(dtype=np.float64, na_value=np.nan)
        defined = raw[~np.isnan(raw)]
        above = raw[(latency_grid > (threshold or 0.0)) & ~np.isnan(raw)]

        onset = onset_rate = refractory = None
        if include_slow:
            rate = spike_rate_sweep(local, optics, np.linspace(0.0, 1.0, 21), progress=False)
            onset, onset_rate = rate.metadata['onset_gamma'], rate.metadata['onset_rate']
            refractory = refractory_probe(local, optics, 0.3, np.arange(1, 31),
                                          progress=False).metadata['refractory_length']

        for d in readout_offsets:
            fast = raw[latency_grid > 1.0] + d
            row = {
                'kappa': kappa,
                'theta_units': units,
                'readout_offset': int(d),
                'theta0': local.theta0,
                'threshold': threshold,
                'graded_points': graded,
                'latency_at_target': raw[target] + d,
                'fast_latency_min': float(np.nanmin(fast)) if np.any(~np.isnan(fast)) else np.nan,
                'fast_latency_max': float(np.nanmax(fast)) if np.any(~np.isnan(fast)) else np.nan,
                'latency_monotone': bool(np.all(np.diff(defined) <= 0)),
                'distinct_latencies': int(np.unique(above).size),
                'refractory_length': refractory,
                'onset_gamma': onset,
                'onset_rate': onset_rate,
            }
            row['meets_threshold'] = (threshold is not None
                                      and abs(threshold - figures.threshold) <= figures.threshold_tolerance)
            row['meets_contrast'] = graded == 0 and bool(np.any(amplitude < low)) and bool(np.any(amplitude > high))
            row['meets_latency'] = (_within(row['latency_at_target'], figures.latency_range)
                                    and bool(np.all(fast == figures.fast_latency))
                                    and row['latency_monotone'])
            row['meets_resolution'] = _within(row['distinct_latencies'], figures.resolution_range)
            row['meets_refractory'] = _within(refractory, figures.refractory_range) if include_slow else None
            row['meets_rate'] = (onset is not None and abs(onset - figures.onset_gamma) <= figures.onset_tolerance
                                 and _within(onset_rate, figures.onset_rate_range)) if include_slow else None
            flags = [v for k, v in row.items() if k.startswith('meets_') and v is not None]
            row['meets_all'] = all(flags)
            rows.append(row)

    return pd.DataFrame(rows)
