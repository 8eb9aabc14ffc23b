"""
Slow-fast Ikeda map dynamics for N excitable neurons.

Update order per step:
    x(t+1) = -delta*y(t) + beta*I(t) + gamma*drive(t+1) + theta0
    y(t+1) = eta_mem*y(t) + x(t+1)
    s(t+1) = sin^2(2*pi*(x(t+1) + Phi)/kappa)
    I(t+1) = optics.intensity(optics.field(x(t+1)))

State arrays have shape (..., N); leading axes are independent
presentations that share the optics model.
"""

import dataclasses
import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Optional, Tuple, Union

import numpy as np

from ikeda_snn.optics import OpticsModel


REST_TOLERANCE = 1e-10
REST_MAX_STEPS = 10_000


@dataclass(frozen=True)
class NetworkParams:
    """Scalar hyperparameters shared by all neurons."""
    beta: float
    gamma: float
    delta: float
    eta_mem: float
    theta0: float
    spike_threshold: float = 0.6
    excitable: bool = True

    def __post_init__(self):
        for name in ('beta', 'gamma', 'delta', 'eta_mem', 'theta0', 'spike_threshold'):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
        for name in ('beta', 'gamma', 'delta'):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0.0 <= self.eta_mem <= 1.0:
            raise ValueError(f"eta_mem must lie in [0, 1], got {self.eta_mem}")
        if not 0.0 < self.spike_threshold < 1.0:
            raise ValueError(f"spike_threshold must lie in (0, 1), got {self.spike_threshold}")

    def with_gamma(self, gamma: float) -> 'NetworkParams':
        return dataclasses.replace(self, gamma=float(gamma))

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'NetworkParams':
        missing = [k for k in ('beta', 'gamma', 'delta', 'eta_mem', 'theta0') if k not in data]
        if missing:
            raise ValueError(f"network params missing required keys: {missing}")
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - fields
        if unknown:
            raise ValueError(f"unknown network params: {sorted(unknown)}")
        return cls(**{k: (bool(v) if k == 'excitable' else float(v)) for k, v in data.items()})


# Fig. 1 style operating point.
FIG1_PARAMS = NetworkParams(beta=0.45, gamma=0.3, delta=0.1, eta_mem=0.995, theta0=-0.1 * math.pi)

# Operating point used for the excitability, rate, refractory and latency protocols.
EXCITABILITY_PARAMS = NetworkParams(beta=0.475, gamma=0.3, delta=0.1, eta_mem=0.995, theta0=-0.35)


@dataclass
class NeuronArrays:
    """Per-neuron state, arrays of identical shape (..., N)."""
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    intensity: np.ndarray

    def __post_init__(self):
        shapes = {a.shape for a in (self.x, self.y, self.s, self.intensity)}
        if len(shapes) != 1:
            raise ValueError(f"state arrays disagree in shape: {sorted(shapes)}")

    @property
    def n(self) -> int:
        return self.x.shape[-1]

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return self.x.shape[:-1]

    @classmethod
    def zeros(cls, n: int, batch_shape: Tuple[int, ...] = ()) -> 'NeuronArrays':
        shape = tuple(batch_shape) + (int(n),)
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape), np.zeros(shape))

    def broadcast(self, batch_shape: Tuple[int, ...]) -> 'NeuronArrays':
        """Independent copies of an unbatched state for each batch entry."""
        shape = tuple(batch_shape) + (self.n,)
        return NeuronArrays(*(np.broadcast_to(a, shape).copy() for a in (self.x, self.y, self.s, self.intensity)))

    def copy(self) -> 'NeuronArrays':
        return NeuronArrays(self.x.copy(), self.y.copy(), self.s.copy(), self.intensity.copy())


@dataclass
class RestInfo:
    """Convergence report of rest_state."""
    converged: bool
    steps: int
    residual: float
    tolerance: float
    max_steps: int

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def step(
    state: NeuronArrays,
    params: NetworkParams,
    optics: OpticsModel,
    input_drive: Union[np.ndarray, float]
) -> NeuronArrays:
    """
    Advance the network by one time step.

    Args:
        state: Current state, shape (..., N)
        params: Network hyperparameters
        optics: Optical transfer model (N neurons)
        input_drive: Already-mixed input W_inj u(t+1); broadcastable to the
            state shape with trailing size N. Scaled by params.gamma here.

    Returns:
        New state; the input state is not modified
    """
    drive = np.asarray(input_drive, dtype=np.float64)
    if drive.ndim and drive.shape[-1] != state.n:
        raise ValueError(f"input_drive has trailing size {drive.shape[-1]}, state has {state.n} neurons")
    if optics.n != state.n:
        raise ValueError(f"optics has {optics.n} neurons, state has {state.n}")

    y_prev = state.y if params.excitable else np.zeros_like(state.y)
    x_new = -params.delta * y_prev + params.beta * state.intensity + params.gamma * drive + params.theta0
    x_new = np.broadcast_to(x_new, state.x.shape)
    y_new = params.eta_mem * state.y + x_new if params.excitable else np.zeros_like(state.y)

    return NeuronArrays(
        x=np.array(x_new),
        y=y_new,
        s=optics.transfer(x_new),
        intensity=optics.intensity(optics.field(x_new)),
    )


def run(
    state: NeuronArrays,
    params: NetworkParams,
    optics: OpticsModel,
    input_series: Union[np.ndarray, Iterable[np.ndarray]],
    return_state: bool = False
):
    """
    Iterate step over an input series.

    Args:
        state: Initial state, shape (..., N)
        params: Network hyperparameters
        optics: Optical transfer model
        input_series: Array (T, ..., N) or an iterable of T drive rows
        return_state: Also return the final state

    Returns:
        Trajectory of s with shape (T,) + state shape; row t is the state
        after consuming input row t. With return_state, (trajectory, state).
    """
    if isinstance(input_series, np.ndarray):
        if input_series.ndim == 0 or input_series.shape[0] < 1:
            raise ValueError("input_series must contain at least one row")
        rows: Iterable[np.ndarray] = iter(input_series)
        total: Optional[int] = input_series.shape[0]
    else:
        rows = iter(input_series)
        total = None

    frames = []
    for drive in rows:
        state = step(state, params, optics, drive)
        frames.append(state.s)

    if not frames:
        raise ValueError("input_series must contain at least one row")
    trajectory = np.stack(frames)
    if total is not None and trajectory.shape[0] != total:
        raise ValueError(f"consumed {trajectory.shape[0]} rows, expected {total}")

    if return_state:
        return trajectory, state
    return trajectory


def rest_state(
    params: NetworkParams,
    optics: OpticsModel,
    tolerance: float = REST_TOLERANCE,
    max_steps: int = REST_MAX_STEPS,
    verbose: bool = False
) -> Tuple[NeuronArrays, RestInfo]:
    """
    Relax the network from x = y = s = I = 0 under zero input.

    Stops once max|s(t+1) - s(t)| < tolerance or after max_steps steps.
    Non-convergence is reported through RestInfo, never raised.

    Returns:
        (state, info)
    """
    state = NeuronArrays.zeros(optics.n)
    zero = np.zeros(optics.n)
    residual = float('inf')
    steps = 0

    while steps < max_steps:
        new_state = step(state, params, optics, zero)
        residual = float(np.max(np.abs(new_state.s - state.s)))
        state = new_state
        steps += 1
        if residual < tolerance:
            break

    info = RestInfo(
        converged=residual < tolerance,
        steps=steps,
        residual=residual,
        tolerance=tolerance,
        max_steps=max_steps,
    )
    if not info.converged:
        print(f"⚠️  Rest state not converged after {steps} steps (residual {residual:.3e})")
    elif verbose:
        print(f"✓ Rest state converged in {steps} steps")
    return state, info
