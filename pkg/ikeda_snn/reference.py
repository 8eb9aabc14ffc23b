"""
Straight-line scalar implementation of the map for one neuron.

Used as an independent oracle for the vectorized dynamics. Only the
uncoupled transfer is supported (ideal or heterogeneous pixel).
"""

import math
from typing import List, Sequence, Tuple

from ikeda_snn.dynamics import NetworkParams


def scalar_step(
    x: float,
    y: float,
    intensity: float,
    drive: float,
    params: NetworkParams,
    illumination: float = 1.0,
    phase_offset: float = 0.0,
    kappa: float = 2.7
) -> Tuple[float, float, float, float]:
    """One step for a single neuron. Returns (x, y, s, intensity)."""
    y_prev = y if params.excitable else 0.0
    x_new = -params.delta * y_prev + params.beta * intensity + params.gamma * drive + params.theta0
    y_new = params.eta_mem * y + x_new if params.excitable else 0.0
    arg = 2.0 * math.pi * (x_new + phase_offset) / kappa
    s_new = math.sin(arg) ** 2
    field = math.sqrt(illumination) * math.sin(arg)
    return x_new, y_new, s_new, field * field


def scalar_rest(
    params: NetworkParams,
    kappa: float = 2.7,
    phase_offset: float = 0.0,
    tolerance: float = 1e-10,
    max_steps: int = 10_000
) -> Tuple[Tuple[float, float, float, float], int]:
    """Relax from zero state under zero input. Returns (state, steps)."""
    x = y = s = intensity = 0.0
    for steps in range(1, max_steps + 1):
        prev = s
        x, y, s, intensity = scalar_step(x, y, intensity, 0.0, params, phase_offset=phase_offset, kappa=kappa)
        if abs(s - prev) < tolerance:
            return (x, y, s, intensity), steps
    return (x, y, s, intensity), max_steps


def scalar_run(
    drives: Sequence[float],
    params: NetworkParams,
    kappa: float = 2.7,
    phase_offset: float = 0.0,
    from_rest: bool = True
) -> List[float]:
    """Trajectory of s for a scalar drive sequence."""
    if from_rest:
        (x, y, s, intensity), _ = scalar_rest(params, kappa=kappa, phase_offset=phase_offset)
    else:
        x = y = s = intensity = 0.0

    out = []
    for d in drives:
        x, y, s, intensity = scalar_step(x, y, intensity, d, params, phase_offset=phase_offset, kappa=kappa)
        out.append(s)
    return out
