"""
Optical transfer model: SLM field, camera intensity, DOE coupling.

Maps the fast state x of every neuron to the signed SLM field and the
normalized camera intensity that is fed back into the dynamics.
"""

import dataclasses
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import ndimage


# Grayscale units per 2*pi of SLM phase for the homogeneous model.
DEFAULT_KAPPA = 2.7

# Center-dominant nearest-neighbour stencil. Not a measured DOE response.
DEFAULT_DOE_KERNEL = np.array([
    [0.05, 0.10, 0.05],
    [0.10, 1.00, 0.10],
    [0.05, 0.10, 0.05],
])

MODES = ('ideal', 'heterogeneous', 'doe-coupled')


@dataclass(frozen=True, eq=False)
class OpticsModel:
    """
    Per-neuron optical transfer for an N = rows * cols pixel grid.

    Attributes:
        mode: 'ideal', 'heterogeneous' or 'doe-coupled'
        illumination: Per-pixel I0 in [0, 1], shape (N,)
        phase_offset: Per-pixel phase offset Phi, shape (N,)
        conversion: Per-pixel grayscale-to-phase factor kappa > 0, shape (N,)
        grid_shape: (rows, cols) of the pixel grid
        doe_kernel: Odd-sided coupling stencil (doe-coupled mode only)
        quantize_8bit: Round intensity to 256 camera levels
        powered_on: Illumination switch; off forces zero field and intensity
        compensated: Pre-distort x and divide out I0 so a heterogeneous
            device reproduces the ideal transfer
        recipe: Generator parameters used for JSON round trips
    """
    mode: str
    illumination: np.ndarray
    phase_offset: np.ndarray
    conversion: np.ndarray
    grid_shape: Tuple[int, int]
    doe_kernel: Optional[np.ndarray] = None
    quantize_8bit: bool = False
    powered_on: bool = True
    compensated: bool = False
    recipe: Dict[str, Any] = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"Unknown optics mode {self.mode!r}, expected one of {MODES}")

        rows, cols = (int(v) for v in self.grid_shape)
        object.__setattr__(self, 'grid_shape', (rows, cols))
        n = rows * cols

        for name in ('illumination', 'phase_offset', 'conversion'):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if arr.shape != (n,):
                raise ValueError(f"{name} has {arr.size} entries, grid {self.grid_shape} needs {n}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

        if np.any(self.illumination < 0) or np.any(self.illumination > 1):
            raise ValueError("illumination must lie in [0, 1]")
        if np.any(self.conversion <= 0):
            raise ValueError("conversion factors must be > 0")
        if self.compensated and np.any(self.illumination <= 0):
            raise ValueError("compensation needs strictly positive illumination")

        if self.doe_kernel is not None:
            kernel = np.asarray(self.doe_kernel, dtype=np.float64)
            if kernel.ndim != 2 or any(side % 2 == 0 for side in kernel.shape):
                raise ValueError(f"doe_kernel must be 2D with odd side lengths, got shape {kernel.shape}")
            if not np.all(np.isfinite(kernel)):
                raise ValueError("doe_kernel entries must be finite")
            kernel.setflags(write=False)
            object.__setattr__(self, 'doe_kernel', kernel)

    @property
    def n(self) -> int:
        return self.grid_shape[0] * self.grid_shape[1]

    @cached_property
    def nominal_kappa(self) -> float:
        return float(self.recipe.get('kappa', np.mean(self.conversion)))

    @cached_property
    def nominal_phase(self) -> float:
        return float(self.recipe.get('phase', 0.0))

    @cached_property
    def intensity_scale(self) -> float:
        """Fixed 1 / max attainable intensity; input independent."""
        kernel_gain = 1.0 if self.doe_kernel is None else float(np.abs(self.doe_kernel).sum())
        peak = 1.0 if self.compensated else float(self.illumination.max(initial=0.0))
        if peak == 0.0:
            return 1.0
        return 1.0 / (kernel_gain ** 2 * peak)

    # ------------------------------------------------------------------
    # Constructors

    @classmethod
    def ideal(
        cls,
        grid_shape: Tuple[int, int],
        kappa: float = DEFAULT_KAPPA,
        phase: float = 0.0,
        quantize_8bit: bool = False
    ) -> 'OpticsModel':
        """Homogeneous model: I0 = 1, Phi = phase, kappa constant."""
        n = int(grid_shape[0]) * int(grid_shape[1])
        return cls(
            mode='ideal',
            illumination=np.ones(n),
            phase_offset=np.full(n, float(phase)),
            conversion=np.full(n, float(kappa)),
            grid_shape=grid_shape,
            quantize_8bit=quantize_8bit,
            recipe={'kappa': float(kappa), 'phase': float(phase)},
        )

    def with_coupling(self, kernel: Optional[np.ndarray] = None) -> 'OpticsModel':
        """Switch to DOE-coupled mode with the given (or default) stencil."""
        kernel = DEFAULT_DOE_KERNEL if kernel is None else np.asarray(kernel, dtype=np.float64)
        return dataclasses.replace(self, mode='doe-coupled', doe_kernel=kernel)

    # ------------------------------------------------------------------
    # Transfer functions

    def _check_size(self, arr: np.ndarray, what: str):
        if arr.shape[-1] != self.n:
            raise ValueError(f"{what} has trailing size {arr.shape[-1]}, optics has {self.n} neurons")

    def phase(self, x_state: np.ndarray) -> np.ndarray:
        """Sine argument 2*pi*(x + Phi)/kappa, with optional pre-distortion."""
        x_state = np.asarray(x_state, dtype=np.float64)
        self._check_size(x_state, 'x_state')
        if self.compensated:
            command = (x_state + self.nominal_phase) * (self.conversion / self.nominal_kappa) - self.phase_offset
            return 2.0 * np.pi * (command + self.phase_offset) / self.conversion
        return 2.0 * np.pi * (x_state + self.phase_offset) / self.conversion

    def transfer(self, x_state: np.ndarray) -> np.ndarray:
        """SLM output amplitude s = sin^2(phase), independent of illumination."""
        return np.sin(self.phase(x_state)) ** 2

    def field(self, x_state: np.ndarray) -> np.ndarray:
        """Signed field E = sqrt(I0) * sin(phase); zeros when powered off."""
        x_state = np.asarray(x_state, dtype=np.float64)
        if not self.powered_on:
            self._check_size(x_state, 'x_state')
            return np.zeros_like(x_state)
        return np.sqrt(self.illumination) * np.sin(self.phase(x_state))

    def intensity(self, field: np.ndarray) -> np.ndarray:
        """
        Camera intensity for a field of shape (..., N).

        Identity coupling squares the field; doe-coupled mode convolves the
        field on the pixel grid (zero padding) before squaring. The result is
        scaled by the fixed intensity_scale and optionally quantized.
        """
        field = np.asarray(field, dtype=np.float64)
        self._check_size(field, 'field')
        if not self.powered_on:
            return np.zeros_like(field)

        if self.mode == 'doe-coupled':
            if self.doe_kernel is None:
                raise ValueError("doe-coupled optics needs a doe_kernel")
            lead = field.shape[:-1]
            grid = field.reshape(lead + self.grid_shape)
            kernel = self.doe_kernel.reshape((1,) * len(lead) + self.doe_kernel.shape)
            field = ndimage.convolve(grid, kernel, mode='constant', cval=0.0).reshape(field.shape)

        out = field ** 2 * self.intensity_scale
        if self.compensated:
            out = out / self.illumination
        if self.quantize_8bit:
            out = np.round(np.clip(out, 0.0, 1.0) * 255.0) / 255.0
        return out

    def set_power(self, on: bool) -> 'OpticsModel':
        """Return a copy with the illumination switched on or off."""
        return dataclasses.replace(self, powered_on=bool(on))

    # ------------------------------------------------------------------
    # Serialization

    def to_dict(self) -> Dict[str, Any]:
        """Recipe description (seed and parameters, no raw arrays)."""
        return {
            'mode': self.mode,
            'grid_shape': list(self.grid_shape),
            'recipe': dict(self.recipe),
            'doe_kernel': None if self.doe_kernel is None else self.doe_kernel.tolist(),
            'quantize_8bit': self.quantize_8bit,
            'powered_on': self.powered_on,
            'compensated': self.compensated,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'OpticsModel':
        """Rebuild a model from to_dict output."""
        recipe = dict(data.get('recipe', {}))
        grid_shape = tuple(data['grid_shape'])
        if 'seed' in recipe:
            model = synthesize_heterogeneity(
                grid_shape,
                seed=recipe['seed'],
                gaussian_width=recipe['gaussian_width'],
                phase_jitter=recipe['phase_jitter'],
                kappa_jitter=recipe['kappa_jitter'],
                kappa=recipe.get('kappa', DEFAULT_KAPPA),
                phase=recipe.get('phase', 0.0),
            )
        else:
            model = cls.ideal(grid_shape, kappa=recipe.get('kappa', DEFAULT_KAPPA), phase=recipe.get('phase', 0.0))

        if data.get('mode') == 'doe-coupled':
            model = model.with_coupling(data.get('doe_kernel'))
        return dataclasses.replace(
            model,
            quantize_8bit=bool(data.get('quantize_8bit', False)),
            powered_on=bool(data.get('powered_on', True)),
            compensated=bool(data.get('compensated', False)),
        )

    def save(self, path: Path):
        """Save recipe to JSON file."""
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open('w') as f:
            json.dump(self.to_dict(), f, indent=2)

    @staticmethod
    def load(path: Path) -> 'OpticsModel':
        """Load recipe from JSON file."""
        return OpticsModel.from_dict(json.loads(path.read_text()))


def gaussian_profile(grid_shape: Tuple[int, int], width: float) -> np.ndarray:
    """
    Peak-normalized 2D Gaussian centered on the grid, flattened row-major.

    Args:
        grid_shape: (rows, cols)
        width: Standard deviation as a fraction of each grid side; inf gives all ones

    Returns:
        Illumination vector of length rows * cols
    """
    rows, cols = grid_shape
    if not np.isfinite(width):
        return np.ones(rows * cols)
    if width <= 0:
        raise ValueError(f"gaussian_width must be > 0, got {width}")

    r = (np.arange(rows) - (rows - 1) / 2.0) / (width * rows)
    c = (np.arange(cols) - (cols - 1) / 2.0) / (width * cols)
    profile = np.exp(-0.5 * (r[:, None] ** 2 + c[None, :] ** 2))
    return (profile / profile.max()).reshape(-1)


def synthesize_heterogeneity(
    grid_shape: Tuple[int, int],
    seed: int,
    gaussian_width: float = 0.5,
    phase_jitter: float = 0.02,
    kappa_jitter: float = 0.02,
    kappa: float = DEFAULT_KAPPA,
    phase: float = 0.0
) -> OpticsModel:
    """
    Generate a seeded heterogeneous device.

    Args:
        grid_shape: (rows, cols)
        seed: RNG seed; same seed gives the same model
        gaussian_width: Illumination width as fraction of the grid (inf = flat)
        phase_jitter: Std of Phi_i around `phase`
        kappa_jitter: Relative std of kappa_i around `kappa`
        kappa: Nominal conversion factor
        phase: Nominal phase offset

    Returns:
        OpticsModel in heterogeneous mode (ideal mode for degenerate parameters)
    """
    if phase_jitter < 0 or kappa_jitter < 0:
        raise ValueError("jitters must be >= 0")

    rows, cols = int(grid_shape[0]), int(grid_shape[1])
    n = rows * cols
    rng = np.random.default_rng(seed)

    illumination = gaussian_profile((rows, cols), gaussian_width)
    phase_offset = phase + phase_jitter * rng.standard_normal(n)
    conversion = kappa * (1.0 + kappa_jitter * rng.standard_normal(n))
    if np.any(conversion <= 0):
        raise ValueError(f"kappa_jitter={kappa_jitter} drew non-positive conversion factors")

    degenerate = phase_jitter == 0 and kappa_jitter == 0 and not np.isfinite(gaussian_width)
    return OpticsModel(
        mode='ideal' if degenerate else 'heterogeneous',
        illumination=illumination,
        phase_offset=phase_offset,
        conversion=conversion,
        grid_shape=(rows, cols),
        recipe={
            'seed': int(seed),
            'gaussian_width': float(gaussian_width),
            'phase_jitter': float(phase_jitter),
            'kappa_jitter': float(kappa_jitter),
            'kappa': float(kappa),
            'phase': float(phase),
        },
    )
