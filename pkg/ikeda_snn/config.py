"""
Experiment configuration: YAML file -> dataclasses, with scale profiles.

Profiles under `profiles:` are deep-merged over the base document. The
resolved configuration (defaults included) is written into every run
directory.
"""

import copy
import dataclasses
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import yaml

from ikeda_snn.dynamics import NetworkParams
from ikeda_snn.optics import DEFAULT_KAPPA, MODES, OpticsModel, synthesize_heterogeneity
from ikeda_snn.readout import SpsaConfig


TRAINERS = ('spsa', 'ridge')


def deep_merge(base: Dict[str, Any], overlay: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge overlay into a copy of base."""
    merged = copy.deepcopy(base)
    for key, value in (overlay or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _build(cls, data: Optional[Dict[str, Any]], section: str):
    data = data or {}
    known = set(cls.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown keys in '{section}': {sorted(unknown)}")
    return cls(**data)


@dataclass
class OpticsSettings:
    mode: str = 'ideal'
    grid_shape: List[int] = field(default_factory=lambda: [64, 64])
    kappa: float = DEFAULT_KAPPA
    phase: float = 0.0
    seed: int = 7
    gaussian_width: float = 0.5
    phase_jitter: float = 0.02
    kappa_jitter: float = 0.02
    doe_kernel: Optional[List[List[float]]] = None
    quantize_8bit: bool = False
    compensated: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"optics.mode must be one of {MODES}, got {self.mode!r}")
        if len(self.grid_shape) != 2 or min(self.grid_shape) < 1:
            raise ValueError(f"optics.grid_shape must be [rows, cols], got {self.grid_shape}")

    @property
    def n_neurons(self) -> int:
        return int(self.grid_shape[0]) * int(self.grid_shape[1])

    def build(self, grid_shape: Optional[List[int]] = None) -> OpticsModel:
        """Construct the optics model (optionally on another grid)."""
        shape = tuple(grid_shape or self.grid_shape)
        if self.mode == 'ideal':
            model = OpticsModel.ideal(shape, kappa=self.kappa, phase=self.phase)
        else:
            model = synthesize_heterogeneity(
                shape,
                seed=self.seed,
                gaussian_width=self.gaussian_width,
                phase_jitter=self.phase_jitter,
                kappa_jitter=self.kappa_jitter,
                kappa=self.kappa,
                phase=self.phase,
            )
            if self.mode == 'doe-coupled':
                model = model.with_coupling(self.doe_kernel)
        return dataclasses.replace(model, quantize_8bit=self.quantize_8bit, compensated=self.compensated)


@dataclass
class SweepGrid:
    gamma_min: float = 0.0
    gamma_max: float = 0.5
    points: int = 50

    def values(self) -> np.ndarray:
        return np.linspace(self.gamma_min, self.gamma_max, self.points)


@dataclass
class CharacterizeSettings:
    grid_shape: Optional[List[int]] = None
    pulse: List[float] = field(default_factory=lambda: [50, 75, 1.0])
    pulse_horizon: int = 300
    excitability: Dict[str, Any] = field(default_factory=lambda: {'gamma_min': 0.0, 'gamma_max': 0.5, 'points': 50})
    latency: Dict[str, Any] = field(default_factory=lambda: {'gamma_min': 0.3, 'gamma_max': 1.5, 'points': 50})
    spike_rate: Dict[str, Any] = field(default_factory=lambda: {'gamma_min': 0.0, 'gamma_max': 1.0, 'points': 21})
    rate_from: int = 500
    rate_horizon: int = 3000
    refractory_gamma: float = 0.3
    refractory_tau_max: int = 30
    refractory_gains: List[float] = field(default_factory=lambda: [1.0, 2.0])

    def grid(self, name: str) -> np.ndarray:
        return SweepGrid(**getattr(self, name)).values()


@dataclass
class DatasetSettings:
    train_images: str = 'data/mnist/train-images-idx3-ubyte.gz'
    train_labels: str = 'data/mnist/train-labels-idx1-ubyte.gz'
    test_images: str = 'data/mnist/t10k-images-idx3-ubyte.gz'
    test_labels: str = 'data/mnist/t10k-labels-idx1-ubyte.gz'
    n_train: int = 1000
    n_test: int = 200
    split_seed: int = 0
    test_source: str = 'official'


@dataclass
class InputSettings:
    projection_seed: int = 42
    on_steps: int = 23
    off_steps: int = 25
    batch_size: int = 32
    carry_state: bool = False


@dataclass
class SparsitySettings:
    delta_l: List[float] = field(default_factory=lambda: [1, 3, 7, math.inf])
    feature_mode: str = 'amplitude'

    def __post_init__(self):
        self.delta_l = [math.inf if (isinstance(v, str) and v.lower() in ('inf', '.inf')) else v
                        for v in self.delta_l]
        if any(b < a for a, b in zip(self.delta_l, self.delta_l[1:])):
            raise ValueError(f"sparsity.delta_l must be sorted ascending, got {self.delta_l}")


@dataclass
class TrainingSettings:
    trainers: List[str] = field(default_factory=lambda: ['ridge', 'spsa'])
    ridge_regularizer: Union[float, str] = 1.0
    ridge_grid: List[float] = field(default_factory=lambda: [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0])
    validation_fraction: float = 0.2
    spsa: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.trainers) - set(TRAINERS)
        if unknown:
            raise ValueError(f"unknown trainers {sorted(unknown)}, expected {TRAINERS}")
        if isinstance(self.ridge_regularizer, str) and self.ridge_regularizer != 'validate':
            raise ValueError("training.ridge_regularizer must be a number or 'validate'")
        self.spsa_config()

    def spsa_config(self) -> SpsaConfig:
        return _build(SpsaConfig, self.spsa, 'training.spsa')


@dataclass
class PathSettings:
    runs_root: str = 'runs'
    cache_dir: str = '.cache/ikeda_snn'


@dataclass
class ExperimentConfig:
    """Fully resolved experiment description."""
    network: NetworkParams
    optics: OpticsSettings
    characterize: CharacterizeSettings
    dataset: DatasetSettings
    input: InputSettings
    sparsity: SparsitySettings
    training: TrainingSettings
    paths: PathSettings
    profile: Optional[str] = None
    seed: int = 0
    compress_index: bool = False

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExperimentConfig':
        if 'network' not in data:
            raise ValueError("config needs an explicit 'network' section")
        return cls(
            network=NetworkParams.from_dict(data['network']),
            optics=_build(OpticsSettings, data.get('optics'), 'optics'),
            characterize=_build(CharacterizeSettings, data.get('characterize'), 'characterize'),
            dataset=_build(DatasetSettings, data.get('dataset'), 'dataset'),
            input=_build(InputSettings, data.get('input'), 'input'),
            sparsity=_build(SparsitySettings, data.get('sparsity'), 'sparsity'),
            training=_build(TrainingSettings, data.get('training'), 'training'),
            paths=_build(PathSettings, data.get('paths'), 'paths'),
            profile=data.get('profile'),
            seed=int(data.get('seed', 0)),
            compress_index=bool(data.get('compress_index', False)),
        )

    def to_dict(self) -> Dict[str, Any]:
        out = {
            'profile': self.profile,
            'seed': self.seed,
            'compress_index': self.compress_index,
            'network': self.network.to_dict(),
        }
        for name in ('optics', 'characterize', 'dataset', 'input', 'sparsity', 'training', 'paths'):
            out[name] = asdict(getattr(self, name))
        out['training']['spsa'] = self.training.spsa_config().to_dict()
        return out

    def save_resolved(self, path: Path):
        """Write the resolved configuration as YAML."""
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open('w') as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False)


def load_config(
    path: Path,
    profile: Optional[str] = None,
    seed: Optional[int] = None,
    out: Optional[str] = None
) -> ExperimentConfig:
    """
    Load config.yml, apply a profile and CLI overrides.

    Args:
        path: YAML config file
        profile: Profile name (defaults to the file's `profile:` entry)
        seed: Override for the global seed
        out: Override for paths.runs_root

    Returns:
        ExperimentConfig
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config not found: {path}")
    with path.open() as f:
        raw = yaml.safe_load(f) or {}

    profiles = raw.pop('profiles', {}) or {}
    requested = profile
    profile = profile or raw.get('profile')
    # a resolved config names its profile but carries no profiles section
    if profile is not None and (requested is not None or profiles):
        if profile not in profiles:
            raise ValueError(f"unknown profile {profile!r}, available: {sorted(profiles)}")
        raw = deep_merge(raw, profiles[profile])
        raw['profile'] = profile

    if seed is not None:
        raw['seed'] = seed
    if out is not None:
        raw.setdefault('paths', {})['runs_root'] = out

    return ExperimentConfig.from_dict(raw)
