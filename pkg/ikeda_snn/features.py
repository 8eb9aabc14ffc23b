"""
Input encoding: random projection of images onto neurons and the
time-multiplexed drive schedule.

Each image is shown for `on_steps` steps and followed by `off_steps`
steps of exactly zero input.
"""

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np


ON_STEPS = 23
OFF_STEPS = 25


class ConvergenceError(RuntimeError):
    """Power iteration failed to converge."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


def largest_singular_value(
    matrix,
    tolerance: float = 1e-9,
    max_iter: int = 10_000,
    seed: int = 0
) -> float:
    """
    Largest singular value by power iteration on M^T M.

    Works for dense arrays and scipy sparse matrices. Stops when the
    Rayleigh quotient changes by less than `tolerance` (relative).

    Raises:
        ConvergenceError: if max_iter is reached first
    """
    n_cols = matrix.shape[1]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n_cols)
    v /= np.linalg.norm(v)

    estimate = 0.0
    residual = np.inf
    for iteration in range(1, max_iter + 1):
        w = matrix.T @ (matrix @ v)
        w = np.asarray(w).reshape(-1)
        new_estimate = float(v @ w)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        residual = abs(new_estimate - estimate) / new_estimate
        estimate = new_estimate
        if residual < tolerance:
            return float(np.sqrt(estimate))

    raise ConvergenceError("power iteration did not converge", residual, max_iter)


@dataclass
class InputProjection:
    """
    Random input weights W_inj of shape (N, P), spectrally normalized.

    Attributes:
        weights: Normalized matrix, largest singular value 1
        seed: Generator seed
        normalization_scale: Largest singular value before normalization
    """
    weights: np.ndarray
    seed: int
    normalization_scale: float

    @property
    def n_neurons(self) -> int:
        return self.weights.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.weights.shape[1]

    def mix(self, images: np.ndarray) -> np.ndarray:
        """W_inj u for images of shape (..., P)."""
        images = np.asarray(images, dtype=np.float64)
        if images.shape[-1] != self.n_pixels:
            raise ValueError(f"images have {images.shape[-1]} pixels, projection expects {self.n_pixels}")
        return images @ self.weights.T


def build_projection(n_neurons: int, n_pixels: int, seed: int) -> InputProjection:
    """
    Draw W_inj uniformly from [-1, 1] and divide by its largest singular value.

    Args:
        n_neurons: Rows N
        n_pixels: Columns P
        seed: RNG seed; same seed gives a bit-identical matrix

    Returns:
        InputProjection
    """
    if n_neurons < 1 or n_pixels < 1:
        raise ValueError(f"projection needs n_neurons, n_pixels >= 1, got {n_neurons}, {n_pixels}")

    rng = np.random.default_rng(seed)
    raw = rng.uniform(-1.0, 1.0, size=(n_neurons, n_pixels))
    scale = largest_singular_value(raw)
    if scale == 0.0:
        raise ValueError("drawn projection is all zeros")

    return InputProjection(weights=raw / scale, seed=int(seed), normalization_scale=scale)


@dataclass
class StimulusSchedule:
    """Ordered image presentations with on/off timing."""
    images: np.ndarray
    labels: Optional[np.ndarray] = None
    on_steps: int = ON_STEPS
    off_steps: int = OFF_STEPS

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        if self.images.ndim != 2:
            raise ValueError(f"images must be flattened to (count, pixels), got {self.images.shape}")
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise ValueError("image pixels must be scaled to [0, 1]")
        if self.on_steps < 1 or self.off_steps < 0:
            raise ValueError("on_steps must be >= 1 and off_steps >= 0")
        if self.labels is not None and len(self.labels) != len(self.images):
            raise ValueError("labels and images differ in length")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def period(self) -> int:
        return self.on_steps + self.off_steps

    @property
    def total_steps(self) -> int:
        return self.period * len(self)

    def onset(self, index: int) -> int:
        """Global step at which presentation `index` starts."""
        return index * self.period


def presentation_drive(projection: InputProjection, images: np.ndarray, gamma: float = 1.0) -> np.ndarray:
    """Constant on-window drive gamma * W_inj u for each image, shape (..., N)."""
    return gamma * projection.mix(images)


def iter_drive_rows(projection: InputProjection, schedule: StimulusSchedule, gamma: float = 1.0) -> Iterator[np.ndarray]:
    """Yield the drive one time step at a time (T rows of length N)."""
    if len(schedule) == 0:
        raise ValueError("schedule has no images")
    zero = np.zeros(projection.n_neurons)
    for image in schedule.images:
        row = presentation_drive(projection, image, gamma)
        for _ in range(schedule.on_steps):
            yield row
        for _ in range(schedule.off_steps):
            yield zero


def drive_series(projection: InputProjection, schedule: StimulusSchedule, gamma: float = 1.0) -> np.ndarray:
    """
    Materialized drive of shape (T, N) with T = len(schedule) * period.

    Rows inside the off windows are exactly zero.
    """
    if len(schedule) == 0:
        raise ValueError("schedule has no images")
    mixed = presentation_drive(projection, schedule.images, gamma)
    series = np.zeros((len(schedule), schedule.period, projection.n_neurons))
    series[:, :schedule.on_steps, :] = mixed[:, None, :]
    return series.reshape(schedule.total_steps, projection.n_neurons)


@dataclass
class DatasetSplit:
    """Train/test images and labels with the indices they were drawn from."""
    train_images: np.ndarray
    train_labels: np.ndarray
    test_images: np.ndarray
    test_labels: np.ndarray
    train_indices: np.ndarray
    test_indices: np.ndarray
    test_source: str
    seed: int


def split_dataset(
    images: np.ndarray,
    labels: np.ndarray,
    n_train: int,
    n_test: int,
    seed: int,
    test_source: str = 'official',
    test_images: Optional[np.ndarray] = None,
    test_labels: Optional[np.ndarray] = None
) -> DatasetSplit:
    """
    Draw train and test examples without replacement.

    Args:
        images, labels: Training set
        n_train, n_test: Split sizes
        seed: Split seed
        test_source: 'official' draws the test examples from
            test_images/test_labels; 'heldout' draws them from the training
            set, disjoint from the training examples
        test_images, test_labels: Official test set

    Returns:
        DatasetSplit
    """
    rng = np.random.default_rng(seed)
    total = len(images)

    if test_source == 'heldout':
        if n_train + n_test > total:
            raise ValueError(f"need {n_train + n_test} examples, training set has {total}")
        order = rng.permutation(total)
        train_idx = np.sort(order[:n_train])
        test_idx = np.sort(order[n_train:n_train + n_test])
        pool_images, pool_labels = images, labels
    elif test_source == 'official':
        if test_images is None or test_labels is None:
            raise ValueError("test_source='official' needs test_images and test_labels")
        if n_train > total or n_test > len(test_images):
            raise ValueError(f"requested {n_train}/{n_test} examples, have {total}/{len(test_images)}")
        train_idx = np.sort(rng.choice(total, size=n_train, replace=False))
        test_idx = np.sort(rng.choice(len(test_images), size=n_test, replace=False))
        pool_images, pool_labels = test_images, test_labels
    else:
        raise ValueError(f"test_source must be 'official' or 'heldout', got {test_source!r}")

    return DatasetSplit(
        train_images=images[train_idx],
        train_labels=labels[train_idx],
        test_images=pool_images[test_idx],
        test_labels=pool_labels[test_idx],
        train_indices=train_idx,
        test_indices=test_idx,
        test_source=test_source,
        seed=int(seed),
    )
