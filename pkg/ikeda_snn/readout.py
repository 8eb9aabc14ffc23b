"""
Readout training: SPSA black-box descent and ridge regression.

Feature matrices carry a trailing bias column of ones (see add_bias) and
may be dense arrays or scipy sparse matrices. Weights have shape
(C, N + 1); class scores are F @ W^T.
"""

import json
from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import sparse
from sklearn.linear_model import Ridge
from sklearn.metrics import confusion_matrix
from tqdm.auto import tqdm

from ikeda_snn.features import largest_singular_value
from ikeda_snn.io import hash_config, load_cache, save_cache


N_CLASSES = 10
NORMALIZATIONS = ('total', 'per_class')
SINGULAR_CONDITION = 1e12

Matrix = Union[np.ndarray, sparse.spmatrix]


def add_bias(features: Matrix) -> Matrix:
    """Append a column of ones (sparse input stays sparse CSR)."""
    if sparse.issparse(features):
        ones = sparse.csr_matrix(np.ones((features.shape[0], 1)))
        return sparse.hstack([features, ones], format='csr')
    features = np.asarray(features, dtype=np.float64)
    return np.hstack([features, np.ones((features.shape[0], 1))])


def one_hot(labels: Sequence[int], n_classes: int = N_CLASSES) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in 0..{n_classes - 1}")
    targets = np.zeros((labels.size, n_classes))
    targets[np.arange(labels.size), labels] = 1.0
    return targets


@dataclass
class ReadoutWeights:
    """Output matrix W_out of shape (C, N + 1), bias in the last column."""
    w_out: np.ndarray
    epoch: int = 0
    rng_seed: Optional[int] = None

    def __post_init__(self):
        self.w_out = np.asarray(self.w_out, dtype=np.float64)
        if self.w_out.ndim != 2 or self.w_out.shape[1] < 1:
            raise ValueError(f"w_out must have shape (C, N + 1), got {self.w_out.shape}")
        if not np.all(np.isfinite(self.w_out)):
            raise ValueError("w_out contains non-finite entries")

    @classmethod
    def zeros(cls, n_classes: int, n_features: int, rng_seed: Optional[int] = None) -> 'ReadoutWeights':
        """Zero weights for n_features inputs (bias column included)."""
        return cls(np.zeros((n_classes, n_features)), epoch=0, rng_seed=rng_seed)

    @property
    def n_classes(self) -> int:
        return self.w_out.shape[0]

    def scores(self, features: Matrix) -> np.ndarray:
        _check_features(features, self.w_out.shape[1])
        return np.asarray(features @ self.w_out.T)

    def save(self, path: Path, metadata: Optional[Dict[str, Any]] = None):
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(path, w_out=self.w_out, epoch=self.epoch,
                            rng_seed=-1 if self.rng_seed is None else self.rng_seed,
                            metadata=json.dumps(metadata or {}))

    @classmethod
    def load(cls, path: Path) -> 'ReadoutWeights':
        with np.load(path, allow_pickle=False) as data:
            seed = int(data['rng_seed'])
            return cls(w_out=data['w_out'], epoch=int(data['epoch']), rng_seed=None if seed < 0 else seed)


def _check_features(features: Matrix, n_columns: int):
    if features.ndim != 2 or features.shape[1] != n_columns:
        raise ValueError(f"features have shape {features.shape}, expected (M, {n_columns})")


def _as_matrix(weights: Union[ReadoutWeights, np.ndarray]) -> np.ndarray:
    return weights.w_out if isinstance(weights, ReadoutWeights) else np.asarray(weights, dtype=np.float64)


def target_denominator(targets: np.ndarray, normalization: str = 'total') -> float:
    """
    NMSE normalizer: sum of squared deviations of the targets.

    'total' centers on the grand mean of the target matrix, 'per_class'
    on each column's mean.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if normalization == 'total':
        centered = targets - targets.mean()
    elif normalization == 'per_class':
        centered = targets - targets.mean(axis=0, keepdims=True)
    else:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}, got {normalization!r}")
    den = float(np.sum(centered ** 2))
    if den == 0.0:
        raise ValueError("targets have zero variance; NMSE is undefined")
    return den


def nmse_loss(
    weights: Union[ReadoutWeights, np.ndarray],
    features: Matrix,
    targets: np.ndarray,
    normalization: str = 'total'
) -> float:
    """
    Normalized mean square error sum||F W^T - Y||^2 / sum||Y - Ybar||^2.

    Args:
        weights: ReadoutWeights or (C, N + 1) array
        features: (M, N + 1) with bias column
        targets: (M, C), one-hot for classification
        normalization: 'total' or 'per_class' (see target_denominator)
    """
    w = _as_matrix(weights)
    targets = np.asarray(targets, dtype=np.float64)
    _check_features(features, w.shape[1])
    if targets.shape != (features.shape[0], w.shape[0]):
        raise ValueError(f"targets have shape {targets.shape}, expected {(features.shape[0], w.shape[0])}")

    residual = np.asarray(features @ w.T) - targets
    return float(np.sum(residual ** 2)) / target_denominator(targets, normalization)


# ----------------------------------------------------------------------
# SPSA

@dataclass
class SpsaConfig:
    """
    SPSA hyperparameters.

    learning_rate may be 'auto': 1 / (d * lambda_max) with d the number of
    weights and lambda_max the largest curvature of the NMSE.
    """
    epsilon: float = 2.0 ** -10
    learning_rate: Union[float, str] = 1e-4
    epochs: int = 10_000
    batch: Optional[int] = None
    eval_every: int = 100
    normalization: str = 'total'
    checkpoint_every: Optional[int] = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if isinstance(self.learning_rate, str):
            if self.learning_rate != 'auto':
                raise ValueError(f"learning_rate must be a number or 'auto', got {self.learning_rate!r}")
        elif not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 0 or self.eval_every < 1:
            raise ValueError("epochs must be >= 0 and eval_every >= 1")
        if self.batch is not None and self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def rademacher(rng: np.random.Generator, shape: Tuple[int, ...]) -> np.ndarray:
    """Entries +1/-1 with equal probability."""
    return rng.integers(0, 2, size=shape).astype(np.float64) * 2.0 - 1.0


def spsa_gradient(
    loss_fn: Callable[[np.ndarray], float],
    w: np.ndarray,
    epsilon: float,
    rng: np.random.Generator
) -> Tuple[np.ndarray, float, float]:
    """
    Two-evaluation simultaneous perturbation gradient estimate.

    g = (L(w + eps*Lambda) - L(w - eps*Lambda)) / (2 * eps * VAR(Lambda)) * Lambda

    VAR(Lambda) is the second moment of the drawn entries about the
    Rademacher mean 0, i.e. mean(Lambda^2) = 1. `w` is never modified.

    Returns:
        (g, loss_plus, loss_minus)
    """
    w = np.asarray(w, dtype=np.float64)
    lam = rademacher(rng, w.shape)
    var = float(np.mean(lam ** 2))
    loss_plus = loss_fn(w + epsilon * lam)
    loss_minus = loss_fn(w - epsilon * lam)
    g = ((loss_plus - loss_minus) / (2.0 * epsilon * var)) * lam
    return g, loss_plus, loss_minus


def spsa_step(
    weights: ReadoutWeights,
    features: Matrix,
    targets: np.ndarray,
    config: SpsaConfig,
    rng: np.random.Generator,
    learning_rate: Optional[float] = None
) -> ReadoutWeights:
    """
    One SPSA epoch: exactly two loss evaluations, then W <- W - lr * g.

    Args:
        weights: Current weights (not modified)
        features, targets: Training data
        config: Hyperparameters
        rng: Source of the batch draw and Lambda
        learning_rate: Resolved step size (defaults to config.learning_rate)

    Raises:
        FloatingPointError: if a perturbed loss is not finite
    """
    lr = config.learning_rate if learning_rate is None else learning_rate
    if isinstance(lr, str):
        raise ValueError("resolve learning_rate='auto' with auto_learning_rate before stepping")

    if config.batch is not None and config.batch < features.shape[0]:
        rows = np.sort(rng.choice(features.shape[0], size=config.batch, replace=False))
        features, targets = features[rows], targets[rows]

    def loss_fn(w: np.ndarray) -> float:
        return nmse_loss(w, features, targets, config.normalization)

    g, loss_plus, loss_minus = spsa_gradient(loss_fn, weights.w_out, config.epsilon, rng)
    if not (np.isfinite(loss_plus) and np.isfinite(loss_minus)):
        raise FloatingPointError(
            f"non-finite SPSA loss at epoch {weights.epoch + 1}: L+={loss_plus}, L-={loss_minus}"
        )
    return ReadoutWeights(weights.w_out - lr * g, epoch=weights.epoch + 1, rng_seed=weights.rng_seed)


def auto_learning_rate(features: Matrix, targets: np.ndarray, n_weights: int, normalization: str = 'total') -> float:
    """1 / (d * lambda_max) with lambda_max = 2 sigma_max(F)^2 / denominator."""
    sigma = largest_singular_value(features)
    curvature = 2.0 * sigma ** 2 / target_denominator(targets, normalization)
    if curvature == 0.0:
        raise ValueError("features are all zero; cannot scale the learning rate")
    return 1.0 / (n_weights * curvature)


def accuracy(weights: ReadoutWeights, features: Matrix, labels: Sequence[int]) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        return float('nan')
    return float(np.mean(np.argmax(weights.scores(features), axis=1) == labels))


def _checkpoint_key(config: SpsaConfig, seed: int, shape: Tuple[int, ...], lr: float,
                    data_key: Optional[str] = None) -> str:
    settings = config.to_dict()
    settings.pop('epochs')
    settings.pop('checkpoint_every')
    return hash_config({'spsa': settings, 'seed': seed, 'shape': list(shape), 'learning_rate': lr,
                        'data': data_key})


def save_checkpoint(path: Path, weights: ReadoutWeights, rng: np.random.Generator,
                    history: List[Dict[str, Any]], key: str):
    """Weights, RNG state and history so far, keyed by the training setup."""
    save_cache(path, {'w_out': weights.w_out}, key, {
        'epoch': weights.epoch,
        'rng_seed': weights.rng_seed,
        'rng_state': rng.bit_generator.state,
        'history': history,
    })


def load_checkpoint(path: Path, key: str) -> Tuple[ReadoutWeights, np.random.Generator, List[Dict[str, Any]]]:
    """Restore a checkpoint; refuses checkpoints from a different setup."""
    arrays, meta = load_cache(path, expected_key=key)
    rng = np.random.default_rng()
    rng.bit_generator.state = meta['rng_state']
    weights = ReadoutWeights(arrays['w_out'], epoch=int(meta['epoch']), rng_seed=meta['rng_seed'])
    return weights, rng, meta['history']


def train_spsa(
    features: Matrix,
    labels: Sequence[int],
    config: SpsaConfig,
    seed: int,
    targets: Optional[np.ndarray] = None,
    test: Optional[Tuple[Matrix, Sequence[int]]] = None,
    checkpoint_path: Optional[Path] = None,
    resume: bool = False,
    data_key: Optional[str] = None,
    progress: bool = True
) -> Tuple[ReadoutWeights, pd.DataFrame]:
    """
    Train W_out from zeros with SPSA.

    Args:
        features: Training features with bias column
        labels: Training labels (used for accuracy and default one-hot targets)
        config: SPSA hyperparameters
        seed: Seeds the Lambda/batch generator; same seed, same history
        targets: Explicit regression targets (defaults to one-hot labels)
        test: Optional (features, labels) scored at every evaluation
        checkpoint_path: Where to write checkpoints every config.checkpoint_every epochs
        resume: Continue from checkpoint_path if it exists
        data_key: Identifies the feature set; a checkpoint written for other
            features is refused on resume
        progress: Show a progress bar

    Returns:
        (weights, history) with columns epoch, train_loss, train_acc, test_acc
    """
    labels = np.asarray(labels, dtype=np.int64)
    if targets is None:
        targets = one_hot(labels)
    targets = np.asarray(targets, dtype=np.float64)
    n_weights = targets.shape[1] * features.shape[1]

    lr = config.learning_rate
    if lr == 'auto':
        lr = auto_learning_rate(features, targets, n_weights, config.normalization)
        print(f"  SPSA learning rate (auto): {lr:.3e}")

    key = _checkpoint_key(config, seed, features.shape, float(lr), data_key)
    weights = ReadoutWeights.zeros(targets.shape[1], features.shape[1], rng_seed=seed)
    rng = np.random.default_rng(seed)
    history: List[Dict[str, Any]] = []

    if resume and checkpoint_path is not None and Path(checkpoint_path).exists():
        weights, rng, history = load_checkpoint(checkpoint_path, key)
        print(f"✓ Resumed SPSA from epoch {weights.epoch}")

    def record():
        loss = nmse_loss(weights, features, targets, config.normalization)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite training loss at epoch {weights.epoch}")
        history.append({
            'epoch': weights.epoch,
            'train_loss': loss,
            'train_acc': accuracy(weights, features, labels),
            'test_acc': accuracy(weights, *test) if test is not None else float('nan'),
        })

    if not history:
        record()

    for _ in tqdm(range(weights.epoch, config.epochs), desc='SPSA', disable=not progress):
        weights = spsa_step(weights, features, targets, config, rng, learning_rate=lr)
        if weights.epoch % config.eval_every == 0 or weights.epoch == config.epochs:
            record()
        if checkpoint_path is not None and config.checkpoint_every and weights.epoch % config.checkpoint_every == 0:
            save_checkpoint(checkpoint_path, weights, rng, history, key)

    return weights, pd.DataFrame(history, columns=['epoch', 'train_loss', 'train_acc', 'test_acc'])


# ----------------------------------------------------------------------
# Ridge regression

def train_ridge(
    features: Matrix,
    targets: np.ndarray,
    regularizer: float,
    rng_seed: Optional[int] = None
) -> ReadoutWeights:
    """
    Closed-form W = (F^T F + lambda I)^-1 F^T Y via scikit-learn's Cholesky solver.

    The bias column is regularized like every other column.

    Raises:
        ValueError: for lambda < 0, or lambda = 0 with a singular F^T F
    """
    if regularizer < 0:
        raise ValueError(f"regularizer must be >= 0, got {regularizer}")
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim != 2 or targets.shape[0] != features.shape[0]:
        raise ValueError(f"targets have shape {targets.shape}, expected ({features.shape[0]}, C)")

    if regularizer == 0:
        n_samples, n_features = features.shape
        if n_features > n_samples:
            raise ValueError(f"F^T F is singular ({n_features} features > {n_samples} examples); use lambda > 0")
        gram = features.T @ features
        gram = gram.toarray() if sparse.issparse(gram) else np.asarray(gram)
        if np.linalg.cond(gram) > SINGULAR_CONDITION:
            raise ValueError("F^T F is singular at lambda = 0; use lambda > 0")

    model = Ridge(alpha=regularizer, fit_intercept=False, solver='cholesky')
    model.fit(features, targets)
    coef = np.atleast_2d(model.coef_)
    return ReadoutWeights(coef, epoch=0, rng_seed=rng_seed)


def select_regularizer(
    train_features: Matrix,
    train_labels: Sequence[int],
    val_features: Matrix,
    val_labels: Sequence[int],
    grid: Sequence[float] = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)
) -> Tuple[float, pd.DataFrame]:
    """
    Pick lambda by validation accuracy (ties broken by validation loss).

    Returns:
        (best lambda, table with regularizer, val_acc, val_loss)
    """
    targets = one_hot(train_labels)
    val_targets = one_hot(val_labels)
    rows = []
    for lam in grid:
        weights = train_ridge(train_features, targets, lam)
        rows.append({
            'regularizer': float(lam),
            'val_acc': accuracy(weights, val_features, val_labels),
            'val_loss': nmse_loss(weights, val_features, val_targets),
        })
    table = pd.DataFrame(rows)
    best = table.sort_values(['val_acc', 'val_loss'], ascending=[False, True], kind='stable').iloc[0]
    return float(best['regularizer']), table


# ----------------------------------------------------------------------
# Evaluation

@dataclass
class Evaluation:
    """Accuracy, confusion matrix (rows true, columns predicted) and predictions."""
    accuracy: float
    confusion: np.ndarray
    predictions: np.ndarray = field(repr=False)

    def confusion_frame(self) -> pd.DataFrame:
        classes = range(self.confusion.shape[0])
        return pd.DataFrame(self.confusion, index=pd.Index(classes, name='true'),
                            columns=pd.Index(classes, name='predicted'))


def evaluate(weights: ReadoutWeights, features: Matrix, labels: Sequence[int]) -> Evaluation:
    """
    Argmax classification; ties go to the lowest class index.
    """
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.argmax(weights.scores(features), axis=1)
    confusion = confusion_matrix(labels, predictions, labels=np.arange(weights.n_classes))
    total = confusion.sum()
    acc = float(np.trace(confusion) / total) if total else float('nan')
    return Evaluation(accuracy=acc, confusion=confusion, predictions=predictions)
