"""
Tests for the NMSE loss, SPSA and ridge readouts.

Usage:
    pytest scripts/test_readout.py
    pytest scripts/test_readout.py -m slow
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from scipy import sparse

sys.path.insert(0, str(Path(__file__).parent.parent))

from ikeda_snn import readout
from ikeda_snn.readout import (
    ReadoutWeights, SpsaConfig, add_bias, auto_learning_rate, evaluate, nmse_loss, one_hot,
    select_regularizer, spsa_gradient, spsa_step, train_ridge, train_spsa
)


def classification_task(m=120, n=30, seed=0):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=m)
    centers = rng.standard_normal((10, n))
    features = centers[labels] + 0.3 * rng.standard_normal((m, n))
    return add_bias(features), labels


def test_nmse_normalizations():
    targets = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    features = np.ones((3, 1))
    weights = np.zeros((2, 1))

    assert nmse_loss(weights, features, targets) == pytest.approx(2.0)
    assert nmse_loss(weights, features, targets, normalization='per_class') == pytest.approx(2.25)


def test_nmse_rejects_constant_targets_and_bad_shapes():
    with pytest.raises(ValueError):
        nmse_loss(np.zeros((1, 2)), np.ones((3, 2)), np.ones((3, 1)))
    with pytest.raises(ValueError):
        nmse_loss(np.zeros((2, 3)), np.ones((3, 2)), one_hot([0, 1, 1], 2))


def test_add_bias_keeps_sparse_format():
    dense = add_bias(np.zeros((3, 2)))
    sparse_features = add_bias(sparse.csr_matrix(np.zeros((3, 2))))

    assert np.all(dense[:, -1] == 1.0)
    assert sparse.isspmatrix_csr(sparse_features)
    assert sparse_features.shape == (3, 3)


def test_one_hot_rejects_unknown_class():
    with pytest.raises(ValueError):
        one_hot([0, 10])


def test_spsa_estimator_points_along_gradient():
    rng = np.random.default_rng(0)
    target = rng.standard_normal(100)
    w = np.zeros(100)

    def loss(v):
        return float(np.sum((v - target) ** 2))

    estimates = [spsa_gradient(loss, w, 2.0 ** -10, rng)[0] for _ in range(10_000)]
    mean = np.mean(estimates, axis=0)
    exact = 2.0 * (w - target)

    cosine = mean @ exact / (np.linalg.norm(mean) * np.linalg.norm(exact))
    assert cosine > 0.95


def test_spsa_step_uses_two_loss_evaluations(monkeypatch):
    features, labels = classification_task()
    calls = []
    original = readout.nmse_loss

    def counting(*args, **kwargs):
        calls.append(1)
        return original(*args, **kwargs)

    monkeypatch.setattr(readout, 'nmse_loss', counting)
    weights = ReadoutWeights.zeros(10, features.shape[1])
    weights = spsa_step(weights, features, one_hot(labels), SpsaConfig(learning_rate=1e-3),
                        np.random.default_rng(0))

    assert len(calls) == 2
    assert weights.epoch == 1


def test_spsa_step_does_not_modify_weights():
    features, labels = classification_task()
    weights = ReadoutWeights.zeros(10, features.shape[1])

    spsa_step(weights, features, one_hot(labels), SpsaConfig(learning_rate=1e-3), np.random.default_rng(0))

    assert np.all(weights.w_out == 0.0)


def test_zero_learning_rate_keeps_weights():
    features, labels = classification_task()
    weights, history = train_spsa(features, labels, SpsaConfig(learning_rate=0.0, epochs=20, eval_every=10),
                                  seed=0, progress=False)

    assert np.all(weights.w_out == 0.0)
    assert history['train_loss'].nunique() == 1


def test_non_finite_loss_is_raised():
    features, labels = classification_task()
    features[0, 0] = np.inf

    with pytest.raises(FloatingPointError):
        spsa_step(ReadoutWeights.zeros(10, features.shape[1]), features, one_hot(labels),
                  SpsaConfig(learning_rate=1e-3), np.random.default_rng(0))


def test_spsa_config_validation():
    with pytest.raises(ValueError):
        SpsaConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        SpsaConfig(learning_rate='fast')
    with pytest.raises(ValueError):
        SpsaConfig(learning_rate=-1.0)
    with pytest.raises(ValueError):
        SpsaConfig(normalization='row')


def test_spsa_training_is_deterministic_and_learns():
    features, labels = classification_task()
    config = SpsaConfig(learning_rate='auto', epochs=2000, eval_every=500)

    first, history = train_spsa(features, labels, config, seed=7, progress=False)
    second, _ = train_spsa(features, labels, config, seed=7, progress=False)

    assert np.array_equal(first.w_out, second.w_out)
    assert history['epoch'].tolist() == [0, 500, 1000, 1500, 2000]
    assert history['train_loss'].iloc[-1] < history['train_loss'].iloc[0]


def test_resumed_training_matches_uninterrupted(tmp_path):
    features, labels = classification_task()
    checkpoint = tmp_path / 'spsa.npz'
    full = SpsaConfig(learning_rate=1e-3, epochs=40, eval_every=10, checkpoint_every=20)
    interrupted = SpsaConfig(learning_rate=1e-3, epochs=20, eval_every=10, checkpoint_every=20)

    train_spsa(features, labels, interrupted, seed=3, checkpoint_path=checkpoint, progress=False)
    resumed, resumed_history = train_spsa(features, labels, full, seed=3, checkpoint_path=checkpoint,
                                          resume=True, progress=False)
    straight, straight_history = train_spsa(features, labels, full, seed=3, progress=False)

    assert resumed.epoch == 40
    assert np.array_equal(resumed.w_out, straight.w_out)
    assert resumed_history['train_loss'].tolist() == straight_history['train_loss'].tolist()


def test_checkpoint_from_other_setup_is_refused(tmp_path):
    features, labels = classification_task()
    checkpoint = tmp_path / 'spsa.npz'
    train_spsa(features, labels, SpsaConfig(learning_rate=1e-3, epochs=10, checkpoint_every=10),
               seed=3, checkpoint_path=checkpoint, progress=False)

    with pytest.raises(ValueError, match='stale'):
        train_spsa(features, labels, SpsaConfig(learning_rate=1e-3, epochs=20), seed=4,
                   checkpoint_path=checkpoint, resume=True, progress=False)


def test_auto_learning_rate_is_positive():
    features, labels = classification_task()
    lr = auto_learning_rate(features, one_hot(labels), 10 * features.shape[1])

    assert 0 < lr < 1


def test_ridge_matches_normal_equations():
    features, labels = classification_task()
    targets = one_hot(labels)
    lam = 0.5

    weights = train_ridge(features, targets, lam)
    expected = np.linalg.solve(features.T @ features + lam * np.eye(features.shape[1]), features.T @ targets)

    assert np.allclose(weights.w_out, expected.T, atol=1e-8)


def test_ridge_sparse_equals_dense():
    features, labels = classification_task()
    features[np.abs(features) < 0.5] = 0.0
    targets = one_hot(labels)

    dense = train_ridge(features, targets, 1.0)
    from_sparse = train_ridge(sparse.csr_matrix(features), targets, 1.0)

    assert np.allclose(dense.w_out, from_sparse.w_out, atol=1e-8)


def test_ridge_singular_at_zero_regularizer():
    rng = np.random.default_rng(0)
    features = add_bias(rng.standard_normal((5, 20)))

    with pytest.raises(ValueError, match='singular'):
        train_ridge(features, one_hot(rng.integers(0, 10, 5)), 0.0)
    with pytest.raises(ValueError):
        train_ridge(features, one_hot(rng.integers(0, 10, 5)), -1.0)


def test_select_regularizer_picks_from_grid():
    features, labels = classification_task(m=200)
    grid = [1e-3, 1.0, 1e3]

    best, table = select_regularizer(features[:150], labels[:150], features[150:], labels[150:], grid=grid)

    assert best in grid
    assert table['regularizer'].tolist() == grid
    assert table['val_acc'].max() > 0.5


def test_evaluate_confusion_and_ties():
    features = np.ones((4, 3))
    labels = np.array([0, 1, 2, 0])

    result = evaluate(ReadoutWeights.zeros(10, 3), features, labels)

    assert result.accuracy == pytest.approx(0.5)
    assert result.confusion.sum() == 4
    assert result.confusion[0, 0] == 2
    assert np.all(result.predictions == 0)
    assert result.confusion_frame().shape == (10, 10)


def test_weights_round_trip(tmp_path):
    weights = ReadoutWeights(np.arange(6.0).reshape(2, 3), epoch=5, rng_seed=9)
    weights.save(tmp_path / 'w.npz')

    loaded = ReadoutWeights.load(tmp_path / 'w.npz')

    assert np.array_equal(loaded.w_out, weights.w_out)
    assert loaded.epoch == 5
    assert loaded.rng_seed == 9


@pytest.mark.slow
def test_spsa_reaches_ridge_optimum():
    rng = np.random.default_rng(0)
    raw = rng.standard_normal((200, 50))
    targets = raw @ rng.standard_normal((50, 1)) + rng.standard_normal((200, 1))
    features = add_bias(raw)
    labels = np.zeros(200, dtype=np.int64)

    optimum = nmse_loss(train_ridge(features, targets, 0.0), features, targets)
    config = SpsaConfig(learning_rate=0.2, epochs=50_000, eval_every=50_000)
    weights, _ = train_spsa(features, labels, config, seed=1, targets=targets, progress=False)

    assert nmse_loss(weights, features, targets) <= optimum * 1.05


def test_checkpoint_for_other_features_is_refused(tmp_path):
    features, labels = classification_task()
    checkpoint = tmp_path / 'spsa.npz'
    config = SpsaConfig(learning_rate=1e-3, epochs=10, checkpoint_every=10)
    train_spsa(features, labels, config, seed=3, checkpoint_path=checkpoint, data_key='dl1', progress=False)

    with pytest.raises(ValueError, match='stale'):
        train_spsa(features, labels, config, seed=3, checkpoint_path=checkpoint, resume=True,
                   data_key='dl3', progress=False)

    resumed, _ = train_spsa(features, labels, config, seed=3, checkpoint_path=checkpoint, resume=True,
                            data_key='dl1', progress=False)
    assert resumed.epoch == 10


def test_nmse_unchanged_by_inverse_feature_and_weight_scaling():
    features, labels = classification_task()
    targets = one_hot(labels)
    weights = np.random.default_rng(5).standard_normal((10, features.shape[1]))

    base = nmse_loss(weights, features, targets)
    for scale in (1e-3, 0.5, 40.0):
        assert nmse_loss(weights / scale, features * scale, targets) == pytest.approx(base, rel=1e-12)


def test_predictions_unchanged_by_positive_weight_scaling():
    features, labels = classification_task()
    weights = train_ridge(features, one_hot(labels), 1.0)
    reference = evaluate(weights, features, labels)

    for scale in (1e-4, 3.0, 250.0):
        scaled = evaluate(ReadoutWeights(weights.w_out * scale), features, labels)
        assert np.array_equal(scaled.predictions, reference.predictions)
        assert np.array_equal(scaled.confusion, reference.confusion)


def test_ridge_residual_shrinks_with_regularizer():
    rng = np.random.default_rng(2)
    features = rng.standard_normal((20, 5))
    targets = rng.standard_normal((20, 2))

    residuals = []
    for lam in (100.0, 10.0, 1.0, 0.1, 0.01, 0.0):
        weights = train_ridge(features, targets, lam)
        residuals.append(float(np.sum((features @ weights.w_out.T - targets) ** 2)))

    assert all(later <= earlier + 1e-12 for earlier, later in zip(residuals, residuals[1:]))
