"""
Tests for the optical transfer model.

Usage:
    pytest scripts/test_optics.py
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from ikeda_snn.optics import (
    DEFAULT_DOE_KERNEL, OpticsModel, gaussian_profile, synthesize_heterogeneity
)


def test_ideal_transfer_is_squared_sine():
    optics = OpticsModel.ideal((2, 2), kappa=2.7)
    x = np.array([0.0, 0.3, -1.2, 2.0])

    expected = np.sin(2 * np.pi * x / 2.7) ** 2
    assert np.allclose(optics.transfer(x), expected)
    assert np.allclose(optics.intensity(optics.field(x)), expected)


def test_field_is_signed():
    optics = OpticsModel.ideal((1, 2))
    field = optics.field(np.array([0.5, 2.0]))

    assert field[0] > 0
    assert field[1] < 0


def test_powered_off_gives_zero_field_and_intensity():
    optics = synthesize_heterogeneity((3, 3), seed=0).set_power(False)
    x = np.linspace(-1, 1, 9)

    assert np.all(optics.field(x) == 0.0)
    assert np.all(optics.intensity(np.ones(9)) == 0.0)
    assert np.allclose(optics.transfer(x), synthesize_heterogeneity((3, 3), seed=0).transfer(x))


def test_compensated_device_reproduces_ideal():
    hetero = synthesize_heterogeneity((4, 4), seed=5, phase_jitter=0.1, kappa_jitter=0.05)
    compensated = OpticsModel(
        mode=hetero.mode,
        illumination=hetero.illumination,
        phase_offset=hetero.phase_offset,
        conversion=hetero.conversion,
        grid_shape=hetero.grid_shape,
        compensated=True,
        recipe=hetero.recipe,
    )
    ideal = OpticsModel.ideal((4, 4))
    x = np.random.default_rng(0).uniform(-3, 3, size=(5, 16))

    assert np.max(np.abs(compensated.transfer(x) - ideal.transfer(x))) < 1e-12
    assert np.max(np.abs(compensated.intensity(compensated.field(x)) - ideal.intensity(ideal.field(x)))) < 1e-12


def test_heterogeneity_is_seeded():
    a = synthesize_heterogeneity((5, 5), seed=3)
    b = synthesize_heterogeneity((5, 5), seed=3)
    c = synthesize_heterogeneity((5, 5), seed=4)

    assert np.array_equal(a.phase_offset, b.phase_offset)
    assert np.array_equal(a.conversion, b.conversion)
    assert not np.array_equal(a.phase_offset, c.phase_offset)
    assert a.mode == 'heterogeneous'


def test_degenerate_heterogeneity_is_ideal():
    optics = synthesize_heterogeneity((3, 3), seed=1, gaussian_width=float('inf'),
                                      phase_jitter=0.0, kappa_jitter=0.0)
    ideal = OpticsModel.ideal((3, 3))
    x = np.linspace(-2, 2, 9)

    assert optics.mode == 'ideal'
    assert np.array_equal(optics.transfer(x), ideal.transfer(x))


def test_gaussian_profile_peaks_at_one():
    profile = gaussian_profile((7, 7), 0.3)

    assert profile.max() == pytest.approx(1.0)
    assert profile[24] == pytest.approx(1.0)
    assert profile[0] < profile[24]


def test_doe_coupling_spreads_a_point_field():
    optics = OpticsModel.ideal((5, 5)).with_coupling()
    field = np.zeros(25)
    field[12] = 1.0

    grid = optics.intensity(field).reshape(5, 5)
    scale = 1.0 / DEFAULT_DOE_KERNEL.sum() ** 2

    assert grid[2, 2] == pytest.approx(scale)
    assert grid[1, 2] == pytest.approx(0.01 * scale)
    assert grid[1, 1] == pytest.approx(0.0025 * scale)
    assert grid[0, 0] == 0.0


def test_doe_coupling_zero_pads_edges():
    optics = OpticsModel.ideal((4, 4)).with_coupling()
    field = np.zeros(16)
    field[0] = 1.0

    grid = optics.intensity(field).reshape(4, 4)

    assert np.count_nonzero(grid) == 4
    assert grid[0, 1] == pytest.approx(grid[1, 0])


def test_doe_coupling_batched_equals_single():
    optics = synthesize_heterogeneity((4, 4), seed=2).with_coupling()
    fields = np.random.default_rng(0).uniform(-1, 1, size=(3, 16))

    batched = optics.intensity(fields)
    for b in range(3):
        assert np.allclose(batched[b], optics.intensity(fields[b]))


def test_intensity_never_exceeds_one():
    optics = OpticsModel.ideal((6, 6)).with_coupling()
    x = np.random.default_rng(1).uniform(-5, 5, size=(20, 36))

    assert optics.intensity(optics.field(x)).max() <= 1.0 + 1e-12


def test_quantized_intensity_uses_256_levels():
    optics = OpticsModel.ideal((1, 8), quantize_8bit=True)
    levels = optics.intensity(optics.field(np.linspace(0, 1, 8))) * 255

    assert np.allclose(levels, np.round(levels))


def test_invalid_models_are_rejected():
    with pytest.raises(ValueError):
        OpticsModel.ideal((2, 2)).with_coupling(np.ones((2, 2)))
    with pytest.raises(ValueError):
        OpticsModel(mode='bogus', illumination=np.ones(4), phase_offset=np.zeros(4),
                    conversion=np.ones(4), grid_shape=(2, 2))
    with pytest.raises(ValueError):
        OpticsModel(mode='ideal', illumination=np.full(4, 1.5), phase_offset=np.zeros(4),
                    conversion=np.ones(4), grid_shape=(2, 2))
    with pytest.raises(ValueError):
        OpticsModel.ideal((2, 2)).transfer(np.zeros(3))


def test_recipe_round_trip(tmp_path):
    optics = synthesize_heterogeneity((3, 4), seed=9).with_coupling()
    optics.save(tmp_path / 'optics.json')

    loaded = OpticsModel.load(tmp_path / 'optics.json')

    assert loaded.mode == 'doe-coupled'
    assert np.array_equal(loaded.conversion, optics.conversion)
    assert np.array_equal(loaded.doe_kernel, optics.doe_kernel)


def compensated_copy(hetero):
    return OpticsModel(
        mode=hetero.mode,
        illumination=hetero.illumination,
        phase_offset=hetero.phase_offset,
        conversion=hetero.conversion,
        grid_shape=hetero.grid_shape,
        compensated=True,
        recipe=hetero.recipe,
    )


def test_compensated_device_keeps_nominal_phase():
    hetero = synthesize_heterogeneity((4, 4), seed=6, phase_jitter=0.1, kappa_jitter=0.05, phase=0.4)
    compensated = compensated_copy(hetero)
    ideal = OpticsModel.ideal((4, 4), phase=0.4)
    x = np.random.default_rng(1).uniform(-3, 3, size=(5, 16))

    assert np.max(np.abs(compensated.transfer(x) - ideal.transfer(x))) < 1e-12
    assert np.max(np.abs(compensated.intensity(compensated.field(x)) - ideal.intensity(ideal.field(x)))) < 1e-12


def test_ideal_intensity_is_transfer_with_phase():
    optics = OpticsModel.ideal((3, 3), kappa=2.7, phase=0.25)
    x = np.random.default_rng(2).uniform(-4, 4, size=(7, 9))

    expected = np.sin(2 * np.pi * (x + 0.25) / 2.7) ** 2
    assert np.max(np.abs(optics.intensity(optics.field(x)) - expected)) < 1e-12
    assert np.max(np.abs(optics.transfer(x) - expected)) < 1e-12


def test_quantization_error_is_half_a_level():
    exact = OpticsModel.ideal((1, 64))
    quantized = OpticsModel.ideal((1, 64), quantize_8bit=True)
    x = np.random.default_rng(3).uniform(-3, 3, size=(50, 64))

    error = np.abs(quantized.intensity(quantized.field(x)) - exact.intensity(exact.field(x)))
    assert error.max() <= 1.0 / 510 + 1e-15


def test_power_round_trip_restores_outputs():
    optics = synthesize_heterogeneity((3, 3), seed=4).with_coupling()
    x = np.random.default_rng(4).uniform(-2, 2, size=(4, 9))

    restored = optics.set_power(False).set_power(True)

    assert np.array_equal(restored.field(x), optics.field(x))
    assert np.array_equal(restored.intensity(restored.field(x)), optics.intensity(optics.field(x)))


def test_kappa_draws_center_on_nominal():
    optics = synthesize_heterogeneity((200, 200), seed=12, kappa_jitter=0.05)
    sigma = 0.05 * 2.7

    assert abs(optics.conversion.mean() - 2.7) < 3 * sigma / np.sqrt(40000)
    assert optics.conversion.std() == pytest.approx(sigma, rel=0.02)
