"""
Tests for YAML configuration loading and profiles.

Usage:
    pytest scripts/test_config.py
"""

import math
import sys
from pathlib import Path

import pytest
import yaml

sys.path.insert(0, str(Path(__file__).parent.parent))

from ikeda_snn.config import ExperimentConfig, deep_merge, load_config


ROOT = Path(__file__).parent.parent


def test_repository_config_desk_profile():
    config = load_config(ROOT / 'config.yml')

    assert config.profile == 'desk'
    assert config.optics.n_neurons == 4096
    assert config.dataset.n_train == 1000
    assert config.network.beta == pytest.approx(0.475)
    assert config.sparsity.delta_l[-1] == math.inf
    assert config.training.spsa_config().learning_rate == 'auto'


def test_repository_config_full_profile():
    config = load_config(ROOT / 'config.yml', profile='full')

    assert config.optics.mode == 'heterogeneous'
    assert config.optics.n_neurons == 40000
    assert (config.dataset.n_train, config.dataset.n_test) == (5000, 1060)
    assert config.network.gamma == pytest.approx(5.0)
    assert config.training.spsa_config().epochs == 50_000


def test_cli_overrides():
    config = load_config(ROOT / 'config.yml', seed=11, out='elsewhere')

    assert config.seed == 11
    assert config.paths.runs_root == 'elsewhere'


def test_unknown_profile_and_missing_file(tmp_path):
    with pytest.raises(ValueError, match='profile'):
        load_config(ROOT / 'config.yml', profile='cluster')
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / 'nope.yml')


def test_network_section_is_required(tmp_path):
    path = tmp_path / 'config.yml'
    path.write_text(yaml.safe_dump({'optics': {'mode': 'ideal'}}))

    with pytest.raises(ValueError, match='network'):
        load_config(path)


def test_unknown_keys_are_rejected():
    raw = yaml.safe_load((ROOT / 'config.yml').read_text())
    raw.pop('profiles')
    raw['optics']['colour'] = 'red'

    with pytest.raises(ValueError, match='optics'):
        ExperimentConfig.from_dict(raw)


def test_invalid_settings_are_rejected():
    raw = yaml.safe_load((ROOT / 'config.yml').read_text())
    raw.pop('profiles')

    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(deep_merge(raw, {'sparsity': {'delta_l': [3, 1]}}))
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(deep_merge(raw, {'training': {'trainers': ['adam']}}))
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(deep_merge(raw, {'optics': {'mode': 'holographic'}}))


def test_resolved_config_round_trips(tmp_path):
    config = load_config(ROOT / 'config.yml', profile='full')
    config.save_resolved(tmp_path / 'config.resolved.yml')

    reloaded = load_config(tmp_path / 'config.resolved.yml')

    assert reloaded.to_dict() == config.to_dict()


def test_optics_settings_build():
    config = load_config(ROOT / 'config.yml', profile='full')

    optics = config.optics.build(grid_shape=[2, 3])

    assert optics.n == 6
    assert optics.mode == 'heterogeneous'
    assert optics.nominal_kappa == pytest.approx(2.7)


def test_deep_merge_leaves_inputs_untouched():
    base = {'a': {'b': 1, 'c': 2}}
    merged = deep_merge(base, {'a': {'c': 3}})

    assert merged == {'a': {'b': 1, 'c': 3}}
    assert base == {'a': {'b': 1, 'c': 2}}
