"""
Quick smoke suite for the ikeda_snn package.

Runs a few fast sanity checks, then the pytest suite in scripts/.

Usage:
    python scripts/test_package.py
    python scripts/test_package.py --slow
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))


def check_imports():
    """Check that all modules import correctly."""
    print("Checking imports...")

    try:
        from ikeda_snn import characterize, config, dynamics, features, io, optics, readout, respond, spikes
        print("✓ All modules imported successfully")
        return True
    except Exception as e:
        print(f"❌ Import failed: {e}")
        return False


def check_rest_state():
    """Check that the single-neuron rest state converges below threshold."""
    print("\nChecking rest state...")

    from ikeda_snn.dynamics import EXCITABILITY_PARAMS, rest_state
    from ikeda_snn.optics import OpticsModel

    state, info = rest_state(EXCITABILITY_PARAMS, OpticsModel.ideal((1, 1)))
    if not info.converged:
        print(f"❌ Rest state did not converge (residual {info.residual:.3e})")
        return False

    print(f"✓ Converged in {info.steps} steps: s={state.s[0]:.6f}, y={state.y[0]:.4f}")
    return True


def check_dataset():
    """Report whether the MNIST files named in config.yml are present."""
    print("\nChecking dataset...")

    from ikeda_snn.config import load_config

    config = load_config(Path(__file__).parent.parent / 'config.yml')
    missing = [p for p in (config.dataset.train_images, config.dataset.test_images) if not Path(p).exists()]
    if missing:
        print(f"⚠️  MNIST not found: {missing[0]} (MNIST commands will be unavailable)")
        return True

    print("✓ MNIST files present")
    return True


def main():
    """Run smoke checks, then pytest."""
    print("=" * 60)
    print("ikeda_snn Test Suite")
    print("=" * 60)

    checks = [
        check_imports,
        check_rest_state,
        check_dataset,
    ]

    results = [check() for check in checks]

    print("\n" + "=" * 60)
    passed = sum(results)
    total = len(results)
    print(f"Smoke checks: {passed}/{total} passed")
    if passed != total:
        print("⚠️  Smoke checks failed, skipping pytest")
        return 1

    import pytest

    args = [str(Path(__file__).parent), '-q']
    if '--slow' in sys.argv[1:]:
        args += ['-m', 'slow']
    return int(pytest.main(args))


if __name__ == '__main__':
    sys.exit(main())
