"""
Check the vectorized dynamics against the scalar reference update.

Drives an ideal and a heterogeneous network with random input for a number
of steps and compares every neuron's trajectory with the straight-line
scalar implementation.

Usage:
    python scripts/validate_reference.py
    python scripts/validate_reference.py --steps 5000 --grid 4 4
"""

import argparse
import sys
from pathlib import Path

import numpy as np

# Add parent to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from ikeda_snn.dynamics import EXCITABILITY_PARAMS, NeuronArrays, run
from ikeda_snn.optics import OpticsModel, synthesize_heterogeneity
from ikeda_snn.reference import scalar_step


TOLERANCE = 1e-12


def max_deviation(optics: OpticsModel, steps: int, seed: int) -> float:
    """Largest |s_vectorized - s_scalar| over all steps and neurons."""
    params = EXCITABILITY_PARAMS
    drives = np.random.default_rng(seed).uniform(0.0, 0.8, size=(steps, optics.n))
    vectorized = run(NeuronArrays.zeros(optics.n), params, optics, drives)

    worst = 0.0
    for i in range(optics.n):
        x = y = s = intensity = 0.0
        for t in range(steps):
            x, y, s, intensity = scalar_step(
                x, y, intensity, drives[t, i], params,
                illumination=optics.illumination[i],
                phase_offset=optics.phase_offset[i],
                kappa=optics.conversion[i],
            )
            worst = max(worst, abs(vectorized[t, i] - s))
    return worst


def main():
    """Compare both optics modes and report the deviation."""
    parser = argparse.ArgumentParser(description="Validate vectorized dynamics against the scalar reference")
    parser.add_argument('--steps', type=int, default=1000, help='Steps per trajectory')
    parser.add_argument('--grid', type=int, nargs=2, default=[3, 3], help='Grid rows and cols')
    parser.add_argument('--seed', type=int, default=0, help='Drive seed')
    args = parser.parse_args()

    grid = tuple(args.grid)
    models = {
        'ideal': OpticsModel.ideal(grid),
        'heterogeneous': synthesize_heterogeneity(grid, seed=args.seed),
    }

    ok = True
    for name, optics in models.items():
        deviation = max_deviation(optics, args.steps, args.seed)
        if deviation < TOLERANCE:
            print(f"✓ {name}: max deviation {deviation:.3e} over {args.steps} steps")
        else:
            print(f"❌ {name}: max deviation {deviation:.3e} exceeds {TOLERANCE:.0e}")
            ok = False

    return 0 if ok else 1


if __name__ == '__main__':
    sys.exit(main())
