"""
Excitable Ikeda-Map Spiking Network
===================================

Simulator for a network of slow-fast Ikeda-map neurons with an optical
nonlinearity, single-neuron characterization protocols, rank-order
sparsity gating and linear readouts for MNIST classification.

Modules:
    optics: Optical transfer, heterogeneity and DOE crosstalk
    dynamics: Network parameters, state update, rest state
    reference: Scalar single-neuron reference update
    spikes: First-spike detection, rank-order gating, latency histograms
    characterize: Excitability, latency, spike-rate and refractory protocols
    features: Input projection and presentation schedule
    respond: Batch response generation and quenched runs
    readout: NMSE loss, SPSA and ridge readouts, evaluation
    io: IDX parsing, hashing, JSONL index, response caches
    config: YAML experiment configuration with profiles
    report: Figures and summaries from a run directory
"""

__version__ = "0.1.0"

from ikeda_snn import (
    characterize, config, dynamics, features, io, optics, readout, reference, report, respond, spikes
)

__all__ = [
    "optics", "dynamics", "reference", "spikes", "characterize", "features",
    "respond", "readout", "io", "config", "report",
]
