"""Photon statistics of atoms transiting a driven cavity: model, simulator, correlator."""
from .correlations import (
    CorrelationCurve,
    EmissionRate,
    coherence_time,
    emission_rate,
    field_correlation,
    g1_atom,
    g2_atom,
    intensity_correlation,
)
from .correlator import CorrelationHistogram, cross_correlate, merge, naive_correlate
from .ensemble import (
    EnsembleCurve,
    EnvelopeParams,
    ScalingFit,
    calibrate_atom_number,
    classify,
    compose_g2,
    crossover_atom_number,
    envelope,
    fano_factor,
    fit_hyperbolic,
)
from .montecarlo import SimMode, TransitConfig, expected_g2, simulate
from .quantum import SystemParams, build_lindblad, evolve, load_params, steady_state
from .stream import ClickStream, read_stream, write_stream

__version__ = "0.1.0"
