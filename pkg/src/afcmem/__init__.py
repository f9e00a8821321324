"""Impedance-matched cavity atomic frequency comb memory: forward model and fitting."""

__version__ = "0.1.0"

from .cavity import (  # noqa: E402
    CavityParams,
    cavity_response,
    find_impedance_match,
    free_spectral_range,
    pinned_reference_cavity,
    reference_cavity,
    tmyag_profile,
)
from .dispersion import dispersive_index, kk_real_index  # noqa: E402
from .fitting import ReflectivityTrace, fit_cavity, fit_comb, synthesize_trace  # noqa: E402
from .lm import FitResult, least_squares  # noqa: E402
from .spectra import CombParams, FrequencyGrid, InhomogeneousProfile, embed_comb, make_grid  # noqa: E402
from .timedomain import simulate_echo  # noqa: E402

__all__ = [
    "CavityParams",
    "CombParams",
    "FitResult",
    "FrequencyGrid",
    "InhomogeneousProfile",
    "ReflectivityTrace",
    "cavity_response",
    "dispersive_index",
    "embed_comb",
    "find_impedance_match",
    "fit_cavity",
    "fit_comb",
    "free_spectral_range",
    "kk_real_index",
    "least_squares",
    "make_grid",
    "pinned_reference_cavity",
    "simulate_echo",
    "synthesize_trace",
    "reference_cavity",
    "tmyag_profile",
]
