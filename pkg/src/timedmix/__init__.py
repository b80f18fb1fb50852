"""Delay-characteristic design and analysis for timed mixes."""

from .characteristic import (
    ConstraintSet,
    DelayCharacteristic,
    GammaStats,
    SpectralView,
    dft,
    gamma_stats,
    mean_delay,
    project_to_constraints,
    validate,
)
from .traffic import SendingProfile, TrafficTrace, gen_poisson_traffic, gen_zipf_profile, sharpness

__version__ = "0.1.0"
