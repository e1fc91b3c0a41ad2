"""Simulation of molecular Talbot-Lau interference lithography.

Beam and velocity selection, the quantum fringe pattern and its classical
counterpart, drifting deposition, synthetic STM images and the fringe fit.
"""

from .errors import AnalysisError, ConfigError, DomainError, MolithoError, NumericalError
from .physics import (
    GratingSpec,
    InterferometerGeometry,
    MoleculeSpec,
    de_broglie_wavelength,
    talbot_length,
)
from .quantum import FringeSpectrum, Interferometer, PatternCurve

__version__ = "0.1.0"

__all__ = [
    "AnalysisError", "ConfigError", "DomainError", "MolithoError", "NumericalError",
    "GratingSpec", "InterferometerGeometry", "MoleculeSpec", "de_broglie_wavelength",
    "talbot_length", "FringeSpectrum", "Interferometer", "PatternCurve",
]
