"""Laser-coherence toolkit: Heisenberg-limited laser models and their numerics.

Builds the sin^4 laser model family, computes beam coherence and Glauber
correlation functions from sparse superoperator algebra, and evaluates the
closed-form bounds (Heisenberg / SQL / heterodyne MSE / G-asymmetry) and the
circuit-QED control synthesis that go with them.
"""

__version__ = "0.1.0"

from .errors import NumericalError, ValidationError
from .model import LaserModel, build_model, custom_model, phase_covariance_check

__all__ = [
    "__version__",
    "LaserModel",
    "build_model",
    "custom_model",
    "phase_covariance_check",
    "ValidationError",
    "NumericalError",
]
