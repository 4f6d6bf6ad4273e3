"""Generalized rotating wave approximation for Fourier-decomposed perturbations."""

from .evolution import (
    IntegrationError,
    SelfInteractionParams,
    Trajectory,
    evolve_linear,
    evolve_modes,
    evolve_self_interaction,
    probabilities,
)
from .linalg import EigenSystem, NotHermitianError, eig_hermitian
from .neutrino import OscillationParams, transparency_setup
from .perturbation import FourierMode
from .rwa import DrivenSystem, IntegerSelection, RwaSolution, build_solution, select_integers
from .spectral import NoPeriodicityError, decompose, detect_fundamental

__version__ = "0.1.0"

__all__ = [
    "IntegrationError",
    "SelfInteractionParams",
    "Trajectory",
    "evolve_linear",
    "evolve_modes",
    "evolve_self_interaction",
    "probabilities",
    "EigenSystem",
    "NotHermitianError",
    "eig_hermitian",
    "OscillationParams",
    "transparency_setup",
    "FourierMode",
    "DrivenSystem",
    "IntegerSelection",
    "RwaSolution",
    "build_solution",
    "select_integers",
    "NoPeriodicityError",
    "decompose",
    "detect_fundamental",
]
