"""Atomic-norm demixing of two modulated point-source spectra.

One measurement vector holds the sum of two spectrally sparse signals,
the second multiplied entrywise by a known random unit-modulus
modulation. The package recovers both via atomic-norm minimization,
localizes sources from the dual polynomials, constructs and validates
the interpolating dual certificate, and benchmarks estimation error
against the Cramer-Rao bound.
"""

from . import certificate, crb, dualpoly, experiments, linalg, model, solver
from .exceptions import AtomdemixError

__all__ = [
    "AtomdemixError",
    "certificate",
    "crb",
    "dualpoly",
    "experiments",
    "linalg",
    "model",
    "solver",
]

__version__ = "0.1.0"
