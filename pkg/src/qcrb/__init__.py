"""Saturability analysis for the multiparameter quantum Cramér-Rao bound.

Given a parameterized family of density matrices, this package computes
symmetric logarithmic derivatives and the quantum Fisher information
matrix, decides whether the single-copy QCRB can be saturated by a
projective measurement, constructs and verifies optimal POVMs, and
demonstrates saturation statistically by Monte Carlo sampling.
"""

__version__ = "0.1.0"

from . import blocks, conditions, config, errors, estimate, linalg, model, povm, sld

__all__ = [
    "__version__",
    "blocks",
    "conditions",
    "config",
    "errors",
    "estimate",
    "linalg",
    "model",
    "povm",
    "sld",
]
