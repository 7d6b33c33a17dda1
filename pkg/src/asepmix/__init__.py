"""asepmix: biased card shuffling and segment exclusion process toolkit.

Simulation (event-driven grand coupling, infinite-line comparisons), exact
finite-state analysis (uniformization, spectral gaps, mixing times), explicit
eigenfunctions with a contraction bound, and a Godunov solver for the
macroscopic density with its closed-form limit profiles.
"""

__version__ = "0.1.0"

from .chains import (HeightFunction, ModelParams, ParticleConfig, Permutation,
                     area, equilibrium_asep, equilibrium_shuffle, frontier,
                     height, inversions, leq, project, reconstruct, unheight,
                     vee, wedge)
from .errors import CapExceeded, NumericsError

__all__ = [
    "__version__",
    "ModelParams", "Permutation", "ParticleConfig", "HeightFunction",
    "inversions", "area", "height", "unheight", "project", "reconstruct",
    "leq", "wedge", "vee", "frontier",
    "equilibrium_shuffle", "equilibrium_asep",
    "CapExceeded", "NumericsError",
]
