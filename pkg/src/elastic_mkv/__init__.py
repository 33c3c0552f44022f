"""Simulation and solver suite for loss feedback through elastic boundaries.

Particle systems with cascade resolution, fixed-point solvers for the
loss function, a finite-difference solver for the associated free
boundary PDE, and config-driven experiment runners.
"""

__version__ = "0.1.0"

from .paths import (  # noqa: F401
    GridPath,
    LossCurve,
    TimeGrid,
    jump_detect,
    levy_metric,
    skorokhod_reflect,
    sup_distance,
)
from .sampling import (  # noqa: F401
    Gamma,
    InitialLaw,
    ModelParams,
    PointMass,
    RngStream,
    ShiftedExponential,
    Uniform,
    mean_initial,
    sample_exponential,
    sample_initial,
)
