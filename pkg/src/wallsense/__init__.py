"""Through-wall RF sensing toolkit.

Simulates multipath CSI through a lossy wall with an optional 1-bit
transmissive surface, optimizes the surface configuration, preprocesses the
resulting amplitude streams, and classifies synthetic human activities with a
dual-stream selective state-space model trained by a built-in autodiff engine.
"""

__version__ = "0.1.0"

from .channel import (ACTIVITY_CLASSES, CsiFrame, LinkBudget, Scene, WallModel,
                      free_space_term, received_power, synthesize_csi,
                      wall_attenuation_rate)
from .ris import CascadeChannel, PhaseMatrix, greedy_optimize, measure_power

__all__ = [
    "ACTIVITY_CLASSES",
    "CascadeChannel",
    "CsiFrame",
    "LinkBudget",
    "PhaseMatrix",
    "Scene",
    "WallModel",
    "free_space_term",
    "greedy_optimize",
    "measure_power",
    "received_power",
    "synthesize_csi",
    "wall_attenuation_rate",
    "__version__",
]
