"""Energy-efficiency optimisation for uplinks with movable BS antennas and a movable-element RIS."""

__version__ = "0.1.0"

from .config import ALL_SCHEMES, SchemeFlags, SystemConfig, ToleranceSet, load_config, trial_rng
from .metrics import SolutionState, audit, energy_efficiency

__all__ = [
    "ALL_SCHEMES", "SchemeFlags", "SystemConfig", "ToleranceSet", "load_config", "trial_rng",
    "SolutionState", "audit", "energy_efficiency",
]
