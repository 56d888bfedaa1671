"""Adaptive internal-model station keeping for a surface vessel with unknown
harmonic disturbances: model construction, certificates and simulation.
"""

from .config import ConfigError, load, load_bundled
from .sim import DivergenceError, RunLog, Scenario, ScenarioError, metrics, run

__all__ = [
    "ConfigError",
    "DivergenceError",
    "RunLog",
    "Scenario",
    "ScenarioError",
    "load",
    "load_bundled",
    "metrics",
    "run",
]
__version__ = "0.1.0"
