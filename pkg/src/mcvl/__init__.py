"""Visual Monte Carlo localization: dense RootSIFT + VLAD retrieval feeding a particle filter."""

from mcvl._backend import BACKEND
from mcvl.geometry import Pose6D

__version__ = "0.1.0"
__all__ = ["BACKEND", "Pose6D", "__version__"]
