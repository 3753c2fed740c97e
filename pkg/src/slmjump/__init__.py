"""Strict local martingales with jumps via first-passage filtration shrinkage.

Simulation of continuous strict local martingales, their optional projection
onto filtrations generated by first-passage events, and statistical checks of
the resulting jump structure, martingale defects and compensator intensities.
"""

from .rng import RngSpec
from .stochastics import SamplePath, SdeModel, TimeGrid

__all__ = ["RngSpec", "SamplePath", "SdeModel", "TimeGrid"]
__version__ = "0.1.0"
