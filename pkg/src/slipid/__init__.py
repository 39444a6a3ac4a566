"""Compliant-leg walking simulator, synthetic gait data, and identifiability diagnostics."""

from .dynamics import DoubleSupport, GaitParams, ReducedParams, SimState, SingleSupport
from .simulator import GaitFailure, InitialConditions, Trajectory, simulate

__all__ = [
    "DoubleSupport",
    "GaitFailure",
    "GaitParams",
    "InitialConditions",
    "ReducedParams",
    "SimState",
    "SingleSupport",
    "Trajectory",
    "simulate",
]
__version__ = "0.1.0"
