"""Curbside stop-position control on a signalised urban segment.

A Lax-Hopf solver of the LWR model hosts stopping vehicles as moving
internal bottlenecks; stop positions are optimised either directly through
the simulation or through statistical surrogates of its objective, inside a
rolling-horizon controller.
"""
from .fd import FundamentalDiagram, DEFAULT_FD, DomainError
from .laxhopf import (ValueCondition, ConditionSet, CountSurface, Grid, solve,
                      density_field, boundary_counts, ConfigurationError)
from .scenario import Scenario, StopVehicle, Signal, Weights, ScenarioError, bundled
from .hybrid import simulate, SimConfig, SimResult

__version__ = "0.1.0"

__all__ = [
    "FundamentalDiagram", "DEFAULT_FD", "DomainError", "ValueCondition", "ConditionSet",
    "CountSurface", "Grid", "solve", "density_field", "boundary_counts",
    "ConfigurationError", "Scenario", "StopVehicle", "Signal", "Weights",
    "ScenarioError", "bundled", "simulate", "SimConfig", "SimResult",
]
