"""Pseudospectral Galerkin solver and energy diagnostics for the
multi-dimensional Aw-Rascle traffic model on the periodic torus."""

from .model import DomainError, Params
from .solver import SolverError, State, picard_step, run
from .diagnostics import record, relative_energy, gronwall_check, jensen_gap
from .initial import make_initial, perturb

__all__ = [
    "DomainError",
    "Params",
    "SolverError",
    "State",
    "picard_step",
    "run",
    "record",
    "relative_energy",
    "gronwall_check",
    "jensen_gap",
    "make_initial",
    "perturb",
]

__version__ = "0.1.0"
