"""Structured-brick finite element solver for the mesoscale dislocation
density PDE system: transport of the dislocation density tensor,
incompatibility recovery, plastic potential and stress equilibrium."""

from mesoplast.fem.grid import Grid
from mesoplast.fem.state import MfdmState, ecdd_init
from mesoplast.fem.solvers import solve_chi, solve_equilibrium, solve_z_rate
from mesoplast.fem.transport import advance_alpha

__all__ = ["Grid", "MfdmState", "ecdd_init", "solve_chi", "solve_equilibrium",
           "solve_z_rate", "advance_alpha"]
