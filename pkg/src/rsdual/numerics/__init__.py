"""Periodic one-dimensional solvers, lift quadrature and Monte-Carlo expectations."""

from .grid import Field, Grid, GridError
from .lift import LiftGrid, lift_eval
from .montecarlo import MCResult, mc_expectation, second_order_oracle
from .noise import MollifierSpec, ResolutionError, mollify, sample_white_noise
from .solvers import (
    BlowUp,
    SimConfig,
    duality_pairing,
    solve_dual_adjoint,
    solve_dual_pde,
    solve_forward,
    solve_tangent,
)

__all__ = [
    "BlowUp",
    "Field",
    "Grid",
    "GridError",
    "LiftGrid",
    "MCResult",
    "MollifierSpec",
    "ResolutionError",
    "SimConfig",
    "duality_pairing",
    "lift_eval",
    "mc_expectation",
    "mollify",
    "sample_white_noise",
    "second_order_oracle",
    "solve_dual_adjoint",
    "solve_dual_pde",
    "solve_forward",
    "solve_tangent",
]
