"""Block-wise coupling of the dislocation dynamics boxes to the continuum
solver: stress averaging and extrapolation, per-block time averaging,
projection of the slip inputs onto Gauss points, dissipation and limit-load
guards, and the adaptive increment controller."""

from mesoplast.coupling.blocks import (
    Block,
    BlockGrid,
    block_average_stress,
    extrapolate_block_stresses,
    project_block_fields,
    pta_block_update,
)
from mesoplast.coupling.guards import dissipation_guard, limit_load_check
from mesoplast.coupling.controller import TimeStepController
from mesoplast.coupling.driver import CoupledConfig, run_coupled

__all__ = [
    "Block", "BlockGrid", "block_average_stress", "extrapolate_block_stresses",
    "project_block_fields", "pta_block_update", "dissipation_guard",
    "limit_load_check", "TimeStepController", "CoupledConfig", "run_coupled",
]
