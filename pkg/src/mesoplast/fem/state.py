"""Continuum field state and its initialization.

The state carries the dislocation density tensor (nodal evolution variable
plus its Gauss-point interpolation), the incompatible distortion, the
plastic potential, displacement, stress, and the slip inputs at Gauss
points, together with the latest scaled solver residuals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mesoplast.fem.grid import Grid
from mesoplast.fem.solvers import (
    BoundaryConditions,
    ChiSolver,
    EquilibriumSolver,
    ZSolver,
    isotropic_stiffness,
)


@dataclass
class MfdmState:
    grid: Grid
    alpha_nodal: np.ndarray      # (n_nodes, 3, 3), 1/m
    alpha_gp: np.ndarray         # (n_elems, 8, 3, 3)
    chi_nodal: np.ndarray        # (n_nodes, 3, 3)
    z_nodal: np.ndarray          # (n_nodes, 3), m
    u_nodal: np.ndarray          # (n_nodes, 3), m
    T_gp: np.ndarray             # (n_elems, 8, 3, 3), Pa
    Lp_gp: np.ndarray            # (n_elems, 8, 3, 3), 1/s
    V_gp: np.ndarray             # (n_elems, 8, 3), m/s
    time: float = 0.0
    residuals: dict = field(default_factory=dict)

    def copy(self) -> "MfdmState":
        return MfdmState(self.grid, self.alpha_nodal.copy(), self.alpha_gp.copy(),
                         self.chi_nodal.copy(), self.z_nodal.copy(),
                         self.u_nodal.copy(), self.T_gp.copy(), self.Lp_gp.copy(),
                         self.V_gp.copy(), self.time, dict(self.residuals))

    def mean_stress(self) -> np.ndarray:
        return self.T_gp.mean(axis=(0, 1))

    def alpha_norm_gp(self) -> np.ndarray:
        return np.linalg.norm(self.alpha_gp, axis=(2, 3))

    def deviatoric_stress_norm_gp(self) -> np.ndarray:
        tr = np.trace(self.T_gp, axis1=2, axis2=3)
        dev = self.T_gp - tr[..., None, None] / 3.0 * np.eye(3)
        return np.linalg.norm(dev, axis=(2, 3))


class MfdmSolvers:
    """Shared assembled operators for one grid + elasticity."""

    def __init__(self, grid: Grid, e_mod: float, nu: float):
        self.grid = grid
        self.C = isotropic_stiffness(e_mod, nu)
        self.chi = ChiSolver(grid)
        self.z = ZSolver(grid)
        self.equilibrium = EquilibriumSolver(grid, self.C)


def zero_state(grid: Grid) -> MfdmState:
    return MfdmState(
        grid=grid,
        alpha_nodal=np.zeros((grid.n_nodes, 3, 3)),
        alpha_gp=np.zeros((grid.n_elems, 8, 3, 3)),
        chi_nodal=np.zeros((grid.n_nodes, 3, 3)),
        z_nodal=np.zeros((grid.n_nodes, 3)),
        u_nodal=np.zeros((grid.n_nodes, 3)),
        T_gp=np.zeros((grid.n_elems, 8, 3, 3)),
        Lp_gp=np.zeros((grid.n_elems, 8, 3, 3)),
        V_gp=np.zeros((grid.n_elems, 8, 3)),
    )


def ecdd_init(alpha0, bcs: BoundaryConditions, solvers: MfdmSolvers) -> MfdmState:
    """Initial state for a given dislocation density and external loading.

    Solves the incompatibility for the initial density, then one quasi-static
    equilibrium (zero slip inputs) carrying both the internal residual
    stress of the density field and the external boundary conditions; with a
    zero density this reduces to the purely elastic preload state.
    """
    grid = solvers.grid
    state = zero_state(grid)
    if alpha0 is not None:
        alpha0 = np.asarray(alpha0, float)
        if alpha0.shape == (grid.n_nodes, 3, 3):
            state.alpha_nodal = alpha0.copy()
        elif alpha0.shape == (grid.n_elems, 8, 3, 3):
            state.alpha_nodal = grid.gp_to_nodal(alpha0)
        else:
            raise ValueError("alpha0 must be nodal or Gauss-point shaped")
        state.alpha_gp = grid.nodal_to_gp(state.alpha_nodal)

    if np.any(state.alpha_gp):
        state.chi_nodal, r_chi = solvers.chi.solve(state.alpha_gp)
        state.residuals["chi"] = r_chi
    state.u_nodal, state.T_gp, r_eq = solvers.equilibrium.solve(
        state.chi_nodal, state.z_nodal, bcs)
    state.residuals["equilibrium"] = r_eq
    return state
