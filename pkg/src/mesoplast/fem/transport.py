"""Implicit update of the dislocation density transport equation.

Row-wise, the density tensor obeys  da/dt = -curl(a x V + Lp).  Integrating
the curl by parts gives, per tensor row,

    M da/dt = -int curl(w).(a x V) - int curl(w).Lp - oint w.(n x S),

and the update is implicit in the density. Boundary conditions enter
through the surface flux n x S:

* constrained: the slipped flux vanishes on the boundary (nothing enters or
  leaves), so the surface term drops;
* unconstrained: outflow upwinds the interior density (free exit of
  content), inflow carries zero incoming density, and the Lp part of the
  flux is taken from the data on the whole boundary.

With a constant test row the curl terms vanish and, in the constrained
case, the volume integral of the density is conserved exactly. The nodal
density field is the internal state; Gauss-point values are its
interpolation, so a zero-velocity, zero-source step is a no-op. Stability
comes from a small velocity-scaled artificial diffusion (inactive at V=0).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from mesoplast.fem.grid import Grid
from mesoplast.fem.solvers import _assemble, element_laplace, element_mass, levi_civita

_LEVI = levi_civita()


class TransportSolver:
    def __init__(self, grid: Grid, stab_coeff: float = 0.5):
        self.grid = grid
        self.stab_coeff = stab_coeff
        self.M = _assemble(grid, element_mass(grid), 1)
        self.D = _assemble(grid, element_laplace(grid), 1)
        # curl of the test row per dof: curl(N_a e_c)_j = eps_jmc dN_am
        self._curl_w = np.einsum("jmc,gam->gacj", _LEVI, grid.dN_gp)

    def _advection_matrix(self, v_nodal: np.ndarray) -> sp.csr_matrix:
        """A[w, a] = int curl(w) . (a x V) dv."""
        grid = self.grid
        v_gp = grid.nodal_to_gp(v_nodal)          # (e, g, 3)
        rows, cols, vals = [], [], []
        for e in range(grid.n_elems):
            axv = np.einsum("jdl,gl->gjd", _LEVI, v_gp[e])     # (g, j, d)
            ke = np.einsum("gacj,gjd,gb->acbd", self._curl_w, axv, grid.N_gp) \
                * grid.gp_weight
            dofs = (grid.conn[e][:, None] * 3 + np.arange(3)[None, :]).ravel()
            rows.append(np.repeat(dofs, 24))
            cols.append(np.tile(dofs, 24))
            vals.append(ke.reshape(24, 24).ravel())
        n = grid.n_nodes * 3
        return sp.coo_matrix((np.concatenate(vals),
                              (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n, n)).tocsr()

    def _boundary_terms(self, v_nodal, lp_gp, mode):
        """Surface flux: matrix (density part) and rhs rows (Lp part)."""
        grid = self.grid
        n = grid.n_nodes * 3
        if mode == "constrained":
            return sp.csr_matrix((n, n)), np.zeros((3, n))
        rows, cols, vals = [], [], []
        rhs = np.zeros((3, n))
        lp_nodal = grid.gp_to_nodal(lp_gp)
        for face in ("x-", "x+", "y-", "y+", "z-", "z+"):
            for quad, area, nrm in grid.face_quads(face):
                vface = v_nodal[quad].mean(axis=0)
                vn = float(vface @ nrm)
                w = area / 4.0
                if vn > 0.0:
                    # n x (a x V) = a (n.V) - V (n.a), interior a at outflow
                    for node in quad:
                        base = node * 3
                        for c in range(3):
                            rows.append(base + c)
                            cols.append(base + c)
                            vals.append(w * vn)
                            for d in range(3):
                                rows.append(base + c)
                                cols.append(base + d)
                                vals.append(-w * vface[c] * nrm[d])
                for row_i in range(3):
                    for node in quad:
                        nxlp = np.cross(nrm, lp_nodal[node, row_i])
                        rhs[row_i, node * 3: node * 3 + 3] -= w * nxlp
        K = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        return K, rhs

    def advance(self, alpha_nodal, v_nodal, lp_gp, dt, mode="constrained",
                rtol=1e-10):
        """One implicit step; returns (updated nodal density, residual)."""
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        if mode not in ("constrained", "unconstrained"):
            raise ValueError(f"unknown boundary mode {mode!r}")
        grid = self.grid
        speed = float(np.max(np.linalg.norm(v_nodal, axis=1))) if len(v_nodal) else 0.0
        lp_norm = float(np.abs(lp_gp).max()) if lp_gp.size else 0.0
        if speed == 0.0 and lp_norm == 0.0:
            return alpha_nodal.copy(), 0.0

        expand = lambda A: sp.kron(A, sp.eye(3), format="csr")
        Msys = expand(self.M)
        A = self._advection_matrix(v_nodal)
        Kb, rhs_lp_bnd = self._boundary_terms(v_nodal, lp_gp, mode)
        h = min(grid.hx, grid.hy)
        Dart = self.stab_coeff * speed * h * expand(self.D)

        lhs = (Msys / dt + A + Kb + Dart).tocsc()
        lu = spla.splu(lhs)

        out = np.empty_like(alpha_nodal)
        resid = 0.0
        for row_i in range(3):
            a_row = alpha_nodal[:, row_i, :].ravel()
            rhs = Msys @ a_row / dt
            fe = np.einsum("gacj,egj->eac", self._curl_w, lp_gp[:, :, row_i, :]) \
                * grid.gp_weight
            for e in range(grid.n_elems):
                dofs = grid.conn[e][:, None] * 3 + np.arange(3)[None, :]
                np.add.at(rhs, dofs.ravel(), -fe[e].ravel())
            if mode == "unconstrained":
                rhs += rhs_lp_bnd[row_i]
            x = lu.solve(rhs)
            resid = max(resid, np.linalg.norm(lhs @ x - rhs)
                        / max(np.linalg.norm(rhs), 1e-300))
            out[:, row_i, :] = x.reshape(-1, 3)
        return out, resid


def advance_alpha(alpha_nodal, v_nodal, lp_gp, dt, grid: Grid,
                  mode="constrained", rtol=1e-10):
    return TransportSolver(grid).advance(alpha_nodal, v_nodal, lp_gp, dt,
                                         mode=mode, rtol=rtol)
