"""Linear solves of the continuum system.

Three solvers share the grid: a least-squares div-curl solve recovering the
incompatible distortion from the dislocation density (row-wise, with
zero-normal-component boundary conditions), a Poisson solve for the plastic
potential rate (natural flux matching the slip source, pinned at one node),
and linear elasticity with the incompatibility acting as an eigenstrain
(Dirichlet elimination plus deflation of any remaining rigid modes).

Tensor conventions are row-wise: (curl A)_ij = eps_jkl d_k A_il,
(div A)_i = d_j A_ij, (A x v)_ij = eps_jkl A_ik v_l.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from mesoplast.fem.grid import Grid

_LEVI = np.zeros((3, 3, 3))
for _i, _j, _k in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
    _LEVI[_i, _j, _k] = 1.0
    _LEVI[_i, _k, _j] = -1.0


def levi_civita() -> np.ndarray:
    return _LEVI


def isotropic_stiffness(e_mod: float, nu: float) -> np.ndarray:
    """Isotropic C_ijkl acting on the full (possibly unsymmetric) distortion.

    C:(beta) = lambda tr(beta) I + mu (beta + beta^T), i.e. only the
    symmetric part of the elastic distortion produces stress.
    """
    lam = e_mod * nu / ((1 + nu) * (1 - 2 * nu))
    mu = e_mod / (2 * (1 + nu))
    eye = np.eye(3)
    C = (lam * np.einsum("ij,kl->ijkl", eye, eye)
         + mu * (np.einsum("ik,jl->ijkl", eye, eye)
                 + np.einsum("il,jk->ijkl", eye, eye)))
    return C


# ---------------------------------------------------------------------------
# assembly helpers
# ---------------------------------------------------------------------------

def _assemble(grid: Grid, ke: np.ndarray, ndof_per_node: int) -> sp.csr_matrix:
    """Assemble a constant element matrix ke over all elements."""
    nn = 8
    ndof = ndof_per_node
    rows = np.repeat(np.arange(nn * ndof), nn * ndof)
    cols = np.tile(np.arange(nn * ndof), nn * ndof)
    data, ri, ci = [], [], []
    for e in range(grid.n_elems):
        dofs = (grid.conn[e][:, None] * ndof + np.arange(ndof)[None, :]).ravel()
        ri.append(dofs[rows])
        ci.append(dofs[cols])
        data.append(ke.ravel())
    mat = sp.coo_matrix((np.concatenate(data),
                         (np.concatenate(ri), np.concatenate(ci))),
                        shape=(grid.n_nodes * ndof, grid.n_nodes * ndof))
    return mat.tocsr()


def element_mass(grid: Grid) -> np.ndarray:
    """8x8 consistent element mass matrix."""
    return np.einsum("ga,gb->ab", grid.N_gp, grid.N_gp) * grid.gp_weight


def element_laplace(grid: Grid) -> np.ndarray:
    """8x8 element stiffness for the scalar Laplacian."""
    return np.einsum("gax,gbx->ab", grid.dN_gp, grid.dN_gp) * grid.gp_weight


def element_curlcurl_divdiv(grid: Grid) -> np.ndarray:
    """24x24 element matrix of int curl(v).curl(w) + div(v) div(w)."""
    ke = np.zeros((24, 24))
    for g in range(grid.n_gp):
        dN = grid.dN_gp[g]                       # (8, 3)
        # curl operator: for dof (a, c) -> curl component i:
        # (curl v)_i = eps_icx? with v = N_a e_c: (curl v)_i = eps_ikc dN_a,k
        Bc = np.zeros((3, 24))
        Bd = np.zeros(24)
        for a in range(8):
            for c in range(3):
                col = a * 3 + c
                for i in range(3):
                    Bc[i, col] = sum(_LEVI[i, k, c] * dN[a, k] for k in range(3))
                Bd[col] = dN[a, c]
        ke += (Bc.T @ Bc + np.outer(Bd, Bd)) * grid.gp_weight
    return ke


def element_elasticity(grid: Grid, C: np.ndarray) -> np.ndarray:
    """24x24 element stiffness int grad(w) : C : grad(u)."""
    ke = np.zeros((24, 24))
    for g in range(grid.n_gp):
        dN = grid.dN_gp[g]
        B = np.zeros((3, 3, 24))                 # beta_ij per dof
        for a in range(8):
            for c in range(3):
                B[c, :, a * 3 + c] = dN[a]
        ke += np.einsum("ijp,ijkl,klq->pq", B, C, B) * grid.gp_weight
    return ke


def _apply_dirichlet(K: sp.csr_matrix, rhs: np.ndarray, fixed: dict):
    """Eliminate fixed dofs symmetrically (dof -> value)."""
    K = K.tolil()
    idx = np.fromiter(fixed.keys(), dtype=int)
    vals = np.fromiter((fixed[i] for i in idx), dtype=float)
    if len(idx):
        rhs -= K[:, idx].toarray() @ vals
        K[idx, :] = 0.0
        K[:, idx] = 0.0
        K[idx, idx] = 1.0
        rhs[idx] = vals
    return K.tocsr(), rhs


def _cg(K, rhs, rtol=1e-12, deflate=None, label="solve"):
    """Jacobi-preconditioned CG with optional null-space deflation."""
    diag = K.diagonal()
    diag[diag == 0.0] = 1.0
    M = sp.diags(1.0 / diag)
    if deflate is not None and deflate.shape[1] > 0:
        Z = deflate

        def project(x):
            return x - Z @ (Z.T @ x)
        rhs = project(rhs)
        Kop = spla.LinearOperator(K.shape,
                                  matvec=lambda x: project(K @ project(x)))
        Mop = spla.LinearOperator(K.shape, matvec=lambda x: project(M @ x))
        x, info = spla.cg(Kop, rhs, rtol=rtol, atol=0.0, maxiter=20000, M=Mop)
        x = project(x)
    else:
        x, info = spla.cg(K, rhs, rtol=rtol, atol=0.0, maxiter=20000, M=M)
    if info != 0:
        raise RuntimeError(f"{label}: CG failed to converge (info={info})")
    resid = np.linalg.norm(K @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
    return x, resid


# ---------------------------------------------------------------------------
# chi: curl chi = alpha, div chi = 0, chi . n = 0
# ---------------------------------------------------------------------------

class ChiSolver:
    """Least-squares div-curl solver, one vector solve per tensor row."""

    def __init__(self, grid: Grid):
        self.grid = grid
        self.K = _assemble(grid, element_curlcurl_divdiv(grid), 3)
        # essential BC: normal component zero on each boundary face
        fixed = {}
        for face, comp in (("x-", 0), ("x+", 0), ("y-", 1), ("y+", 1),
                           ("z-", 2), ("z+", 2)):
            for n in grid.face_nodes(face):
                fixed[n * 3 + comp] = 0.0
        self.fixed = fixed
        K, _ = _apply_dirichlet(self.K.copy(), np.zeros(grid.n_nodes * 3), fixed)
        self.K_bc = K

    def rhs_row(self, alpha_row_gp: np.ndarray) -> np.ndarray:
        """int curl(w) . a dv from Gauss-point row data (n_elems, 8, 3)."""
        grid = self.grid
        rhs = np.zeros(grid.n_nodes * 3)
        # (curl w)_i for dof (a,c) = eps_ikc dN_ak ; contract with a_i
        # per element: f_{a,c} = sum_g w eps_ikc dN_ak a_i
        curl_map = np.einsum("ikc,gak->gaci", _LEVI, grid.dN_gp)  # (8gp,8a,3c,3i)
        fe = np.einsum("gaci,egi->eac", curl_map, alpha_row_gp) * grid.gp_weight
        for e in range(grid.n_elems):
            dofs = (grid.conn[e][:, None] * 3 + np.arange(3)[None, :])
            np.add.at(rhs, dofs.ravel(), fe[e].ravel())
        return rhs

    def solve(self, alpha_gp: np.ndarray, rtol=1e-10):
        """alpha at Gauss points (n_elems, 8, 3, 3) -> nodal chi (n_nodes, 3, 3)."""
        grid = self.grid
        chi = np.zeros((grid.n_nodes, 3, 3))
        resid = 0.0
        for row in range(3):
            rhs = self.rhs_row(alpha_gp[:, :, row, :])
            for d in self.fixed:
                rhs[d] = 0.0
            x, r = _cg(self.K_bc, rhs, rtol=rtol, label=f"chi row {row}")
            chi[:, row, :] = x.reshape(-1, 3)
            resid = max(resid, r)
        return chi, resid


def solve_chi(alpha_gp: np.ndarray, grid: Grid, rtol=1e-10):
    return ChiSolver(grid).solve(alpha_gp, rtol=rtol)


# ---------------------------------------------------------------------------
# z rate: div grad zdot = div(S), natural BC (grad zdot - S) . n = 0
# ---------------------------------------------------------------------------

class ZSolver:
    def __init__(self, grid: Grid):
        self.grid = grid
        K = _assemble(grid, element_laplace(grid), 1)
        self.pin = 0
        K = K.tolil()
        K[self.pin, :] = 0.0
        K[:, self.pin] = 0.0
        K[self.pin, self.pin] = 1.0
        self.K_bc = K.tocsr()

    def solve(self, slip_gp: np.ndarray, rtol=1e-10):
        """Slip distortion S at Gauss points -> nodal zdot (n_nodes, 3).

        Weak form: int grad(w) . grad(zdot_i) = int grad(w) . S_i  per row,
        which carries the natural condition (grad zdot - S) . n = 0, so a
        spatially uniform S yields grad zdot = S exactly.
        """
        grid = self.grid
        zdot = np.zeros((grid.n_nodes, 3))
        resid = 0.0
        for row in range(3):
            fe = np.einsum("gax,egx->ea", grid.dN_gp, slip_gp[:, :, row, :]) \
                * grid.gp_weight
            rhs = np.zeros(grid.n_nodes)
            for e in range(grid.n_elems):
                np.add.at(rhs, grid.conn[e], fe[e])
            rhs[self.pin] = 0.0
            x, r = _cg(self.K_bc, rhs, rtol=rtol, label=f"zdot row {row}")
            zdot[:, row] = x
            resid = max(resid, r)
        return zdot, resid


def solve_z_rate(alpha_gp, v_gp, lp_gp, grid: Grid, rtol=1e-10):
    """Convenience wrapper building S = alpha x V + Lp at Gauss points."""
    slip = slip_distortion(alpha_gp, v_gp, lp_gp)
    return ZSolver(grid).solve(slip, rtol=rtol)


def slip_distortion(alpha_gp, v_gp, lp_gp) -> np.ndarray:
    """S = alpha x V + Lp at Gauss points (row-wise cross product)."""
    return np.einsum("jkl,egik,egl->egij", _LEVI, alpha_gp, v_gp) + lp_gp


# ---------------------------------------------------------------------------
# equilibrium: div T = 0, T = C : (grad(u - z) + chi)
# ---------------------------------------------------------------------------

class BoundaryConditions:
    """Dirichlet components plus face tractions.

    dirichlet: list of (node_ids, component, value or per-node values)
    tractions: list of (face name, traction vector function of position)
    """

    def __init__(self, dirichlet=(), tractions=()):
        self.dirichlet = list(dirichlet)
        self.tractions = list(tractions)

    def fixed_dofs(self) -> dict:
        fixed = {}
        for nodes, comp, value in self.dirichlet:
            vals = np.broadcast_to(np.asarray(value, float), (len(nodes),))
            for n, v in zip(nodes, vals):
                fixed[int(n) * 3 + comp] = float(v)
        return fixed


class EquilibriumSolver:
    def __init__(self, grid: Grid, C: np.ndarray):
        self.grid = grid
        self.C = C
        self.K = _assemble(grid, element_elasticity(grid, C), 3)

    def _rigid_modes(self, fixed: dict) -> np.ndarray:
        """Orthonormal basis of rigid modes not constrained by Dirichlet data."""
        grid = self.grid
        x = grid.nodes - grid.nodes.mean(axis=0)
        modes = []
        for c in range(3):
            m = np.zeros((grid.n_nodes, 3))
            m[:, c] = 1.0
            modes.append(m.ravel())
        for axis in range(3):
            w = np.zeros(3)
            w[axis] = 1.0
            m = np.cross(np.broadcast_to(w, x.shape), x)
            modes.append(m.ravel())
        Z = np.column_stack(modes)
        if fixed:
            idx = np.fromiter(fixed.keys(), dtype=int)
            # keep only modes that vanish on the constrained dofs
            keep = [c for c in range(Z.shape[1])
                    if np.abs(Z[idx, c]).max() < 1e-12 * max(np.abs(Z[:, c]).max(), 1)]
            Z = Z[:, keep]
        if Z.shape[1]:
            Z, _ = np.linalg.qr(Z)
        return Z

    def solve(self, chi_nodal, z_nodal, bcs: BoundaryConditions, rtol=1e-12):
        """Returns (u nodal, T at Gauss points, scaled residual)."""
        grid = self.grid
        # rhs: int grad(w) : C : (grad z - chi) dv  + tractions
        gz = grid.nodal_gradient_at_gp(z_nodal)          # (e, g, 3, 3) rows grad z_i
        chi_gp = grid.nodal_to_gp(chi_nodal)
        eigen = gz - chi_gp
        rhs = np.zeros(grid.n_nodes * 3)
        sig_eig = np.einsum("ijkl,egkl->egij", self.C, eigen)
        fe = np.einsum("gax,egix->eai", grid.dN_gp, sig_eig) * grid.gp_weight
        for e in range(grid.n_elems):
            dofs = grid.conn[e][:, None] * 3 + np.arange(3)[None, :]
            np.add.at(rhs, dofs.ravel(), fe[e].ravel())

        for face, tfun in bcs.tractions:
            for quad, area, normal in grid.face_quads(face):
                centre = grid.nodes[quad].mean(axis=0)
                t = np.asarray(tfun(centre), float)
                for n in quad:
                    rhs[n * 3: n * 3 + 3] += t * area / 4.0

        fixed = bcs.fixed_dofs()
        K, rhs = _apply_dirichlet(self.K.copy(), rhs, fixed)
        Z = self._rigid_modes(fixed)
        x, resid = _cg(K, rhs, rtol=rtol,
                       deflate=Z if Z.shape[1] else None, label="equilibrium")
        u = x.reshape(-1, 3)
        gu = grid.nodal_gradient_at_gp(u)
        T = np.einsum("ijkl,egkl->egij", self.C, gu - eigen)
        return u, T, resid


def solve_equilibrium(chi_nodal, z_nodal, bcs, grid: Grid, C, rtol=1e-12):
    return EquilibriumSolver(grid, C).solve(chi_nodal, z_nodal, bcs, rtol=rtol)
