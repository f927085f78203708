"""Structured trilinear-brick grid with 2x2x2 Gauss quadrature.

One element through the thickness; faces are named x-, x+, y-, y+, z-, z+.
Shape-function derivative tables are precomputed once (the grid is uniform,
so they are shared by every element).
"""

from __future__ import annotations

import numpy as np

_GP1 = 1.0 / np.sqrt(3.0)
# local node coordinates of the 8-node brick, ordering (i, j, k) nested
_LOCAL = np.array([[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
                   [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]], float)
_GAUSS = np.array([[sx, sy, sz] for sz in (-_GP1, _GP1)
                   for sy in (-_GP1, _GP1) for sx in (-_GP1, _GP1)])


def shape_functions(xi):
    """Trilinear shape values at local coordinates xi (8,)."""
    xi = np.asarray(xi, float)
    return 0.125 * ((1 + _LOCAL[:, 0] * xi[0]) * (1 + _LOCAL[:, 1] * xi[1])
                    * (1 + _LOCAL[:, 2] * xi[2]))


def shape_gradients(xi):
    """Local-coordinate gradients dN/dxi at xi, shape (8, 3)."""
    xi = np.asarray(xi, float)
    g = np.empty((8, 3))
    for a in range(8):
        la = _LOCAL[a]
        g[a, 0] = 0.125 * la[0] * (1 + la[1] * xi[1]) * (1 + la[2] * xi[2])
        g[a, 1] = 0.125 * la[1] * (1 + la[0] * xi[0]) * (1 + la[2] * xi[2])
        g[a, 2] = 0.125 * la[2] * (1 + la[0] * xi[0]) * (1 + la[1] * xi[1])
    return g


class Grid:
    """Uniform nx x ny x nz brick grid over [0,Lx] x [0,Ly] x [0,Lz]."""

    def __init__(self, nx: int, ny: int, lx: float, ly: float,
                 thickness: float, nz: int = 1):
        if min(nx, ny, nz) < 1 or min(lx, ly, thickness) <= 0:
            raise ValueError("grid extents must be positive")
        self.nx, self.ny, self.nz = nx, ny, nz
        self.lx, self.ly, self.lz = lx, ly, thickness
        self.hx, self.hy, self.hz = lx / nx, ly / ny, thickness / nz
        self.n_nodes = (nx + 1) * (ny + 1) * (nz + 1)
        self.n_elems = nx * ny * nz
        self.n_gp = 8

        def nid(i, j, k):
            return i * ((ny + 1) * (nz + 1)) + j * (nz + 1) + k
        self.node_id = nid
        coords = np.empty((self.n_nodes, 3))
        for i in range(nx + 1):
            for j in range(ny + 1):
                for k in range(nz + 1):
                    coords[nid(i, j, k)] = (i * self.hx, j * self.hy, k * self.hz)
        self.nodes = coords

        conn = np.empty((self.n_elems, 8), dtype=int)
        eid = 0
        self.elem_index = {}
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    conn[eid] = [nid(i, j, k), nid(i + 1, j, k),
                                 nid(i + 1, j + 1, k), nid(i, j + 1, k),
                                 nid(i, j, k + 1), nid(i + 1, j, k + 1),
                                 nid(i + 1, j + 1, k + 1), nid(i, j + 1, k + 1)]
                    self.elem_index[(i, j, k)] = eid
                    eid += 1
        self.conn = conn

        # jacobian is diagonal and constant: dx/dxi = h/2
        jac = np.array([self.hx / 2, self.hy / 2, self.hz / 2])
        self.detj = float(np.prod(jac))
        self.gp_weight = self.detj  # unit Gauss weights in each direction

        self.gp_local = _GAUSS
        self.N_gp = np.array([shape_functions(x) for x in _GAUSS])      # (8gp, 8a)
        self.dN_gp = np.array([shape_gradients(x) / jac for x in _GAUSS])  # (8gp, 8a, 3)

        # global Gauss point coordinates, (n_elems, 8, 3)
        self.gp_coords = np.einsum("ga,eax->egx", self.N_gp, self.nodes[self.conn])

        # element centroids
        self.elem_centers = self.nodes[self.conn].mean(axis=1)
        self.elem_volume = self.hx * self.hy * self.hz

    # -- face utilities ----------------------------------------------------

    def face_nodes(self, face: str) -> np.ndarray:
        """Node ids on a named boundary face."""
        nx, ny, nz = self.nx, self.ny, self.nz
        out = []
        rng_i = {"x-": [0], "x+": [nx]}.get(face, range(nx + 1))
        rng_j = {"y-": [0], "y+": [ny]}.get(face, range(ny + 1))
        rng_k = {"z-": [0], "z+": [nz]}.get(face, range(nz + 1))
        if face not in ("x-", "x+", "y-", "y+", "z-", "z+"):
            raise ValueError(f"unknown face {face!r}")
        for i in rng_i:
            for j in rng_j:
                for k in rng_k:
                    out.append(self.node_id(i, j, k))
        return np.array(sorted(out), dtype=int)

    def boundary_nodes(self) -> np.ndarray:
        faces = [self.face_nodes(f) for f in ("x-", "x+", "y-", "y+", "z-", "z+")]
        return np.unique(np.concatenate(faces))

    def face_quads(self, face: str):
        """Element faces on a boundary: list of (4 node ids, area, outward n)."""
        nx, ny, nz = self.nx, self.ny, self.nz
        nid = self.node_id
        quads = []
        if face in ("y-", "y+"):
            j = 0 if face == "y-" else ny
            n = np.array([0.0, -1.0 if face == "y-" else 1.0, 0.0])
            area = self.hx * self.hz
            for i in range(nx):
                for k in range(nz):
                    quads.append((np.array([nid(i, j, k), nid(i + 1, j, k),
                                            nid(i + 1, j, k + 1), nid(i, j, k + 1)]),
                                  area, n))
        elif face in ("x-", "x+"):
            i = 0 if face == "x-" else nx
            n = np.array([-1.0 if face == "x-" else 1.0, 0.0, 0.0])
            area = self.hy * self.hz
            for j in range(ny):
                for k in range(nz):
                    quads.append((np.array([nid(i, j, k), nid(i, j + 1, k),
                                            nid(i, j + 1, k + 1), nid(i, j, k + 1)]),
                                  area, n))
        else:
            k = 0 if face == "z-" else nz
            n = np.array([0.0, 0.0, -1.0 if face == "z-" else 1.0])
            area = self.hx * self.hy
            for i in range(nx):
                for j in range(ny):
                    quads.append((np.array([nid(i, j, k), nid(i + 1, j, k),
                                            nid(i + 1, j + 1, k), nid(i, j + 1, k)]),
                                  area, n))
        return quads

    # -- projections ---------------------------------------------------------

    def gp_to_nodal(self, field_gp: np.ndarray) -> np.ndarray:
        """Lumped L2 projection of Gauss-point data to nodes.

        Conserves the volume integral exactly (partition of unity).
        """
        comp = field_gp.shape[2:]
        num = np.zeros((self.n_nodes,) + comp)
        den = np.zeros(self.n_nodes)
        w = self.gp_weight
        contrib = np.einsum("ga,eg...->ea...", self.N_gp, field_gp) * w
        wts = self.N_gp.sum(axis=0) * w                     # (8,)
        for e in range(self.n_elems):
            num[self.conn[e]] += contrib[e]
            den[self.conn[e]] += wts
        den[den == 0.0] = 1.0
        return num / den.reshape((-1,) + (1,) * len(comp))

    def nodal_to_gp(self, field_nodal: np.ndarray) -> np.ndarray:
        """Evaluate a nodal field at all Gauss points: (n_elems, 8, ...)."""
        return np.einsum("ga,ea...->eg...", self.N_gp, field_nodal[self.conn])

    def nodal_gradient_at_gp(self, field_nodal: np.ndarray) -> np.ndarray:
        """Gradient of a nodal field at Gauss points: (..., 3) appended."""
        return np.einsum("gax,ea...->eg...x", self.dN_gp, field_nodal[self.conn])

    def integrate_gp(self, field_gp: np.ndarray):
        """Volume integral of Gauss-point data."""
        return field_gp.sum(axis=(0, 1)) * self.gp_weight
