"""Stress-averaging blocks, their dislocation boxes, and field projection.

The domain is partitioned into an n x m grid of blocks, each owning the
elements inside it, one dislocation network evolved by time averaging, and
its current slip inputs. Block values are turned into continuous fields by
an L2 projection on the trilinear block mesh, then interpolated to element
nodes with the containing block's shape functions and finally to Gauss
points with the element's own.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from mesoplast.dd.materials import JunctionParams, MaterialParams
from mesoplast.dd.network import DislocationNetwork
from mesoplast.fem.grid import Grid, shape_functions
from mesoplast.pta import FixedLoadResult, PtaParams, coarse_rate, norm_of, run_fixed_load_average


@dataclass
class Block:
    index: int
    ij: tuple
    lo: np.ndarray               # block corner (3,)
    hi: np.ndarray
    elements: np.ndarray         # element ids inside
    network: DislocationNetwork | None = None
    Lp: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    V: np.ndarray = field(default_factory=lambda: np.zeros(3))
    Lp_rate: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    V_rate: np.ndarray = field(default_factory=lambda: np.zeros(3))
    limit_flagged: bool = False
    noise_floor: float = 0.0
    noise_floor_v: float = 0.0
    last_T_lo: np.ndarray | None = None   # extrapolated level of the last increment


class BlockGrid:
    """Partition of the element grid into nb_x x nb_y blocks."""

    def __init__(self, grid: Grid, nb_x: int, nb_y: int):
        if grid.nx % nb_x or grid.ny % nb_y:
            raise ValueError("block layout must divide the element grid")
        self.grid = grid
        self.nb_x, self.nb_y = nb_x, nb_y
        self.bx, self.by = grid.lx / nb_x, grid.ly / nb_y
        per_x, per_y = grid.nx // nb_x, grid.ny // nb_y
        blocks = []
        idx = 0
        for bj in range(nb_y):
            for bi in range(nb_x):
                elems = []
                for i in range(bi * per_x, (bi + 1) * per_x):
                    for j in range(bj * per_y, (bj + 1) * per_y):
                        for k in range(grid.nz):
                            elems.append(grid.elem_index[(i, j, k)])
                lo = np.array([bi * self.bx, bj * self.by, 0.0])
                hi = np.array([(bi + 1) * self.bx, (bj + 1) * self.by, grid.lz])
                blocks.append(Block(index=idx, ij=(bi, bj), lo=lo, hi=hi,
                                    elements=np.array(sorted(elems), dtype=int)))
                idx += 1
        self.blocks = blocks
        covered = np.concatenate([b.elements for b in blocks])
        assert len(np.unique(covered)) == grid.n_elems

        # trilinear block mesh for the projection
        self.n_bnodes = (nb_x + 1) * (nb_y + 1) * 2

        def bnid(i, j, k):
            return i * ((nb_y + 1) * 2) + j * 2 + k
        self.bnode_id = bnid
        self._mass = self._block_mass_matrix()
        self._lu = spla.splu(self._mass.tocsc())

    def _block_corner_nodes(self, block: Block):
        bi, bj = block.ij
        n = self.bnode_id
        return [n(bi, bj, 0), n(bi + 1, bj, 0), n(bi + 1, bj + 1, 0),
                n(bi, bj + 1, 0), n(bi, bj, 1), n(bi + 1, bj, 1),
                n(bi + 1, bj + 1, 1), n(bi, bj + 1, 1)]

    def _block_mass_matrix(self):
        # consistent mass on the block mesh (same trilinear bricks)
        from mesoplast.fem.grid import _GAUSS  # local quadrature points
        vol8 = self.bx * self.by * self.grid.lz / 8.0
        Ns = np.array([shape_functions(x) for x in _GAUSS])
        me = np.einsum("ga,gb->ab", Ns, Ns) * vol8
        rows, cols, vals = [], [], []
        for b in self.blocks:
            nodes = self._block_corner_nodes(b)
            for a in range(8):
                for c in range(8):
                    rows.append(nodes[a])
                    cols.append(nodes[c])
                    vals.append(me[a, c])
        return sp.coo_matrix((vals, (rows, cols)),
                             shape=(self.n_bnodes, self.n_bnodes)).tocsr()

    def block_of_point(self, x) -> Block:
        bi = min(int(x[0] / self.bx), self.nb_x - 1)
        bj = min(int(x[1] / self.by), self.nb_y - 1)
        return self.blocks[bj * self.nb_x + bi]

    def project(self, values: np.ndarray) -> np.ndarray:
        """Piecewise-block values -> continuous field at element Gauss points.

        values has shape (n_blocks, ...); returns (n_elems, 8, ...).
        """
        grid = self.grid
        comp_shape = values.shape[1:]
        ncomp = int(np.prod(comp_shape)) if comp_shape else 1
        vflat = values.reshape(len(self.blocks), ncomp)

        # rhs of the L2 projection: int N_R * value dv, exact for constants
        rhs = np.zeros((self.n_bnodes, ncomp))
        vol8 = self.bx * self.by * grid.lz / 8.0
        from mesoplast.fem.grid import _GAUSS
        Ns = np.array([shape_functions(x) for x in _GAUSS])
        wN = Ns.sum(axis=0) * vol8                    # int N_a over the block
        for b in self.blocks:
            nodes = self._block_corner_nodes(b)
            rhs[nodes] += np.outer(wN, vflat[b.index])
        nodal = np.column_stack([self._lu.solve(rhs[:, c]) for c in range(ncomp)])

        # evaluate at element nodes via the containing block, then at GPs
        elem_nodal = np.zeros((grid.n_nodes, ncomp))
        counts = np.zeros(grid.n_nodes)
        for b in self.blocks:
            bnodes = self._block_corner_nodes(b)
            centre = 0.5 * (b.lo + b.hi)
            half = 0.5 * (b.hi - b.lo)
            for e in b.elements:
                for node in grid.conn[e]:
                    if counts[node] > 0:
                        continue
                    xi = (grid.nodes[node] - centre) / half
                    xi = np.clip(xi, -1.0, 1.0)
                    elem_nodal[node] = shape_functions(xi) @ nodal[bnodes]
                    counts[node] = 1.0
        gp = grid.nodal_to_gp(elem_nodal.reshape((grid.n_nodes,) + comp_shape))
        return gp


def block_average_stress(T_gp: np.ndarray, block: Block, grid: Grid) -> np.ndarray:
    """Volume-weighted Gauss-point average of the stress over a block."""
    if len(block.elements) == 0:
        raise ValueError("block owns no elements")
    return T_gp[block.elements].mean(axis=(0, 1))


def extrapolate_block_stresses(T_k: np.ndarray, T_km1: np.ndarray,
                               delta_star: float, dt_prev: float,
                               stress_floor: float = 0.5e6):
    """Stress pair handed to the block's averaging run.

    The early level is the current block average; the late level is the
    linear extrapolation over the averaging window. If the two levels
    differ by less than the resolution floor, the late level is rescaled so
    the difference is exactly the floor and the resulting rates must be
    divided by the returned magnification. A zero difference carries no
    rate information: the magnification is infinite and rates are zeroed.
    """
    if dt_prev <= 0.0:
        raise ValueError("dt_prev must be positive")
    T_k = np.asarray(T_k, float)
    t_lo = T_k.copy()
    t_hi = T_k + (delta_star / dt_prev) * (T_k - np.asarray(T_km1, float))
    diff = norm_of(t_hi - t_lo)
    if diff >= stress_floor:
        return t_lo, t_hi, 1.0
    if diff == 0.0:
        # documented fallback direction: along the current stress if any,
        # else uniaxial; the caller zeroes the rates (mag = inf)
        direction = t_lo / norm_of(t_lo) if norm_of(t_lo) > 0 else None
        if direction is None:
            direction = np.zeros((3, 3))
            direction[1, 1] = 1.0
        return t_lo, t_lo + stress_floor * direction, np.inf
    mag = stress_floor / diff
    return t_lo, t_lo + mag * (t_hi - t_lo), mag


def pta_block_update(block: Block, t_lo, t_hi, mag: float, params: PtaParams,
                     mat: MaterialParams, therm: JunctionParams,
                     delta_star: float):
    """Run the block's averaging pair and form (scaled) slow rates.

    The block's network chains through both runs. On non-convergence the
    previous rates are held. Rates are divided by the magnification when
    the stress difference was floored; an infinite magnification zeroes
    them.
    """
    if block.network is None:
        raise ValueError("block has no dislocation network attached")
    stats = {"converged": True, "steps": 0}
    res_lo = run_fixed_load_average(block.network, t_lo, params, mat, therm)
    res_hi = run_fixed_load_average(block.network, t_hi, params, mat, therm)
    stats["steps"] = res_lo.steps + res_hi.steps
    if not (res_lo.converged and res_hi.converged):
        stats["converged"] = False
        return block.Lp_rate, block.V_rate, res_hi, stats

    if np.isinf(mag):
        lp_rate = np.zeros((3, 3))
        v_rate = np.zeros(3)
    else:
        lp_rate = coarse_rate(res_hi.Lp, res_lo.Lp, delta_star)
        v_rate = coarse_rate(res_hi.V, res_lo.V, delta_star)
        if mag > 1.0:
            lp_rate = lp_rate / mag
            v_rate = v_rate / mag
    return lp_rate, v_rate, res_hi, stats


def project_block_fields(block_grid: BlockGrid, lp_values: np.ndarray,
                         v_values: np.ndarray):
    """Project per-block Lp (n_b, 3, 3) and V (n_b, 3) to Gauss points."""
    return block_grid.project(lp_values), block_grid.project(v_values)
