"""The coupled increment loop.

Each increment: average the stress over every block, extrapolate the pair
of levels for that block's averaging run (with the resolution floor),
run the block's dislocation box at both levels to get slow rates, apply the
limit-load state machine, project the block slip inputs to Gauss points,
enforce non-negative dissipation, apply the loading, then advance the
continuum fields (density transport, incompatibility, plastic potential,
equilibrium). The controller re-checks stability with end-of-increment
fields and can cut back and rerun the increment.

Block dislocation state persists across increments (each run chains from
the previous microstructure); all blocks start from one common relaxed
microstructure with independent random streams.
"""

from __future__ import annotations

import json
import os
import time as _time
from dataclasses import dataclass, field, replace

import numpy as np

from mesoplast.crystallography import orientation_from_config
from mesoplast.coupling.blocks import (
    BlockGrid,
    block_average_stress,
    extrapolate_block_stresses,
    project_block_fields,
    pta_block_update,
)
from mesoplast.coupling.controller import ControllerParams, TimeStepController
from mesoplast.coupling.guards import dissipation_guard_field, limit_load_check
from mesoplast.dd.materials import JunctionParams, MaterialParams
from mesoplast.dd.microstructure import generate_microstructure
from mesoplast.dd.network import dump_network, load_network
from mesoplast.fem.grid import Grid
from mesoplast.fem.solvers import BoundaryConditions, slip_distortion
from mesoplast.fem.state import MfdmSolvers, ecdd_init
from mesoplast.fem.transport import TransportSolver
from mesoplast.pta import PtaParams, norm_of, relax_network, shrink

TRACE_COLUMNS = ["t", "applied", "sigma_avg_Pa", "eps", "eps_from_u", "eps_p",
                 "limit_load_flag", "dt", "cutbacks"]


@dataclass
class CoupledConfig:
    scenario: str = "tension"        # tension | shear | bending
    control: str = "load"            # load | displacement
    rate: float = 1e6                # Pa/s (load) or 1/s (displacement)
    domain_x: float = 5e-6
    domain_y: float = 5e-6
    thickness: float = 1e-6
    elements_x: int = 10
    elements_y: int = 10
    blocks_x: int = 2
    blocks_y: int = 2
    dd_box: float = 3000 * 2.55e-10
    rho_mobile: float = 5e12
    rho_sessile: float = 2e14
    sessile_case: int = 1
    orientation: str = "tension"
    seed: int = 0
    t_end: float = 40.0
    eps_target: float | None = None
    max_increments: int = 400
    n_per_delta: int = 100           # delta* = n x breaking time
    m_per_dt: int = 10               # prescribed dt = m x delta*
    breaking_time: float = 1e-3
    capture_radius_b: float = 60.0
    stress_floor: float = 0.5e6
    stress_jump_cap: float = 3e6
    courant_factor: float = 0.1
    strain_cap: float = 0.002
    tol_rho: float = 1e-2
    tol_lp: float = 3e-2
    lp_rate_max: float = 1e5
    pta_max_steps: int = 3000
    min_horizon_breaks: float = 0.5
    noise_tare: float = 2.0
    alpha_bc: str = "constrained"    # constrained | unconstrained
    output_dir: str | None = None
    snapshot_every: int = 0          # increments; 0 disables periodic dumps
    field_dump_every: int = 0

    def material(self) -> MaterialParams:
        return MaterialParams()

    def junctions(self) -> JunctionParams:
        b = self.material().burgers_mag
        return JunctionParams(enabled=True, max_breaking_time=self.breaking_time,
                              capture_radius=self.capture_radius_b * b)

    def pta(self) -> PtaParams:
        return PtaParams(delta_star=self.n_per_delta * self.breaking_time,
                         tol_rho=self.tol_rho, tol_lp=self.tol_lp,
                         lp_rate_max=self.lp_rate_max,
                         breaking_time=self.breaking_time,
                         strain_increment_cap=self.strain_cap,
                         max_steps=self.pta_max_steps,
                         min_horizon_breaks=self.min_horizon_breaks)


def scenario_bcs(config: CoupledConfig, grid: Grid, level: float) -> BoundaryConditions:
    """Boundary conditions at the given load level or applied displacement."""
    if config.scenario == "tension":
        if config.control == "load":
            return BoundaryConditions(
                dirichlet=[(grid.face_nodes("y-"), 1, 0.0)],
                tractions=[("y+", lambda x: np.array([0.0, level, 0.0]))])
        return BoundaryConditions(
            dirichlet=[(grid.face_nodes("y-"), 1, 0.0),
                       (grid.face_nodes("y+"), 1, level)])
    if config.scenario == "shear":
        if config.control != "load":
            raise ValueError("shear scenario runs under load control")
        return BoundaryConditions(tractions=[
            ("y+", lambda x: np.array([level, 0.0, 0.0])),
            ("y-", lambda x: np.array([-level, 0.0, 0.0])),
            ("x+", lambda x: np.array([0.0, level, 0.0])),
            ("x-", lambda x: np.array([0.0, -level, 0.0])),
        ])
    if config.scenario == "bending":
        if config.control != "load":
            raise ValueError("bending uses load control with the linear profile")
        h = grid.lx
        return BoundaryConditions(
            dirichlet=[(grid.face_nodes("y-"), 1, 0.0)],
            tractions=[("y+",
                        lambda x: np.array([0.0, level * (1 - 2 * x[0] / h), 0.0]))])
    raise ValueError(f"unknown scenario {config.scenario!r}")


def _axis_component(config: CoupledConfig):
    return (0, 1) if config.scenario == "shear" else (1, 1)


def _strain_from_u(config: CoupledConfig, grid: Grid, u) -> float:
    if config.scenario == "shear":
        top = grid.face_nodes("y+")
        bot = grid.face_nodes("y-")
        return float((u[top, 0].mean() - u[bot, 0].mean()) / grid.ly)
    top = grid.face_nodes("y+")
    return float(u[top, 1].mean() / grid.ly)


def bending_effective_measures(config: CoupledConfig, grid: Grid, u, level):
    """(effective stress, effective strain) for the bending scenario."""
    sigma_eff = level / 6.0
    top = grid.face_nodes("y+")
    x1 = grid.nodes[top, 0]
    u2 = u[top, 1]
    a = np.polyfit(x1, u2, 1)
    theta = -a[0]
    eps_eff = theta * grid.lx / (2.0 * grid.ly)
    return sigma_eff, eps_eff


@dataclass
class CoupledRun:
    rows: list
    state: object
    blocks: list
    cutbacks: int
    cpu_seconds: float
    aborted: str | None = None
    field_dumps: list = field(default_factory=list)

    def column(self, name):
        return np.array([r[TRACE_COLUMNS.index(name)] for r in self.rows])

    def write_csv(self, path):
        with open(path, "w") as f:
            f.write(",".join(TRACE_COLUMNS) + "\n")
            for r in self.rows:
                f.write(",".join(f"{v:.12e}" for v in r) + "\n")


def _setup(config: CoupledConfig):
    mat = config.material()
    therm = config.junctions()
    pta = config.pta()
    grid = Grid(config.elements_x, config.elements_y, config.domain_x,
                config.domain_y, config.thickness)
    bgrid = BlockGrid(grid, config.blocks_x, config.blocks_y)
    solvers = MfdmSolvers(grid, mat.youngs_modulus, mat.poisson)
    transport = TransportSolver(grid)
    ctrl = TimeStepController(
        ControllerParams(strain_cap=config.strain_cap,
                         courant_factor=config.courant_factor,
                         stress_jump_cap=config.stress_jump_cap,
                         delta_star=pta.delta_star,
                         dt_prescribed=config.m_per_dt * pta.delta_star),
        d_min=min(grid.hx, grid.hy))
    return mat, therm, pta, grid, bgrid, solvers, transport, ctrl


def _init_blocks(config: CoupledConfig, bgrid: BlockGrid, mat, therm):
    """One common relaxed microstructure, independent streams per block."""
    orientation = orientation_from_config(config.orientation)
    base = generate_microstructure(config.rho_mobile, config.rho_sessile,
                                   orientation, config.dd_box,
                                   config.sessile_case, config.seed, mat=mat)
    relax_network(base, mat, therm)
    seeds = np.random.SeedSequence(config.seed).spawn(len(bgrid.blocks))
    for block, ss in zip(bgrid.blocks, seeds):
        net = base.copy()
        net.rng = np.random.default_rng(ss)
        block.network = net
    return orientation


def run_coupled(config: CoupledConfig, resume: str | None = None) -> CoupledRun:
    mat, therm, pta, grid, bgrid, solvers, transport, ctrl = _setup(config)
    started = _time.perf_counter()

    if resume:
        state, level, t, inc0, cutbacks, rows, noise_set = \
            _load_snapshot(resume, config, grid, bgrid, ctrl)
    else:
        _init_blocks(config, bgrid, mat, therm)
        state = ecdd_init(None, scenario_bcs(config, grid, 0.0), solvers)
        level, t, inc0, cutbacks = 0.0, 0.0, 0, 0
        rows = []
        noise_set = False

    blocks = bgrid.blocks
    prev_T_avg = [block_average_stress(state.T_gp, b, grid) for b in blocks]
    eps_p = rows[-1][TRACE_COLUMNS.index("eps_p")] if rows else 0.0
    aborted = None
    dumps = []
    dt_prev = ctrl.p.dt_prescribed

    inc = inc0
    while inc < config.max_increments:
        if config.t_end is not None and t >= config.t_end:
            break
        # increment snapshot for possible cutback
        saved = _memento(state, blocks, ctrl, level, prev_T_avg)
        reruns = 0
        while True:
            axv_lp, vmag = _stability_fields(state)
            dt = ctrl.propose(axv_lp, vmag)

            T_avg = [block_average_stress(state.T_gp, b, grid) for b in blocks]
            lp_vals = np.zeros((len(blocks), 3, 3))
            v_vals = np.zeros((len(blocks), 3))
            jumps = []
            for b in blocks:
                t_lo, t_hi, mag = extrapolate_block_stresses(
                    T_avg[b.index], prev_T_avg[b.index], pta.delta_star,
                    dt_prev, config.stress_floor)
                if b.last_T_lo is not None:
                    jumps.append(norm_of(t_lo - b.last_T_lo))
                b.last_T_lo = t_lo
                lp_rate, v_rate, res_hi, stats = pta_block_update(
                    b, t_lo, t_hi, mag, pta, mat, therm, pta.delta_star)
                b.Lp_rate, b.V_rate = lp_rate, v_rate
                if not noise_set:
                    b.noise_floor = config.noise_tare * norm_of(res_hi.Lp)
                    b.noise_floor_v = config.noise_tare * norm_of(res_hi.V)
                # the block slip state tracks the (noise-tared) measurement;
                # a limit-flagged block stays frozen unless the new
                # measurement would clear the limit condition
                cand_lp = shrink(res_hi.Lp, b.noise_floor)
                cand_v = shrink(res_hi.V, b.noise_floor_v)
                cand_mag = norm_of(cand_lp) + _max_axv(state, b)
                clears = not (cand_mag > 0.0
                              and config.strain_cap / cand_mag <= pta.delta_star)
                if not b.limit_flagged or clears:
                    b.Lp, b.V = cand_lp, cand_v
                lp_vals[b.index] = b.Lp
                v_vals[b.index] = b.V
            noise_set = True

            mags = [norm_of(b.Lp) + _max_axv(state, b) for b in blocks]
            rate_mult, flags = limit_load_check(blocks, mags, pta.delta_star,
                                                config.strain_cap)
            if any(flags):
                dt = pta.delta_star
                ctrl.dt = dt

            lp_gp, v_gp = project_block_fields(bgrid, lp_vals, v_vals)
            lp_gp, v_gp = dissipation_guard_field(lp_gp, v_gp, state.T_gp,
                                                  state.alpha_gp)
            state.Lp_gp, state.V_gp = lp_gp, v_gp

            new_level = level + config.rate * rate_mult * dt
            bcs = scenario_bcs(config, grid, new_level)

            v_nodal = grid.gp_to_nodal(v_gp)
            new_alpha_nodal, r_tr = transport.advance(
                state.alpha_nodal, v_nodal, lp_gp, dt, mode=config.alpha_bc)
            new_alpha_gp = grid.nodal_to_gp(new_alpha_nodal)
            chi, r_chi = solvers.chi.solve(new_alpha_gp)
            slip = slip_distortion(new_alpha_gp, v_gp, lp_gp)
            zdot, r_z = solvers.z.solve(slip)
            new_z = state.z_nodal + dt * zdot
            u, T, r_eq = solvers.equilibrium.solve(chi, new_z, bcs)

            trial = state.copy()
            trial.alpha_nodal, trial.alpha_gp = new_alpha_nodal, new_alpha_gp
            trial.chi_nodal, trial.z_nodal, trial.u_nodal, trial.T_gp = \
                chi, new_z, u, T
            trial.residuals = {"transport": r_tr, "chi": r_chi, "z": r_z,
                               "equilibrium": r_eq}
            trial.Lp_gp, trial.V_gp = lp_gp, v_gp

            # post-step checks: stability with end fields, then stress jump
            axv_lp2, vmag2 = _stability_fields(trial)
            cut = ctrl.post_check(axv_lp2, vmag2)
            if cut is None:
                new_T_avg = [block_average_stress(T, b, grid) for b in blocks]
                jump_norms = [norm_of(new_T_avg[b.index] - T_avg[b.index])
                              for b in blocks]
                cut = ctrl.stress_jump_check(jump_norms)
            if cut is not None and reruns < 6:
                reruns += 1
                cutbacks += 1
                _restore(saved, state, blocks, ctrl)
                level = saved["level"]
                prev_T_avg = [a.copy() for a in saved["prev_T_avg"]]
                continue

            # accepted
            state = trial
            prev_T_avg = T_avg
            level = new_level
            t += dt
            dt_prev = dt
            ctrl.accepted(axv_lp2, vmag2)
            break

        mean_lp_norm = float(np.linalg.norm(state.Lp_gp, axis=(2, 3)).mean())
        eps_p += mean_lp_norm * dt
        comp = _axis_component(config)
        sigma_avg = float(state.T_gp[..., comp[0], comp[1]].mean())
        eps_from_u = _strain_from_u(config, grid, state.u_nodal)
        if config.control == "load":
            applied = level
            eps_trace = sigma_avg / mat.shear_modulus + eps_p
        else:
            applied = level / grid.ly
            eps_trace = applied
        rows.append([t, applied, sigma_avg, eps_trace, eps_from_u, eps_p,
                     1.0 if any(b.limit_flagged for b in blocks) else 0.0,
                     dt, float(cutbacks)])
        inc += 1

        if config.eps_target is not None and eps_trace >= config.eps_target:
            break
        if config.field_dump_every and inc % config.field_dump_every == 0:
            dumps.append(field_dump(state, mat))
        if config.output_dir and config.snapshot_every \
                and inc % config.snapshot_every == 0:
            write_snapshot(os.path.join(config.output_dir, f"snap_{inc:05d}"),
                           config, state, bgrid, ctrl, level, t, inc, cutbacks,
                           rows)

    run = CoupledRun(rows=rows, state=state, blocks=blocks, cutbacks=cutbacks,
                     cpu_seconds=_time.perf_counter() - started,
                     aborted=aborted, field_dumps=dumps)
    if config.output_dir:
        os.makedirs(config.output_dir, exist_ok=True)
        run.write_csv(os.path.join(config.output_dir, "trace.csv"))
    return run


def _max_axv(state, block) -> float:
    axv = np.einsum("jkl,egik,egl->egij", _LEVI3, state.alpha_gp[block.elements],
                    state.V_gp[block.elements])
    return float(np.linalg.norm(axv, axis=(2, 3)).max()) if axv.size else 0.0


from mesoplast.fem.solvers import levi_civita as _lc  # noqa: E402

_LEVI3 = _lc()


def _stability_fields(state):
    axv = np.einsum("jkl,egik,egl->egij", _LEVI3, state.alpha_gp, state.V_gp)
    axv_lp = np.linalg.norm(axv + state.Lp_gp, axis=(2, 3))
    vmag = np.linalg.norm(state.V_gp, axis=2)
    return axv_lp, vmag


def _memento(state, blocks, ctrl, level, prev_T_avg):
    return {
        "state": state.copy(),
        "nets": [dump_network(b.network) for b in blocks],
        "block_fields": [(b.Lp.copy(), b.V.copy(), b.Lp_rate.copy(),
                          b.V_rate.copy(), b.limit_flagged, b.noise_floor,
                          None if b.last_T_lo is None else b.last_T_lo.copy(),
                          b.noise_floor_v)
                         for b in blocks],
        "ctrl": ctrl.state(),
        "level": level,
        "prev_T_avg": [a.copy() for a in prev_T_avg],
    }


def _restore(saved, state, blocks, ctrl):
    src = saved["state"]
    state.alpha_nodal = src.alpha_nodal.copy()
    state.alpha_gp = src.alpha_gp.copy()
    state.chi_nodal = src.chi_nodal.copy()
    state.z_nodal = src.z_nodal.copy()
    state.u_nodal = src.u_nodal.copy()
    state.T_gp = src.T_gp.copy()
    state.Lp_gp = src.Lp_gp.copy()
    state.V_gp = src.V_gp.copy()
    for b, text, fields in zip(blocks, saved["nets"], saved["block_fields"]):
        b.network = load_network(text)
        b.Lp, b.V = fields[0].copy(), fields[1].copy()
        b.Lp_rate, b.V_rate = fields[2].copy(), fields[3].copy()
        b.limit_flagged, b.noise_floor = fields[4], fields[5]
        b.last_T_lo = None if fields[6] is None else fields[6].copy()
        b.noise_floor_v = fields[7]
    ctrl.restore(saved["ctrl"])


def field_dump(state, mat) -> dict:
    """Structured-grid records of |alpha|/b and the deviatoric stress norm."""
    return {
        "alpha_norm_over_b": state.alpha_norm_gp() / mat.burgers_mag,
        "j2": state.deviatoric_stress_norm_gp(),
    }


def write_field_dump(path, state, mat, grid):
    d = field_dump(state, mat)
    with open(path, "w") as f:
        f.write("# ex ey gp x y z alpha_norm_over_b j2\n")
        for e in range(grid.n_elems):
            for g in range(8):
                x = grid.gp_coords[e, g]
                f.write(f"{e} {g} {x[0]:.6e} {x[1]:.6e} {x[2]:.6e} "
                        f"{d['alpha_norm_over_b'][e, g]:.6e} "
                        f"{d['j2'][e, g]:.6e}\n")


# ---------------------------------------------------------------------------
# snapshot / resume
# ---------------------------------------------------------------------------

def write_snapshot(path, config, state, bgrid, ctrl, level, t, inc, cutbacks,
                   rows):
    os.makedirs(path, exist_ok=True)
    np.savez(os.path.join(path, "fields.npz"),
             alpha_nodal=state.alpha_nodal, alpha_gp=state.alpha_gp,
             chi_nodal=state.chi_nodal, z_nodal=state.z_nodal,
             u_nodal=state.u_nodal, T_gp=state.T_gp, Lp_gp=state.Lp_gp,
             V_gp=state.V_gp,
             rows=np.array(rows, dtype=float),
             block_lp=np.array([b.Lp for b in bgrid.blocks]),
             block_v=np.array([b.V for b in bgrid.blocks]),
             block_lp_rate=np.array([b.Lp_rate for b in bgrid.blocks]),
             block_v_rate=np.array([b.V_rate for b in bgrid.blocks]),
             block_floor=np.array([b.noise_floor for b in bgrid.blocks]),
             block_floor_v=np.array([b.noise_floor_v for b in bgrid.blocks]),
             block_flag=np.array([b.limit_flagged for b in bgrid.blocks]),
             block_last_tlo=np.array([b.last_T_lo if b.last_T_lo is not None
                                      else np.full((3, 3), np.nan)
                                      for b in bgrid.blocks]))
    for b in bgrid.blocks:
        with open(os.path.join(path, f"net_{b.index:03d}.txt"), "w") as f:
            f.write(dump_network(b.network))
    meta = {"level": float(level).hex(), "t": float(t).hex(), "inc": inc,
            "cutbacks": cutbacks, "ctrl": {k: (float(v).hex()
                                               if isinstance(v, float) else v)
                                           for k, v in ctrl.state().items()}}
    with open(os.path.join(path, "meta.json"), "w") as f:
        json.dump(meta, f)


def _load_snapshot(path, config, grid, bgrid, ctrl):
    from mesoplast.fem.state import zero_state
    data = np.load(os.path.join(path, "fields.npz"))
    state = zero_state(grid)
    state.alpha_nodal = data["alpha_nodal"]
    state.alpha_gp = data["alpha_gp"]
    state.chi_nodal = data["chi_nodal"]
    state.z_nodal = data["z_nodal"]
    state.u_nodal = data["u_nodal"]
    state.T_gp = data["T_gp"]
    state.Lp_gp = data["Lp_gp"]
    state.V_gp = data["V_gp"]
    rows = [list(r) for r in data["rows"]]
    for b in bgrid.blocks:
        with open(os.path.join(path, f"net_{b.index:03d}.txt")) as f:
            b.network = load_network(f.read())
        b.Lp = data["block_lp"][b.index]
        b.V = data["block_v"][b.index]
        b.Lp_rate = data["block_lp_rate"][b.index]
        b.V_rate = data["block_v_rate"][b.index]
        b.noise_floor = float(data["block_floor"][b.index])
        b.noise_floor_v = float(data["block_floor_v"][b.index])
        b.limit_flagged = bool(data["block_flag"][b.index])
        tlo = data["block_last_tlo"][b.index]
        b.last_T_lo = None if np.isnan(tlo).any() else tlo
    with open(os.path.join(path, "meta.json")) as f:
        meta = json.load(f)
    ctrl.restore({k: (float.fromhex(v) if isinstance(v, str) else v)
                  for k, v in meta["ctrl"].items()})
    return (state, float.fromhex(meta["level"]), float.fromhex(meta["t"]),
            int(meta["inc"]), int(meta["cutbacks"]), rows, True)
