"""Time averaging of the fast dislocation dynamics at frozen load.

The fast system is evolved at a fixed applied stress while running
time-weighted averages of the observables accumulate; averages at two load
levels a slow-time window apart are differenced to produce slow rates of
the plastic distortion. The single-box driver marches the slow time with
jump detection, a re-averaging acceptance rule and a plastic-strain-capped
step size, and writes a stress-strain trace.
"""

from __future__ import annotations

import time as _time
from bisect import bisect_left
from dataclasses import dataclass, field, replace

import numpy as np

from mesoplast.dd.materials import JunctionParams, MaterialParams
from mesoplast.dd.network import (
    DislocationNetwork,
    StepRejected,
    evaluate,
    step_network,
)

_FLOOR = 1e-300


@dataclass(frozen=True)
class PtaParams:
    """Averaging window, convergence tolerances and slow-step limits."""

    delta_star: float = 0.1          # s, averaging window in dimensional time
    tol_rho: float = 1e-2            # relative
    tol_lp: float = 3e-2             # relative
    lp_rate_max: float = 0.05        # 1/s^2, jump detection threshold
    breaking_time: float = 1e-3      # s, max junction breaking time a
    strain_increment_cap: float = 0.002
    max_steps: int = 40_000          # hard budget per fixed-load average
    min_updates: int = 12            # minimum samples before convergence
    min_horizon_breaks: float = 2.0  # min averaged fast time, units of a
    displacement_per_step: float = 5.0   # node travel per step / capture radius
    jump_retry_cap: int = 5
    reaverage_budget_factor: float = 50.0

    def __post_init__(self):
        if self.delta_star < 10.0 * self.breaking_time:
            raise ValueError("need delta_star >= 10 * breaking_time "
                             "(time-scale ordering a << delta*)")


def norm_of(value) -> float:
    """Frobenius norm for arrays, absolute value for scalars."""
    arr = np.asarray(value, float)
    return float(np.sqrt(np.sum(arr * arr)))


class RunningAverage:
    """Time-weighted mean of an observable stream with a trailing test.

    Convergence: the mean changed by less than ``tol`` (relative) over the
    trailing 20% of the accumulated weight, after a minimum number of
    updates.
    """

    def __init__(self, tol: float, min_updates: int = 12):
        self.tol = tol
        self.min_updates = min_updates
        self.weighted_sum = None
        self.total_weight = 0.0
        self.n_updates = 0
        self.converged = False
        self._weights: list[float] = []
        self._means: list[np.ndarray] = []

    @property
    def value(self):
        if self.total_weight <= 0.0:
            return None
        return self.weighted_sum / self.total_weight

    def update(self, value, dt: float):
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        arr = np.asarray(value, float)
        if self.weighted_sum is None:
            self.weighted_sum = arr * dt
        else:
            self.weighted_sum = self.weighted_sum + arr * dt
        self.total_weight += dt
        self.n_updates += 1
        mean = self.weighted_sum / self.total_weight
        self._weights.append(self.total_weight)
        self._means.append(mean)
        if self.n_updates >= self.min_updates:
            k = bisect_left(self._weights, 0.8 * self.total_weight)
            past = self._means[min(k, len(self._means) - 1)]
            change = norm_of(mean - past)
            scale = max(norm_of(mean), _FLOOR)
            self.converged = change <= self.tol * scale
        return self


def update_running_average(acc: RunningAverage, value, dt: float,
                           tol: float | None = None) -> RunningAverage:
    """Accumulate one sample of weight dt; see :class:`RunningAverage`."""
    if tol is not None:
        acc.tol = tol
    return acc.update(value, dt)


def coarse_rate(r_t, r_tminus, delta: float):
    """Slow rate of an averaged observable: (R_t - R_{t-Delta}) / Delta."""
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    return (np.asarray(r_t, float) - np.asarray(r_tminus, float)) / delta


@dataclass
class FixedLoadResult:
    """Converged running averages at one load level."""

    rho: float
    Lp: np.ndarray
    V: np.ndarray
    converged: bool
    steps: int
    fast_time: float
    averagers: dict = field(default_factory=dict)


def run_fixed_load_average(net: DislocationNetwork, load_stress,
                           params: PtaParams, mat: MaterialParams,
                           therm: JunctionParams,
                           resume: dict | None = None) -> FixedLoadResult:
    """Evolve the network at fixed stress until the averages converge.

    The step size is event driven: it is capped by a per-step node travel
    of a few capture radii, and jumps straight to the next junction
    breaking deadline when nothing is moving. ``resume`` (the averagers of
    a previous result) continues an earlier average instead of starting
    fresh. The network is evolved in place.
    """
    load_stress = np.asarray(load_stress, float)
    if resume:
        avg_rho = resume["rho"]
        avg_lp = resume["Lp"]
        avg_v = resume["V"]
    else:
        avg_rho = RunningAverage(params.tol_rho, params.min_updates)
        avg_lp = RunningAverage(params.tol_lp, params.min_updates)
        avg_v = RunningAverage(params.tol_lp, params.min_updates)

    dx_cap = params.displacement_per_step * therm.capture_radius
    t0 = net.time
    min_horizon = (params.min_horizon_breaks * therm.max_breaking_time
                   if therm.enabled and net.sessile_segments() else 0.0)
    steps = 0
    stationary_dt = therm.max_breaking_time if therm.enabled else params.delta_star

    while steps < params.max_steps:
        state = evaluate(net, load_stress, mat)
        if state.max_speed > 0.0:
            dt = dx_cap / state.max_speed
        else:
            dt = stationary_dt
        nxt = net.next_break_time()
        if nxt is not None and nxt > net.time:
            dt = min(dt, nxt - net.time)
        dt = max(dt, 1e-18)

        avg_rho.update(state.obs.rho, dt)
        avg_lp.update(state.obs.Lp, dt)
        avg_v.update(state.obs.V, dt)
        try:
            step_network(net, load_stress, dt, mat, therm, state=state)
        except StepRejected as rej:
            dt = rej.suggested_dt
            step_network(net, load_stress, dt, mat, therm)
        steps += 1

        elapsed = net.time - t0
        if avg_rho.converged and avg_lp.converged and elapsed >= min_horizon:
            break
        if state.max_speed == 0.0 and nxt is None:
            # frozen configuration: the stream is constant from here on
            avg_rho.converged = avg_lp.converged = True
            break

    return FixedLoadResult(
        rho=float(avg_rho.value if avg_rho.value is not None else 0.0),
        Lp=np.asarray(avg_lp.value if avg_lp.value is not None else np.zeros((3, 3))),
        V=np.asarray(avg_v.value if avg_v.value is not None else np.zeros(3)),
        converged=bool(avg_rho.converged and avg_lp.converged),
        steps=steps,
        fast_time=net.time - t0,
        averagers={"rho": avg_rho, "Lp": avg_lp, "V": avg_v},
    )


# ---------------------------------------------------------------------------
# single-box slow-time driver
# ---------------------------------------------------------------------------

TRACE_COLUMNS = ["t", "load_Pa", "rho_per_m2", "Lp_norm", "eps_p",
                 "eps_p_dir", "eps_total", "tangent_modulus_Pa", "jumps_so_far"]


@dataclass
class SingleBoxConfig:
    loading_rate: float = 1e6        # Pa/s
    load_axis: str = "tension"       # tension (t22) | shear (t12)
    t_end: float | None = None       # s, slow horizon
    eps_p_target: float | None = None
    h_max: float = 20.0              # s
    max_load_step: float = 2e6       # Pa, trace resolution in load
    max_increments: int = 2000
    load_scale: float = 1e6          # Pa, unit load for nondimensional time
    relax_first: bool = True         # settle the microstructure at zero load
    # Zero-load taring: the first (zero-load) averaging pair measures the
    # burst-noise floor of the plastic rate; magnitudes are soft-shrunk by
    # noise_tare x that floor for step control and strain integration.
    # Set to 0 to disable.
    noise_tare: float = 2.0


def relax_network(net: DislocationNetwork, mat: MaterialParams,
                  therm: JunctionParams, max_steps: int = 4000) -> int:
    """Evolve at zero stress until the configuration first arrests.

    Freshly generated chord microstructures interpenetrate and reorganize
    violently; runs start from the first settled (fully pinned or
    force-equilibrated) state, as with any relaxed initial condition.
    """
    zero = np.zeros((3, 3))
    for k in range(max_steps):
        state = evaluate(net, zero, mat)
        if state.max_speed == 0.0:
            return k
        dt = therm.capture_radius / state.max_speed
        nxt = net.next_break_time()
        if nxt is not None and nxt > net.time:
            dt = min(dt, nxt - net.time)
        try:
            step_network(net, zero, dt, mat, therm, state=state)
        except StepRejected as rej:
            step_network(net, zero, rej.suggested_dt, mat, therm)
    return max_steps


@dataclass
class SingleBoxTrace:
    rows: list
    jumps: int
    aborted: str | None
    cpu_seconds: float
    dd_steps: int
    slow_time: float

    def column(self, name):
        return np.array([r[TRACE_COLUMNS.index(name)] for r in self.rows])

    def write_csv(self, path):
        with open(path, "w") as f:
            f.write(",".join(TRACE_COLUMNS) + "\n")
            for r in self.rows:
                f.write(",".join(f"{v:.10e}" for v in r) + "\n")


def _load_tensor(axis: str, load: float) -> np.ndarray:
    s = np.zeros((3, 3))
    if axis == "tension":
        s[1, 1] = load
    elif axis == "shear":
        s[0, 1] = s[1, 0] = load
    else:
        raise ValueError(f"unknown load axis {axis!r}")
    return s


def _directional_index(axis: str):
    return (1, 1) if axis == "tension" else (0, 1)


def shrink(tensor, floor: float):
    """Soft-threshold a tensor's magnitude by a noise floor."""
    mag = norm_of(tensor)
    if mag <= floor:
        return np.zeros_like(np.asarray(tensor, float))
    return np.asarray(tensor, float) * (1.0 - floor / mag)


def single_box_coarse_grain(net: DislocationNetwork, params: PtaParams,
                            mat: MaterialParams, therm: JunctionParams,
                            config: SingleBoxConfig) -> SingleBoxTrace:
    """March one box through slow time.

    Per slow step: average the observables at the previous load level
    (chained from the last run's final microstructure), then at the current
    one; difference them over the window to get rates; restart the pair on
    a jump; keep extending the earlier average while its magnitude exceeds
    the later one (acceptance rule); cap the step by the plastic strain
    increment; integrate strains and write a trace row.
    """
    c1 = config.loading_rate
    ds = params.delta_star
    slow_scale = config.load_scale / c1 if c1 > 0 else np.inf  # T_s

    if config.relax_first:
        relax_network(net, mat, therm)

    t = 0.0
    lp_state = np.zeros((3, 3))
    rho_state = net.density()
    eps_p = 0.0
    eps_p_dir = 0.0
    eps_dir_idx = _directional_index(config.load_axis)
    jumps = 0
    rows = []
    aborted = None
    dd_steps = 0
    started = _time.perf_counter()

    def load_at(tt):
        return max(0.0, c1 * tt)

    prev_sigma = None
    prev_rate = np.zeros((3, 3))
    h_prev = 0.0
    noise_floor = 0.0
    for inc in range(config.max_increments):
        l_lo = load_at(t - ds)
        l_hi = load_at(t)
        sig_lo = _load_tensor(config.load_axis, l_lo)
        sig_hi = _load_tensor(config.load_axis, l_hi)

        retries = 0
        while True:
            mid_net = None
            res_lo = run_fixed_load_average(net, sig_lo, params, mat, therm)
            mid_net = net.copy()
            res_hi = run_fixed_load_average(net, sig_hi, params, mat, therm)
            dd_steps += res_lo.steps + res_hi.steps

            lp_rate = coarse_rate(res_hi.Lp, res_lo.Lp, ds)
            rho_rate = coarse_rate(res_hi.rho, res_lo.rho, ds)

            if norm_of(lp_rate) > params.lp_rate_max:
                jumps += 1
                retries += 1
                if retries > params.jump_retry_cap:
                    aborted = (f"jump detection persisted beyond "
                               f"{params.jump_retry_cap} retries at t={t:.4g}")
                    break
                continue  # restart the pair from the current final state

            # acceptance: while |R_{t-Delta}| > |R_t|, keep averaging the
            # earlier level (long-run budget, then accept regardless). Skip
            # when both magnitudes sit below the burst-noise floor or when
            # the pair never converged (extending a budget-limited average
            # cannot help).
            if norm_of(res_lo.Lp) > norm_of(res_hi.Lp) \
                    and res_lo.converged and res_hi.converged \
                    and max(norm_of(res_lo.Lp), norm_of(res_hi.Lp)) > noise_floor:
                budget = min(int(params.reaverage_budget_factor
                                 * max(res_lo.steps, 1)), 4 * params.max_steps)
                spent = 0
                ext = res_lo
                ext_params = replace(params, max_steps=max(res_lo.steps, 50))
                while norm_of(ext.Lp) > norm_of(res_hi.Lp) and spent < budget:
                    ext = run_fixed_load_average(mid_net, sig_lo, ext_params, mat,
                                                 therm, resume=ext.averagers)
                    spent += ext.steps
                    dd_steps += ext.steps
                res_lo = ext
                lp_rate = coarse_rate(res_hi.Lp, res_lo.Lp, ds)
                rho_rate = coarse_rate(res_hi.rho, res_lo.rho, ds)
            break
        if aborted:
            break

        # the converged running average at the current load IS the slow
        # plastic rate estimate; rates drive jump detection and reporting
        if inc == 0:
            noise_floor = config.noise_tare * norm_of(res_hi.Lp)
        lp_state = np.asarray(res_hi.Lp)
        rho_state = res_hi.rho

        lp_eff = shrink(lp_state, noise_floor)
        lp_norm = norm_of(lp_eff)
        sigma_now = load_at(t)
        eps_total = sigma_now / mat.shear_modulus + eps_p
        if prev_sigma is not None and eps_total > rows[-1][6]:
            tangent = (sigma_now - prev_sigma) / (eps_total - rows[-1][6])
        else:
            tangent = mat.shear_modulus
        rows.append([t / slow_scale if np.isfinite(slow_scale) else t,
                     sigma_now, rho_state, lp_norm, eps_p, eps_p_dir,
                     eps_total, tangent, jumps])
        prev_sigma = sigma_now

        if config.t_end is not None and t >= config.t_end:
            break
        if config.eps_p_target is not None and eps_p >= config.eps_p_target:
            break

        # plastic-strain-capped slow step, then integrate strains over it
        h = config.h_max
        if c1 > 0:
            h = min(h, config.max_load_step / c1)
        if lp_norm > 0:
            h = min(h, params.strain_increment_cap / lp_norm)
        h = max(h, 1e-9)
        eps_p += lp_norm * h
        eps_p_dir += 0.5 * (lp_eff + lp_eff.T)[eps_dir_idx] * h
        prev_rate, h_prev = lp_rate, h
        t += h

    return SingleBoxTrace(rows=rows, jumps=jumps, aborted=aborted,
                          cpu_seconds=_time.perf_counter() - started,
                          dd_steps=dd_steps, slow_time=t)
