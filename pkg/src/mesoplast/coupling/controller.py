"""Adaptive increment control for the coupled run.

The increment is bounded by a plastic-strain cap and a Courant condition
evaluated over all Gauss points; it is re-checked with end-of-increment
fields (cutback with the tightened value on violation), halved and rerun
when any block's extrapolated stress level jumped more than the stress-jump
threshold since the previous increment (clamped from below at the averaging
window), and doubled after two consecutive accepted increments with slack
bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ControllerParams:
    strain_cap: float = 0.002
    courant_factor: float = 0.1
    stress_jump_cap: float = 3e6   # Pa
    delta_star: float = 0.1        # s, lower clamp for cutbacks
    dt_prescribed: float = 1.0     # s, nominal increment (m x delta_star)


class TimeStepController:
    def __init__(self, params: ControllerParams, d_min: float):
        self.p = params
        self.d_min = d_min
        self.slack_count = 0
        self.dt = params.dt_prescribed

    def stability_bound(self, axv_plus_lp_gp: np.ndarray,
                        v_norm_gp: np.ndarray) -> float:
        """min over Gauss points of (cap/|axV + Lp|, f d_min/|V|)."""
        bound = np.inf
        mx = float(axv_plus_lp_gp.max()) if axv_plus_lp_gp.size else 0.0
        if mx > 0.0:
            bound = min(bound, self.p.strain_cap / mx)
        vmax = float(v_norm_gp.max()) if v_norm_gp.size else 0.0
        if vmax > 0.0:
            bound = min(bound, self.p.courant_factor * self.d_min / vmax)
        return bound

    def propose(self, axv_plus_lp_gp, v_norm_gp) -> float:
        """Increment length to attempt, capped by the pre-step bound."""
        self.dt = min(self.dt, self.stability_bound(axv_plus_lp_gp, v_norm_gp))
        self.dt = max(self.dt, self.p.delta_star)
        return self.dt

    def post_check(self, axv_plus_lp_gp, v_norm_gp) -> float | None:
        """Re-check with end-of-step fields; a tightened dt means cutback."""
        bound = self.stability_bound(axv_plus_lp_gp, v_norm_gp)
        if self.dt > bound:
            cut = max(bound, self.p.delta_star)
            if cut < self.dt:
                self.dt = cut
                self.slack_count = 0
                return cut
        return None

    def stress_jump_check(self, jump_norms) -> float | None:
        """Halve and rerun when a block's stress level moved too fast."""
        if len(jump_norms) and max(jump_norms) > self.p.stress_jump_cap:
            halved = max(self.dt / 2.0, self.p.delta_star)
            if halved < self.dt:
                self.dt = halved
                self.slack_count = 0
                return halved
            # already clamped at the averaging window: accept as is
        return None

    def accepted(self, axv_plus_lp_gp, v_norm_gp):
        """Bookkeeping after an accepted increment: doubling rule."""
        bound = self.stability_bound(axv_plus_lp_gp, v_norm_gp)
        if self.dt < self.p.dt_prescribed and bound >= self.dt:
            self.slack_count += 1
        else:
            self.slack_count = 0
        if self.slack_count >= 2:
            self.dt = min(self.dt * 2.0, self.p.dt_prescribed)
            self.slack_count = 0

    def state(self) -> dict:
        return {"dt": self.dt, "slack_count": self.slack_count}

    def restore(self, state: dict):
        self.dt = state["dt"]
        self.slack_count = state["slack_count"]
