"""Dissipation non-negativity and the limit-load state machine."""

from __future__ import annotations

import numpy as np

from mesoplast.fem.solvers import levi_civita

_LEVI = levi_civita()


def dissipation_guard(lp_gp, v_gp, T, alpha):
    """Remove any negative-dissipation content from one Gauss point's inputs.

    If T : Lp < 0, the component along T is removed so the plastic power is
    exactly zero; likewise for the velocity against its driving force
    X T alpha (the axial vector of T . alpha).
    """
    lp = np.asarray(lp_gp, float)
    v = np.asarray(v_gp, float)
    T = np.asarray(T, float)
    d = float(np.tensordot(T, lp))
    if d < 0.0:
        t2 = float(np.tensordot(T, T))
        if t2 > 0.0:
            lp = lp - d * T / t2
    f = np.einsum("ijk,jk->i", _LEVI, T @ np.asarray(alpha, float))
    beta = float(v @ f)
    if beta < 0.0:
        f2 = float(f @ f)
        if f2 > 0.0:
            v = v - beta * f / f2
    return lp, v


def dissipation_guard_field(lp_gp, v_gp, T_gp, alpha_gp):
    """Vectorized guard over all Gauss points; returns corrected (Lp, V)."""
    lp = np.array(lp_gp, float, copy=True)
    v = np.array(v_gp, float, copy=True)
    T = np.asarray(T_gp, float)
    alpha = np.asarray(alpha_gp, float)

    d = np.einsum("egij,egij->eg", T, lp)
    t2 = np.einsum("egij,egij->eg", T, T)
    bad = (d < 0.0) & (t2 > 0.0)
    if np.any(bad):
        corr = (d / np.where(t2 > 0, t2, 1.0))[..., None, None] * T
        lp[bad] -= corr[bad]

    f = np.einsum("ijk,egjl,eglk->egi", _LEVI, T, alpha)
    beta = np.einsum("egi,egi->eg", v, f)
    f2 = np.einsum("egi,egi->eg", f, f)
    badv = (beta < 0.0) & (f2 > 0.0)
    if np.any(badv):
        corrv = (beta / np.where(f2 > 0, f2, 1.0))[..., None] * f
        v[badv] -= corrv[badv]
    return lp, v


def limit_load_check(blocks, magnitudes, delta_star: float,
                     strain_cap: float = 0.002):
    """Limit-load state machine.

    ``magnitudes`` holds |alpha x V| + |Lp| per block. A block whose
    stability bound strain_cap / magnitude has fallen to or below the
    averaging window flags the limit load: the caller must zero the loading
    rate, set the increment to the averaging window and freeze that block's
    rates. When no block is flagged the prescribed rate applies again.
    Returns (loading_rate_multiplier, flags per block).
    """
    flags = []
    for mag in magnitudes:
        if mag > 0.0 and strain_cap / mag <= delta_star:
            flags.append(True)
        else:
            flags.append(False)
    for b, f in zip(blocks, flags):
        b.limit_flagged = f
        if f:
            b.Lp_rate = np.zeros((3, 3))
            b.V_rate = np.zeros(3)
    return (0.0 if any(flags) else 1.0), flags
