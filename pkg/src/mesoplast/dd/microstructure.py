"""Construction of initial boundary-to-boundary dislocation microstructures.

Mobile density is split over the active slip systems in the ratio of their
Schmid factor magnitudes and inserted as pairs: two chords of equal length
on the same slip plane with opposite line directions, so the net mobile
Burgers content vanishes. Sessile obstacles are distributed isotropically
over all 12 systems, also in zero-net pairs; their Burgers vector lies out
of the slip plane (case 1, Lomer-Cottrell-like locks) or in it (case 2).
"""

from __future__ import annotations

import numpy as np

from mesoplast.crystallography import (
    Orientation,
    default_active_systems,
    fcc_catalogue,
    orientation_shear,
    orientation_tension,
    schmid_factor,
    shear_stress,
    tension_stress,
)
from mesoplast.dd.materials import MaterialParams
from mesoplast.dd.network import DislocationNetwork, Segment

_ALL_110 = [np.array(v, float) / np.sqrt(2.0) for v in
            [(0, 1, -1), (0, 1, 1), (1, -1, 0), (1, 0, -1), (1, 0, 1), (1, 1, 0)]]


class MicrostructureError(RuntimeError):
    pass


def _chord(point, direction, box):
    """Both surface intersections of the line through `point` along `direction`.

    The point must lie in the box (on-boundary allowed); each side exits
    through the face the ray actually leaves by, so on-face points with an
    outward direction give a zero-length side.
    """
    hits = []
    for sgn in (1.0, -1.0):
        d = sgn * direction
        t = np.inf
        for ax in range(3):
            if d[ax] > 1e-300:
                t = min(t, (box - point[ax]) / d[ax])
            elif d[ax] < -1e-300:
                t = min(t, -point[ax] / d[ax])
        if not np.isfinite(t):
            return None
        hits.append(point + max(t, 0.0) * d)
    return hits[0], hits[1]


def _chord_length(point, direction, box):
    ch = _chord(point, direction, box)
    if ch is None:
        return 0.0
    return float(np.linalg.norm(ch[1] - ch[0]))


def _discretize(pa, pb, spacing):
    length = np.linalg.norm(pb - pa)
    n = max(1, int(round(length / spacing)))
    t = np.linspace(0.0, 1.0, n + 1)
    return pa[None, :] + t[:, None] * (pb - pa)[None, :]


def _in_plane_dir(rng, mhat, nhat):
    theta = rng.uniform(0.0, 2.0 * np.pi)
    e2 = np.cross(nhat, mhat)
    return np.cos(theta) * mhat + np.sin(theta) * e2


def _matched_partner(p_ref, direction, nhat, length_ref, box, rng, rel_tol=0.02,
                     attempts=400):
    """A chord in the same plane, opposite direction, matching length.

    Samples transverse offsets in the slip plane and polishes the best
    bracket by bisection on the (continuous, concave) chord-length profile.
    """
    e_t = np.cross(nhat, direction)
    e_t /= np.linalg.norm(e_t)
    span = box * np.sqrt(3.0)

    best = None
    samples = []
    for _ in range(attempts):
        s = rng.uniform(-span, span)
        q = p_ref + s * e_t
        if not np.all((q >= 0.0) & (q <= box)):
            continue
        ln = _chord_length(q, -direction, box)
        if ln <= 0.0:
            continue
        samples.append((s, ln))
        err = abs(ln - length_ref) / length_ref
        if best is None or err < best[2]:
            best = (s, ln, err)
        if err <= rel_tol:
            pa, pb = _chord(q, -direction, box)
            return pa, pb
    # bisection polish between the best sample and a bracketing neighbour
    if best is not None and samples:
        s0, l0, _ = best
        bracket = None
        for s, ln in samples:
            if (ln - length_ref) * (l0 - length_ref) < 0:
                bracket = (s, ln)
                break
        if bracket is not None:
            sa, sb = s0, bracket[0]
            la = l0
            for _ in range(60):
                sm = 0.5 * (sa + sb)
                q = p_ref + sm * e_t
                lm = _chord_length(q, -direction, box) if np.all((q >= 0) & (q <= box)) else 0.0
                if lm <= 0:
                    sb = sm
                    continue
                if (lm - length_ref) * (la - length_ref) < 0:
                    sb = sm
                else:
                    sa, la = sm, lm
                if abs(lm - length_ref) / length_ref <= rel_tol:
                    pa, pb = _chord(q, -direction, box)
                    return pa, pb
    return None


def _chord_of_length(p_ref, direction, nhat, want, box, rng):
    """A chord along `direction` in the plane of p_ref with length ~ want.

    Translates the chord transversely within the slip plane; the length
    profile is continuous and falls to zero at the plane-box polygon edge,
    so a bisection bracket always exists when want <= length(p_ref).
    """
    l0 = _chord_length(p_ref, direction, box)
    if l0 < want:
        return None
    e_t = np.cross(nhat, direction)
    e_t /= np.linalg.norm(e_t)
    sgn = 1.0 if rng.uniform() < 0.5 else -1.0
    span = box * np.sqrt(3.0)
    # march outward until the chord is shorter than want (or gone)
    s_hi = None
    for frac in np.linspace(0.05, 1.0, 40):
        s = sgn * frac * span
        q = p_ref + s * e_t
        ln = _chord_length(q, direction, box) if np.all((q >= 0) & (q <= box)) else 0.0
        if ln < want:
            s_hi = s
            break
    if s_hi is None:
        return None
    s_lo = 0.0
    for _ in range(80):
        sm = 0.5 * (s_lo + s_hi)
        q = p_ref + sm * e_t
        ln = _chord_length(q, direction, box) if np.all((q >= 0) & (q <= box)) else 0.0
        if ln >= want:
            s_lo = sm
        else:
            s_hi = sm
        if ln > 0 and abs(ln - want) / want < 1e-3:
            return _chord(q, direction, box)
    # the length profile can jump where the plane-box polygon edge runs
    # parallel to the chord; reject so the caller resamples a direction
    q = p_ref + s_lo * e_t
    if np.all((q >= 0) & (q <= box)):
        ln = _chord_length(q, direction, box)
        if ln > 0 and abs(ln - want) / want <= 2e-2:
            return _chord(q, direction, box)
    return None


def _insert_pairs(net, target_length, mhat_g, nhat_g, burgers_vec, system_index,
                  mobile, spacing, box, rng, rel_tol=0.05, attempts=2000):
    """Insert equal-length, opposite-direction chord pairs up to target_length."""
    if target_length <= 0.0:
        return
    realized = 0.0
    tries = 0
    while realized < target_length * (1.0 - rel_tol):
        remaining = target_length - realized
        tries += 1
        if tries > attempts:
            raise MicrostructureError(
                f"system {system_index}: could not reach target density "
                f"({realized:.3e} of {target_length:.3e} m inserted)")
        p0 = rng.uniform(0.0, box, 3)
        d = _in_plane_dir(rng, mhat_g, nhat_g)
        ch = _chord(p0, d, box)
        if ch is None:
            continue
        pa, pb = ch
        ln = np.linalg.norm(pb - pa)
        if ln <= spacing:
            continue
        if 2.0 * ln > remaining + rel_tol * target_length:
            # final pair: build a chord sized to half the remaining length
            want = max(remaining / 2.0, 0.51 * spacing)
            fitted = _chord_of_length(p0, d, nhat_g, want, box, rng)
            if fitted is None:
                continue
            pa, pb = fitted
            ln = np.linalg.norm(pb - pa)
            p0 = 0.5 * (pa + pb)
        partner = _matched_partner(p0, d, nhat_g, ln, box, rng)
        if partner is None:
            continue
        qa, qb = partner
        for (a, b_pt) in ((pa, pb), (qa, qb)):
            pts = _discretize(a, b_pt, spacing) if mobile else np.array([a, b_pt])
            ids = net.new_node_ids(len(pts))
            net.add_segment(Segment(pts, ids, burgers_vec.copy(), nhat_g.copy(),
                                    system_index, mobile))
        realized += ln + np.linalg.norm(qb - qa)


def _loading_for(orientation: Orientation):
    if np.allclose(orientation.c2g, orientation_tension().c2g, atol=1e-12):
        return tension_stress(1.0), 1.0
    if np.allclose(orientation.c2g, orientation_shear().c2g, atol=1e-12):
        return shear_stress(1.0), 1.0
    return None


def generate_microstructure(rho_m: float, rho_s: float, orientation: Orientation,
                            box_size: float, case: int, seed,
                            mat: MaterialParams | None = None,
                            systems=None, node_spacing: float | None = None,
                            density_tol: float = 0.05) -> DislocationNetwork:
    """Build a network with target mobile and sessile densities.

    Parameters
    ----------
    rho_m, rho_s : float
        Target mobile and sessile line densities (1/m^2), rho_s >= rho_m.
    orientation : Orientation
        Crystal orientation; for the built-in tension/shear orientations the
        mobile segments go on the standard two active systems, otherwise on
        ``systems`` (or all 12, Schmid-weighted, if a loading form is known).
    case : int
        1: sessile Burgers out of the slip plane; 2: in the slip plane.
    seed : int or numpy SeedSequence
        Reproducibility contract: the same seed gives an identical network.
    """
    if rho_m < 0 or rho_s < rho_m:
        raise ValueError("need rho_s >= rho_m >= 0")
    if case not in (1, 2):
        raise ValueError("case must be 1 or 2")
    mat = mat or MaterialParams()
    spacing = node_spacing if node_spacing is not None else 100.0 * mat.burgers_mag
    rng = np.random.default_rng(seed)
    net = DislocationNetwork(box_size=float(box_size), rng=rng)
    vol = net.volume
    catalogue = fcc_catalogue()

    if systems is None:
        systems = default_active_systems(orientation)
    if systems is None:
        systems = tuple(range(12))

    # Schmid weights over the active set (equal weights if no loading form)
    loading = _loading_for(orientation)
    if loading is not None:
        stress, mag = loading
        weights = np.array([abs(schmid_factor(catalogue[i], orientation, stress, mag))
                            for i in systems])
    else:
        weights = np.ones(len(systems))
    if weights.sum() <= 0:
        raise MicrostructureError("all active systems have zero Schmid factor")
    weights = weights / weights.sum()

    # mobile insertion
    for sys_idx, w in zip(systems, weights):
        target = rho_m * w * vol
        s = catalogue[sys_idx]
        mhat_g = orientation.to_global(s.burgers_dir)
        nhat_g = orientation.to_global(s.plane_normal)
        burg = mat.burgers_mag * mhat_g
        _insert_pairs(net, target, mhat_g, nhat_g, burg, sys_idx, True,
                      spacing, net.box_size, rng, rel_tol=density_tol)

    # sessile insertion: isotropic over all 12 systems
    for sys_idx in range(12):
        target = rho_s / 12.0 * vol
        s = catalogue[sys_idx]
        mhat_g = orientation.to_global(s.burgers_dir)
        nhat_g = orientation.to_global(s.plane_normal)
        if case == 2:
            burg = mat.burgers_mag * mhat_g
        else:
            candidates = [orientation.to_global(v) for v in _ALL_110
                          if abs(v @ s.plane_normal) > 1e-8]
            burg = mat.burgers_mag * candidates[int(rng.integers(len(candidates)))]
        _insert_pairs(net, target, mhat_g, nhat_g, burg, sys_idx, False,
                      spacing, net.box_size, rng, rel_tol=density_tol)

    return net


def realized_densities(net: DislocationNetwork):
    """Per-system (mobile, sessile) line densities of a network."""
    mob = np.zeros(12)
    ses = np.zeros(12)
    for s in net.segments:
        if s.mobile:
            mob[s.slip_system] += s.length
        else:
            ses[s.slip_system] += s.length
    return mob / net.volume, ses / net.volume
