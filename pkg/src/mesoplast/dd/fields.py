"""Non-singular stress fields of straight dislocation segments.

The stress of a finite straight segment in an infinite isotropic medium is
evaluated in closed form from the classical line-integral representation
with the distance regularized as R_a = sqrt(R^2 + a^2), where ``a`` is the
core spreading radius. The field is finite everywhere, including on the
segment axis, and reduces to the Volterra fields of infinite straight
dislocations in the long-segment, a -> 0 limit.

With the segment parametrized by arc length s from the foot of the
perpendicular of the field point (d the perpendicular offset, t the unit
tangent, w = b x t), every component is a polynomial in s over odd powers
of R_a, so the integral over [s1, s2] reduces to five elementary
antiderivatives.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit, prange
except ImportError:  # pragma: no cover - numba is an optional accelerator
    prange = range

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn
        return deco


def _antiderivatives(s, c2):
    """[int 1/Ra^3, int s/Ra^3, int 1/Ra^5, int s/Ra^5, int s^2/Ra^5]."""
    ra = np.sqrt(c2 + s * s)
    ra3 = ra * ra * ra
    i03 = s / (c2 * ra)
    i13 = -1.0 / ra
    i05 = s / (3.0 * c2 * ra3) + 2.0 * s / (3.0 * c2 * c2 * ra)
    i15 = -1.0 / (3.0 * ra3)
    i25 = s * s * s / (3.0 * c2 * ra3)
    return i03, i13, i05, i15, i25


def segment_stress_many(p0, p1, burgers, points, mu, nu, a_core):
    """Stress at ``points`` from each of a set of straight segments.

    Parameters
    ----------
    p0, p1 : (S, 3) arrays
        Segment endpoints (m).
    burgers : (S, 3) array
        Full Burgers vectors (m).
    points : (P, 3) array
        Field points.
    mu, nu, a_core : float
        Shear modulus (Pa), Poisson ratio, core radius (m).

    Returns
    -------
    (P, S, 3, 3) array of stresses in Pa. Callers sum over the source axis,
    optionally masking sources (e.g. a node's own line).
    """
    p0 = np.atleast_2d(np.asarray(p0, float))
    p1 = np.atleast_2d(np.asarray(p1, float))
    burgers = np.atleast_2d(np.asarray(burgers, float))
    points = np.atleast_2d(np.asarray(points, float))

    seg = p1 - p0                                   # (S,3)
    raw_len = np.linalg.norm(seg, axis=1)
    length = np.where(raw_len > 0.0, raw_len, 1.0)
    t = seg / length[:, None]                       # (S,3)

    rel = points[:, None, :] - p0[None, :, :]       # (P,S,3)
    s0 = np.einsum("psk,sk->ps", rel, t)            # foot parameter
    d = rel - s0[..., None] * t[None, :, :]         # perpendicular offset
    s1 = -s0
    s2 = s1 + length[None, :]

    c2 = np.einsum("psk,psk->ps", d, d) + a_core * a_core
    a03, a13, a05, a15, a25 = _antiderivatives(s2, c2)
    b03, b13, b05, b15, b25 = _antiderivatives(s1, c2)
    i03 = a03 - b03
    i13 = a13 - b13
    i05 = a05 - b05
    i15 = a15 - b15
    i25 = a25 - b25

    w = np.cross(burgers, t)                        # (S,3)
    bxd = np.cross(np.broadcast_to(burgers, d.shape), d)   # (P,S,3)
    dw = np.einsum("psk,sk->ps", d, w)

    a2 = a_core * a_core
    pref1 = mu / (8.0 * np.pi)
    pref2 = mu / (4.0 * np.pi * (1.0 - nu))
    k03 = pref1 * (2.0 * i03 + 3.0 * a2 * i05)
    k13 = pref1 * (2.0 * i13 + 3.0 * a2 * i15)
    g03 = pref2 * i03
    g13 = pref2 * i13
    diag = pref2 * dw * (i03 + 3.0 * a2 * i05)
    q05 = 3.0 * pref2 * dw * i05
    q15 = 3.0 * pref2 * dw * i15
    q25 = 3.0 * pref2 * dw * i25

    npts, nsrc = d.shape[0], d.shape[1]
    sig = np.empty((npts, nsrc, 3, 3))
    for i in range(3):
        bi, ti, wi, di = bxd[..., i], t[:, i], w[:, i], d[..., i]
        for j in range(i, 3):
            bj, tj, wj, dj = bxd[..., j], t[:, j], w[:, j], d[..., j]
            val = (bi * tj + bj * ti) * k03 - (wi * tj + wj * ti) * k13
            val += -(wi * dj + wj * di) * g03 + (wi * tj + wj * ti) * g13
            val += di * dj * q05 - (di * tj + dj * ti) * q15 + (ti * tj) * q25
            if i == j:
                val += diag
            sig[..., i, j] = val
            if i != j:
                sig[..., j, i] = val

    # zero-length sources contribute nothing
    if np.any(raw_len == 0.0):
        sig[:, raw_len == 0.0] = 0.0
    return sig


@njit(cache=True, parallel=True)
def _stress_sum_masked(p0, p1, burgers, points, point_parents, src_parents,
                       mu, nu, a_core, out):
    """Accumulate the summed stress of all other-parent segments per point.

    Parallel over field points only; each point's source sum stays in a
    fixed order, so results are independent of the thread count.
    """
    npts = points.shape[0]
    nsrc = p0.shape[0]
    pref1 = mu / (8.0 * np.pi)
    pref2 = mu / (4.0 * np.pi * (1.0 - nu))
    a2 = a_core * a_core
    for p in prange(npts):
        for s in range(nsrc):
            if point_parents[p] == src_parents[s]:
                continue
            ex = p1[s, 0] - p0[s, 0]
            ey = p1[s, 1] - p0[s, 1]
            ez = p1[s, 2] - p0[s, 2]
            ln = np.sqrt(ex * ex + ey * ey + ez * ez)
            if ln <= 0.0:
                continue
            tx, ty, tz = ex / ln, ey / ln, ez / ln
            bx, by, bz = burgers[s, 0], burgers[s, 1], burgers[s, 2]
            wx = by * tz - bz * ty
            wy = bz * tx - bx * tz
            wz = bx * ty - by * tx
            rx = points[p, 0] - p0[s, 0]
            ry = points[p, 1] - p0[s, 1]
            rz = points[p, 2] - p0[s, 2]
            s0 = rx * tx + ry * ty + rz * tz
            dx = rx - s0 * tx
            dy = ry - s0 * ty
            dz = rz - s0 * tz
            c2 = dx * dx + dy * dy + dz * dz + a2
            s1 = -s0
            s2 = s1 + ln
            # definite integrals of 1/Ra^3, s/Ra^3, 1/Ra^5, s/Ra^5, s^2/Ra^5
            ra1 = np.sqrt(c2 + s1 * s1)
            ra2 = np.sqrt(c2 + s2 * s2)
            ra1_3 = ra1 * ra1 * ra1
            ra2_3 = ra2 * ra2 * ra2
            i03 = s2 / (c2 * ra2) - s1 / (c2 * ra1)
            i13 = 1.0 / ra1 - 1.0 / ra2
            i05 = (s2 / (3.0 * c2 * ra2_3) + 2.0 * s2 / (3.0 * c2 * c2 * ra2)
                   - s1 / (3.0 * c2 * ra1_3) - 2.0 * s1 / (3.0 * c2 * c2 * ra1))
            i15 = 1.0 / (3.0 * ra1_3) - 1.0 / (3.0 * ra2_3)
            i25 = (s2 * s2 * s2 / (3.0 * c2 * ra2_3)
                   - s1 * s1 * s1 / (3.0 * c2 * ra1_3))

            bdx = by * dz - bz * dy
            bdy = bz * dx - bx * dz
            bdz = bx * dy - by * dx
            dw = dx * wx + dy * wy + dz * wz

            k03 = pref1 * (2.0 * i03 + 3.0 * a2 * i05)
            k13 = pref1 * (2.0 * i13 + 3.0 * a2 * i15)
            g03 = pref2 * i03
            g13 = pref2 * i13
            diag = pref2 * dw * (i03 + 3.0 * a2 * i05)
            q05 = 3.0 * pref2 * dw * i05
            q15 = 3.0 * pref2 * dw * i15
            q25 = 3.0 * pref2 * dw * i25

            bv = (bdx, bdy, bdz)
            tv = (tx, ty, tz)
            wv = (wx, wy, wz)
            dv = (dx, dy, dz)
            for i in range(3):
                for j in range(i, 3):
                    val = ((bv[i] * tv[j] + bv[j] * tv[i]) * k03
                           - (wv[i] * tv[j] + wv[j] * tv[i]) * k13
                           - (wv[i] * dv[j] + wv[j] * dv[i]) * g03
                           + (wv[i] * tv[j] + wv[j] * tv[i]) * g13
                           + dv[i] * dv[j] * q05
                           - (dv[i] * tv[j] + dv[j] * tv[i]) * q15
                           + tv[i] * tv[j] * q25)
                    if i == j:
                        val += diag
                    out[p, i, j] += val
                    if i != j:
                        out[p, j, i] += val
    return out


def stress_sum_masked(p0, p1, burgers, points, point_parents, src_parents,
                      mu, nu, a_core):
    """Summed stress at each point from all segments with a different parent."""
    out = np.zeros((len(points), 3, 3))
    if len(points) == 0 or len(p0) == 0:
        return out
    return _stress_sum_masked(
        np.ascontiguousarray(p0, float), np.ascontiguousarray(p1, float),
        np.ascontiguousarray(burgers, float), np.ascontiguousarray(points, float),
        np.ascontiguousarray(point_parents, np.int64),
        np.ascontiguousarray(src_parents, np.int64),
        float(mu), float(nu), float(a_core), out)


def segment_stress(seg, x, mat) -> np.ndarray:
    """Stress tensor (Pa) of one segment at one field point.

    ``seg`` needs endpoint and Burgers attributes (``p0``, ``p1``,
    ``burgers``); any point is allowed, including on the core axis, where
    the regularized value is finite.
    """
    out = segment_stress_many(seg.p0[None], seg.p1[None], seg.burgers[None],
                              np.asarray(x, float)[None],
                              mat.shear_modulus, mat.poisson, mat.core_radius)
    return out[0, 0]


def pk_force(stress, burgers, line_dir) -> np.ndarray:
    """Peach-Koehler force per unit length, f = (sigma . b) x xi."""
    stress = np.asarray(stress, float)
    return np.cross(stress @ np.asarray(burgers, float), np.asarray(line_dir, float))


def node_velocity(f, mat, plane_normal, pinned: bool) -> np.ndarray:
    """Overdamped glide velocity: in-plane force over drag; pinned -> 0."""
    if pinned:
        return np.zeros(3)
    f = np.asarray(f, float)
    n = np.asarray(plane_normal, float)
    f_glide = f - (f @ n) * n
    return f_glide / mat.drag
