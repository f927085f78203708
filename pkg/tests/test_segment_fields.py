"""Oracles for the non-singular segment stress: classical Volterra limits,
superposition, antisymmetry, loop equilibrium and core regularity."""

import numpy as np
import pytest

from mesoplast.dd.fields import node_velocity, pk_force, segment_stress, segment_stress_many
from mesoplast.dd.materials import MaterialParams


MAT = MaterialParams()
MU, NU, B, A = (MAT.shear_modulus, MAT.poisson, MAT.burgers_mag, MAT.core_radius)


class _Seg:
    def __init__(self, p0, p1, burgers):
        self.p0 = np.asarray(p0, float)
        self.p1 = np.asarray(p1, float)
        self.burgers = np.asarray(burgers, float)


def _long_line(b):
    L = 4e-3
    return _Seg([0, 0, -L], [0, 0, L], b)


class TestScrewOracle:
    def test_classical_screw_field(self):
        # sigma_yz at r = 1 um on the x axis: mu b / (2 pi r) = 1.948 MPa
        seg = _long_line([0, 0, B])
        r = 1e-6
        sig = segment_stress(seg, [r, 0, 0], MAT)
        exact = MU * B / (2 * np.pi) * r * (r**2 + 2 * A**2) / (r**2 + A**2) ** 2
        assert sig[1, 2] == pytest.approx(exact, rel=1e-6)
        assert sig[1, 2] == pytest.approx(1.948e6, rel=1e-3)
        # all non-screw components vanish
        assert abs(sig[0, 0]) + abs(sig[1, 1]) + abs(sig[2, 2]) + abs(sig[0, 1]) \
            < 1e-8 * abs(sig[1, 2])

    def test_reflection_antisymmetry(self):
        seg = _long_line([0, 0, B])
        s1 = segment_stress(seg, [1e-6, 0.3e-6, 0.1e-6], MAT)
        s2 = segment_stress(seg, [-1e-6, -0.3e-6, 0.1e-6], MAT)
        assert s1[1, 2] == pytest.approx(-s2[1, 2], rel=1e-12)


class TestEdgeOracle:
    @pytest.mark.parametrize("x,y", [(1e-6, 0.4e-6), (-0.7e-6, 0.9e-6),
                                     (0.2e-6, -1.1e-6)])
    def test_classical_edge_field(self, x, y):
        seg = _long_line([B, 0, 0])
        sig = segment_stress(seg, [x, y, 0], MAT)
        D = MU * B / (2 * np.pi * (1 - NU))
        r2 = x * x + y * y
        assert sig[0, 0] == pytest.approx(-D * y * (3 * x * x + y * y) / r2**2, rel=1e-5)
        assert sig[1, 1] == pytest.approx(D * y * (x * x - y * y) / r2**2, rel=1e-5)
        assert sig[0, 1] == pytest.approx(D * x * (x * x - y * y) / r2**2, rel=1e-5)
        assert sig[2, 2] == pytest.approx(-2 * D * NU * y / r2, rel=1e-5)


class TestStructure:
    def test_symmetry(self):
        rng = np.random.default_rng(3)
        seg = _Seg(rng.uniform(-1, 1, 3) * 1e-6, rng.uniform(-1, 1, 3) * 1e-6,
                   B * rng.standard_normal(3))
        sig = segment_stress(seg, rng.uniform(-1, 1, 3) * 1e-6, MAT)
        assert np.allclose(sig, sig.T, rtol=0, atol=1e-16 * np.abs(sig).max())

    def test_superposition(self):
        rng = np.random.default_rng(4)
        p0 = rng.uniform(-1, 1, (5, 3)) * 1e-6
        p1 = rng.uniform(-1, 1, (5, 3)) * 1e-6
        burg = B * rng.standard_normal((5, 3))
        x = np.array([[0.2e-6, -0.1e-6, 0.4e-6]])
        total = segment_stress_many(p0, p1, burg, x, MU, NU, A)[0].sum(axis=0)
        acc = np.zeros((3, 3))
        for k in range(5):
            acc += segment_stress(_Seg(p0[k], p1[k], burg[k]), x[0], MAT)
        assert np.allclose(total, acc, rtol=1e-12)

    def test_opposite_burgers_cancel(self):
        seg = _Seg([0, 0, -1e-6], [0.3e-6, 0.1e-6, 1e-6], [B, 0.2 * B, 0])
        anti = _Seg(seg.p0, seg.p1, -seg.burgers)
        x = np.array([0.5e-6, 0.2e-6, 0.0])
        assert np.allclose(segment_stress(seg, x, MAT) + segment_stress(anti, x, MAT),
                           0.0, atol=1e-20)

    def test_far_field_decay(self):
        seg = _Seg([0, 0, 0], [0, 0, 1e-6], [B, 0, 0])
        s1 = np.abs(segment_stress(seg, [2e-6, 0, 0.5e-6], MAT)).max()
        s2 = np.abs(segment_stress(seg, [20e-6, 0, 0.5e-6], MAT)).max()
        # between 1/r (line) and 1/r^2 (point source far field)
        assert s2 < s1 / 10 * 1.2
        assert s2 > 0

    def test_core_axis_regularized(self):
        seg = _Seg([0, 0, -1e-6], [0, 0, 1e-6], [B, 0, 0.4 * B])
        for frac in (0.0, 0.37, 0.5, 1.0):
            sig = segment_stress(seg, seg.p0 + frac * (seg.p1 - seg.p0), MAT)
            assert np.all(np.isfinite(sig))

    def test_closed_loop_is_divergence_free(self):
        c = 1e-6
        quad_pts = [np.array([-c, -c, 0]), np.array([c, -c, 0]),
                    np.array([c, c, 0]), np.array([-c, c, 0])]
        burg = np.array([B, 0.3 * B, 0.1 * B])
        p0 = np.array(quad_pts)
        p1 = np.array(quad_pts[1:] + quad_pts[:1])
        b4 = np.tile(burg, (4, 1))

        def loop_stress(x):
            return segment_stress_many(p0, p1, b4, x[None], MU, NU, A)[0].sum(axis=0)

        h = 1e-11
        for x in [np.array([0.3e-6, 0.2e-6, 0.4e-6]),
                  np.array([-0.9e-6, 0.1e-6, 0.05e-6])]:
            div = np.zeros(3)
            scale = 0.0
            for j in range(3):
                e = np.zeros(3)
                e[j] = h
                sp, sm = loop_stress(x + e), loop_stress(x - e)
                div += (sp[:, j] - sm[:, j]) / (2 * h)
                scale = max(scale, np.abs(sp).max())
            assert np.linalg.norm(div) * np.linalg.norm(x) / scale < 1e-5


class TestPkForce:
    def test_shear_on_screw_like_config(self):
        tau, b = 3e6, B
        sigma = tau * (np.outer([1, 0, 0], [0, 1, 0]) + np.outer([0, 1, 0], [1, 0, 0]))
        f = pk_force(sigma, [b, 0, 0], [0, 0, 1])
        assert np.allclose(f, [tau * b, 0, 0], rtol=1e-14)

    def test_zero_stress(self):
        assert np.allclose(pk_force(np.zeros((3, 3)), [B, 0, 0], [0, 0, 1]), 0)

    def test_force_perpendicular_to_line(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            sig = rng.standard_normal((3, 3))
            sig = sig + sig.T
            b = rng.standard_normal(3)
            xi = rng.standard_normal(3)
            xi /= np.linalg.norm(xi)
            assert abs(pk_force(sig, b, xi) @ xi) < 1e-12 * np.abs(sig).max()


class TestNodeVelocity:
    def test_drag_limited_magnitude(self):
        # tau = 10 MPa resolved glide force tau*b -> |v| = tau b / B_drag
        tau = 10e6
        f = np.array([tau * B, 0, 0])
        v = node_velocity(f, MAT, [0, 1, 0], pinned=False)
        assert np.linalg.norm(v) == pytest.approx(tau * B / MAT.drag, rel=1e-14)
        assert np.linalg.norm(v) == pytest.approx(40.48, rel=1e-3)

    def test_pinned_zero(self):
        assert np.allclose(node_velocity([1e3, 0, 0], MAT, [0, 1, 0], pinned=True), 0)

    def test_normal_force_projected_out(self):
        v = node_velocity([0, 5e2, 0], MAT, [0, 1, 0], pinned=False)
        assert np.allclose(v, 0, atol=1e-30)
