import numpy as np
import pytest

from mesoplast.crystallography import orientation_shear, orientation_tension
from mesoplast.dd.materials import MaterialParams
from mesoplast.dd.microstructure import (
    MicrostructureError,
    generate_microstructure,
    realized_densities,
)
from mesoplast.crystallography import SHEAR_ACTIVE_SYSTEMS, TENSION_ACTIVE_SYSTEMS

MAT = MaterialParams()
BOX = 4000 * MAT.burgers_mag


class TestDensities:
    def test_tension_targets_hit_on_two_systems(self):
        net = generate_microstructure(5e12, 2e14, orientation_tension(), BOX,
                                      case=1, seed=11, mat=MAT)
        mob, ses = realized_densities(net)
        # mobiles only on the primary and conjugate, split by equal weights
        active = set(TENSION_ACTIVE_SYSTEMS)
        for i in range(12):
            if i in active:
                assert mob[i] == pytest.approx(5e12 / 2, rel=0.05)
            else:
                assert mob[i] == 0.0
        assert mob.sum() == pytest.approx(5e12, rel=0.05)
        assert ses.sum() == pytest.approx(2e14, rel=0.05)
        for i in range(12):
            assert ses[i] == pytest.approx(2e14 / 12, rel=0.05)

    def test_shear_weights_two_to_one(self):
        net = generate_microstructure(5e12, 2e14, orientation_shear(), BOX,
                                      case=1, seed=3, mat=MAT)
        mob, _ = realized_densities(net)
        primary, secondary = SHEAR_ACTIVE_SYSTEMS
        assert mob[primary] == pytest.approx(2 * mob[secondary], rel=0.12)
        assert mob.sum() == pytest.approx(5e12, rel=0.05)

    def test_sessile_only(self):
        net = generate_microstructure(0.0, 2e13, orientation_tension(), BOX,
                                      case=1, seed=5, mat=MAT)
        assert all(not s.mobile for s in net.segments)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            generate_microstructure(1e13, 1e12, orientation_tension(), BOX, 1, 0)
        with pytest.raises(ValueError):
            generate_microstructure(0, 1e13, orientation_tension(), BOX, 3, 0)


class TestGeometry:
    def test_endpoints_on_faces_interior_inside(self):
        net = generate_microstructure(5e12, 5e13, orientation_tension(), BOX,
                                      case=2, seed=7, mat=MAT)
        for s in net.segments:
            for p in (s.nodes[0], s.nodes[-1]):
                on_face = np.any(np.isclose(p, 0.0, atol=1e-9 * BOX) |
                                 np.isclose(p, BOX, atol=1e-9 * BOX))
                assert on_face
            assert np.all(s.nodes >= -1e-9 * BOX)
            assert np.all(s.nodes <= BOX * (1 + 1e-9))

    def test_paired_zero_net_burgers(self):
        net = generate_microstructure(5e12, 2e13, orientation_tension(), BOX,
                                      case=1, seed=13, mat=MAT)
        alpha = np.zeros((3, 3))
        alpha_mob = np.zeros((3, 3))
        total = 0.0
        for s in net.segments:
            ln = s.length
            contrib = np.outer(s.burgers, s.line_dir) * ln
            alpha += contrib
            if s.mobile:
                alpha_mob += contrib
            total += ln
        scale = MAT.burgers_mag * total
        assert np.abs(alpha_mob).max() < 0.02 * scale
        assert np.abs(alpha).max() < 0.02 * scale

    def test_mobile_lines_in_their_slip_plane(self):
        net = generate_microstructure(5e12, 2e13, orientation_tension(), BOX,
                                      case=1, seed=17, mat=MAT)
        for s in net.segments:
            if s.mobile:
                # every edge perpendicular to the plane normal
                d = np.diff(s.nodes, axis=0)
                assert np.abs(d @ s.plane_normal).max() < 1e-9 * BOX
                # glissile: Burgers in plane
                assert abs(s.burgers @ s.plane_normal) < 1e-9 * MAT.burgers_mag


class TestCases:
    def test_case1_sessile_burgers_out_of_plane(self):
        net = generate_microstructure(0.0, 2e13, orientation_tension(), BOX,
                                      case=1, seed=19, mat=MAT)
        for s in net.segments:
            assert abs(s.burgers @ s.plane_normal) > 0.1 * MAT.burgers_mag

    def test_case2_sessile_burgers_in_plane(self):
        net = generate_microstructure(0.0, 2e13, orientation_tension(), BOX,
                                      case=2, seed=19, mat=MAT)
        for s in net.segments:
            assert abs(s.burgers @ s.plane_normal) < 1e-9 * MAT.burgers_mag


class TestDeterminism:
    def test_same_seed_identical(self):
        a = generate_microstructure(5e12, 5e13, orientation_tension(), BOX,
                                    case=1, seed=23, mat=MAT)
        b = generate_microstructure(5e12, 5e13, orientation_tension(), BOX,
                                    case=1, seed=23, mat=MAT)
        assert len(a.segments) == len(b.segments)
        for sa, sb in zip(a.segments, b.segments):
            assert np.array_equal(sa.nodes, sb.nodes)
            assert np.array_equal(sa.burgers, sb.burgers)

    def test_different_seed_differs(self):
        a = generate_microstructure(5e12, 5e13, orientation_tension(), BOX,
                                    case=1, seed=23, mat=MAT)
        b = generate_microstructure(5e12, 5e13, orientation_tension(), BOX,
                                    case=1, seed=24, mat=MAT)
        assert not all(np.array_equal(sa.nodes, sb.nodes)
                       for sa, sb in zip(a.segments, b.segments))
