"""Dynamics step, junction pinning/breaking, observables and snapshots."""

import numpy as np
import pytest

from conftest import add_line, make_net
from mesoplast.dd.materials import JunctionParams, MaterialParams
from mesoplast.dd.network import (
    Junction,
    StepRejected,
    dump_network,
    evaluate,
    load_network,
    observables,
    step_network,
)

MAT = MaterialParams()
B = MAT.burgers_mag
OFF = JunctionParams(enabled=False)


def shear_12(tau):
    s = np.zeros((3, 3))
    s[0, 1] = s[1, 0] = tau
    return s


def single_glide_net(box=1.02e-6, tau=10e6, n_nodes=9):
    """One mobile line along e3 through the box centre, b || e1, n || e2.

    Under sigma = tau (e1 x e2 + e2 x e1) the resolved shear is exactly tau
    and the glide direction is +e1.
    """
    net = make_net(box)
    c = box / 2
    add_line(net, [c, c, 0.0], [c, c, box], [B, 0, 0], [0, 1, 0],
             n_nodes=n_nodes)
    return net, shear_12(tau)


class TestStep:
    def test_rigid_glide_and_exact_lp(self):
        net, sigma = single_glide_net()
        box = net.box_size
        tau = 10e6
        v = tau * B / MAT.drag
        before = net.segments[0].nodes.copy()

        obs = observables(net, sigma, MAT)
        expected_lp = tau * B**2 * box / (MAT.drag * box**3)
        assert np.linalg.norm(obs.Lp) == pytest.approx(expected_lp, rel=1e-6)
        # dyad structure: m x n
        assert obs.Lp[0, 1] == pytest.approx(expected_lp, rel=1e-6)

        dt = 1e-12
        step_network(net, sigma, dt, MAT, OFF)
        after = net.segments[0].nodes
        assert np.allclose(after - before, [v * dt, 0, 0], rtol=1e-9, atol=1e-22)

    def test_separated_pair_lp_small_without_load(self):
        # opposite-line-direction pair, same Burgers, half a box apart in a
        # large box: the mutual resolved shear is far below the 10 MPa
        # free-flight scale, so |Lp| is below 1e-3 of the free-flight value
        box = 1e-3
        net = make_net(box)
        c = box / 2
        off = box / 4
        add_line(net, [c - off, c, 0], [c - off, c, box], [B, 0, 0], [0, 1, 0],
                 n_nodes=5)
        add_line(net, [c + off, c, box], [c + off, c, 0], [B, 0, 0], [0, 1, 0],
                 n_nodes=5)
        obs0 = observables(net, np.zeros((3, 3)), MAT)
        free = observables(net, shear_12(10e6), MAT)
        assert np.linalg.norm(obs0.Lp) < 1e-3 * np.linalg.norm(free.Lp)

    def test_fully_pinned_positions_frozen(self):
        net, sigma = single_glide_net(n_nodes=5)
        seg = net.segments[0]
        for nid in seg.node_ids:
            net.junctions.append(Junction(int(nid), -1, 0.0, np.inf))
        before = seg.nodes.copy()
        step_network(net, sigma, 1e-10, MAT, OFF)
        assert np.array_equal(seg.nodes, before)

    def test_zero_stress_no_motion(self):
        net, _ = single_glide_net()
        before = net.segments[0].nodes.copy()
        step_network(net, np.zeros((3, 3)), 1e-10, MAT, OFF)
        assert np.allclose(net.segments[0].nodes, before, atol=1e-18)

    def test_oversized_step_rejected(self):
        net, sigma = single_glide_net()
        with pytest.raises(StepRejected) as exc:
            step_network(net, sigma, 1e-6, MAT, OFF)  # 40 m/s * 1e-6 s >> box/10
        assert exc.value.suggested_dt > 0

    def test_exit_through_boundary(self):
        # line near the +x face glides out; length decreases, then vanishes
        box = 1.02e-6
        net = make_net(box)
        add_line(net, [0.98 * box, box / 2, 0], [0.98 * box, box / 2, box],
                 [B, 0, 0], [0, 1, 0], n_nodes=5)
        sigma = shear_12(10e6)
        v = 10e6 * B / MAT.drag
        dt = 0.01 * box / 10 / v
        exited = 0.0
        for _ in range(400):
            if not net.segments:
                break
            try:
                d = step_network(net, sigma, dt, MAT, OFF)
            except StepRejected:
                break
            exited += d["length_exited"]
        assert not net.segments
        assert exited > 0


class TestJunctions:
    def test_capture_and_release(self):
        box = 1.02e-6
        net = make_net(box)
        therm = JunctionParams(enabled=True, max_breaking_time=1e-3,
                               capture_radius=20 * B)
        mob = add_line(net, [box * 0.3, box / 2, 0], [box * 0.3, box / 2, box],
                       [B, 0, 0], [0, 1, 0], n_nodes=9)
        # sessile line crossing the glide path of the mobile mid nodes
        add_line(net, [box * 0.31, 0, box / 2], [box * 0.31, box, box / 2],
                 [0, B, 0], [0, 1, 0], mobile=False)
        sigma = shear_12(10e6)
        v = 10e6 * B / MAT.drag
        dt = 5 * B / v
        formed = 0
        for _ in range(300):
            d = step_network(net, sigma, dt, MAT, therm)
            formed += d["formed"]
            if formed:
                break
        assert formed >= 1
        jun = net.junctions[0]
        assert jun.breaks_at - jun.formed_at <= therm.max_breaking_time
        assert jun.node_id in {int(i) for i in mob.node_ids}

        # the pinned node stays put until the deadline
        k = list(mob.node_ids).index(jun.node_id)
        pos = mob.nodes[k].copy()
        step_network(net, sigma, dt, MAT, therm)
        assert np.array_equal(mob.nodes[k], pos)

        # jump past the deadline: junction releases and the node moves again
        net.time = jun.breaks_at
        step_network(net, sigma, dt, MAT, therm)
        assert jun not in net.junctions
        step_network(net, sigma, dt, MAT, therm)
        assert np.linalg.norm(mob.nodes[k] - pos) > B

    def test_thermal_draw_uniform_in_max_breaking_time(self):
        rng_net = make_net()
        therm = JunctionParams(enabled=True, max_breaking_time=1e-3,
                               capture_radius=50 * B)
        add_line(rng_net, [0.5e-6, 0.5e-6, 0], [0.5e-6, 0.5e-6, 1.02e-6],
                 [B, 0, 0], [0, 1, 0], n_nodes=5)
        add_line(rng_net, [0.5e-6 + 30 * B, 0, 0.51e-6],
                 [0.5e-6 + 30 * B, 1.02e-6, 0.51e-6], [0, B, 0], [0, 1, 0],
                 mobile=False)
        step_network(rng_net, np.zeros((3, 3)), 1e-12, MAT, therm)
        assert rng_net.junctions
        for j in rng_net.junctions:
            assert 0.0 <= j.breaks_at - j.formed_at <= therm.max_breaking_time


class TestObservables:
    def test_empty_network(self):
        net = make_net()
        obs = observables(net, np.zeros((3, 3)), MAT)
        assert obs.rho == 0.0
        assert np.all(obs.Lp == 0) and np.all(obs.V == 0)

    def test_rho_is_length_per_volume(self):
        net = make_net()
        add_line(net, [0.1e-6, 0.2e-6, 0], [0.1e-6, 0.2e-6, 1.02e-6],
                 [B, 0, 0], [0, 1, 0], n_nodes=7)
        obs = observables(net, np.zeros((3, 3)), MAT)
        assert obs.rho == pytest.approx(1.02e-6 / net.volume, rel=1e-12)

    def test_sessile_only_has_zero_lp(self):
        net = make_net()
        add_line(net, [0.3e-6, 0, 0.4e-6], [0.3e-6, 1.02e-6, 0.4e-6],
                 [0, B, 0], [0, 1, 0], mobile=False)
        obs = observables(net, shear_12(50e6), MAT)
        assert np.all(obs.Lp == 0)
        assert obs.rho > 0

    def test_pinned_subsegments_contribute_zero(self):
        net, sigma = single_glide_net(n_nodes=5)
        seg = net.segments[0]
        for nid in seg.node_ids:
            net.junctions.append(Junction(int(nid), -1, 0.0, np.inf))
        obs = observables(net, sigma, MAT)
        assert np.all(obs.Lp == 0)
        assert np.all(obs.V == 0)

    def test_polar_velocity_direction(self):
        net, sigma = single_glide_net()
        obs = observables(net, sigma, MAT)
        v = 10e6 * B / MAT.drag
        expected = v * net.segments[0].length * B**2 / net.volume
        assert obs.V[0] == pytest.approx(expected, rel=1e-6)
        assert abs(obs.V[1]) < 1e-9 * abs(obs.V[0])

    def test_pair_velocities_cancel_in_V(self):
        # same Burgers, opposite line direction: glide velocities are opposite
        box = 1.02e-6
        net = make_net(box)
        add_line(net, [0.3 * box, 0.5 * box, 0], [0.3 * box, 0.5 * box, box],
                 [B, 0, 0], [0, 1, 0], n_nodes=5)
        add_line(net, [0.7 * box, 0.5 * box, box], [0.7 * box, 0.5 * box, 0],
                 [B, 0, 0], [0, 1, 0], n_nodes=5)
        obs = observables(net, shear_12(10e6), MAT)
        assert np.linalg.norm(obs.V) < 2e-3 * (10e6 * B / MAT.drag) * box * B**2 / net.volume
        # while their Lp contributions add
        assert obs.Lp[0, 1] > 0


class TestSnapshot:
    def test_round_trip_exact(self):
        net, sigma = single_glide_net(n_nodes=6)
        add_line(net, [0.4e-6, 0, 0.5e-6], [0.4e-6, 1.02e-6, 0.5e-6],
                 [0, B, 0], [0, 1, 0], mobile=False)
        therm = JunctionParams(enabled=True, capture_radius=30 * B)
        for _ in range(5):
            step_network(net, sigma, 2e-12, MAT, therm)
        text = dump_network(net)
        back = load_network(text)
        assert back.box_size == net.box_size
        assert back.time == net.time
        assert len(back.segments) == len(net.segments)
        for a, b in zip(back.segments, net.segments):
            assert np.array_equal(a.nodes, b.nodes)
            assert np.array_equal(a.node_ids, b.node_ids)
            assert np.array_equal(a.burgers, b.burgers)
            assert a.mobile == b.mobile and a.slip_system == b.slip_system
        assert back.rng.bit_generator.state == net.rng.bit_generator.state
        # identical evolution after restore
        s1 = step_network(net, sigma, 2e-12, MAT, therm)
        s2 = step_network(back, sigma, 2e-12, MAT, therm)
        assert s1 == s2
        for a, b in zip(back.segments, net.segments):
            assert np.array_equal(a.nodes, b.nodes)
