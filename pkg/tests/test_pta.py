"""Running averages, coarse rates and the fixed-load averaging loop."""

import numpy as np
import pytest
from scipy.integrate import quad

from conftest import add_line, make_net
from mesoplast.dd.materials import JunctionParams, MaterialParams
from mesoplast.pta import (
    PtaParams,
    RunningAverage,
    coarse_rate,
    norm_of,
    run_fixed_load_average,
    update_running_average,
)

MAT = MaterialParams()
B = MAT.burgers_mag
OFF = JunctionParams(enabled=False)


def shear_12(tau):
    s = np.zeros((3, 3))
    s[0, 1] = s[1, 0] = tau
    return s


class TestRunningAverage:
    def test_hand_weighted_mean(self):
        acc = RunningAverage(tol=1e-2, min_updates=1)
        update_running_average(acc, 1.0, 1.0)
        update_running_average(acc, 2.0, 3.0)
        assert acc.value == pytest.approx(1.75)

    def test_constant_stream_converges_after_min_window(self):
        acc = RunningAverage(tol=1e-3, min_updates=10)
        for k in range(9):
            acc.update(4.2, 0.1)
            assert not acc.converged
        acc.update(4.2, 0.1)
        assert acc.converged
        assert acc.value == pytest.approx(4.2)

    def test_alternating_stream_converges_to_zero(self):
        acc = RunningAverage(tol=5e-2, min_updates=10)
        for k in range(500):
            acc.update(1.0 if k % 2 == 0 else -1.0, 0.5)
        assert abs(acc.value) < 1e-2
        assert acc.converged

    def test_total_weight_strictly_increasing(self):
        acc = RunningAverage(tol=1e-2)
        w = 0.0
        for k in range(5):
            acc.update(float(k), 0.25)
            assert acc.total_weight > w
            w = acc.total_weight

    def test_tensor_values(self):
        acc = RunningAverage(tol=1e-6, min_updates=2)
        acc.update(np.eye(3), 1.0)
        acc.update(3 * np.eye(3), 1.0)
        assert np.allclose(acc.value, 2 * np.eye(3))

    def test_rejects_nonpositive_weight(self):
        with pytest.raises(ValueError):
            RunningAverage(tol=1e-2).update(1.0, 0.0)


class TestCoarseRate:
    def test_arithmetic(self):
        assert coarse_rate(2.0, 1.0, 0.1) == pytest.approx(10.0)

    def test_equal_averages(self):
        assert np.allclose(coarse_rate(np.ones((3, 3)), np.ones((3, 3)), 0.2), 0.0)

    def test_matches_derivative_of_windowed_integral(self):
        # H-observable: (1/D) * int_{t-D}^t R dt'; its time derivative is
        # (R(t) - R(t-D))/D. Oracle: central finite differences of the
        # quadrature of the integral.
        R = lambda s: np.sin(3.0 * s) + 0.25 * s * s
        D = 0.37
        t = 1.9

        def h_obs(tt):
            val, _ = quad(R, tt - D, tt, epsabs=1e-14, epsrel=1e-14)
            return val / D

        eps = 1e-6
        oracle = (h_obs(t + eps) - h_obs(t - eps)) / (2 * eps)
        assert coarse_rate(R(t), R(t - D), D) == pytest.approx(oracle, abs=1e-8)

    def test_rejects_nonpositive_window(self):
        with pytest.raises(ValueError):
            coarse_rate(1.0, 0.0, 0.0)


def small_params(**kw):
    defaults = dict(delta_star=0.1, tol_rho=1e-2, tol_lp=3e-2,
                    breaking_time=1e-3, max_steps=3000, min_updates=8)
    defaults.update(kw)
    return PtaParams(**defaults)


class TestFixedLoadAverage:
    def test_sessile_only_immediate(self):
        net = make_net()
        add_line(net, [0.3e-6, 0, 0.4e-6], [0.3e-6, 1.02e-6, 0.4e-6],
                 [0, B, 0], [0, 1, 0], mobile=False)
        rho0 = net.density()
        res = run_fixed_load_average(net, shear_12(20e6), small_params(), MAT, OFF)
        assert res.converged
        assert np.all(res.Lp == 0)
        assert res.rho == pytest.approx(rho0, rel=1e-12)
        assert res.steps <= 10

    def test_single_free_segment_matches_formula(self):
        box = 1.02e-6
        net = make_net(box)
        c = box / 2
        add_line(net, [c, c, 0], [c, c, box], [B, 0, 0], [0, 1, 0], n_nodes=9)
        tau = 10e6
        params = small_params(tol_lp=1e-2)
        res = run_fixed_load_average(net, shear_12(tau), params, MAT, OFF)
        expected = tau * B**2 * box / (MAT.drag * box**3)
        assert norm_of(res.Lp) == pytest.approx(expected, rel=2 * params.tol_lp)

    def test_zero_stress_zero_lp(self):
        box = 1.02e-6
        net = make_net(box)
        add_line(net, [box / 2, box / 2, 0], [box / 2, box / 2, box],
                 [B, 0, 0], [0, 1, 0], n_nodes=9)
        res = run_fixed_load_average(net, np.zeros((3, 3)), small_params(), MAT, OFF)
        assert norm_of(res.Lp) < 1e-12

    def test_budget_exhaustion_flags(self):
        box = 1.02e-6
        net = make_net(box)
        add_line(net, [box / 2, box / 2, 0], [box / 2, box / 2, box],
                 [B, 0, 0], [0, 1, 0], n_nodes=9)
        params = small_params(max_steps=3, min_updates=50)
        res = run_fixed_load_average(net, shear_12(10e6), params, MAT, OFF)
        assert not res.converged
        assert res.steps == 3

    def test_params_enforce_timescale_ordering(self):
        with pytest.raises(ValueError):
            PtaParams(delta_star=1e-3, breaking_time=1e-3)
