import json
import math

import numpy as np
import pytest

from heatreach.cauchyx import ControlSignal
from heatreach.errors import SimulationError
from heatreach.heatsim import SimConfig, Trajectory, dx4, simulate, terminal_error
from heatreach.seriescore import AnalyticNonlinearity

LIN = AnalyticNonlinearity.preset("linear_heat")
BURGERS = AnalyticNonlinearity.preset("burgers")


def exp_controls(T=1.0, n=201):
    t = np.linspace(0, T, n)
    return ControlSignal(t, np.exp(t - 1), np.exp(t + 1), dh_minus=np.exp(t - 1), dh_plus=np.exp(t + 1))


def mms_burgers(nx, nt, amp=0.01):
    """``y* = amp sin(pi x) e^-t`` with the matching source; returns the final sup error."""
    def ystar(x, t):
        return amp * np.sin(np.pi * x) * np.exp(-t)

    def source(x, t):
        y = ystar(x, t)
        yx = amp * np.pi * np.cos(np.pi * x) * np.exp(-t)
        return -y + np.pi ** 2 * y + y * yx

    cfg = SimConfig(nx=nx, nt=nt, source=source)
    t = np.linspace(0, 1, 401)
    z = np.zeros_like(t)
    ctrl = ControlSignal(t, z, z, dh_minus=z, dh_plus=z)
    tr = simulate(ystar(cfg.x, 0.0), ctrl, BURGERS, cfg)
    return float(np.max(np.abs(tr.final - ystar(cfg.x, 1.0))))


class TestSimulate:
    def test_exponential(self):
        cfg = SimConfig(nx=201, nt=4000)
        tr = simulate(np.exp(cfg.x), exp_controls(), LIN, cfg)
        assert np.max(np.abs(tr.final - np.exp(cfg.x + 1))) <= 1e-6
        assert tr.t[0] == 0.0 and tr.t[-1] == pytest.approx(1.0)

    def test_mms_order(self):
        meshes = [(51, 10), (103, 20), (207, 40), (415, 80)]
        errs = [mms_burgers(*m) for m in meshes]
        orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
        assert all(1.8 <= p <= 2.2 for p in orders), orders

    @pytest.mark.parametrize("preset", ["linear_heat", "burgers", "allen_cahn", "potential"])
    def test_zero_preserved(self, preset):
        cfg = SimConfig(nx=101, nt=500)
        t = np.linspace(0, 1, 11)
        z = np.zeros_like(t)
        tr = simulate(np.zeros_like(cfg.x), ControlSignal(t, z, z), AnalyticNonlinearity.preset(preset), cfg)
        assert np.max(np.abs(tr.y)) <= 1e-14

    def test_rk4_cross_check(self):
        a = SimConfig(nx=51, nt=2000)
        b = SimConfig(nx=51, nt=2000, scheme="explicit_rk4_check")
        ya = simulate(np.exp(a.x), exp_controls(), LIN, a).final
        yb = simulate(np.exp(b.x), exp_controls(), LIN, b).final
        assert np.max(np.abs(ya - yb)) <= 1e-5

    def test_rk4_step_limit(self):
        cfg = SimConfig(nx=201, nt=100, scheme="explicit_rk4_check")
        with pytest.raises(SimulationError, match="explicit step too large"):
            simulate(np.exp(cfg.x), exp_controls(), LIN, cfg)

    def test_domain_exit(self):
        cfg = SimConfig(nx=51, nt=100)
        t = np.linspace(0, 1, 11)
        big = np.full_like(t, 5.0)
        with pytest.raises(SimulationError, match="domain exit") as exc:
            simulate(np.full_like(cfg.x, 5.0), ControlSignal(t, big, big), BURGERS, cfg)
        assert exc.value.t == 0.0

    def test_validation(self):
        cfg = SimConfig(nx=11, nt=10)
        with pytest.raises(ValueError, match="nx \\+ 2"):
            simulate(np.zeros(11), exp_controls(), LIN, cfg)
        with pytest.raises(ValueError, match="cover"):
            simulate(np.zeros(13), exp_controls(T=0.5), LIN, cfg)
        with pytest.raises(ValueError):
            SimConfig(scheme="euler")
        with pytest.raises(ValueError):
            SimConfig(nx=2)

    def test_spline_controls(self):
        cfg = SimConfig(nx=101, nt=1000)
        t = np.linspace(0, 1, 401)
        ctrl = ControlSignal(t, np.exp(t - 1), np.exp(t + 1))
        tr = simulate(np.exp(cfg.x), ctrl, LIN, cfg)
        assert np.max(np.abs(tr.final - np.exp(cfg.x + 1))) <= 1e-6


def test_dx4_exact_on_quartics():
    x = np.linspace(-1, 1, 21)
    y = x ** 4 - 2 * x ** 3 + x
    np.testing.assert_allclose(dx4(y, x[1] - x[0]), 4 * x ** 3 - 6 * x ** 2 + 1, atol=1e-11)
    with pytest.raises(ValueError):
        dx4(np.zeros(4), 0.1)


class TestTerminal:
    def traj(self, final):
        x = np.linspace(-1, 1, 2001)
        return Trajectory(x, np.array([0.0, 1.0]), np.vstack([np.zeros_like(x), final(x)]))

    def test_identical(self):
        tr = self.traj(np.sin)
        assert terminal_error(tr, np.sin(tr.x)) == (0.0, 0.0)

    def test_offset(self):
        eps = 1e-3
        tr = self.traj(lambda x: np.cos(x) + eps)
        sup, l2 = terminal_error(tr, np.cos(tr.x))
        assert sup == pytest.approx(eps, rel=1e-10)
        assert l2 == pytest.approx(eps * math.sqrt(2), rel=1e-10)

    def test_exports(self, tmp_path):
        tr = self.traj(np.cos)
        text = tr.to_csv(tmp_path / "traj.csv")
        rows = text.strip().split("\n")
        assert len(rows) == 3 and rows[0].startswith("t,-1,")
        s = json.loads(tr.to_json(np.cos(tr.x)))
        assert s["sup_error"] == 0.0 and s["nx"] == 1999
