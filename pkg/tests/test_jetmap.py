import math

import numpy as np
import pytest
import sympy as sp

from heatreach.errors import DepthExhausted, DomainError, ParityError
from heatreach.jetmap import (
    fit_C_prime,
    is_odd_nonlinearity,
    parity_filter,
    propagate_space,
    propagate_time,
    require_odd,
    spatial_column,
    time_traces,
    verify_bounds_D2,
)
from heatreach.seriescore import AnalyticNonlinearity, BivariateJet, SpatialJet, TimeJetPair, to_exact

import oracles

X = oracles.X


def x_jet(K):
    a = np.zeros(K + 1)
    a[1] = 1.0
    return SpatialJet(a)


def geometric_jet(C, K, pole=5.0):
    # y(x) = C / (1 - x/pole)
    return SpatialJet(np.array([C * math.factorial(k) / pole ** k for k in range(K + 1)]))


class TestPropagateTime:
    def test_linear_heat_shifts(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(-1, 1, 16)
        J = propagate_time(SpatialJet(a), AnalyticNonlinearity.preset("linear_heat"), 7)
        for (k, n), filled in np.ndenumerate(J.mask):
            assert filled == (k + 2 * n <= 15)
            if filled:
                assert J.c[k, n] == pytest.approx(a[k + 2 * n], rel=1e-14)

    def test_burgers_on_x(self):
        J = propagate_time(x_jet(7), AnalyticNonlinearity.preset("burgers"), 3)
        assert J.c[0, 1] == 0.0
        assert J.c[1, 1] == -1.0

    @pytest.mark.parametrize("c", [0.3, -0.7, 1.2])
    def test_allen_cahn_constant(self, c):
        a = np.zeros(6)
        a[0] = c
        J = propagate_time(SpatialJet(a), AnalyticNonlinearity.preset("allen_cahn"), 2)
        assert J.c[0, 1] == pytest.approx(c - c ** 3, rel=1e-15)
        # second derivative of the ODE flow: (1 - 3c^2)(c - c^3)
        assert J.c[0, 2] == pytest.approx((1 - 3 * c ** 2) * (c - c ** 3), rel=1e-14)

    @pytest.mark.parametrize("preset", ["burgers", "allen_cahn", "potential"])
    def test_symbolic_oracle(self, preset):
        f = AnalyticNonlinearity.preset(preset, potential=[0.2, 0.1, -0.05])
        P = sp.Rational(1, 10) + X / 7 - X ** 2 / 5 + X ** 3 / 11 + X ** 5 / 3
        K, N = 11, 4
        y0 = SpatialJet([float(sp.diff(P, X, k).subs(X, 0)) for k in range(K + 1)])
        J = propagate_time(y0, f, N)
        ref = oracles.mixed_jet(f.coeffs, P, K, N)
        m = J.mask
        np.testing.assert_allclose(J.c[m].astype(float), ref[m], rtol=1e-12, atol=1e-12)

    def test_exact_mode_matches_oracle(self):
        f = AnalyticNonlinearity.preset("burgers")
        P = X / 3 - X ** 2 / 4 + X ** 4
        K, N = 9, 3
        y0 = SpatialJet(to_exact([str(sp.diff(P, X, k).subs(X, 0)) for k in range(K + 1)]))
        J = propagate_time(y0, f, N)
        ys = oracles.time_jet(f.coeffs, P, N)
        for (k, n), filled in np.ndenumerate(J.mask):
            if filled:
                assert sp.Rational(str(J.c[k, n])) == sp.diff(ys[n], X, k).subs(X, 0)

    def test_depth_exhausted(self):
        with pytest.raises(DepthExhausted, match="exhausted"):
            propagate_time(x_jet(6), AnalyticNonlinearity.preset("burgers"), 3)

    def test_domain(self):
        a = np.zeros(8)
        a[0] = 6.0
        with pytest.raises(DomainError):
            propagate_time(SpatialJet(a), AnalyticNonlinearity.preset("allen_cahn"), 3)

    def test_potential_is_linear(self):
        f = AnalyticNonlinearity.preset("potential", potential=[0.1, -0.2, 0.05])
        rng = np.random.default_rng(3)
        for _ in range(10):
            a, b = rng.uniform(-1, 1, (2, 14))
            s, r = rng.uniform(-2, 2, 2)
            Ja = propagate_time(SpatialJet(a), f, 6).c
            Jb = propagate_time(SpatialJet(b), f, 6).c
            Jab = propagate_time(SpatialJet(s * a + r * b), f, 6).c
            np.testing.assert_allclose(Jab, s * Ja + r * Jb, rtol=1e-12, atol=1e-12)


class TestPropagateSpace:
    def test_constant(self):
        d = np.zeros(5)
        d[0] = 1.0
        J = propagate_space(TimeJetPair(d, np.zeros(5)), AnalyticNonlinearity.preset("linear_heat"), 9)
        expect = np.zeros_like(J.c)
        expect[0, 0] = 1.0
        assert np.array_equal(np.where(J.mask, J.c, 0.0), expect)

    def test_exponential(self):
        J = propagate_space(TimeJetPair(np.ones(6), np.ones(6)), AnalyticNonlinearity.preset("linear_heat"), 11)
        # Taylor normalization rounds; the exact mode is bit-exact
        np.testing.assert_allclose(J.c[J.mask], 1.0, rtol=1e-14)
        Je = propagate_space(TimeJetPair(to_exact(np.ones(6)), to_exact(np.ones(6))),
                             AnalyticNonlinearity.preset("linear_heat"), 11)
        assert all(v == 1 for v in Je.c[Je.mask])
        for (k, n), filled in np.ndenumerate(J.mask):
            assert filled == (k + 2 * n <= 11)

    def test_depth_exhausted(self):
        with pytest.raises(DepthExhausted):
            propagate_space(TimeJetPair(np.ones(3), np.ones(3)), AnalyticNonlinearity.preset("burgers"), 6)

    @pytest.mark.parametrize("preset", ["linear_heat", "burgers", "allen_cahn"])
    def test_roundtrip_time_space_exact(self, preset):
        f = AnalyticNonlinearity.preset(preset)
        rng = np.random.default_rng(11)
        for _ in range(3):
            y0 = SpatialJet(to_exact(rng.uniform(-0.01, 0.01, 14)))
            J = propagate_time(y0, f, 6)
            J2 = propagate_space(time_traces(J), f, 13)
            m = J.mask & J2.mask
            assert np.all(J.c[m] == J2.c[m])
            assert np.all(J2.c[:, 0] == y0.a)

    @pytest.mark.parametrize("preset", ["linear_heat", "burgers", "allen_cahn"])
    def test_roundtrip_space_time_exact(self, preset):
        f = AnalyticNonlinearity.preset(preset)
        rng = np.random.default_rng(12)
        for _ in range(3):
            d, dt = (to_exact(v) for v in rng.uniform(-0.01, 0.01, (2, 7)))
            J = propagate_space(TimeJetPair(d, dt), f, 13)
            J2 = propagate_time(spatial_column(J), f, 6)
            back = time_traces(J2)
            assert np.all(back.d == d) and np.all(back.d_tilde == dt)

    @pytest.mark.parametrize("preset", ["linear_heat", "burgers", "allen_cahn"])
    def test_roundtrip_float_shallow(self, preset):
        f = AnalyticNonlinearity.preset(preset)
        rng = np.random.default_rng(13)
        y0 = SpatialJet(rng.uniform(-0.01, 0.01, 10))
        J = propagate_time(y0, f, 4)
        J2 = propagate_space(time_traces(J), f, 9)
        np.testing.assert_allclose(J2.c[:, 0], y0.a, rtol=1e-10)


class TestBounds:
    def test_zero_jet(self):
        r = verify_bounds_D2(BivariateJet(np.zeros((6, 3))), 4.9, 4.85, 1.0)
        assert r.satisfied and r.value == 0.0

    def test_geometric_data(self):
        J = propagate_time(geometric_jet(1.0, 41), AnalyticNonlinearity.preset("linear_heat"), 20)
        Cp = fit_C_prime(J, 4.9, 4.85)
        assert 0 < Cp < 2
        assert verify_bounds_D2(J, 4.9, 4.85, Cp).satisfied

    def test_violation_witness(self):
        J = propagate_time(geometric_jet(1.0, 41), AnalyticNonlinearity.preset("linear_heat"), 20)
        Cp = fit_C_prime(J, 4.9, 4.85)
        r = verify_bounds_D2(J, 4.9, 4.85, Cp / 2)
        assert not r.satisfied and "violation at (k, n)=" in r.detail

    def test_warning_outside_window(self):
        r = verify_bounds_D2(BivariateJet(np.ones((3, 2))), 4.9, 4.95, 10.0, R_hat=4.8)
        assert "warning" in r.detail

    @pytest.mark.parametrize("preset", ["linear_heat", "burgers", "allen_cahn", "potential"])
    def test_C_prime_shrinks_with_data(self, preset):
        f = AnalyticNonlinearity.preset(preset)
        C0 = 0.01
        cps = [fit_C_prime(propagate_time(geometric_jet(C0 / s, 29), f, 14), 4.9, 4.85)
               for s in (1, 2, 4)]
        assert all(np.isfinite(cps))
        assert cps[0] > cps[1] > cps[2]


class TestParity:
    def test_odd_presets(self):
        assert is_odd_nonlinearity(AnalyticNonlinearity.preset("burgers"))
        assert is_odd_nonlinearity(AnalyticNonlinearity.preset("allen_cahn"))
        assert is_odd_nonlinearity(AnalyticNonlinearity.preset("linear_heat"))
        assert not is_odd_nonlinearity(AnalyticNonlinearity.preset("potential"))

    def test_claim_exact(self):
        rng = np.random.default_rng(4)
        a = rng.uniform(-0.1, 0.1, 16)
        a[0::2] = 0
        for name in ("burgers", "allen_cahn"):
            J = propagate_time(SpatialJet(to_exact(a)), AnalyticNonlinearity.preset(name), 7)
            assert all(v == 0 for v in J.c[0])
            assert parity_filter(J, "check", AnalyticNonlinearity.preset(name)).ok

    def test_check_and_project(self):
        a = np.arange(1.0, 9.0)
        rep = parity_filter(SpatialJet(a), "check")
        assert not rep.jet_odd and rep.worst_even_entry == 7.0
        p = parity_filter(SpatialJet(a), "project")
        assert np.all(p.a[0::2] == 0) and np.all(p.a[1::2] == a[1::2])
        J = parity_filter(BivariateJet(np.ones((4, 2))), "project")
        assert np.all(J.c[0::2] == 0)
        with pytest.raises(ValueError):
            parity_filter(SpatialJet(a), "other")

    def test_require_odd(self):
        with pytest.raises(ParityError, match="f\\(-x"):
            require_odd(x_jet(5), AnalyticNonlinearity.preset("potential"))
        with pytest.raises(ParityError, match="odd data"):
            require_odd(SpatialJet([0.1, 1.0, 0.0]), AnalyticNonlinearity.preset("burgers"))
        require_odd(x_jet(5), AnalyticNonlinearity.preset("burgers"))
