import json
import math
from pathlib import Path

import numpy as np
import pytest

from heatreach.errors import ConfigError
from heatreach.gevreybounds import check_admissibility
from heatreach.pipeline import (
    AnalyticData,
    ProblemConfig,
    config_from_dict,
    export,
    find_amplitude,
    load_config,
    rational_roundtrip,
    run_exact_control,
)
from heatreach.seriescore import AnalyticNonlinearity

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def small(**kw):
    base = {"nonlinearity": "burgers", "y0": {"taylor": [0.0]}, "y1": {"taylor": [0.0]}, "T": 1.0,
            "truncation": {"Kmax": 20, "Nmax": 9}, "grids": {"nx": 61, "nt": 400}}
    base.update(kw)
    return base


class TestConfig:
    def test_missing_T(self):
        d = small()
        del d["T"]
        with pytest.raises(ConfigError) as exc:
            config_from_dict(d)
        assert any("'T' is a required property" in m for m in exc.value.errors)

    def test_errors_enumerated(self):
        d = small(T=-1, mode="three", grids={"nx": 1})
        with pytest.raises(ConfigError) as exc:
            config_from_dict(d)
        paths = sorted(m.split(":")[0] for m in exc.value.errors)
        assert paths == ["T", "grids/nx", "mode"]

    def test_state_needs_one_generator(self):
        with pytest.raises(ConfigError):
            config_from_dict(small(y0={"taylor": [1.0], "odd_poly": [1.0]}))
        with pytest.raises(ConfigError):
            config_from_dict(small(y0={}))

    def test_preset_expansion(self):
        cfg = config_from_dict(small())
        assert cfg.f.coeffs == {(1, 1, 0): -1.0}
        cfg = config_from_dict(small(nonlinearity={"preset": "potential", "potential": [0.0, 0.2]}))
        assert cfg.f.coeffs == {(1, 0, 1): 0.2}

    def test_inline_nonlinearity(self):
        spec = {"M": 30.0, "b0": 5.0, "b1": 5.0, "b2": 10.0, "coeffs": [[2, 0, 0, 0.5]]}
        assert config_from_dict(small(nonlinearity=spec)).f.coeffs == {(2, 0, 0): 0.5}
        spec["coeffs"] = [[2, 0, 0, 5.0]]
        with pytest.raises(ConfigError, match="nonlinearity"):
            config_from_dict(small(nonlinearity=spec))

    def test_defaults(self):
        cfg = config_from_dict(small())
        assert 4 * math.exp(1 / math.e) / 4.85 ** 2 < cfg.L < 0.25
        assert math.sqrt(4 * math.exp(1 / math.e) / cfg.L) < cfg.R_pp < cfg.Rp
        assert cfg.N_cert == 2 * cfg.Nmax + 4 and cfg.samples == 21
        assert cfg.H_hat > math.exp(1 / math.e) * cfg.H

    def test_roundtrip(self, tmp_path):
        for path in CONFIGS.glob("*.json"):
            cfg = load_config(path)
            p = tmp_path / path.name
            p.write_text(json.dumps(cfg.to_dict()))
            assert load_config(p) == cfg

    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{")
        with pytest.raises(ConfigError, match="JSON"):
            load_config(p)


class TestData:
    def test_generators(self):
        x = np.linspace(-1, 1, 7)
        g = AnalyticData.from_spec({"geometric": {"pole": 5.0, "scale": 0.01}})
        np.testing.assert_allclose(g(x), 0.01 / (1 - x / 5))
        np.testing.assert_allclose(g.jet(4).a, [0.01 * math.factorial(k) / 5 ** k for k in range(5)])
        assert g.radius == 5.0
        e = AnalyticData.from_spec({"exp_scaled": {"rate": 2.0, "scale": 0.5}})
        np.testing.assert_allclose(e.jet(3).a, [0.5, 1.0, 2.0, 4.0])
        o = AnalyticData.from_spec({"odd_poly": [1.0, 2.0]})
        np.testing.assert_allclose(o.jet(4).a, [0, 1, 0, 12, 0])
        assert o.is_odd() and not g.is_odd()
        t = AnalyticData.from_spec({"taylor": [1.0, 2.0, 6.0]})
        np.testing.assert_allclose(t(x), 1 + 2 * x + 3 * x ** 2)

    def test_class_constant(self):
        g = AnalyticData.from_spec({"geometric": {"pole": 5.0, "scale": 0.01}})
        assert g.class_constant(4.9) == pytest.approx(0.01)
        assert g.scaled(2).class_constant(4.9) == pytest.approx(0.02)

    def test_zero_pole(self):
        with pytest.raises(ConfigError):
            AnalyticData.from_spec({"geometric": {"pole": 0, "scale": 1.0}})


class TestRun:
    def test_zero(self):
        rep = run_exact_control(config_from_dict(small()))
        assert rep.passed and rep.terminal_sup == 0.0
        assert not np.any(rep.controls.h_minus) and not np.any(rep.controls.h_plus)

    def test_parity_refusal(self):
        d = small(nonlinearity="potential", mode="single_control_odd", y0={"odd_poly": [0.01]})
        rep = run_exact_control(config_from_dict(d))
        assert rep.status == "refused" and rep.stage == "parity" and not rep.passed

    def test_even_data_refused(self):
        d = small(mode="single_control_odd", y0={"taylor": [0.01]})
        rep = run_exact_control(config_from_dict(d))
        assert rep.status == "refused" and "odd data" in rep.message

    def test_admissibility_refusal_and_override(self):
        d = small(nonlinearity={"preset": "burgers", "b2": 4.5})
        rep = run_exact_control(config_from_dict(d))
        assert rep.status == "refused" and rep.stage == "admissibility"
        assert "b2>R_hat" in rep.message
        rep = run_exact_control(config_from_dict(dict(d, override=True)))
        assert rep.status == "ok"

    def test_synthesis_failure_reported(self):
        # far too large data: the sideways series cannot reach the boundary
        d = small(nonlinearity="linear_heat", y0={"geometric": {"pole": 0.5, "scale": 1.0}}, override=True)
        rep = run_exact_control(config_from_dict(d))
        assert rep.status == "failed" and rep.stage == "synthesis" and "SynthesisError" in rep.message

    def test_report_complete_and_deterministic(self, tmp_path):
        cfg = config_from_dict(small(y0={"geometric": {"pole": 5.0, "scale": 0.01}},
                                     truncation={"Kmax": 30, "Nmax": 14}, grids={"nx": 61, "nt": 2000}))
        a = run_exact_control(cfg, threads=1)
        b = run_exact_control(cfg, threads=3)
        export(a, tmp_path / "a")
        export(b, tmp_path / "b")
        for name in ("controls.csv", "trajectory.csv", "bounds.json", "config.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        report = json.loads((tmp_path / "a" / "report.json").read_text())
        names = {b["name"] for b in report["bounds"]}
        expected = check_admissibility(cfg.f, cfg.R, cfg.Rp, cfg.L, cfg.R_data, cfg.R_pp)
        assert {b.name for b in expected} <= names
        assert set(report["certificates"]) == {"g0", "g1", "hat0", "hat1", "tilde0", "tilde1"}
        assert report["passed"] and report["diagnostics"]["synthesis"]["passed"]

    def test_controls_start_from_data(self):
        cfg = config_from_dict(small(nonlinearity="linear_heat", y0={"exp_scaled": {"rate": 1.0, "scale": 0.01}}))
        rep = run_exact_control(cfg)
        D = rep.traces["g0"].derivs([0.0], 9)[:, 0]
        np.testing.assert_allclose(D, 0.01, rtol=1e-12)
        assert rep.controls.h_plus[0] == pytest.approx(0.01 * math.e, rel=1e-12)
        assert rep.controls.h_plus[-1] == 0.0


def test_find_amplitude_brackets():
    cfg = config_from_dict(small(nonlinearity="linear_heat", y0={"geometric": {"pole": 5.0, "scale": 0.01}}))
    res = find_amplitude(cfg, lo=1e-2, hi=1e6, steps=3)
    assert res["threshold"] is not None and res["history"][0] == (1e-2, True)


def test_rational_roundtrip_small():
    assert rational_roundtrip(n_jets=3, Kmax=9, Nmax=4) == {
        "linear_heat": 0, "potential": 0, "allen_cahn": 0, "burgers": 0}
