"""Acceptance criteria 1-8; each prints one PASS/FAIL line.

Run standalone with ``python tests/test_acceptance.py`` or through pytest.
"""
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))

from heatreach.cauchyx import picard_solve  # noqa: E402
from heatreach.gevreybounds import (  # noqa: E402
    GevreyParams,
    contraction_sequence,
    gamma_la,
    norm_La,
    stirling_central_ratio,
)
from heatreach.heatsim import SimConfig, simulate  # noqa: E402
from heatreach.jetmap import fit_C_prime, propagate_space, propagate_time, time_traces, verify_bounds_D2  # noqa: E402
from heatreach.pipeline import load_config, rational_roundtrip, run_exact_control  # noqa: E402
from heatreach.seriescore import PRESETS, AnalyticNonlinearity, SpatialJet  # noqa: E402

CONFIGS = HERE.parent / "configs"


def _line(n, ok, detail):
    return f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}"


def criterion_1():
    t0 = time.perf_counter()
    exact = rational_roundtrip(n_jets=50, Kmax=21, Nmax=10, exact=True)
    t_exact = time.perf_counter() - t0
    flt = rational_roundtrip(n_jets=50, Kmax=21, Nmax=10, exact=False)
    ok_exact = all(v == 0 for v in exact.values()) and t_exact < 30
    ok_float = all(v <= 1e-10 for v in flt.values())
    worst = ", ".join(f"{k} {v:.2e}" for k, v in flt.items())
    return ok_exact and ok_float, (
        f"exact mismatches {sum(exact.values())} in {t_exact:.1f}s; "
        f"float worst entrywise relative error: {worst} (target 1e-10)")


def criterion_2():
    t0 = time.perf_counter()
    rep = run_exact_control(load_config(CONFIGS / "linear_null.json"))
    elapsed = time.perf_counter() - t0
    n = max(rep.config.Nmax, math.ceil((rep.config.Kmax - 1) / 2))
    D = rep.traces["g0"].derivs([0.0], n)[:, 0]
    jet_err = float(np.max(np.abs(D - 0.01)))
    ok = rep.status == "ok" and rep.terminal_sup <= 1e-4 and jet_err <= 1e-8 and elapsed < 120
    return ok, (f"terminal sup {rep.terminal_sup:.3e} (<= 1e-4), base jet error {jet_err:.1e} "
                f"over n <= {n}, {elapsed:.1f}s")


def criterion_3():
    t0 = time.perf_counter()
    cfg = load_config(CONFIGS / "burgers.json")
    coarse = run_exact_control(cfg)
    fine_cfg = replace(cfg, Kmax=40, Nmax=18, nx=401, nt=4 * cfg.nt, N_cert=None, samples=None)
    fine_cfg.__post_init__()
    fine = run_exact_control(fine_cfg)
    elapsed = time.perf_counter() - t0
    ok = (coarse.status == fine.status == "ok" and coarse.terminal_sup <= 1e-3
          and fine.terminal_sup < coarse.terminal_sup and elapsed < 600)
    return ok, (f"terminal sup {coarse.terminal_sup:.3e} -> {fine.terminal_sup:.3e} under refinement, "
                f"{elapsed:.1f}s")


def criterion_4():
    rep = run_exact_control(load_config(CONFIGS / "burgers_single_odd.json"))
    y0 = rep.diagnostics.get("max_abs_y_at_0", math.inf)
    ok = rep.status == "ok" and y0 <= 1e-10 and rep.terminal_sup <= 1e-3
    return ok, f"max |y(0,t)| {y0:.1e} (<= 1e-10), terminal sup on [0,1] {rep.terminal_sup:.3e} (<= 1e-3)"


def criterion_5():
    Cs = (1e-2, 5e-3, 2.5e-3)
    ok, parts = True, []
    for name in PRESETS:
        f = AnalyticNonlinearity.preset(name)
        cps = []
        for C in Cs:
            a = SpatialJet([C * math.factorial(k) / 5.0 ** k for k in range(30)])
            J = propagate_time(a, f, 14)
            cp = fit_C_prime(J, 4.9, 4.85)
            ok &= math.isfinite(cp) and verify_bounds_D2(J, 4.9, 4.85, cp).satisfied
            cps.append(cp)
        ok &= all(b <= a for a, b in zip(cps, cps[1:]))
        parts.append(f"{name} " + "/".join(f"{c:.3g}" for c in cps))
    return ok, "C' at C = 1e-2, 5e-3, 2.5e-3: " + "; ".join(parts)


def criterion_6():
    f = AnalyticNonlinearity.preset("burgers")
    a = SpatialJet([0.01 * math.factorial(k) / 5.0 ** k for k in range(30)])
    U0 = time_traces(propagate_time(a, f, 14))
    run = picard_solve(U0, f, 29)
    J = propagate_space(U0, f, 29)
    P = run.fixed_point_jet()
    m = J.mask & P.mask
    ref = np.abs(J.c[m])
    rel = float(np.max(np.abs(P.c[m] - J.c[m]) / np.where(ref > 0, ref, 1.0)))
    tail = run.ratios[len(run.ratios) // 2:]
    rmax = float(np.max(tail))
    ok = rel <= 1e-10 and rmax < 1 and not run.diverging
    return ok, (f"fixed point vs sideways jet {rel:.1e} (<= 1e-10), late delta ratios <= {rmax:.4f} < 1, "
                f"eps estimate {run.eps_estimate:.3f}")


def criterion_7():
    from catalog import algebra_violations
    spot = gamma_la(2, 0, 0) == 1 / 32
    viol = {L: algebra_violations(norm_La, GevreyParams(2.0, L, 0.0))[0] for L in (1.0, 0.25, 4.0)}
    seq = all(np.all(contraction_sequence(g, 10000)[0] >= contraction_sequence(g, 1)[1])
              for g in (0.05, 0.1, 0.2))
    stir = all(stirling_central_ratio(n) <= 1 for n in range(81))
    ok = spot and not any(viol.values()) and seq and stir
    return ok, (f"gamma(0) = 1/32 {spot}; algebra violations over 200 pairs {viol}; "
                f"a_k bound {seq}; Stirling n <= 80 {stir}")


def criterion_8():
    from test_heatsim import exp_controls, mms_burgers
    errs = [mms_burgers(*m) for m in [(51, 10), (103, 20), (207, 40), (415, 80)]]
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    cfg = SimConfig(nx=201, nt=4000)
    lin = AnalyticNonlinearity.preset("linear_heat")
    err = float(np.max(np.abs(simulate(np.exp(cfg.x), exp_controls(), lin, cfg).final - np.exp(cfg.x + 1))))
    ok = all(abs(p - 2.0) <= 0.2 for p in orders) and err <= 1e-6
    return ok, "MMS orders " + ", ".join(f"{p:.2f}" for p in orders) + f"; e^(x+t) sup error {err:.1e} (<= 1e-6)"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4,
            criterion_5, criterion_6, criterion_7, criterion_8]


@pytest.mark.parametrize("n", range(1, 9))
def test_criterion(n, capsys):
    ok, detail = CRITERIA[n - 1]()
    with capsys.disabled():
        print("\n" + _line(n, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    results = []
    for n, fn in enumerate(CRITERIA, 1):
        ok, detail = fn()
        print(_line(n, ok, detail), flush=True)
        results.append(ok)
    sys.exit(0 if all(results) else 1)
