"""End-to-end exact control runs from a declarative configuration.

Stages of :func:`run_exact_control`:

1. admissibility and class-membership reports;
2. x-jets of ``y0`` at ``t = 0`` and of ``y1`` at ``t = T`` are propagated in
   time and their traces realized as Gevrey-2 functions around ``0`` and
   ``T`` (``H = 1/R''^2``, ``H_hat = L/4``);
3. the two families are blended with the plateau cutoff;
4. the sideways problem gives the state and the boundary controls;
5. the forward solver replays the controls from ``y0``;
6. terminal error and all reports are collected.

``single_control_odd`` keeps ``y(0, t) = 0`` by using a zero first trace and
returns the control ``h(t) = y(1, t)`` on ``[0, 1]``.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import jsonschema
import numpy as np

from .borel import TimeTrace, blend_traces, borel_realize, gevrey_cutoff, zero_trace
from .cauchyx import ControlSignal, SynthesisResult, convergence_diagnostics, synthesize_state
from .errors import ConfigError, HeatreachError, ParityError
from .gevreybounds import E_INV_E, BoundReport, check_admissibility
from .heatsim import SimConfig, Trajectory, simulate, terminal_error
from .jetmap import fit_C_prime, propagate_time, require_odd
from .seriescore import (
    PRESETS,
    AnalyticNonlinearity,
    SpatialJet,
    TruncationSpec,
    inv_factorials,
    to_exact,
)

log = logging.getLogger(__name__)

MODES = ("two_control", "single_control_odd")

_NUMBER = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["nonlinearity", "y0", "y1", "T"],
    "additionalProperties": False,
    "properties": {
        "nonlinearity": {"oneOf": [
            {"type": "string", "enum": list(PRESETS)},
            {"type": "object", "required": ["preset"], "additionalProperties": False,
             "properties": {"preset": {"type": "string", "enum": list(PRESETS)},
                            "potential": {"type": "array", "items": _NUMBER},
                            "b0": _POS, "b1": _POS, "b2": _POS}},
            {"type": "object", "required": ["M", "b0", "b1", "b2", "coeffs"],
             "additionalProperties": False,
             "properties": {"M": _POS, "b0": _POS, "b1": _POS, "b2": _POS,
                            "coeffs": {"type": "array", "items": {
                                "type": "array", "minItems": 4, "maxItems": 4,
                                "items": _NUMBER}}}},
        ]},
        "y0": {"$ref": "#/definitions/state"},
        "y1": {"$ref": "#/definitions/state"},
        "T": _POS,
        "mode": {"type": "string", "enum": list(MODES)},
        "R": _POS, "Rp": _POS, "L": _POS, "R_pp": _POS,
        "truncation": {"type": "object", "additionalProperties": False, "properties": {
            "Kmax": {"type": "integer", "minimum": 2},
            "Nmax": {"type": "integer", "minimum": 0},
            "tail_tol": {"type": "number", "minimum": 0},
            "N_cert": {"type": "integer", "minimum": 0}}},
        "grids": {"type": "object", "additionalProperties": False, "properties": {
            "nx": {"type": "integer", "minimum": 3},
            "nt": {"type": "integer", "minimum": 1},
            "samples": {"type": "integer", "minimum": 2},
            "state_points": {"type": "integer", "minimum": 2}}},
        "tolerances": {"type": "object", "additionalProperties": False, "properties": {
            "terminal": _POS, "synthesis": _POS}},
        "seed": {"type": "integer"},
        "override": {"type": "boolean"},
    },
    "definitions": {
        "state": {"type": "object", "minProperties": 1, "maxProperties": 1,
                  "additionalProperties": False, "properties": {
                      "taylor": {"type": "array", "items": _NUMBER},
                      "geometric": {"type": "object", "required": ["pole", "scale"],
                                    "additionalProperties": False,
                                    "properties": {"pole": _NUMBER, "scale": _NUMBER}},
                      "exp_scaled": {"type": "object", "required": ["rate", "scale"],
                                     "additionalProperties": False,
                                     "properties": {"rate": _NUMBER, "scale": _NUMBER}},
                      "odd_poly": {"type": "array", "items": _NUMBER}}},
    },
}


# ---------------------------------------------------------------------------
# analytic data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnalyticData:
    """A state ``y(x)`` given by one of the generators of the config format."""

    kind: str
    params: object

    @classmethod
    def from_spec(cls, spec: dict) -> "AnalyticData":
        (kind, params), = spec.items()
        if kind == "geometric" and params["pole"] == 0:
            raise ConfigError("geometric data needs a nonzero pole")
        return cls(kind, params)

    def to_spec(self) -> dict:
        return {self.kind: self.params}

    def scaled(self, s: float) -> "AnalyticData":
        p = self.params
        if self.kind in ("taylor", "odd_poly"):
            return AnalyticData(self.kind, [s * v for v in p])
        return AnalyticData(self.kind, dict(p, scale=s * p["scale"]))

    @property
    def radius(self) -> float:
        """Radius of convergence of the Taylor series at 0."""
        return abs(self.params["pole"]) if self.kind == "geometric" else math.inf

    def jet(self, K: int, exact: bool = False) -> SpatialJet:
        """``a_k = y^(k)(0)`` for ``k <= K``."""
        a = np.zeros(K + 1)
        p = self.params
        if self.kind == "taylor":
            n = min(K + 1, len(p))
            a[:n] = p[:n]
        elif self.kind == "geometric":
            k = np.arange(K + 1)
            a = p["scale"] / inv_factorials(K) / float(p["pole"]) ** k
        elif self.kind == "exp_scaled":
            a = p["scale"] * float(p["rate"]) ** np.arange(K + 1)
        elif self.kind == "odd_poly":
            for i, c in enumerate(p):
                if 2 * i + 1 <= K:
                    a[2 * i + 1] = c * math.factorial(2 * i + 1)
        else:
            raise ConfigError(f"unknown data generator {self.kind!r}")
        return SpatialJet(to_exact(a) if exact else a)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.kind == "taylor":
            return np.polynomial.polynomial.polyval(x, np.asarray(p, float) * inv_factorials(len(p) - 1)) \
                if len(p) else np.zeros_like(x)
        if self.kind == "geometric":
            return p["scale"] / (1.0 - x / p["pole"])
        if self.kind == "exp_scaled":
            return p["scale"] * np.exp(p["rate"] * x)
        return sum(c * x ** (2 * i + 1) for i, c in enumerate(p)) + 0.0 * x

    def is_odd(self) -> bool:
        if self.kind == "odd_poly":
            return True
        a = self.jet(40).a
        return bool(np.all(a[0::2] == 0))

    def class_constant(self, R: float, K: int = 60) -> float:
        """Fitted ``C`` with ``|a_n| <= C n! / R^n`` for ``n <= K``."""
        a = np.abs(self.jet(K).a)
        k = np.arange(K + 1)
        return float(np.max(a * inv_factorials(K) * R ** k))


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class ProblemConfig:
    f: AnalyticNonlinearity
    y0: AnalyticData
    y1: AnalyticData
    T: float = 1.0
    mode: str = "two_control"
    R: float = 4.9
    Rp: float = 4.85
    L: Optional[float] = None
    R_pp: Optional[float] = None
    Kmax: int = 30
    Nmax: int = 14
    tail_tol: float = 0.0
    N_cert: Optional[int] = None
    nx: int = 201
    nt: int = 4000
    samples: Optional[int] = None
    state_points: int = 41
    terminal_tol: float = 1e-3
    synthesis_tol: float = 1e-8
    seed: int = 0
    override: bool = False
    nonlinearity_spec: object = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.L is None:
            self.L = 0.5 * (4.0 * E_INV_E / self.Rp ** 2 + 0.25)
        if self.R_pp is None:
            self.R_pp = 0.5 * (math.sqrt(4.0 * E_INV_E / self.L) + self.Rp)
        if self.N_cert is None:
            self.N_cert = 2 * self.Nmax + 4
        if self.samples is None:
            # control samples follow the time step: 201 at nt = 4000
            self.samples = self.nt // 20 + 1

    @property
    def H(self) -> float:
        return 1.0 / self.R_pp ** 2

    @property
    def H_hat(self) -> float:
        return self.L / 4.0

    @property
    def trunc(self) -> TruncationSpec:
        return TruncationSpec(self.Kmax, self.Nmax, self.tail_tol)

    @property
    def R_data(self) -> float:
        return min(self.y0.radius, self.y1.radius)

    # serialisation --------------------------------------------------------
    def to_dict(self) -> dict:
        spec = self.nonlinearity_spec
        if spec is None:
            spec = self.f.to_dict()
        return {
            "nonlinearity": spec, "y0": self.y0.to_spec(), "y1": self.y1.to_spec(),
            "T": self.T, "mode": self.mode, "R": self.R, "Rp": self.Rp, "L": self.L,
            "R_pp": self.R_pp,
            "truncation": {"Kmax": self.Kmax, "Nmax": self.Nmax, "tail_tol": self.tail_tol,
                           "N_cert": self.N_cert},
            "grids": {"nx": self.nx, "nt": self.nt, "samples": self.samples,
                      "state_points": self.state_points},
            "tolerances": {"terminal": self.terminal_tol, "synthesis": self.synthesis_tol},
            "seed": self.seed, "override": self.override,
        }

    def __eq__(self, other):
        return isinstance(other, ProblemConfig) and self.to_dict() == other.to_dict()


def _nonlinearity(spec) -> AnalyticNonlinearity:
    if isinstance(spec, str):
        return AnalyticNonlinearity.preset(spec)
    if "preset" in spec:
        kw = {k: spec[k] for k in ("b0", "b1", "b2") if k in spec}
        return AnalyticNonlinearity.preset(spec["preset"], spec.get("potential"), **kw)
    return AnalyticNonlinearity.from_dict(spec)


def validate_config(data: dict) -> None:
    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for e in errors:
            path = "/".join(str(p) for p in e.absolute_path) or "<root>"
            msgs.append(f"{path}: {e.message}")
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(msgs), msgs)


def config_from_dict(data: dict) -> ProblemConfig:
    validate_config(data)
    try:
        f = _nonlinearity(data["nonlinearity"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"nonlinearity: {exc}", [f"nonlinearity: {exc}"]) from exc
    tr = data.get("truncation", {})
    gr = data.get("grids", {})
    return ProblemConfig(
        f=f, y0=AnalyticData.from_spec(data["y0"]), y1=AnalyticData.from_spec(data["y1"]),
        T=float(data["T"]), mode=data.get("mode", "two_control"),
        R=float(data.get("R", 4.9)), Rp=float(data.get("Rp", 4.85)),
        L=data.get("L"), R_pp=data.get("R_pp"),
        Kmax=tr.get("Kmax", 30), Nmax=tr.get("Nmax", 14), tail_tol=tr.get("tail_tol", 0.0),
        N_cert=tr.get("N_cert"),
        nx=gr.get("nx", 201), nt=gr.get("nt", 4000), samples=gr.get("samples"),
        state_points=gr.get("state_points", 41),
        terminal_tol=data.get("tolerances", {}).get("terminal", 1e-3),
        synthesis_tol=data.get("tolerances", {}).get("synthesis", 1e-8),
        seed=data.get("seed", 0), override=data.get("override", False),
        nonlinearity_spec=data["nonlinearity"])


def load_config(path) -> ProblemConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"not valid JSON: {exc}", [str(exc)]) from exc
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

@dataclass
class RunReport:
    status: str                       # "ok", "failed", "refused"
    stage: str
    message: str = ""
    mode: str = "two_control"
    terminal_sup: float = math.nan
    terminal_l2: float = math.nan
    tolerance: float = math.nan
    bounds: List[BoundReport] = field(default_factory=list)
    certificates: Dict[str, dict] = field(default_factory=dict)
    diagnostics: Dict[str, object] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    config: Optional[ProblemConfig] = None
    controls: Optional[ControlSignal] = None
    trajectory: Optional[Trajectory] = None
    synthesis: Optional[SynthesisResult] = None
    traces: Dict[str, TimeTrace] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return (self.status == "ok" and self.terminal_sup <= self.tolerance
                and all(b.satisfied for b in self.bounds))

    def to_dict(self) -> dict:
        def num(v):
            return v if isinstance(v, (int, float)) and math.isfinite(v) else str(v)
        return {
            "status": self.status, "stage": self.stage, "message": self.message,
            "mode": self.mode, "passed": self.passed,
            "terminal_sup": num(self.terminal_sup), "terminal_l2": num(self.terminal_l2),
            "tolerance": num(self.tolerance),
            "bounds": [b.to_dict() for b in self.bounds],
            "certificates": self.certificates, "diagnostics": self.diagnostics,
            "timings": self.timings,
            "config": self.config.to_dict() if self.config else None,
        }


def _traces_from_state(data: AnalyticData, f: AnalyticNonlinearity, cfg: ProblemConfig,
                       base: float, n_jet: int) -> Tuple[TimeTrace, TimeTrace, object]:
    """Realize ``y(0, .)`` and ``d_x y(0, .)`` of the solution through ``data`` at ``base``."""
    K = 2 * n_jet + 1
    jet = propagate_time(data.jet(K), f, n_jet)
    d = np.array(jet.c[0, : n_jet + 1], dtype=float)
    dt = np.array(jet.c[1, : n_jet + 1], dtype=float)
    dom = (0.0, cfg.T)
    g0 = borel_realize(d, cfg.H, cfg.H_hat, dom, base=base, N_cert=cfg.N_cert)
    g1 = borel_realize(dt, cfg.H, cfg.H_hat, dom, base=base, N_cert=cfg.N_cert)
    return g0, g1, jet


def _report_fail(rep: RunReport, stage: str, exc: Exception) -> RunReport:
    rep.status = "failed"
    rep.stage = stage
    rep.message = f"{type(exc).__name__}: {exc}"
    log.warning("run failed at %s: %s", stage, rep.message)
    return rep


def run_exact_control(cfg: ProblemConfig, threads: Optional[int] = None) -> RunReport:
    rep = RunReport("ok", "done", mode=cfg.mode, tolerance=cfg.terminal_tol, config=cfg)
    clock = time.perf_counter()
    f = cfg.f

    # 1. admissibility ------------------------------------------------------
    rep.bounds = check_admissibility(f, cfg.R, cfg.Rp, cfg.L, cfg.R_data, cfg.R_pp)
    for name, data in (("y0", cfg.y0), ("y1", cfg.y1)):
        C = data.class_constant(cfg.R)
        rep.diagnostics[f"{name}_class_constant"] = C
    single = cfg.mode == "single_control_odd"
    if single:
        try:
            require_odd(cfg.y0.jet(41), f)
            require_odd(cfg.y1.jet(41), f)
        except ParityError as exc:
            rep.status, rep.stage, rep.message = "refused", "parity", str(exc)
            return rep
    if not all(b.satisfied for b in rep.bounds) and not cfg.override:
        bad = [b.name for b in rep.bounds if not b.satisfied]
        rep.status, rep.stage = "refused", "admissibility"
        rep.message = "admissibility failed: " + ", ".join(bad)
        return rep

    # 2-3. traces -----------------------------------------------------------
    n_jet = max(cfg.Nmax, math.ceil((cfg.Kmax - 1) / 2))
    try:
        hat0, hat1, jet0 = _traces_from_state(cfg.y0, f, cfg, 0.0, n_jet)
        tilde0, tilde1, jet1 = _traces_from_state(cfg.y1, f, cfg, cfg.T, n_jet)
    except HeatreachError as exc:
        return _report_fail(rep, "traces", exc)
    for name, jet in (("y0", jet0), ("y1", jet1)):
        rep.diagnostics[f"{name}_Cprime"] = fit_C_prime(jet, cfg.R, cfg.Rp)
    rho = gevrey_cutoff(cfg.T, cfg.N_cert)
    try:
        g0 = blend_traces(hat0, tilde0, rho, N_cert=cfg.N_cert, H=cfg.H_hat)
        g1 = blend_traces(hat1, tilde1, rho, N_cert=cfg.N_cert, H=cfg.H_hat)
    except HeatreachError as exc:
        return _report_fail(rep, "blend", exc)
    if single:
        g0 = zero_trace((0.0, cfg.T), cfg.H_hat, cfg.N_cert)
    rep.traces = {"g0": g0, "g1": g1, "hat0": hat0, "hat1": hat1,
                  "tilde0": tilde0, "tilde1": tilde1}
    for name, tr in rep.traces.items():
        c = tr.certificate
        rep.certificates[name] = dict(c.to_dict(), **({"inflation": tr.params.get("inflation")}
                                                      if "inflation" in tr.params else {}))
    rep.timings["traces"] = time.perf_counter() - clock

    # 4. synthesis ------------------------------------------------------------
    tgrid = np.linspace(0.0, cfg.T, cfg.samples)
    xgrid = np.linspace(-1.0, 1.0, cfg.state_points | 1)     # odd count keeps x = 0
    try:
        syn = synthesize_state(g0, g1, f, cfg.trunc, tgrid, xgrid, threads=threads,
                               tail_atol=cfg.synthesis_tol)
    except HeatreachError as exc:
        return _report_fail(rep, "synthesis", exc)
    rep.synthesis = syn
    diag = convergence_diagnostics(syn)
    rep.diagnostics["synthesis"] = diag
    r_min = float(diag["R1_min"])
    rep.bounds.append(BoundReport("synthesis_R1>1", 1.0, r_min, 1.0 < r_min,
                                  f"x-series radius over resolved samples; "
                                  f"{diag['unresolved_samples']} samples below tail tolerance", "<"))
    if single:
        y_mid = syn.state[len(xgrid) // 2]
        y0_max = float(np.max(np.abs(y_mid)))
        rep.diagnostics["max_abs_y_at_0"] = y0_max
        rep.diagnostics["parity_defect"] = float(np.max(np.abs(syn.controls.h_minus + syn.controls.h_plus)))
        rep.bounds.append(BoundReport("single_control_y(0,t)", y0_max, 1e-10, y0_max <= 1e-10,
                                      "max over samples of the synthesized y(0, t)"))
        controls = ControlSignal(tgrid, y_mid, syn.controls.h_plus, dict(syn.controls.metadata),
                                 dh_minus=np.zeros_like(tgrid), dh_plus=syn.controls.dh_plus)
    else:
        controls = syn.controls
    rep.controls = controls
    rep.timings["synthesis"] = time.perf_counter() - clock

    # 5-6. verification -----------------------------------------------------
    dom = (0.0, 1.0) if single else (-1.0, 1.0)
    nx = cfg.nx // 2 if single else cfg.nx
    sim_cfg = SimConfig(nx=nx, nt=cfg.nt, T=cfg.T, domain=dom)
    try:
        traj = simulate(cfg.y0(sim_cfg.x), controls, f, sim_cfg)
    except HeatreachError as exc:
        return _report_fail(rep, "simulation", exc)
    rep.trajectory = traj
    rep.terminal_sup, rep.terminal_l2 = terminal_error(traj, cfg.y1(sim_cfg.x))
    rep.timings["total"] = time.perf_counter() - clock
    if rep.terminal_sup > cfg.terminal_tol:
        rep.message = f"terminal error {rep.terminal_sup:.3e} above tolerance {cfg.terminal_tol:.1e}"
    return rep


def export(report: RunReport, out_dir) -> None:
    """Write controls.csv, trajectory.csv, report.json, bounds.json and config.json."""
    os.makedirs(out_dir, exist_ok=True)
    if report.controls is not None:
        report.controls.to_csv(os.path.join(out_dir, "controls.csv"))
    if report.trajectory is not None:
        report.trajectory.to_csv(os.path.join(out_dir, "trajectory.csv"))
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    with open(os.path.join(out_dir, "bounds.json"), "w") as fh:
        json.dump([b.to_dict() for b in report.bounds], fh, indent=2)
    if report.config is not None:
        with open(os.path.join(out_dir, "config.json"), "w") as fh:
            json.dump(report.config.to_dict(), fh, indent=2)


def find_amplitude(cfg: ProblemConfig, lo: float = 1e-3, hi: float = 1e3, steps: int = 10,
                   threads: Optional[int] = None) -> dict:
    """Bisect (in log scale) the largest factor on ``y0`` and ``y1`` for which the run passes."""
    def ok(s):
        c = replace(cfg, y0=cfg.y0.scaled(s), y1=cfg.y1.scaled(s))
        rep = run_exact_control(c, threads)
        return rep.passed, rep

    history = []
    good, _ = ok(lo)
    history.append((lo, good))
    if not good:
        return {"threshold": None, "history": history, "message": "fails at the lower bracket"}
    bad, _ = ok(hi)
    history.append((hi, bad))
    if bad:
        return {"threshold": hi, "history": history, "message": "passes at the upper bracket"}
    a, b = math.log(lo), math.log(hi)
    for _ in range(steps):
        m = 0.5 * (a + b)
        passed, _ = ok(math.exp(m))
        history.append((math.exp(m), passed))
        if passed:
            a = m
        else:
            b = m
    return {"threshold": math.exp(a), "history": history, "message": ""}


def rational_roundtrip(n_jets: int = 50, Kmax: int = 21, Nmax: int = 10, seed: int = 0,
                       presets=PRESETS, exact: bool = True) -> dict:
    """Time-then-space jet round trip on random data; exact rationals by default.

    Entries are drawn uniformly from ``[-0.01, 0.01]``.  Returns, per preset,
    the number of mismatches (exact) or the worst relative error (float).
    """
    from .jetmap import propagate_space, time_traces

    rng = np.random.default_rng(seed)
    jets = [rng.uniform(-0.01, 0.01, Kmax + 1) for _ in range(n_jets)]
    out = {}
    for name in presets:
        f = AnalyticNonlinearity.preset(name)
        worst = 0 if exact else 0.0
        for a in jets:
            y0 = SpatialJet(to_exact(a) if exact else a)
            J = propagate_time(y0, f, Nmax)
            J2 = propagate_space(time_traces(J), f, Kmax)
            m = J.mask & J2.mask
            if exact:
                worst += int(np.sum(J.c[m] != J2.c[m]))
            else:
                scale = np.maximum(np.abs(J.c[m]), 1e-300)
                worst = max(worst, float(np.max(np.abs(J.c[m] - J2.c[m]) / scale)))
        out[name] = worst
    return out
