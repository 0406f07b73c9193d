"""Sideways Cauchy problem in x: states and boundary controls from time traces.

For every sample time ``t_j`` the traces ``g0 = y(0, .)`` and
``g1 = d_x y(0, .)`` are differentiated exactly, the resulting t-jets are
propagated sideways into a full mixed jet, and the x-series is summed on the
requested grid.  Samples are independent, so they are mapped over a thread
pool (``HEATREACH_THREADS`` caps the pool size); output order is the input
order.

``picard_solve`` is an independent oracle: the successive-approximation map
``U -> U0 + int_0^x G(U)`` for ``U = (y, d_x y)`` applied verbatim to
polynomials in x whose coefficients are truncated t-jets.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from gmpy2 import mpq

from .borel import TimeTrace
from .errors import SynthesisError
from .jetmap import propagate_space
from .seriescore import (
    AnalyticNonlinearity,
    BivariateJet,
    SpatialJet,
    TimeJetPair,
    TruncationSpec,
    compose_taylor,
    inv_factorials,
    nonlinearity_jet,
    series_eval_x,
)

#: lower bound on the x-radius of the synthesized series.
R1_CRITICAL = 4.0 / math.e
#: tail terms below this size never count as divergence.
DEFAULT_TAIL_ATOL = 1e-8


def thread_count() -> int:
    env = os.environ.get("HEATREACH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)


def parallel_map(fn, items, threads: Optional[int] = None) -> list:
    items = list(items)
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass
class ControlSignal:
    """Boundary data ``h_-1(t_j) = y(-1, t_j)`` and ``h_1(t_j) = y(1, t_j)``.

    ``dh_minus``/``dh_plus`` optionally hold the time derivatives at the
    samples (used for Hermite interpolation).
    """

    t: np.ndarray
    h_minus: np.ndarray
    h_plus: np.ndarray
    metadata: dict = field(default_factory=dict)
    dh_minus: Optional[np.ndarray] = None
    dh_plus: Optional[np.ndarray] = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.h_minus = np.asarray(self.h_minus, dtype=float)
        self.h_plus = np.asarray(self.h_plus, dtype=float)
        if not (len(self.t) == len(self.h_minus) == len(self.h_plus)):
            raise ValueError("control arrays must have equal lengths")
        if len(self.t) > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("control times must be strictly increasing")

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "h_minus", "h_plus"])
        for row in zip(self.t, self.h_minus, self.h_plus):
            w.writerow([f"{v:.17g}" for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "ControlSignal":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], data[:, 2])


@dataclass
class SampleResult:
    t: float
    values: np.ndarray
    remainders: np.ndarray
    R1: float
    degenerate: bool
    dt_boundary: Tuple[float, float]
    boundary: Tuple[float, float]
    jet: Optional[BivariateJet] = None
    unresolved: bool = False


@dataclass
class SynthesisResult:
    tgrid: np.ndarray
    xgrid: np.ndarray
    state: np.ndarray          # state[i, j] = y(x_i, t_j)
    controls: ControlSignal
    remainders: np.ndarray     # remainder bound per sample (max over x)
    R1: np.ndarray
    degenerate: np.ndarray
    warnings: List[str] = field(default_factory=list)
    jets: Optional[List[BivariateJet]] = None
    unresolved: Optional[np.ndarray] = None

    def to_dict(self, include_state: bool = False) -> dict:
        d = {"tgrid": self.tgrid.tolist(), "xgrid": self.xgrid.tolist(),
             "remainders": self.remainders.tolist(),
             "R1": [v if math.isfinite(v) else "inf" for v in self.R1.tolist()],
             "degenerate": self.degenerate.tolist(), "warnings": self.warnings,
             "unresolved": [] if self.unresolved is None else self.unresolved.tolist(),
             "controls_metadata": self.controls.metadata}
        if include_state:
            d["state"] = self.state.tolist()
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw))

    def state_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"{x:.17g}" for x in self.xgrid])
        for j, t in enumerate(self.tgrid):
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in self.state[:, j]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


# ---------------------------------------------------------------------------
# radius estimate
# ---------------------------------------------------------------------------

def estimate_R1(a: Sequence[float]) -> Tuple[float, bool]:
    """Geometric radius from the tail of ``|a_k| / k!``.

    Least-squares slope of ``log(|a_k| / k!)`` over the last ``ceil((K+1)/3)``
    orders (zeros skipped); ``R1 = exp(-slope)``.  Returns ``(inf, True)``
    when fewer than two nonzero coefficients remain.
    """
    a = np.abs(np.asarray(a, dtype=float))
    K = len(a) - 1
    k = np.arange(K + 1)
    tail = k[K + 1 - math.ceil((K + 1) / 3):]
    tail = tail[a[tail] > 0]
    if len(tail) < 2:
        return math.inf, True
    y = np.log(a[tail]) + np.log(inv_factorials(K))[tail]
    slope = np.polyfit(tail.astype(float), y, 1)[0]
    return float(math.exp(-slope)), False


def tail_size(a: Sequence[float]) -> float:
    """Largest term ``|a_k| / k!`` (its size at ``|x| = 1``) over the estimator's tail."""
    a = np.abs(np.asarray(a, dtype=float))
    K = len(a) - 1
    c = a * inv_factorials(K)
    return float(np.max(c[K + 1 - math.ceil((K + 1) / 3):]))


# ---------------------------------------------------------------------------
# synthesis
# ---------------------------------------------------------------------------

def required_trace_order(trunc: TruncationSpec) -> int:
    """Trace derivatives needed so that sideways propagation reaches ``Kmax``."""
    return max(trunc.Nmax, math.ceil((trunc.Kmax - 1) / 2))


def _sum_series(coef: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.polynomial.polynomial.polyval(x, coef)


def synthesize_sample(d: np.ndarray, d_tilde: np.ndarray, t: float, f: AnalyticNonlinearity,
                      trunc: TruncationSpec, xgrid: np.ndarray, margin: float = 0.05,
                      keep_jet: bool = False, tail_atol: float = DEFAULT_TAIL_ATOL) -> SampleResult:
    """One time sample.

    ``R1 <= 1`` is a divergence only when the tail terms at ``|x| = 1`` exceed
    ``tail_atol``; below it the truncated sum is kept, the sample is marked
    ``unresolved`` and its remainder is the tail size (an estimate, not a
    bound).
    """
    jet = propagate_space(TimeJetPair(d, d_tilde), f, trunc.Kmax, trunc.tail_tol, base_t=t)
    a = np.array(jet.c[:, 0], dtype=float)
    R1, degenerate = estimate_R1(a)
    unresolved = False
    if not degenerate and R1 <= 1.0:
        size = tail_size(a)
        if size > tail_atol:
            raise SynthesisError(
                f"x-series diverges at t={t:.6g}: estimated radius R1={R1:.4g} <= 1 "
                f"with tail terms up to {size:.3g}", t=t)
        unresolved = True
    coef = a * inv_factorials(trunc.Kmax)
    values = _sum_series(coef, xgrid)
    if degenerate:
        rem = np.zeros_like(xgrid)
    elif unresolved:
        rem = np.full_like(xgrid, tail_size(a))
    else:
        k = np.arange(trunc.Kmax + 1)
        mhat = float(np.max(np.abs(coef) * R1 ** k))
        q = np.abs(xgrid) / R1
        rem = mhat * q ** (trunc.Kmax + 1) / (1.0 - q)
    # time derivative at the boundary from row n = 1
    filled = jet.mask[:, 1]
    c1 = np.where(filled, np.array(jet.c[:, 1], dtype=float), 0.0) * inv_factorials(trunc.Kmax)
    dt_minus = float(_sum_series(c1, -1.0))
    dt_plus = float(_sum_series(c1, 1.0))
    col = SpatialJet(a)
    if unresolved:
        h = (float(_sum_series(coef, -1.0)), float(_sum_series(coef, 1.0)))
    else:
        radius = math.inf if degenerate else R1
        h = (series_eval_x(col, -1.0, radius)[0], series_eval_x(col, 1.0, radius)[0])
    return SampleResult(t, values, rem, R1, degenerate, (dt_minus, dt_plus), h,
                        jet if keep_jet else None, unresolved)


def synthesize_state(g0: TimeTrace, g1: TimeTrace, f: AnalyticNonlinearity,
                     trunc: TruncationSpec, tgrid, xgrid, threads: Optional[int] = None,
                     keep_jets: bool = False, margin: float = 0.05,
                     tail_atol: float = DEFAULT_TAIL_ATOL) -> SynthesisResult:
    """State ``y(x_i, t_j)`` and boundary controls from the two traces.

    ``xgrid`` must contain the end points -1 and 1.
    """
    tgrid = np.asarray(tgrid, dtype=float)
    xgrid = np.asarray(xgrid, dtype=float)
    n_req = required_trace_order(trunc)
    D0 = g0.derivs(tgrid, n_req)
    D1 = g1.derivs(tgrid, n_req)

    def work(j):
        return synthesize_sample(D0[:, j], D1[:, j], float(tgrid[j]), f, trunc, xgrid,
                                 margin, keep_jets, tail_atol)

    samples = parallel_map(work, range(len(tgrid)), threads)
    state = np.column_stack([s.values for s in samples])
    rem = np.array([float(np.max(s.remainders)) for s in samples])
    R1 = np.array([s.R1 for s in samples])
    degenerate = np.array([s.degenerate for s in samples])
    unresolved = np.array([s.unresolved for s in samples])
    warnings = [f"t={s.t:.6g}: R1={s.R1:.4g} close to 4/e"
                for s in samples if not s.degenerate and not s.unresolved
                and s.R1 <= R1_CRITICAL + margin]
    warnings += [f"t={s.t:.6g}: tail not yet decaying at Kmax (size <= {tail_atol:g})"
                 for s in samples if s.unresolved]

    h_minus = np.array([s.boundary[0] for s in samples])
    h_plus = np.array([s.boundary[1] for s in samples])
    controls = ControlSignal(
        tgrid, h_minus, h_plus,
        metadata={"Kmax": trunc.Kmax, "Nmax": trunc.Nmax, "trace_order": n_req,
                  "g0": g0.certificate.to_dict() if g0.certificate else None,
                  "g1": g1.certificate.to_dict() if g1.certificate else None},
        dh_minus=np.array([s.dt_boundary[0] for s in samples]),
        dh_plus=np.array([s.dt_boundary[1] for s in samples]))
    return SynthesisResult(tgrid, xgrid, state, controls, rem, R1, degenerate, warnings,
                           [s.jet for s in samples] if keep_jets else None, unresolved)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def jet_residual(jet: BivariateJet, f: AnalyticNonlinearity) -> float:
    """``max |c[k, n+1] - c[k+2, n] - F[k, n]|`` over entries where all three are known."""
    F = nonlinearity_jet(f, jet)
    K, N = jet.Kmax, jet.Nmax
    worst = 0.0
    for k in range(K - 1):
        for n in range(N):
            if jet.mask[k, n + 1] and jet.mask[k + 2, n] and F.mask[k, n]:
                r = jet.c[k, n + 1] - jet.c[k + 2, n] - F.c[k, n]
                worst = max(worst, abs(float(r)))
    return worst


def convergence_diagnostics(result: SynthesisResult, margin: float = 0.05) -> dict:
    unres = (np.zeros(len(result.R1), bool) if result.unresolved is None
             else np.asarray(result.unresolved, bool))
    finite = result.R1[np.isfinite(result.R1) & ~unres]
    r_min = float(np.min(finite)) if finite.size else math.inf
    degenerate = bool(np.all(result.degenerate))
    ok = degenerate or r_min > 1.0
    return {
        "R1": [v if math.isfinite(v) else "inf" for v in result.R1.tolist()],
        "R1_min": r_min if math.isfinite(r_min) else "inf",
        "degenerate": degenerate,
        "above_4_over_e": degenerate or r_min > R1_CRITICAL + margin,
        "max_remainder": float(np.max(result.remainders)) if result.remainders.size else 0.0,
        "unresolved_samples": int(np.sum(unres)),
        "passed": bool(ok),
    }


# ---------------------------------------------------------------------------
# Picard oracle
# ---------------------------------------------------------------------------

@dataclass
class PicardRun:
    iterates: List[Tuple[np.ndarray, np.ndarray]]
    deltas: np.ndarray
    ratios: np.ndarray
    diverging: bool

    @property
    def fixed_point(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.iterates[-1]

    @property
    def eps_estimate(self) -> float:
        """Largest ratio over the second half of the nonzero deltas, divided by 4."""
        r = self.ratios[len(self.ratios) // 2:]
        return float(np.max(r)) / 4.0 if r.size else 0.0

    def fixed_point_jet(self, base_t: float = 0.0) -> BivariateJet:
        u, _ = self.fixed_point
        K, N = u.shape[0] - 1, u.shape[1] - 1
        from .seriescore import triangle_mask
        return BivariateJet.from_taylor(u, triangle_mask(K, N, 2 * N + 1), base_t=base_t)


def _weighted_sup(u: np.ndarray, v: np.ndarray, R1: float, R2: float) -> float:
    """Envelope-weighted sup of ``(u, v = d_x u)`` given as Taylor arrays.

    Slot ``(k, n)`` of ``u`` is the y-derivative ``(k, n)`` and slot ``(k, n)``
    of ``v`` the y-derivative ``(k + 1, n)``; each raw derivative ``(p1, p2)``
    gets the weight ``R1^p1 R2^(2 p2) / (p1 + 2 p2)!``.
    """
    from scipy.special import gammaln
    K, N = u.shape[0] - 1, u.shape[1] - 1
    k = np.arange(K + 1)[:, None]
    n = np.arange(N + 1)[None, :]
    # raw derivative = T k! n!
    base = gammaln(k + 1.0) + gammaln(n + 1.0) + 2 * n * math.log(R2)
    wu = np.exp(base + k * math.log(R1) - gammaln(k + 2 * n + 1.0))
    wv = np.exp(base + (k + 1) * math.log(R1) - gammaln(k + 2 * n + 2.0))
    return float(max(np.max(np.abs(np.asarray(u, dtype=float)) * wu),
                     np.max(np.abs(np.asarray(v, dtype=float)) * wv)))


def _grows(seq: np.ndarray, run: int = 3) -> bool:
    """``run`` consecutive increases; growth must beat rounding."""
    up = seq[1:] > seq[:-1] * (1 + 1e-9)
    return any(up[i:i + run].all() for i in range(max(0, len(up) - run + 1)))


def picard_solve(U0: TimeJetPair, f: AnalyticNonlinearity, Kmax: int, iters: Optional[int] = None,
                 R1: float = 4.9, R2: float = 4.85, tail_tol: float = 0.0) -> PicardRun:
    """Successive approximations for ``(y, d_x y)`` on truncated polynomials.

    ``U`` is a pair of arrays ``T[k, n]``: coefficient of ``x^k`` (Taylor
    normalised) of the t-jet of order ``n``.  One step is::

        u <- d      + int_0^x v
        v <- d_tilde + int_0^x (d_t u - f(x, u, v))

    with ``d_t`` the t-jet shift.  On this representation the map is
    nilpotent, so ``Kmax + 1`` iterations reach the fixed point.  ``deltas``
    are the weighted sups of ``U_{k+1} - U_k`` with weight
    ``R1^p1 R2^(2 p2) / (p1 + 2 p2)!`` on the raw y-derivative ``(p1, p2)``
    held by each slot.
    """
    N = U0.Nmax
    exact = U0.exact
    iters = Kmax + 2 if iters is None else iters
    invn = inv_factorials(N, exact)
    d = np.asarray(U0.d) * invn
    dt = np.asarray(U0.d_tilde) * invn
    zero = np.zeros((Kmax + 1, N + 1), dtype=object if exact else float)
    if exact:
        zero.fill(mpq(0))
    u = zero.copy()
    v = zero.copy()
    u[0], v[0] = d, dt
    iterates = [(u, v)]
    deltas = []
    nn = np.arange(1, N + 1)
    for _ in range(iters):
        ut = zero.copy()
        ut[:, :N] = u[:, 1:] * nn
        rhs = ut - compose_taylor(f, u, v, tail_tol)
        un = zero.copy()
        vn = zero.copy()
        un[0], vn[0] = d, dt
        for k in range(Kmax):
            un[k + 1] = v[k] / (k + 1)
            vn[k + 1] = rhs[k] / (k + 1)
        deltas.append(_weighted_sup(un - u, vn - v, R1, R2))
        u, v = un, vn
        iterates.append((u, v))
    deltas = np.array(deltas)
    nz = deltas[deltas > 0]
    ratios = nz[1:] / nz[:-1] if nz.size > 1 else np.array([])
    # u feeds v and v feeds u, so single steps alternate; the envelope over
    # pairs of steps is checked as well
    m = len(deltas) // 2
    pairs = np.maximum(deltas[0:2 * m:2], deltas[1:2 * m:2])
    diverging = _grows(deltas) or _grows(pairs)
    return PicardRun(iterates, deltas, ratios, bool(diverging))
