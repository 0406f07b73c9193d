"""Correspondence between x-jets and t-jets of solutions of the heat equation.

``propagate_time`` turns the x-jet of a state ``y(., tau)`` at ``x = 0`` into
the full mixed jet by repeatedly applying ``d_t y = d_x^2 y + f``;
``propagate_space`` goes the other way, from the two traces ``y(0, .)`` and
``d_x y(0, .)`` through ``d_x^2 y = d_t y - f``.  Both fill a triangle
``k + 2 n <= depth`` and mark everything else absent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from gmpy2 import mpq

from .errors import DepthExhausted, JetShapeError, ParityError
from .gevreybounds import BoundReport, log_factorial
from .seriescore import (
    AnalyticNonlinearity,
    BivariateJet,
    OnlineComposer,
    SpatialJet,
    TimeJetPair,
    _l1,
    _zeros,
    check_domain,
    composition_terms,
    inv_factorials,
    to_exact,
    triangle_mask,
)


def _as_vector(values, exact: bool) -> np.ndarray:
    if exact:
        return to_exact(values)
    return np.asarray(values, dtype=float)


def propagate_time(y0: SpatialJet, f: AnalyticNonlinearity, Nmax: int,
                   tail_tol: float = 0.0) -> BivariateJet:
    """Mixed jet ``c[k, n]`` from the spatial jet ``c[k, 0] = y0[k]``.

    Column ``n + 1`` follows from column ``n`` through
    ``c[k, n+1] = c[k+2, n] + F[k, n]`` where ``F`` is the jet of
    ``f(x, y, d_x y)``.  The filled region is ``k + 2 n <= Kmax``.
    """
    K = y0.Kmax
    if K < 2 * Nmax + 1:
        raise DepthExhausted(
            f"jet depth exhausted: Kmax={K} < 2*Nmax+1={2 * Nmax + 1}")
    exact = y0.exact
    check_domain(f, y0[0], y0[1])
    T = _zeros((K + 1, Nmax + 1), exact)
    T[:, 0] = _as_vector(y0.a, exact) * inv_factorials(K, exact)

    deriv = np.arange(1, K + 1)
    col0 = T[:, 0]
    yx0 = np.concatenate([col0[1:] * deriv, _zeros(1, exact)])
    terms = composition_terms(f, _l1(col0), _l1(yx0), tail_tol, exact=exact)
    comp = OnlineComposer(terms, "time", K + 1, exact) if terms else None

    kk = np.arange(K - 1)
    lap = (kk + 2) * (kk + 1)
    for n in range(Nmax):
        col = T[:, n]
        if comp is not None:
            yx = np.concatenate([col[1:] * deriv, _zeros(1, exact)])
            comp.push(col, yx)
            phi = comp.slice(n)
        else:
            phi = _zeros(K + 1, exact)
        new = _zeros(K + 1, exact)
        new[: K - 1] = (col[2:] * lap + phi[: K - 1]) / (n + 1)
        T[:, n + 1] = new
    mask = triangle_mask(K, Nmax, K)
    return BivariateJet.from_taylor(T, mask)


def propagate_space(traces: TimeJetPair, f: AnalyticNonlinearity, Kmax: int,
                    tail_tol: float = 0.0, base_t: float = 0.0) -> BivariateJet:
    """Mixed jet from the trace jets ``c[0, n] = d[n]`` and ``c[1, n] = d_tilde[n]``.

    Rows are built by increasing ``k`` through
    ``c[k+2, n] = c[k, n+1] - F[k, n]``; row ``k`` of ``F`` only needs the
    rows ``<= k + 1`` of the state, so the sweep never looks ahead.  The filled
    region is ``k + 2 n <= 2 Nmax + 1``, ``k <= Kmax``.
    """
    N = traces.Nmax
    if 2 * N + 1 < Kmax:
        raise DepthExhausted(
            f"jet depth exhausted: 2*Nmax+1={2 * N + 1} < Kmax={Kmax}")
    if Kmax < 1:
        raise JetShapeError("Kmax must be >= 1")
    exact = traces.exact
    check_domain(f, traces.d[0], traces.d_tilde[0])
    invn = inv_factorials(N, exact)
    T = _zeros((Kmax + 1, N + 1), exact)
    T[0] = _as_vector(traces.d, exact) * invn
    T[1] = _as_vector(traces.d_tilde, exact) * invn

    terms = composition_terms(f, _l1(T[0]), _l1(T[1]), tail_tol, exact=exact)
    comp = OnlineComposer(terms, "space", N + 1, exact) if terms else None
    nn = np.arange(1, N + 1)
    for k in range(Kmax - 1):
        if comp is not None:
            comp.push(T[k], (k + 1) * T[k + 1])
            phi = comp.slice(k)
        else:
            phi = _zeros(N + 1, exact)
        dt = _zeros(N + 1, exact)
        dt[:N] = T[k, 1:] * nn
        T[k + 2] = (dt - phi) / ((k + 2) * (k + 1))
    mask = triangle_mask(Kmax, N, 2 * N + 1)
    return BivariateJet.from_taylor(T, mask, base_t=base_t)


def time_traces(jet: BivariateJet) -> TimeJetPair:
    """The first two rows of a jet, i.e. the t-jets of ``y(0,.)`` and ``d_x y(0,.)``."""
    n0 = int(np.sum(jet.mask[0]))
    n1 = int(np.sum(jet.mask[1]))
    n = min(n0, n1)
    return TimeJetPair(jet.c[0, :n].copy(), jet.c[1, :n].copy())


def spatial_column(jet: BivariateJet) -> SpatialJet:
    k = int(np.sum(jet.mask[:, 0]))
    return SpatialJet(jet.c[:k, 0].copy())


def verify_bounds_D2(jet: BivariateJet, R: float, Rp: float, Cp: float,
                     R_hat: Optional[float] = None) -> BoundReport:
    """Check ``|c[k, n]| <= Cp (2n + k)! / (R^k Rp^(2n))`` on every filled entry.

    The comparison is done in log space.  ``value`` is the largest ratio
    ``|c[k, n]| / envelope`` found, ``threshold`` is 1.
    """
    worst = 0.0
    witness = None
    for (k, n), filled in np.ndenumerate(jet.mask):
        if not filled:
            continue
        v = abs(float(jet.c[k, n]))
        if v == 0.0:
            continue
        log_env = log_factorial(2 * n + k) - k * np.log(R) - 2 * n * np.log(Rp)
        ratio = float(np.exp(np.log(v) - log_env)) / Cp if Cp > 0 else np.inf
        if ratio > worst:
            worst, witness = ratio, (k, n)
    detail = f"R={R}, R'={Rp}, C'={Cp:.6g}"
    if R_hat is not None and not (R_hat < Rp < R):
        detail += f"; warning: R'={Rp}, R={R} outside ({R_hat:.4f}, R)"
    if worst > 1.0:
        detail += f"; violation at (k, n)={witness}"
    elif witness is not None:
        detail += f"; max ratio at (k, n)={witness}"
    return BoundReport("D2", worst, 1.0, worst <= 1.0, detail)


def fit_C_prime(jet: BivariateJet, R: float, Rp: float) -> float:
    """Smallest ``C'`` for which :func:`verify_bounds_D2` passes."""
    return verify_bounds_D2(jet, R, Rp, 1.0).value


# ---------------------------------------------------------------------------
# parity
# ---------------------------------------------------------------------------

def is_odd_nonlinearity(f: AnalyticNonlinearity, n_points: int = 64, tol: float = 1e-12,
                        seed: int = 0) -> bool:
    """Check ``f(-x, -y0, y1) = -f(x, y0, y1)`` at random points of the box."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, n_points)
    y0 = rng.uniform(-1, 1, n_points)
    y1 = rng.uniform(-1, 1, n_points)
    lhs = f(-x, -y0, y1)
    rhs = -f(x, y0, y1)
    scale = max(1.0, float(np.max(np.abs(rhs))))
    return bool(np.max(np.abs(lhs - rhs)) <= tol * scale)


@dataclass
class ParityReport:
    jet_odd: bool
    f_odd: bool
    worst_even_entry: float

    @property
    def ok(self) -> bool:
        return self.jet_odd and self.f_odd


def parity_filter(jet: Union[SpatialJet, BivariateJet], mode: str = "check",
                  f: Optional[AnalyticNonlinearity] = None, tol: float = 0.0):
    """Parity structure used by the single-control mode.

    ``mode="check"`` returns a :class:`ParityReport` (odd jet: every even
    x-order vanishes; odd ``f`` in the reflected sense).  ``mode="project"``
    zeroes the even x-orders and returns a jet of the same kind.
    """
    if isinstance(jet, SpatialJet):
        a = jet.a
        even = a[0::2]
    else:
        even = jet.c[0::2][jet.mask[0::2]]
    if mode == "project":
        if isinstance(jet, SpatialJet):
            out = jet.a.copy()
            out[0::2] = mpq(0) if jet.exact else 0.0
            return SpatialJet(out)
        c = np.array(jet.c, copy=True)
        c[0::2] = mpq(0) if jet.exact else 0.0
        return BivariateJet(c, jet.mask.copy(), jet.base_x, jet.base_t)
    if mode != "check":
        raise ValueError(f"unknown parity mode {mode!r}")
    worst = max((abs(float(v)) for v in np.asarray(even).flat), default=0.0)
    f_odd = True if f is None else is_odd_nonlinearity(f)
    return ParityReport(worst <= tol, f_odd, worst)


def require_odd(jet, f: AnalyticNonlinearity, tol: float = 0.0) -> None:
    rep = parity_filter(jet, "check", f, tol)
    if not rep.f_odd:
        raise ParityError("single-control mode needs f(-x,-y0,y1) = -f(x,y0,y1)")
    if not rep.jet_odd:
        raise ParityError(
            f"single-control mode needs odd data; even coefficient of size {rep.worst_even_entry:.3g}")
