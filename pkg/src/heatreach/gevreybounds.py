"""Effective Gevrey norms and constants.

Everything here is a numeric evaluation of an explicit formula: the weights
``Gamma_{lambda,a}(k)``, the norms ``|u|_{L,a}`` and ``||u||_{L,a}`` computed
from sampled derivatives, the derivative-cost bracket, the algebra constant
``K_{q,mu}``, the contraction sequence ``a_k`` and the two ``lambda_n``
schedules, plus the admissibility checklist of a synthesis problem.

Norms computed from samples are *grid lower bounds* of the true suprema: the
supremum is only taken over the derivative orders and times supplied.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln, zeta

from .errors import DivergentConstant, NoContractionIndex

ZETA2 = math.pi ** 2 / 6.0
R_HAT = 4.0 * math.exp(1.0 / (2.0 * math.e))
E_INV_E = math.exp(1.0 / math.e)


def log_factorial(n) -> float:
    return float(gammaln(np.asarray(n, dtype=float) + 1.0))


@dataclass(frozen=True)
class GevreyParams:
    lam: float = 2.0
    L: float = 1.0
    a: float = 0.0

    def __post_init__(self):
        if not self.lam > 1:
            raise ValueError("Gevrey order lambda must be > 1")
        if not self.L > 0:
            raise ValueError("L must be positive")


@dataclass
class BoundReport:
    name: str
    value: float
    threshold: float
    satisfied: bool
    detail: str = ""
    comparison: str = "<="

    def __post_init__(self):
        self.value = float(self.value)
        self.threshold = float(self.threshold)
        self.satisfied = bool(self.satisfied)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("value", "threshold"):
            if not math.isfinite(d[key]):
                d[key] = str(d[key])
        return d


def _report(name: str, value: float, threshold: float, strict: bool = False,
            detail: str = "") -> BoundReport:
    ok = value < threshold if strict else value <= threshold
    return BoundReport(name, value, threshold, ok, detail, "<" if strict else "<=")


# ---------------------------------------------------------------------------
# weights and norms
# ---------------------------------------------------------------------------

def log_gamma_la(lam: float, a: float, k: int) -> float:
    if k > abs(a) + 1:
        core = lam * float(gammaln(k + 1.0 - a))
    else:
        core = lam * log_factorial(k)
    return -5.0 * math.log(2.0) + core - 2.0 * math.log1p(k)


def gamma_la(lam: float, a: float, k: int) -> float:
    """``Gamma_{lambda,a}(k)``.

    ``2^-5 Gamma(k+1-a)^lambda (1+k)^-2`` for ``k > |a| + 1`` and
    ``2^-5 (k!)^lambda (1+k)^-2`` otherwise.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k > abs(a) + 1:
        base = math.gamma(k + 1.0 - a) if k < 150 else None
    else:
        base = float(math.factorial(k)) if k < 150 else None
    if base is None:
        lg = log_gamma_la(lam, a, k)
        return math.exp(lg) if lg < 709.0 else math.inf
    return 2.0 ** -5 * base ** lam / (1.0 + k) ** 2


def seminorm_La(deriv_samples, params: GevreyParams) -> float:
    """``max |u^(k)(t_j)| / (L^|k-a| Gamma_{lambda,a}(k))`` over the samples.

    ``deriv_samples[k, j]`` holds ``|u^(k)(t_j)|``.  The result is a lower
    bound of the seminorm on the sampled interval.
    """
    s = np.abs(np.atleast_2d(np.asarray(deriv_samples, dtype=float)))
    if s.size == 0:
        raise ValueError("empty sample set")
    best = 0.0
    for k in range(s.shape[0]):
        row = float(np.max(s[k]))
        if row == 0.0:
            continue
        logw = abs(k - params.a) * math.log(params.L) + log_gamma_la(params.lam, params.a, k)
        best = max(best, math.exp(math.log(row) - logw))
    return best


def norm_La(u_samples, du_deriv_samples, params: GevreyParams) -> float:
    """``max(2^6 ||u||_inf, 2^3 L^-1 |u'|_{L,a})`` on the grid.

    ``du_deriv_samples[k, j]`` holds ``|u^(k+1)(t_j)|``.
    """
    u = np.abs(np.asarray(u_samples, dtype=float))
    if u.size == 0:
        raise ValueError("empty sample set")
    return max(2.0 ** 6 * float(np.max(u)),
               2.0 ** 3 / params.L * seminorm_La(du_deriv_samples, params))


# ---------------------------------------------------------------------------
# cost of derivatives
# ---------------------------------------------------------------------------

def sup_power_decay(alpha: float, p: float) -> float:
    """``sup_{t >= 0} alpha^-t t^p = (p / (e ln alpha))^p``."""
    if not alpha > 1:
        raise ValueError("alpha must be > 1")
    if p <= 0:
        return 1.0
    return (p / (math.e * math.log(alpha))) ** p


def dominant_cost_term(lam, delta, b, d, L, alpha) -> float:
    """``(1+delta) alpha^b L^d (lambda d / (e ln alpha))^(lambda d)``."""
    return (1.0 + delta) * alpha ** b * L ** d * sup_power_decay(alpha, lam * d)


@dataclass
class DerivativeCost:
    value: float
    finite_part: float
    dominant: float
    N: int
    report: BoundReport


def _stirling_threshold(lam, delta, a, b, q, kmax=200000) -> int:
    """Smallest N with ``(Gamma(k+1+q-a)/Gamma(k+1-b))^lam <= (1+delta) k^(lam d)`` for k >= N.

    The ratio ``Gamma(k+1+q-a) / (Gamma(k+1-b) k^d)`` tends to 1; the search
    runs to ``kmax`` and requires the ratio to be monotone on the tail past
    the last failure, so the inequality persists beyond the search window.
    """
    d = q - a + b
    k0 = max(1, int(math.floor(b)) + 1)
    k = np.arange(k0, kmax + 1, dtype=float)
    log_ratio = gammaln(k + 1 + q - a) - gammaln(k + 1 - b) - d * np.log(k)
    bad = lam * log_ratio > math.log1p(delta) + 1e-15
    N = int(k[np.nonzero(bad)[0][-1]] + 1) if bad.any() else k0
    tail = log_ratio[int(N - k0):]
    diffs = np.diff(tail)
    # rounding of gammaln at the far end of the window
    noise = 64 * np.finfo(float).eps * float(gammaln(kmax + 2.0 + abs(q) + abs(a)))
    if len(diffs) and not (np.all(diffs <= noise) or np.all(diffs >= -noise)):
        raise ValueError("ratio not monotone past the threshold; enlarge the search window")
    if len(tail) and lam * tail[-1] > math.log1p(delta):
        raise ValueError("threshold not reached inside the search window")
    return N


def derivative_cost(lam, delta, a, b, q, L, alpha) -> DerivativeCost:
    """Effective bracket of the derivative-cost estimate.

    The finite part is the largest of the explicit ratios
    ``L^(|k+q-a|-|k-b|) alpha^-|k-b| Gamma_{lam,a}(k+q) / Gamma_{lam,b}(k)``
    over ``k < N`` (reported as is, no power of L is fitted), the dominant part
    is :func:`dominant_cost_term`.
    """
    d = q - a + b
    if not alpha > 1:
        raise ValueError("alpha must be > 1")
    if not d > 0:
        raise ValueError("d = q - a + b must be positive")
    if not delta > 0:
        raise ValueError("delta must be positive")
    N = _stirling_threshold(lam, delta, a, b, q)
    finite = 0.0
    for k in range(N):
        lg = (log_gamma_la(lam, a, k + q) - log_gamma_la(lam, b, k)
              + (abs(k + q - a) - abs(k - b)) * math.log(L) - abs(k - b) * math.log(alpha))
        finite = max(finite, math.exp(lg))
    dom = dominant_cost_term(lam, delta, b, d, L, alpha)
    rep = BoundReport("derivative_cost", finite + dom, math.inf, True,
                      f"N={N}, finite part={finite:.6g}, dominant={dom:.6g}")
    return DerivativeCost(finite + dom, finite, dom, N, rep)


def derivative_cost_bound(lam, delta, a, b, q, L, alpha) -> float:
    return derivative_cost(lam, delta, a, b, q, L, alpha).value


# ---------------------------------------------------------------------------
# algebra constant
# ---------------------------------------------------------------------------

def _pair_sum(s: float, m_max: int) -> float:
    """``sum_{i,j>=0, 2i+j+1 <= m_max} (2i+j+1)^-s``, grouped by ``m = 2i+j+1``."""
    m = np.arange(1, m_max + 1, dtype=float)
    count = np.floor((m + 1) / 2)
    return float(np.sum(count * m ** (-s)))


def _pair_tail(s: float, m_max: int) -> float:
    """Tail ``sum_{m > m_max} floor((m+1)/2) m^-s``.

    Splitting ``m = 2l`` and ``m = 2l - 1`` (both with multiplicity ``l``)
    gives Hurwitz zeta values::

        sum_{l>l0} l (2l)^-s     = 2^-s zeta(s-1, l0+1)
        sum_{l>l0} l (2l-1)^-s   = 2^-s zeta(s-1, l0+1/2) + 2^-(s+1) zeta(s, l0+1/2)

    with ``l0 = floor(m_max / 2)``; the odd ``m_max`` case adds back the
    single term ``m = m_max + 1``.
    """
    l0 = m_max // 2
    tail = (2.0 ** -s * zeta(s - 1, l0 + 1)
            + 2.0 ** -s * zeta(s - 1, l0 + 0.5) + 2.0 ** -(s + 1) * zeta(s, l0 + 0.5))
    if m_max % 2 == 1:
        # m = 2 l0 + 1 <= m_max was counted in the tail as l = l0 + 1 odd term
        m = m_max
        tail -= math.floor((m + 1) / 2) * m ** (-s)
    return float(tail)


def kq_mu(q: int, mu: float, m_max: int = 2000) -> float:
    """``K_{q,mu} = 2^(mu-q) (1+q)^(2q) sum_{i,j>=0} (2i+j+1)^-(mu-q)``.

    Partial sum over ``2i+j+1 <= m_max`` plus the closed-form tail, so the
    truncation error is at rounding level.
    """
    s = mu - q
    if not s > 2:
        raise DivergentConstant(f"divergent constant: mu - q = {s} must be > 2")
    total = _pair_sum(s, m_max) + _pair_tail(s, m_max)
    return 2.0 ** s * (1.0 + q) ** (2 * q) * total


# ---------------------------------------------------------------------------
# sequences
# ---------------------------------------------------------------------------

def contraction_sequence(gamma: float, kmax: int) -> Tuple[np.ndarray, float]:
    """``a_0 = 1``, ``a_{k+1} = a_k (1 - gamma/(1+k)^2)`` and ``exp(-2 gamma zeta(2))``."""
    if not 0 < gamma < 0.5:
        raise ValueError("gamma must lie in (0, 1/2)")
    k = np.arange(kmax)
    factors = 1.0 - gamma / (1.0 + k) ** 2
    a = np.concatenate([[1.0], np.cumprod(factors)])
    lower = math.exp(-2.0 * gamma * ZETA2)
    if np.any(a < lower):
        raise AssertionError("contraction sequence fell below its limit bound")
    return a, lower


def contraction_series(gamma: float, eps: float, terms: int = 2000) -> float:
    """Partial sum of ``sum_i (4 eps)^i / (1 - a_{i+1}/a_i)``."""
    a, _ = contraction_sequence(gamma, terms)
    i = np.arange(terms)
    return float(np.sum((4 * eps) ** i / (1.0 - a[1:] / a[:-1])))


@dataclass
class ScheduleParams:
    K: Optional[float] = None
    C_bar: float = 1.0
    mu: float = 4.0
    delta: float = 0.5
    b0: float = 5.0
    b1: float = 5.0
    R: float = 4.9
    Rp: float = 4.85
    eps: Optional[float] = None
    R1: Optional[float] = None
    R2: Optional[float] = None
    n_max: int = 100000

    def resolved_K(self) -> float:
        if self.K is not None:
            return self.K
        return max(kq_mu(0, self.mu), kq_mu(1, self.mu))


def lambda_schedule(kind: str, params: ScheduleParams) -> Tuple[np.ndarray, int]:
    """``lambda_n`` for ``n = 0..n_max`` and the first index with ``lambda_n <= 1``.

    ``kind="prop10"``::

        (1-eps) + K/b0 C R'^2/((2n+1)(2n+2)) 3^mu/(1-delta)
                + K/(b1 R) C R'^2/(2n+2) 3^mu/(1-delta)^2

    ``kind="appendix"`` uses ``(R1/R2)^2`` as leading factor and ``R1``
    in place of ``R'`` (see :class:`ScheduleParams`).  Both correction terms
    decrease in ``n``, so the first index is a contraction index for good.
    """
    p = params
    if not 0 < p.delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    K = p.resolved_K()
    n = np.arange(p.n_max + 1, dtype=float)
    w = 3.0 ** p.mu
    if kind == "prop10":
        eps = p.eps if p.eps is not None else 1.0 - (p.Rp / p.R) ** 2
        lead = 1.0 - eps
        lam = (lead + K / p.b0 * p.C_bar * p.Rp ** 2 / ((2 * n + 1) * (2 * n + 2)) * w / (1 - p.delta)
               + K / (p.b1 * p.R) * p.C_bar * p.Rp ** 2 / (2 * n + 2) * w / (1 - p.delta) ** 2)
    elif kind == "appendix":
        if p.R1 is None or p.R2 is None:
            raise ValueError("appendix schedule needs R1 and R2")
        lead = (p.R1 / p.R2) ** 2
        lam = (lead + K / p.b0 * p.C_bar * p.R1 ** 2 / ((2 * n + 1) * (2 * n + 2)) * w / (1 - p.delta)
               + K / p.b1 * p.C_bar * p.R1 / (2 * n + 2) * w / (1 - p.delta) ** 2)
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    if lead >= 1.0:
        raise NoContractionIndex(f"no contraction index found: leading factor {lead} >= 1")
    below = np.nonzero(lam <= 1.0)[0]
    if len(below) == 0:
        raise NoContractionIndex(f"no contraction index found up to n_max={p.n_max}")
    return lam, int(below[0])


# ---------------------------------------------------------------------------
# admissibility
# ---------------------------------------------------------------------------

def stirling_central_ratio(n: int) -> Fraction:
    """``(2n)! / (4^n (n!)^2)`` exactly."""
    return Fraction(math.factorial(2 * n), 4 ** n * math.factorial(n) ** 2)


def check_admissibility(f, R: float, Rp: float, L: float, R_data: float = math.inf,
                        R_pp: Optional[float] = None, n_stirling: int = 80) -> List[BoundReport]:
    """One :class:`BoundReport` per hypothesis the control synthesis relies on.

    ``R_data`` is the analyticity radius declared for the data, ``R_pp`` the
    intermediate radius used to pick the Borel gap (checked if given).
    """
    out = [
        _report("b0>4", 4.0, f.b0, strict=True),
        _report("b1>4", 4.0, f.b1, strict=True),
        _report("b2>4", 4.0, f.b2, strict=True),
        _report("b2>R_hat", R_HAT, f.b2, strict=True, detail=f"R_hat={R_HAT:.6f}"),
        _report("R>R_hat", R_HAT, R, strict=True),
        _report("R_hat<R'", R_HAT, Rp, strict=True),
        _report("R'<R", Rp, R, strict=True),
        _report("R<min(R_data,b2)", R, min(R_data, f.b2), strict=True,
                detail=f"R_data={R_data}, b2={f.b2}"),
    ]
    lo = 4.0 * E_INV_E / Rp ** 2
    out.append(_report("L_window_nonempty", lo, 0.25, strict=True,
                       detail=f"window ({lo:.6f}, 0.25)"))
    out.append(_report("L>4e^(1/e)/R'^2", lo, L, strict=True))
    out.append(_report("L1<1/4", L, 0.25, strict=True))
    worst = max(stirling_central_ratio(n) for n in range(n_stirling + 1))
    out.append(_report("stirling_(2n)!<=4^n(n!)^2", float(worst), 1.0,
                       detail=f"exact for n <= {n_stirling}"))
    if R_pp is not None:
        H = 1.0 / R_pp ** 2
        out.append(_report("borel_gap", E_INV_E * H, L / 4.0, strict=True,
                           detail=f"H=1/R''^2={H:.6g}, H_hat=L/4={L / 4:.6g}"))
        out.append(_report("R''<R'", R_pp, Rp, strict=True))
    return out
