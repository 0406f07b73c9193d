"""Evaluable time traces with Gevrey-2 growth certificates.

A :class:`TimeTrace` is a function of ``t`` whose derivatives of every order
up to ``N_cert`` can be evaluated exactly (up to rounding) at any point,
together with a certificate ``(C, H)`` meaning
``|g^(n)(t)| <= C H^n (2n)!`` on the trace domain for ``n <= N_cert``.

Borel realization
-----------------
Given a jet ``d_0..d_Q`` at a base point ``b`` the trace is::

    g(t) = sum_q d_q s^q / q! * chi(m_q s),      s = t - b,

with ``chi`` an even plateau function, ``chi = 1`` on ``|s| <= 1/2`` and
``chi = 0`` for ``|s| >= 1``.  Because ``chi`` is flat at 0 every term has
jet ``d_q`` at ``s = 0`` and nothing else, so ``g^(q)(b) = d_q`` exactly.

The width ``m_q`` of each term is picked to make its contribution to the
certificate below as small as possible, searching ``m`` between
``m_min = 1/(2 span)`` (no cut on the domain, ``span`` the largest ``|s|``
there) and the classical schedule ``max(m_min, 8 H q / e)``.  For short jets
this usually leaves every cutoff inactive on the domain; large high-order data
gets cut, but never harder than the classical schedule, whose supports
``|s| <= 1/m_q`` shrink like ``1/q`` and keep ``|d_q| s^q / q!`` summable for
data of size ``(2q)! H^q``.

The certificate constant is an explicit majorant rather than a fitted value.
Writing ``X_k = sup |chi^(k)|`` (tabulated on a fine grid, with a safety
factor) and ``r_q = min(1/m_q, span)``, Leibniz' rule gives::

    |g^(n)| <= sum_q |d_q| sum_{j<=min(n,q)} C(n,j) r_q^(q-j)/(q-j)! m_q^(n-j) X_(n-j)

and ``C`` is the largest value of the right side divided by ``H_hat^n (2n)!``
over ``n <= N_cert``.  The construction then checks the actual derivatives on
a grid against ``(C, H_hat)``.

Plateau and cutoff
------------------
Both are built from ``psi(s) = exp(-1/s^2)`` through the smooth step
``S(u) = psi(u) / (psi(u) + psi(1-u))``, which is Gevrey of order 3/2.
Derivatives come from Taylor-mode arithmetic on
``S = 1 / (1 + exp(E))`` with ``E(u) = 1/u^2 - 1/(1-u)^2``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

from .errors import CertificateError, GapConditionError

E_INV_E = math.exp(1.0 / math.e)
_EXP_GUARD = 700.0
_VALIDATION_POINTS = 201


# ---------------------------------------------------------------------------
# smooth step and plateau
# ---------------------------------------------------------------------------

def step_taylor(u, N: int) -> np.ndarray:
    """Taylor coefficients ``S_k(u)`` of the smooth step at each point of ``u``.

    Returns shape ``(N + 1, len(u))``; ``S^(k)(u) = k! S_k(u)``.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    out = np.zeros((N + 1, u.size))
    lo = u <= 0.0
    hi = u >= 1.0
    mid = ~(lo | hi)
    out[0, hi] = 1.0
    if not mid.any():
        return out
    um = u[mid]
    vm = 1.0 - um
    E0 = 1.0 / um ** 2 - 1.0 / vm ** 2
    flat0 = E0 > _EXP_GUARD
    flat1 = E0 < -_EXP_GUARD
    live = ~(flat0 | flat1)
    idx = np.nonzero(mid)[0]
    out[0, idx[flat1]] = 1.0
    if not live.any():
        return out
    um, vm = um[live], vm[live]
    k = np.arange(N + 1)[:, None]
    # 1/(u+h)^2 = sum (k+1)(-1)^k u^-(k+2) h^k ;  1/(v-h)^2 = sum (k+1) v^-(k+2) h^k
    e = (k + 1) * ((-1.0) ** k * um ** (-(k + 2.0)) - vm ** (-(k + 2.0)))
    # keep the exponential below 1: S = 1/(1+W) if E0 <= 0, else S = V/(1+V), V = 1/W
    sign = np.where(e[0] > 0, -1.0, 1.0)
    e = e * sign
    w = np.zeros_like(e)
    w[0] = np.exp(e[0])
    for kk in range(1, N + 1):
        j = np.arange(1, kk + 1)[:, None]
        w[kk] = np.sum(j * e[1:kk + 1] * w[kk - 1::-1][: kk], axis=0) / kk
    num = np.where(sign > 0, 0.0, w)
    num[0] = np.where(sign > 0, 1.0, w[0])
    s = np.zeros_like(e)
    denom = 1.0 + w[0]
    for kk in range(N + 1):
        s[kk] = (num[kk] - np.sum(w[1:kk + 1] * s[kk - 1::-1][: kk], axis=0)) / denom
    out[:, idx[live]] = s
    return out


def _fact(N: int) -> np.ndarray:
    return np.exp(gammaln(np.arange(N + 1) + 1.0))


def chi_derivs(s, N: int) -> np.ndarray:
    """``chi^(k)(s)`` for ``k <= N``; ``chi(s) = S(2 - 2|s|)``."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    T = step_taylor(2.0 - 2.0 * np.abs(s), N)
    k = np.arange(N + 1)[:, None]
    return T * _fact(N)[:, None] * (-2.0 * np.sign(s)) ** k


@lru_cache(maxsize=8)
def chi_sup_table(N: int, points: int = 20001, safety: float = 1.05) -> np.ndarray:
    """``X_k >= sup |chi^(k)|`` for ``k <= N`` (dense grid times a safety factor)."""
    u = np.linspace(0.0, 1.0, points)
    T = step_taylor(u, N)
    X = np.max(np.abs(T), axis=1) * _fact(N) * 2.0 ** np.arange(N + 1) * safety
    X[0] = 1.0
    return X


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------

def _leibniz(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Derivatives of a product from derivatives of the factors (rows = orders)."""
    n = A.shape[0] - 1
    f = _fact(n)[:, None]
    a, b = A / f, B / f
    out = np.zeros(np.broadcast_shapes(A.shape, B.shape))
    for j in range(n + 1):
        out[j:] += a[j] * b[: n + 1 - j]
    return out * f


def gevrey2_ratios(derivs: np.ndarray, H: float) -> np.ndarray:
    """``max_t |g^(n)(t)| / (H^n (2n)!)`` for each order ``n``."""
    n = np.arange(derivs.shape[0])
    logw = n * math.log(H) + gammaln(2 * n + 1.0)
    return np.max(np.abs(derivs), axis=1) / np.exp(logw)


@dataclass(frozen=True)
class Certificate:
    C: float
    H: float
    N_cert: int
    grid_max: float
    kind: str = "a_priori"

    def to_dict(self) -> dict:
        return {"C": self.C, "H": self.H, "N_cert": self.N_cert,
                "grid_max": self.grid_max, "kind": self.kind}


class TimeTrace:
    """A function of ``t`` on ``domain`` with exact derivative evaluation.

    ``kind`` is one of ``"borel_sum"``, ``"blended"``, ``"zero"`` or
    ``"closed_form"``; ``params`` holds what is needed to serialise it.
    """

    def __init__(self, kind: str, domain: Tuple[float, float],
                 evaluator: Callable[[np.ndarray, int], np.ndarray],
                 params: dict, certificate: Optional[Certificate] = None):
        self.kind = kind
        self.domain = (float(domain[0]), float(domain[1]))
        self._eval = evaluator
        self.params = params
        self.certificate = certificate

    def derivs(self, t, n: int) -> np.ndarray:
        """Array of shape ``(n + 1, len(t))`` with ``g^(k)(t_j)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self._eval(t, n)

    def __call__(self, t):
        return self.derivs(t, 0)[0]

    @property
    def N_cert(self) -> int:
        return self.certificate.N_cert if self.certificate else 0

    def grid(self, points: int = _VALIDATION_POINTS) -> np.ndarray:
        return np.linspace(self.domain[0], self.domain[1], points)

    def validate(self, C: float, H: float, N: int, points: int = _VALIDATION_POINTS) -> float:
        """Largest grid value of ``|g^(n)| / (H^n (2n)!)``; raises if it exceeds ``C``."""
        r = float(np.max(gevrey2_ratios(self.derivs(self.grid(points), N), H)))
        if r > C * (1 + 1e-9) + 1e-300:
            raise CertificateError(
                f"certificate check failed: grid max {r:.6g} > C = {C:.6g} (H = {H:.6g})")
        return r

    # export ---------------------------------------------------------------
    def to_dict(self) -> dict:
        d = {"kind": self.kind, "domain": list(self.domain), "params": _jsonable(self.params)}
        if self.certificate is not None:
            d["certificate"] = self.certificate.to_dict()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def samples_csv(self, t, n: int, out=None) -> str:
        """CSV with columns ``t, g, g', ..., g^(n)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        D = self.derivs(t, n)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + ["g" if k == 0 else f"g^({k})" for k in range(n + 1)])
        for j, tj in enumerate(t):
            w.writerow([f"{tj:.17g}"] + [f"{v:.17g}" for v in D[:, j]])
        text = buf.getvalue()
        if out is not None:
            with open(out, "w") as fh:
                fh.write(text)
        return text


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, TimeTrace):
        return obj.to_dict()
    if isinstance(obj, (Fraction, np.floating)) or type(obj).__name__ == "mpq":
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def zero_trace(domain, H: float = 1.0, N_cert: int = 0) -> TimeTrace:
    return TimeTrace("zero", domain, lambda t, n: np.zeros((n + 1, t.size)), {},
                     Certificate(0.0, H, N_cert, 0.0))


def closed_form_trace(name: str, fn: Callable[[np.ndarray, int], np.ndarray], domain,
                      params: Optional[dict] = None, H: Optional[float] = None,
                      N_cert: int = 0) -> TimeTrace:
    """Wrap an analytic derivative evaluator; if ``H`` is given the certificate
    constant is the measured grid maximum."""
    tr = TimeTrace("closed_form", domain, fn, dict(params or {}, name=name))
    if H is not None:
        r = float(np.max(gevrey2_ratios(tr.derivs(tr.grid(), N_cert), H)))
        tr.certificate = Certificate(r, H, N_cert, r, kind="grid")
    return tr


def exponential_trace(scale: float, rate: float, domain, shift: float = 0.0,
                      **kw) -> TimeTrace:
    """``scale * exp(rate * (t - shift))``."""
    def fn(t, n):
        base = scale * np.exp(rate * (t - shift))
        return np.array([rate ** k * base for k in range(n + 1)])
    return closed_form_trace("exponential", fn, domain,
                             {"scale": scale, "rate": rate, "shift": shift}, **kw)


def polynomial_trace(coeffs: Sequence[float], domain, **kw) -> TimeTrace:
    """``sum_i coeffs[i] t^i``."""
    P = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))

    def fn(t, n):
        out, p = [], P
        for _ in range(n + 1):
            out.append(p(t))
            p = p.deriv()
        return np.array(out)
    return closed_form_trace("polynomial", fn, domain, {"coeffs": list(coeffs)}, **kw)


def _term_costs(dq: float, q: int, m: np.ndarray, span: float, W: np.ndarray) -> np.ndarray:
    """Majorant of ``max_n |(d_q s^q/q! chi(m s))^(n)| / W_n`` for each width in ``m``."""
    N = len(W) - 1
    X = chi_sup_table(N)
    r = np.minimum(1.0 / m, span)
    active = m * r > 0.5
    best = np.zeros(len(m))
    for n in range(N + 1):
        acc = np.zeros(len(m))
        for j in range(min(n, q) + 1):
            k = n - j
            term = math.comb(n, j) * r ** (q - j) / math.factorial(q - j) * m ** k * X[k]
            acc += np.where(active, term, 0.0) if k > 0 else term
        best = np.maximum(best, abs(dq) * acc / W[n])
    return best


def borel_schedule(d, H: float, H_hat: float, span: float, N: int,
                   candidates: int = 64) -> np.ndarray:
    """Cutoff widths ``m_q`` (see the module docs)."""
    d = np.asarray(d, dtype=float)
    n = np.arange(N + 1)
    W = np.exp(n * math.log(H_hat) + gammaln(2 * n + 1.0))
    m_min = 1.0 / (2.0 * span)
    out = np.full(len(d), m_min)
    for q, dq in enumerate(d):
        m_max = max(m_min, 8.0 * H * q / math.e)
        if dq == 0 or m_max <= m_min:
            continue
        cand = np.geomspace(m_min, m_max, candidates)
        out[q] = cand[int(np.argmin(_term_costs(dq, q, cand, span, W)))]
    return out


def input_constant(d, H: float) -> float:
    """Smallest ``C`` with ``|d_q| <= C H^q (2q)!``."""
    d = np.abs(np.asarray(d, dtype=float))
    q = np.arange(len(d))
    return float(np.max(d / np.exp(q * math.log(H) + gammaln(2 * q + 1.0)))) if len(d) else 0.0


def _borel_evaluator(d: np.ndarray, m: np.ndarray, base: float):
    nz = [q for q in range(len(d)) if d[q] != 0]

    def fn(t, n):
        s = t - base
        out = np.zeros((n + 1, t.size))
        for q in nz:
            # derivatives of d_q s^q / q!
            P = np.zeros((n + 1, t.size))
            for j in range(min(n, q) + 1):
                P[j] = d[q] * s ** (q - j) / math.factorial(q - j)
            X = chi_derivs(m[q] * s, n) * (m[q] ** np.arange(n + 1))[:, None]
            out += _leibniz(P, X)
        return out
    return fn


def _a_priori_constant(d: np.ndarray, m: np.ndarray, span: float, H_hat: float,
                       N: int) -> float:
    n = np.arange(N + 1)
    W = np.exp(n * math.log(H_hat) + gammaln(2 * n + 1.0))
    X = chi_sup_table(N)
    total = np.zeros(N + 1)
    for q, dq in enumerate(d):
        if dq == 0:
            continue
        r = min(1.0 / m[q], span)
        active = m[q] * r > 0.5
        for nn in range(N + 1):
            acc = 0.0
            for j in range(min(nn, q) + 1):
                k = nn - j
                if k > 0 and not active:
                    continue
                acc += math.comb(nn, j) * r ** (q - j) / math.factorial(q - j) * m[q] ** k * X[k]
            total[nn] += abs(float(dq)) * acc
    return float(np.max(total / W))


def borel_realize(d, H: float, H_hat: float, domain, base: Optional[float] = None,
                  N_cert: Optional[int] = None) -> TimeTrace:
    """Trace ``g`` with ``g^(q)(base) = d_q`` and a Gevrey-2 certificate ``(C, H_hat)``.

    ``base`` defaults to the left end of ``domain``; ``N_cert`` to ``len(d) - 1``.  ``H_hat`` must exceed
    ``e^(1/e) H``.  The returned certificate is the explicit majorant from the
    module docs, checked on a 201-point grid for orders ``0..N_cert``.
    """
    if not H > 0:
        raise ValueError("H must be positive")
    if not H_hat > E_INV_E * H:
        raise GapConditionError(
            f"gap condition violated: H_hat = {H_hat:.6g} <= e^(1/e) H = {E_INV_E * H:.6g}")
    t1, t2 = float(domain[0]), float(domain[1])
    if not t2 > t1:
        raise ValueError("empty trace domain")
    base = t1 if base is None else float(base)
    d_exact = list(d)
    dv = np.array([float(v) for v in d_exact], dtype=float)
    Q = len(dv) - 1
    N = Q if N_cert is None else int(N_cert)
    if not np.any(dv != 0):
        tr = zero_trace(domain, H_hat, N)
        tr.params = {"d": d_exact, "base": base}
        return tr
    span = max(abs(t1 - base), abs(t2 - base))
    c_in = input_constant(dv, H)
    m = borel_schedule(dv, H, H_hat, span, N)
    for attempt in range(2):
        C = _a_priori_constant(dv, m, span, H_hat, N)
        tr = TimeTrace("borel_sum", domain, _borel_evaluator(dv, m, base),
                       {"d": d_exact, "m": m.tolist(), "base": base, "H": H, "H_hat": H_hat,
                        "C_input": c_in})
        try:
            gmax = tr.validate(C, H_hat, N)
        except CertificateError:
            if attempt == 1:
                raise
            m = m * 2.0
            continue
        tr.certificate = Certificate(C, H_hat, N, gmax)
        tr.params["inflation"] = C / c_in if c_in > 0 else math.inf
        return tr
    raise CertificateError("unreachable")


def jet_at_base(trace: TimeTrace, n: int):
    """Jet of a Borel trace at its base point; exact values for exact input."""
    if trace.kind == "zero":
        return [0] * (n + 1)
    if trace.kind != "borel_sum":
        raise ValueError("jet_at_base needs a Borel trace")
    d = trace.params["d"]
    zero = type(d[0])(0) if d and not isinstance(d[0], float) else 0.0
    return [d[q] if q < len(d) else zero for q in range(n + 1)]


def gevrey_cutoff(T: float, N_cert: int = 0) -> TimeTrace:
    """Plateau ``rho`` with ``rho = 1`` on ``[0, T/4]`` and ``rho = 0`` on ``[3T/4, T]``.

    ``rho(t) = 1 - S(u)``, ``u = (t - T/4) / (T/2)``, i.e.
    ``psi(1-u) / (psi(u) + psi(1-u))``; Gevrey of order 3/2.
    """
    if not T > 0:
        raise ValueError("T must be positive")

    def fn(t, n):
        u = (t - T / 4.0) / (T / 2.0)
        D = -step_taylor(u, n) * _fact(n)[:, None] * ((2.0 / T) ** np.arange(n + 1))[:, None]
        D[0] += 1.0
        return D
    return TimeTrace("closed_form", (0.0, T), fn, {"name": "gevrey_cutoff", "T": T},
                     Certificate(1.0, 0.0, N_cert, 1.0, kind="sup"))


def gevrey_quotient(trace: TimeTrace, L: float, N: int, order: float = 2.0,
                    points: int = _VALIDATION_POINTS) -> np.ndarray:
    """``max_t |g^(n)| L^-n (n!)^-order`` on the grid, per ``n``."""
    D = trace.derivs(trace.grid(points), N)
    n = np.arange(N + 1)
    return np.max(np.abs(D), axis=1) / np.exp(n * math.log(L) + order * gammaln(n + 1.0))


def blend_traces(hat: TimeTrace, tilde: TimeTrace, rho: TimeTrace, N_cert: Optional[int] = None,
                 H: Optional[float] = None, check_order: int = 12) -> TimeTrace:
    """``g = rho hat + (1 - rho) tilde`` with derivatives from Leibniz' rule.

    Asserts that the jet at the left end equals the one of ``hat`` and the jet
    at the right end the one of ``tilde`` (orders ``<= check_order``).
    The certificate constant is the grid maximum for ``H`` (default: the
    larger component ``H``).
    """
    if hat.domain != tilde.domain or hat.domain != rho.domain:
        raise ValueError(f"domain mismatch: {hat.domain}, {tilde.domain}, {rho.domain}")

    def fn(t, n):
        # two products rather than b + rho (a - b): exact where rho is flat
        r = rho.derivs(t, n)
        s = -r
        s[0] += 1.0
        return _leibniz(r, hat.derivs(t, n)) + _leibniz(s, tilde.derivs(t, n))

    if N_cert is None:
        N_cert = min(hat.N_cert, tilde.N_cert)
    if H is None:
        Hs = [tr.certificate.H for tr in (hat, tilde) if tr.certificate and tr.certificate.H > 0]
        H = max(Hs) if Hs else 1.0
    tr = TimeTrace("blended", hat.domain, fn, {"hat": hat, "tilde": tilde, "rho": rho})
    t1, t2 = hat.domain
    k = min(check_order, N_cert) if N_cert else check_order
    ends = np.array([t1, t2])
    g = tr.derivs(ends, k)
    if not (np.array_equal(g[:, 0], hat.derivs(ends[:1], k)[:, 0])
            and np.array_equal(g[:, 1], tilde.derivs(ends[1:], k)[:, 0])):
        raise CertificateError("blended trace does not match its components at the ends")
    r = float(np.max(gevrey2_ratios(tr.derivs(tr.grid(), N_cert), H)))
    tr.certificate = Certificate(r, H, N_cert, r, kind="grid")
    return tr
