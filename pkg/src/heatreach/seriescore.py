"""Truncated jet arithmetic for functions of (x, t).

A :class:`BivariateJet` stores the raw mixed derivatives
``c[k, n] = d^k/dx^k d^n/dt^n y(x0, t0)`` on a rectangle ``k <= Kmax``,
``n <= Nmax``, together with a boolean ``mask`` of the entries that are
actually known.  Masks are always downward closed, so a product or a
composition evaluated on a zero-filled array is correct wherever the result
mask is set; everything else is reported as absent.

Internally every algorithm works on normalised Taylor coefficients
``T[k, n] = c[k, n] / (k! n!)`` (plain Cauchy products); the conversion
happens at the boundary only.

Two numeric modes exist.  The default stores ``float64``; the exact mode
stores ``gmpy2.mpq`` rationals in ``dtype=object`` arrays and is used by the
round-trip checks (``fractions.Fraction`` input is accepted and converted).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from gmpy2 import mpq

from .errors import (
    DomainError,
    JetShapeError,
    NonconvergentComposition,
    SeriesRadiusError,
)

_MPQ = type(mpq(0))

#: 4 e^{1/(2e)}, the smallest admissible analyticity radius for synthesis.
R_HAT = 4.0 * math.exp(1.0 / (2.0 * math.e))

# Above this order the float factorial tables switch to log space.
_LOG_SPACE_ORDER = 160


# ---------------------------------------------------------------------------
# factorial helpers
# ---------------------------------------------------------------------------

def inv_factorials(n: int, exact: bool = False) -> np.ndarray:
    """Return ``[1/0!, 1/1!, ..., 1/n!]`` as float64 or exact fractions."""
    if exact:
        return np.array([mpq(1, math.factorial(k)) for k in range(n + 1)], dtype=object)
    k = np.arange(n + 1, dtype=float)
    if n <= _LOG_SPACE_ORDER:
        out = np.ones(n + 1)
        for i in range(1, n + 1):
            out[i] = out[i - 1] / i
        return out
    from scipy.special import gammaln

    return np.exp(-gammaln(k + 1.0))


def factorials(n: int, exact: bool = False) -> np.ndarray:
    if exact:
        return np.array([mpq(math.factorial(k)) for k in range(n + 1)], dtype=object)
    if n <= _LOG_SPACE_ORDER:
        out = np.ones(n + 1)
        for i in range(1, n + 1):
            out[i] = out[i - 1] * i
        return out
    from scipy.special import gammaln

    return np.exp(gammaln(np.arange(n + 1, dtype=float) + 1.0))


def to_exact(values) -> np.ndarray:
    """Convert an array (or nested sequence) of numbers to exact fractions."""
    arr = np.asarray(values, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx, v in np.ndenumerate(arr):
        out[idx] = v if isinstance(v, _MPQ) else mpq(v)
    return out


def _zeros(shape, exact: bool) -> np.ndarray:
    if exact:
        out = np.empty(shape, dtype=object)
        out.fill(mpq(0))
        return out
    return np.zeros(shape)


def _conv(a: np.ndarray, b: np.ndarray, length: int) -> np.ndarray:
    """Cauchy product of two coefficient vectors truncated to ``length``."""
    out = np.convolve(a, b)[:length]
    if len(out) < length:
        pad = _zeros(length - len(out), a.dtype == object)
        out = np.concatenate([out, pad])
    return out


def _downward_closed(mask: np.ndarray) -> bool:
    if mask.size == 0:
        return True
    ok_rows = np.all(mask[1:] <= mask[:-1]) if mask.shape[0] > 1 else True
    ok_cols = np.all(mask[:, 1:] <= mask[:, :-1]) if mask.shape[1] > 1 else True
    return bool(ok_rows and ok_cols)


def triangle_mask(Kmax: int, Nmax: int, depth: int) -> np.ndarray:
    """Mask of the entries with ``k + 2 n <= depth``."""
    k = np.arange(Kmax + 1)[:, None]
    n = np.arange(Nmax + 1)[None, :]
    return (k + 2 * n) <= depth


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TruncationSpec:
    Kmax: int
    Nmax: int
    tail_tol: float = 0.0
    max_degree: int = 64
    exact: bool = False

    def __post_init__(self):
        if self.Kmax < 2:
            raise ValueError(f"Kmax must be >= 2, got {self.Kmax}")
        if self.Nmax < 0:
            raise ValueError(f"Nmax must be >= 0, got {self.Nmax}")
        if self.tail_tol < 0:
            raise ValueError("tail_tol must be nonnegative")


@dataclass(frozen=True, eq=False)
class BivariateJet:
    """Raw mixed derivatives of a function of (x, t) at ``(base_x, base_t)``."""

    c: np.ndarray
    mask: np.ndarray = None
    base_x: float = 0.0
    base_t: float = 0.0

    def __post_init__(self):
        c = self.c
        if not isinstance(c, np.ndarray):
            c = np.asarray(c, dtype=object if _has_fraction(c) else float)
            object.__setattr__(self, "c", c)
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise JetShapeError(f"jet array must be 2D and nonempty, got shape {c.shape}")
        if self.mask is None:
            object.__setattr__(self, "mask", np.ones(c.shape, dtype=bool))
        else:
            m = np.asarray(self.mask, dtype=bool)
            if m.shape != c.shape:
                raise JetShapeError("mask shape does not match jet shape")
            object.__setattr__(self, "mask", m)
        if c.dtype != object and not np.all(np.isfinite(c[self.mask])):
            raise ValueError("jet entries must be finite")
        c.setflags(write=False)
        self.mask.setflags(write=False)

    # shape -------------------------------------------------------------
    @property
    def Kmax(self) -> int:
        return self.c.shape[0] - 1

    @property
    def Nmax(self) -> int:
        return self.c.shape[1] - 1

    @property
    def exact(self) -> bool:
        return self.c.dtype == object

    def __getitem__(self, idx):
        return self.c[idx]

    def filled(self, k: int, n: int) -> bool:
        return bool(self.mask[k, n])

    # constructors ---------------------------------------------------------
    @classmethod
    def zeros(cls, Kmax: int, Nmax: int, exact: bool = False, **kw) -> "BivariateJet":
        return cls(_zeros((Kmax + 1, Nmax + 1), exact), **kw)

    @classmethod
    def constant(cls, value, Kmax: int, Nmax: int, exact: bool = False, **kw) -> "BivariateJet":
        c = _zeros((Kmax + 1, Nmax + 1), exact)
        c[0, 0] = mpq(value) if exact else float(value)
        return cls(c, **kw)

    @classmethod
    def from_taylor(cls, T: np.ndarray, mask=None, **kw) -> "BivariateJet":
        exact = T.dtype == object
        K, N = T.shape[0] - 1, T.shape[1] - 1
        c = T * np.outer(factorials(K, exact), factorials(N, exact))
        if mask is not None:
            c = np.where(mask, c, mpq(0) if exact else 0.0)
            if exact:
                c = c.astype(object)
        return cls(c, mask, **kw)

    def taylor(self) -> np.ndarray:
        """Normalised coefficients ``c[k, n] / (k! n!)``; absent entries are 0."""
        T = self.c * np.outer(inv_factorials(self.Kmax, self.exact),
                              inv_factorials(self.Nmax, self.exact))
        zero = mpq(0) if self.exact else 0.0
        T = np.where(self.mask, T, zero)
        return T.astype(object) if self.exact else T

    def as_exact(self) -> "BivariateJet":
        return BivariateJet(to_exact(self.c), self.mask.copy(), self.base_x, self.base_t)

    def as_float(self) -> "BivariateJet":
        return BivariateJet(np.array(self.c, dtype=float), self.mask.copy(), self.base_x, self.base_t)

    def truncate(self, Kmax: int, Nmax: int) -> "BivariateJet":
        if Kmax > self.Kmax or Nmax > self.Nmax:
            raise JetShapeError(
                f"cannot truncate jet of size ({self.Kmax}, {self.Nmax}) to ({Kmax}, {Nmax})")
        return BivariateJet(self.c[: Kmax + 1, : Nmax + 1].copy(),
                            self.mask[: Kmax + 1, : Nmax + 1].copy(), self.base_x, self.base_t)

    # serialisation --------------------------------------------------------
    def to_dict(self) -> dict:
        rows = []
        for k in range(self.Kmax + 1):
            rows.append([float(self.c[k, n]) if self.mask[k, n] else None
                         for n in range(self.Nmax + 1)])
        return {"base_x": self.base_x, "base_t": self.base_t,
                "Kmax": self.Kmax, "Nmax": self.Nmax, "c": rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping) -> "BivariateJet":
        rows = d["c"]
        K, N = int(d["Kmax"]), int(d["Nmax"])
        c = np.zeros((K + 1, N + 1))
        mask = np.zeros((K + 1, N + 1), dtype=bool)
        for k, row in enumerate(rows):
            for n, v in enumerate(row):
                if v is not None:
                    c[k, n] = v
                    mask[k, n] = True
        return cls(c, mask, float(d.get("base_x", 0.0)), float(d.get("base_t", 0.0)))

    @classmethod
    def from_json(cls, text: str) -> "BivariateJet":
        return cls.from_dict(json.loads(text))


def _has_fraction(values) -> bool:
    arr = np.asarray(values, dtype=object)
    return any(isinstance(v, (Fraction, _MPQ)) for v in arr.flat)


@dataclass(frozen=True, eq=False)
class SpatialJet:
    """``a[k] = d^k y / dx^k (0, tau)`` for ``k = 0..Kmax``."""

    a: np.ndarray

    def __post_init__(self):
        a = self.a
        if not isinstance(a, np.ndarray):
            a = np.asarray(a, dtype=object if _has_fraction(a) else float)
            object.__setattr__(self, "a", a)
        if a.ndim != 1 or len(a) == 0:
            raise JetShapeError("spatial jet must be a nonempty 1D array")
        if a.dtype != object and not np.all(np.isfinite(a)):
            raise ValueError("spatial jet entries must be finite")

    @property
    def Kmax(self) -> int:
        return len(self.a) - 1

    @property
    def exact(self) -> bool:
        return self.a.dtype == object

    def __len__(self):
        return len(self.a)

    def __getitem__(self, k):
        return self.a[k]


@dataclass(frozen=True, eq=False)
class TimeJetPair:
    """``d[n] = d^n y/dt^n (0, tau)`` and ``d_tilde[n] = d^n/dt^n dy/dx (0, tau)``."""

    d: np.ndarray
    d_tilde: np.ndarray

    def __post_init__(self):
        d, dt = self.d, self.d_tilde
        if not isinstance(d, np.ndarray):
            d = np.asarray(d, dtype=object if _has_fraction(d) else float)
            object.__setattr__(self, "d", d)
        if not isinstance(dt, np.ndarray):
            dt = np.asarray(dt, dtype=object if _has_fraction(dt) else float)
            object.__setattr__(self, "d_tilde", dt)
        if d.shape != dt.shape or d.ndim != 1 or len(d) == 0:
            raise JetShapeError("d and d_tilde must be nonempty 1D arrays of equal length")

    @property
    def Nmax(self) -> int:
        return len(self.d) - 1

    @property
    def exact(self) -> bool:
        return self.d.dtype == object


# ---------------------------------------------------------------------------
# analytic nonlinearity
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AnalyticNonlinearity:
    """``f(x, y0, y1) = sum a[p, q, r] y0^p y1^q x^r`` with geometric bounds.

    ``coeffs`` maps ``(p, q, r)`` to ``a[p, q, r]``; missing keys are zero.
    Every stored coefficient must satisfy
    ``|a[p, q, r]| <= M / (b0^p b1^q b2^r)`` and ``f(x, 0, 0) = 0``.
    """

    coeffs: Mapping[Tuple[int, int, int], float]
    M: float = 1.0
    b0: float = 5.0
    b1: float = 5.0
    b2: float = 10.0
    name: str = "custom"

    def __post_init__(self):
        clean = {}
        for key, val in dict(self.coeffs).items():
            p, q, r = (int(v) for v in key)
            if min(p, q, r) < 0:
                raise ValueError(f"negative exponent in coefficient key {key}")
            if val == 0:
                continue
            clean[(p, q, r)] = val
        object.__setattr__(self, "coeffs", clean)
        if not self.M > 0:
            raise ValueError("M must be positive")
        for nm in ("b0", "b1", "b2"):
            if not getattr(self, nm) > 4:
                raise ValueError(f"{nm} must be > 4, got {getattr(self, nm)}")
        for (p, q, r), val in clean.items():
            if p == 0 and q == 0:
                raise ValueError(f"a[0,0,{r}] must vanish since f(x,0,0)=0")
            bound = self.M / (self.b0 ** p * self.b1 ** q * self.b2 ** r)
            if abs(float(val)) > bound * (1 + 1e-12):
                raise ValueError(
                    f"|a[{p},{q},{r}]| = {abs(float(val))} exceeds M/(b0^p b1^q b2^r) = {bound}")

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    def synthesis_admissible(self) -> bool:
        return self.b2 > R_HAT

    def grouped(self, exact: bool = False) -> Dict[Tuple[int, int], np.ndarray]:
        """``{(p, q): A_pq}`` where ``A_pq[r]`` is the x-polynomial coefficient."""
        out: Dict[Tuple[int, int], Dict[int, object]] = {}
        for (p, q, r), val in self.coeffs.items():
            out.setdefault((p, q), {})[r] = mpq(val) if exact else float(val)
        res = {}
        for pq, rs in sorted(out.items()):
            vec = _zeros(max(rs) + 1, exact)
            for r, v in rs.items():
                vec[r] = v
            res[pq] = vec
        return res

    def __call__(self, x, y0, y1):
        x = np.asarray(x, dtype=float)
        y0 = np.asarray(y0, dtype=float)
        y1 = np.asarray(y1, dtype=float)
        out = np.zeros(np.broadcast(x, y0, y1).shape)
        for (p, q, r), a in self.coeffs.items():
            out = out + float(a) * y0 ** p * y1 ** q * x ** r
        return out

    def add(self, other: "AnalyticNonlinearity") -> "AnalyticNonlinearity":
        coeffs = dict(self.coeffs)
        for key, val in other.coeffs.items():
            coeffs[key] = coeffs.get(key, 0) + val
        return AnalyticNonlinearity(coeffs, self.M + other.M, min(self.b0, other.b0),
                                    min(self.b1, other.b1), min(self.b2, other.b2))

    # serialisation --------------------------------------------------------
    def to_dict(self) -> dict:
        return {"M": self.M, "b0": self.b0, "b1": self.b1, "b2": self.b2,
                "coeffs": [[p, q, r, float(v)] for (p, q, r), v in sorted(self.coeffs.items())]}

    @classmethod
    def from_dict(cls, d: Mapping, name: str = "custom") -> "AnalyticNonlinearity":
        coeffs = {(int(p), int(q), int(r)): float(v) for p, q, r, v in d.get("coeffs", [])}
        return cls(coeffs, float(d["M"]), float(d["b0"]), float(d["b1"]), float(d["b2"]), name)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "AnalyticNonlinearity":
        return cls.from_dict(json.loads(text))

    # presets --------------------------------------------------------------
    @classmethod
    def preset(cls, name: str, potential: Optional[Sequence[float]] = None,
               b0: float = 5.0, b1: float = 5.0, b2: float = 10.0) -> "AnalyticNonlinearity":
        """Named nonlinearities.

        ``potential`` is the list ``a[1, 0, r]`` of the potential preset
        (default ``phi(x) = x / 10``).  ``M`` is set to the smallest value
        compatible with the coefficient bound.
        """
        if name in ("linear_heat", "linear"):
            coeffs = {}
        elif name == "potential":
            pot = [0.0, 0.1] if potential is None else list(potential)
            coeffs = {(1, 0, r): float(v) for r, v in enumerate(pot) if v != 0}
        elif name == "allen_cahn":
            coeffs = {(1, 0, 0): 1.0, (3, 0, 0): -1.0}
        elif name == "burgers":
            coeffs = {(1, 1, 0): -1.0}
        else:
            raise KeyError(f"unknown nonlinearity preset {name!r}")
        M = 1.0
        for (p, q, r), v in coeffs.items():
            M = max(M, abs(v) * b0 ** p * b1 ** q * b2 ** r)
        return cls(coeffs, M, b0, b1, b2, name)


PRESETS = ("linear_heat", "potential", "allen_cahn", "burgers")


# ---------------------------------------------------------------------------
# composition engine
# ---------------------------------------------------------------------------

def _l1(T: np.ndarray) -> float:
    return float(sum(abs(float(v)) for v in np.asarray(T).flat))


def composition_terms(f: AnalyticNonlinearity, y_norm: float, yx_norm: float,
                      tail_tol: float = 0.0, max_degree: int = 64,
                      exact: bool = False) -> Dict[Tuple[int, int], np.ndarray]:
    """Select the ``(p, q)`` groups of ``f`` to keep in a composition.

    Groups are taken by increasing degree ``p + q``.  After each degree ``D``
    the remaining tail is bounded by the coefficient envelope evaluated at the
    l1 Taylor norms of the two arguments::

        sum_{p+q>D} M/(b0^p b1^q) u^p v^q / (1 - 1/b2)
            <= M/(1-1/b2) * sum_{d>D} (d+1) w^d,   w = max(u/b0, v/b1),

    and the expansion stops as soon as nothing is left or the bound drops to
    ``tail_tol``.
    """
    groups = f.grouped(exact)
    if not groups:
        return {}
    degrees = sorted({p + q for p, q in groups})
    w = max(y_norm / f.b0, yx_norm / f.b1)
    scale = f.M / (1.0 - 1.0 / f.b2)

    def tail(D: int) -> float:
        if w >= 1.0:
            return math.inf
        total = 1.0 / (1.0 - w) ** 2
        head = sum((d + 1) * w ** d for d in range(D + 1))
        return scale * max(total - head, 0.0)

    keep_deg = degrees[-1]
    for D in degrees:
        if D > max_degree:
            raise NonconvergentComposition(
                f"nonconvergent composition: tail bound {tail(max_degree):.3e} above "
                f"{tail_tol:.3e} at max degree {max_degree}")
        if D == degrees[-1]:
            keep_deg = D
            break
        if tail_tol > 0 and tail(D) <= tail_tol:
            keep_deg = D
            break
    return {pq: a for pq, a in groups.items() if pq[0] + pq[1] <= keep_deg}


class OnlineComposer:
    """Slice-by-slice Taylor coefficients of ``f(x, u, v)``.

    The two arguments are fed one slice at a time along the *online* axis;
    the product of two series only needs slices ``<= m`` to produce slice
    ``m``, so the composition can be advanced as soon as the arguments are.

    ``mode="space"``: slices are rows (fixed x-order k, vector over n).
    ``mode="time"``:  slices are columns (fixed t-order n, vector over k).
    """

    def __init__(self, terms: Mapping[Tuple[int, int], np.ndarray], mode: str,
                 inner_len: int, exact: bool = False):
        if mode not in ("space", "time"):
            raise ValueError(mode)
        self.terms = dict(terms)
        self.mode = mode
        self.L = inner_len
        self.exact = exact
        self.u: List[np.ndarray] = []
        self.v: List[np.ndarray] = []
        self._pw: Dict[int, List[np.ndarray]] = {}
        self._qw: Dict[int, List[np.ndarray]] = {}
        self._pq: Dict[Tuple[int, int], List[np.ndarray]] = {}

    def _unit(self, m: int) -> np.ndarray:
        s = _zeros(self.L, self.exact)
        if m == 0:
            s[0] = mpq(1) if self.exact else 1.0
        return s

    def push(self, u_slice: np.ndarray, v_slice: np.ndarray) -> None:
        self.u.append(u_slice)
        self.v.append(v_slice)

    def _power(self, cache, base, p: int, m: int) -> np.ndarray:
        if p == 0:
            return self._unit(m)
        if p == 1:
            return base[m]
        lst = cache.setdefault(p, [])
        while len(lst) <= m:
            s = len(lst)
            acc = _zeros(self.L, self.exact)
            for j in range(s + 1):
                acc = acc + _conv(self._power(cache, base, p - 1, j), base[s - j], self.L)
            lst.append(acc)
        return lst[m]

    def _product(self, p: int, q: int, m: int) -> np.ndarray:
        if q == 0:
            return self._power(self._pw, self.u, p, m)
        if p == 0:
            return self._power(self._qw, self.v, q, m)
        lst = self._pq.setdefault((p, q), [])
        while len(lst) <= m:
            s = len(lst)
            acc = _zeros(self.L, self.exact)
            for j in range(s + 1):
                acc = acc + _conv(self._power(self._pw, self.u, p, j),
                                  self._power(self._qw, self.v, q, s - j), self.L)
            lst.append(acc)
        return lst[m]

    def slice(self, m: int) -> np.ndarray:
        """Slice ``m`` of the composition; needs ``m + 1`` pushed slices."""
        if len(self.u) <= m:
            raise IndexError("composition slice requested before its arguments")
        out = _zeros(self.L, self.exact)
        for (p, q), A in self.terms.items():
            if self.mode == "space":
                for r in range(min(len(A) - 1, m) + 1):
                    if A[r] != 0:
                        out = out + A[r] * self._product(p, q, m - r)
            else:
                out = out + _conv(A, self._product(p, q, m), self.L)
        return out


def compose_taylor(f: AnalyticNonlinearity, U: np.ndarray, V: np.ndarray,
                   tail_tol: float = 0.0, max_degree: int = 64) -> np.ndarray:
    """Taylor coefficients of ``f(x, u, v)`` from those of ``u`` and ``v``.

    ``U`` and ``V`` have the same shape; the result has that shape too.
    """
    if U.shape != V.shape:
        raise JetShapeError("composition arguments must share their shape")
    exact = U.dtype == object
    terms = composition_terms(f, _l1(U), _l1(V), tail_tol, max_degree, exact)
    comp = OnlineComposer(terms, "space", U.shape[1], exact)
    out = _zeros(U.shape, exact)
    if not terms:
        return out
    for k in range(U.shape[0]):
        comp.push(U[k], V[k])
        out[k] = comp.slice(k)
    return out


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def _check_same_base(a: BivariateJet, b: BivariateJet) -> None:
    if a.base_x != b.base_x or a.base_t != b.base_t:
        raise JetShapeError("jets have different base points")


def jet_mul(a: BivariateJet, b: BivariateJet, trunc: Optional[TruncationSpec] = None) -> BivariateJet:
    """Leibniz product of two jets.

    ``c[k, n] = sum_{j<=k, i<=n} C(k, j) C(n, i) a[j, i] b[k-j, n-i]``,
    computed as a Cauchy product of Taylor coefficients.
    """
    _check_same_base(a, b)
    if trunc is None:
        K, N = min(a.Kmax, b.Kmax), min(a.Nmax, b.Nmax)
    else:
        K, N = trunc.Kmax, trunc.Nmax
        if min(a.Kmax, b.Kmax) < K or min(a.Nmax, b.Nmax) < N:
            raise JetShapeError(
                f"jets of sizes ({a.Kmax},{a.Nmax}) and ({b.Kmax},{b.Nmax}) "
                f"are smaller than truncation ({K},{N})")
    if a.exact != b.exact:
        raise JetShapeError("cannot mix exact and float jets")
    A = a.truncate(K, N).taylor()
    B = b.truncate(K, N).taylor()
    out = _zeros((K + 1, N + 1), a.exact)
    for j in range(K + 1):
        for i in range(N + 1):
            if A[j, i] != 0:
                out[j:, i:] = out[j:, i:] + A[j, i] * B[: K + 1 - j, : N + 1 - i]
    mask = a.mask[: K + 1, : N + 1] & b.mask[: K + 1, : N + 1]
    return BivariateJet.from_taylor(out, mask, base_x=a.base_x, base_t=a.base_t)


def jet_shift_x(a: BivariateJet) -> BivariateJet:
    """Jet of ``dy/dx``: ``out[k, n] = a[k + 1, n]``."""
    if a.Kmax < 1:
        raise JetShapeError("shift_x needs Kmax >= 1")
    return BivariateJet(a.c[1:].copy(), a.mask[1:].copy(), a.base_x, a.base_t)


def jet_shift_t(a: BivariateJet) -> BivariateJet:
    """Jet of ``dy/dt``: ``out[k, n] = a[k, n + 1]``."""
    if a.Nmax < 1:
        raise JetShapeError("shift_t needs Nmax >= 1")
    return BivariateJet(a.c[:, 1:].copy(), a.mask[:, 1:].copy(), a.base_x, a.base_t)


def check_domain(f: AnalyticNonlinearity, y00, y10) -> None:
    """Reject states outside the convergence box of the (p, q) sums."""
    if f.is_zero:
        return
    if abs(float(y00)) >= f.b0 or abs(float(y10)) >= f.b1:
        raise DomainError(
            f"state outside nonlinearity domain: |y|={abs(float(y00)):.4g} (b0={f.b0}), "
            f"|y_x|={abs(float(y10)):.4g} (b1={f.b1})")


def nonlinearity_jet(f: AnalyticNonlinearity, y: BivariateJet,
                     trunc: Optional[TruncationSpec] = None) -> BivariateJet:
    """Jet of ``(x, t) -> f(x + base_x, y, dy/dx)`` at the base point of ``y``.

    The result has one x-order less than ``y`` (``dy/dx`` consumes one).
    """
    if y.Kmax < 1:
        raise JetShapeError("nonlinearity_jet needs Kmax >= 1 on the state jet")
    check_domain(f, y.c[0, 0], y.c[1, 0])
    K = y.Kmax - 1 if trunc is None else min(trunc.Kmax, y.Kmax - 1)
    N = y.Nmax if trunc is None else min(trunc.Nmax, y.Nmax)
    if trunc is not None and (trunc.Kmax > y.Kmax - 1 or trunc.Nmax > y.Nmax):
        raise JetShapeError(
            f"state jet ({y.Kmax},{y.Nmax}) too small for truncation ({trunc.Kmax},{trunc.Nmax})")
    tail_tol = trunc.tail_tol if trunc else 0.0
    max_degree = trunc.max_degree if trunc else 64
    T = y.taylor()
    Tx = jet_shift_x(y).taylor()
    U = T[: K + 1, : N + 1]
    V = Tx[: K + 1, : N + 1]
    if y.base_x != 0 and not f.is_zero:
        raise JetShapeError("nonlinearity jets are only supported at base_x = 0")
    out = compose_taylor(f, U, V, tail_tol, max_degree)
    mask = y.mask[: K + 1, : N + 1] & y.mask[1: K + 2, : N + 1]
    return BivariateJet.from_taylor(out, mask, base_x=y.base_x, base_t=y.base_t)


def series_eval_x(a: SpatialJet, x: float, R1_hat: float) -> Tuple[float, float]:
    """Evaluate ``sum_k a[k] x^k / k!`` with a geometric remainder bound.

    With ``Mhat = max_k |a[k]| R1_hat^k / k!`` the terms beyond ``Kmax`` are
    bounded by ``Mhat (|x|/R1_hat)^(Kmax+1) / (1 - |x|/R1_hat)``; the bound is
    valid whenever the envelope ``|a[k]| <= Mhat k! / R1_hat^k`` persists past
    the stored orders.  ``R1_hat = inf`` declares a polynomial (remainder 0).
    """
    ax = abs(float(x))
    if not R1_hat > ax:
        raise SeriesRadiusError(f"series radius exceeded: R1_hat={R1_hat} <= |x|={ax}")
    coef = np.array(a.a, dtype=float) * inv_factorials(a.Kmax)
    value = float(np.polynomial.polynomial.polyval(float(x), coef))
    if math.isinf(R1_hat):
        return value, 0.0
    k = np.arange(a.Kmax + 1)
    with np.errstate(over="ignore", divide="ignore"):
        mhat = float(np.max(np.abs(coef) * np.power(float(R1_hat), k)))
    q = ax / R1_hat
    remainder = mhat * q ** (a.Kmax + 1) / (1.0 - q) if mhat > 0 else 0.0
    return value, remainder
