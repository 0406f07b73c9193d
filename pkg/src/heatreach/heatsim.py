"""Forward solver for ``y_t = y_xx + f(x, y, y_x)`` with Dirichlet controls.

Space: compact fourth-order (Numerov) discretisation,
``M y_xx = D y`` with ``M = tridiag(1, 10, 1) / 12`` and
``D = tridiag(1, -2, 1) / dx^2``, applied to the whole equation, so the
semi-discrete system reads ``M y' = D y + M (f + S)`` on interior nodes.
Boundary nodes are pinned to the interpolated controls.

Time: Crank-Nicolson on the diffusion part; the reaction term is taken at the
half step from a predictor (``f`` at the old state) and one corrector
(average of old and predicted).  ``explicit_rk4_check`` integrates the same
semi-discrete system with classical RK4 and serves as a cross-check.

``y_x`` is obtained by fourth-order finite differences (one-sided near the
ends).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline
from scipy.linalg import solve_banded

from .cauchyx import ControlSignal
from .errors import SimulationError
from .seriescore import AnalyticNonlinearity

SCHEMES = ("imex_cn", "explicit_rk4_check")
#: explicit stability limit dt <= RK4_LIMIT dx^2 for the compact operator.
RK4_LIMIT = 0.4


@dataclass
class SimConfig:
    nx: int = 201
    nt: int = 4000
    scheme: str = "imex_cn"
    T: float = 1.0
    source: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    domain: Tuple[float, float] = (-1.0, 1.0)
    snapshots: int = 11
    domain_guard: float = 0.99

    def __post_init__(self):
        if self.nx < 3:
            raise ValueError("nx must be >= 3")
        if self.nt < 1:
            raise ValueError("nt must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.T > 0:
            raise ValueError("T must be positive")

    @property
    def x(self) -> np.ndarray:
        """Grid including both boundary nodes (``nx`` interior points)."""
        return np.linspace(self.domain[0], self.domain[1], self.nx + 2)

    @property
    def dx(self) -> float:
        return (self.domain[1] - self.domain[0]) / (self.nx + 1)

    @property
    def dt(self) -> float:
        return self.T / self.nt


@dataclass
class Trajectory:
    x: np.ndarray
    t: np.ndarray
    y: np.ndarray              # y[snapshot, node]
    config: SimConfig = field(repr=False, default=None)

    @property
    def final(self) -> np.ndarray:
        return self.y[-1]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"{v:.17g}" for v in self.x])
        for tj, row in zip(self.t, self.y):
            w.writerow([f"{tj:.17g}"] + [f"{v:.17g}" for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def summary(self, y1=None) -> dict:
        d = {"nx": len(self.x) - 2, "snapshots": len(self.t), "T": float(self.t[-1])}
        if y1 is not None:
            sup, l2 = terminal_error(self, y1)
            d.update(sup_error=sup, l2_error=l2)
        return d

    def to_json(self, y1=None) -> str:
        return json.dumps(self.summary(y1))


def control_interpolants(controls: ControlSignal):
    """Cubic Hermite interpolants when derivatives are present, else cubic splines."""
    t = controls.t
    if controls.dh_minus is not None and controls.dh_plus is not None:
        return (CubicHermiteSpline(t, controls.h_minus, controls.dh_minus),
                CubicHermiteSpline(t, controls.h_plus, controls.dh_plus))
    if len(t) < 2:
        raise ValueError("need at least two control samples")
    return CubicSpline(t, controls.h_minus), CubicSpline(t, controls.h_plus)


def dx4(y: np.ndarray, dx: float) -> np.ndarray:
    """Fourth-order first derivative on a uniform grid (needs >= 5 nodes)."""
    n = len(y)
    if n < 5:
        raise ValueError("dx4 needs at least 5 nodes")
    d = np.empty(n)
    d[2:-2] = (-y[4:] + 8 * y[3:-1] - 8 * y[1:-3] + y[:-4]) / 12.0
    d[0] = (-25 * y[0] + 48 * y[1] - 36 * y[2] + 16 * y[3] - 3 * y[4]) / 12.0
    d[1] = (-3 * y[0] - 10 * y[1] + 18 * y[2] - 6 * y[3] + y[4]) / 12.0
    d[-1] = (25 * y[-1] - 48 * y[-2] + 36 * y[-3] - 16 * y[-4] + 3 * y[-5]) / 12.0
    d[-2] = (3 * y[-1] + 10 * y[-2] - 18 * y[-3] + 6 * y[-4] - y[-5]) / 12.0
    return d / dx


def _compact(v: np.ndarray) -> np.ndarray:
    """``M v`` on interior nodes from a full-grid vector."""
    return (v[:-2] + 10.0 * v[1:-1] + v[2:]) / 12.0


def _second(v: np.ndarray, dx: float) -> np.ndarray:
    """``D v`` on interior nodes from a full-grid vector."""
    return (v[:-2] - 2.0 * v[1:-1] + v[2:]) / dx ** 2


def _banded(n: int, off: float, diag: float) -> np.ndarray:
    ab = np.zeros((3, n))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    return ab


class _Stepper:
    def __init__(self, f: AnalyticNonlinearity, cfg: SimConfig, hm, hp):
        self.f, self.cfg = f, cfg
        self.x = cfg.x
        self.dx = cfg.dx
        self.hm, self.hp = hm, hp
        self.live = not f.is_zero

    def rhs_terms(self, y: np.ndarray, t: float) -> np.ndarray:
        """``f + S`` on the full grid."""
        out = np.zeros_like(y)
        if self.live:
            yx = dx4(y, self.dx)
            g = self.cfg.domain_guard
            if np.max(np.abs(y)) >= g * self.f.b0 or np.max(np.abs(yx)) >= g * self.f.b1:
                raise SimulationError(
                    f"blow-up/domain exit at t={t:.6g}: max|y|={np.max(np.abs(y)):.4g}, "
                    f"max|y_x|={np.max(np.abs(yx)):.4g}", t=t)
            out += self.f(self.x, y, yx)
        if self.cfg.source is not None:
            out += self.cfg.source(self.x, t)
        return out

    def boundary(self, y: np.ndarray, t: float) -> np.ndarray:
        y = y.copy()
        y[0] = float(self.hm(t))
        y[-1] = float(self.hp(t))
        return y


def simulate(y0_samples, controls: ControlSignal, f: AnalyticNonlinearity,
             cfg: SimConfig) -> Trajectory:
    """Integrate from ``y0_samples`` (values on ``cfg.x``) to ``cfg.T``."""
    x = cfg.x
    y = np.asarray(y0_samples, dtype=float).copy()
    if y.shape != x.shape:
        raise ValueError(f"initial samples must have {len(x)} values (nx + 2 nodes)")
    if controls.t[0] > 1e-12 or controls.t[-1] < cfg.T - 1e-12:
        raise ValueError("controls must cover [0, T]")
    hm, hp = control_interpolants(controls)
    st = _Stepper(f, cfg, hm, hp)
    if cfg.scheme == "imex_cn":
        return _run_cn(st, y, cfg)
    return _run_rk4(st, y, cfg)


def _snapshot_steps(cfg: SimConfig) -> np.ndarray:
    k = max(2, cfg.snapshots)
    return np.unique(np.round(np.linspace(0, cfg.nt, k)).astype(int))


def _run_cn(st: _Stepper, y: np.ndarray, cfg: SimConfig) -> Trajectory:
    n = cfg.nx
    dx, dt = cfg.dx, cfg.dt
    lhs = _banded(n, 1.0 / 12.0 - 0.5 * dt / dx ** 2, 10.0 / 12.0 + dt / dx ** 2)
    keep = set(_snapshot_steps(cfg).tolist())
    times, snaps = [], []
    y = st.boundary(y, 0.0)
    if 0 in keep:
        times.append(0.0)
        snaps.append(y.copy())
    for step in range(cfg.nt):
        t0 = step * dt
        t1 = t0 + dt
        F0 = st.rhs_terms(y, t0)
        ynew = st.boundary(y, t1)
        base = _compact(y) + 0.5 * dt * _second(y, dx)
        # boundary nodes of the new level move to the right-hand side
        bc = np.zeros(n)
        coef = 1.0 / 12.0 - 0.5 * dt / dx ** 2
        bc[0] = -coef * ynew[0]
        bc[-1] = -coef * ynew[-1]
        rhs0 = base + bc
        pred = ynew.copy()
        pred[1:-1] = solve_banded((1, 1), lhs, rhs0 + dt * _compact(F0))
        F1 = st.rhs_terms(pred, t1)
        ynew[1:-1] = solve_banded((1, 1), lhs, rhs0 + dt * _compact(0.5 * (F0 + F1)))
        y = ynew
        if not np.all(np.isfinite(y)):
            raise SimulationError(f"solver produced non-finite values at t={t1:.6g}", t=t1)
        if step + 1 in keep:
            times.append(t1)
            snaps.append(y.copy())
    return Trajectory(cfg.x, np.array(times), np.array(snaps), cfg)


def _run_rk4(st: _Stepper, y: np.ndarray, cfg: SimConfig) -> Trajectory:
    dx, dt = cfg.dx, cfg.dt
    if dt > RK4_LIMIT * dx ** 2:
        raise SimulationError(
            f"explicit step too large: dt={dt:.3g} > {RK4_LIMIT} dx^2 = {RK4_LIMIT * dx ** 2:.3g}")
    n = cfg.nx
    mass = _banded(n, 1.0 / 12.0, 10.0 / 12.0)
    dhm = st.hm.derivative()
    dhp = st.hp.derivative()

    def deriv(v, t):
        # M v_t = D v + M (f + S); boundary rates come from the controls
        F = st.rhs_terms(v, t)
        r = _second(v, dx) + _compact(F)
        r[0] -= float(dhm(t)) / 12.0
        r[-1] -= float(dhp(t)) / 12.0
        out = np.zeros_like(v)
        out[0], out[-1] = float(dhm(t)), float(dhp(t))
        out[1:-1] = solve_banded((1, 1), mass, r)
        return out

    keep = set(_snapshot_steps(cfg).tolist())
    times, snaps = [], []
    y = st.boundary(y, 0.0)
    if 0 in keep:
        times.append(0.0)
        snaps.append(y.copy())
    for step in range(cfg.nt):
        t = step * dt
        k1 = deriv(y, t)
        k2 = deriv(y + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = deriv(y + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = deriv(y + dt * k3, t + dt)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        y = st.boundary(y, t + dt)
        if not np.all(np.isfinite(y)):
            raise SimulationError(f"solver produced non-finite values at t={t + dt:.6g}", t=t + dt)
        if step + 1 in keep:
            times.append(t + dt)
            snaps.append(y.copy())
    return Trajectory(cfg.x, np.array(times), np.array(snaps), cfg)


def terminal_error(traj: Trajectory, y1_samples) -> Tuple[float, float]:
    """Sup and L2 distance between the final snapshot and the target."""
    diff = traj.final - np.asarray(y1_samples, dtype=float)
    sup = float(np.max(np.abs(diff)))
    l2 = float(math.sqrt(np.trapezoid(diff ** 2, traj.x)))
    return sup, l2
