"""Analytic test functions with closed-form derivatives on a time grid."""
import math

import numpy as np

GRID = np.linspace(0.0, 1.0, 101)
ORDER = 12


def derivs(kind, p, t=GRID, order=ORDER):
    """Rows ``u^(k)(t)`` for ``k = 0..order+1``."""
    out = []
    for k in range(order + 2):
        if kind == "const":
            out.append(np.full_like(t, p[0]) if k == 0 else np.zeros_like(t))
        elif kind == "exp":
            out.append(p[0] * p[1] ** k * np.exp(p[1] * t))
        elif kind == "sin":
            out.append(p[0] * p[1] ** k * np.sin(p[1] * t + p[2] + k * np.pi / 2))
        elif kind == "pole":
            out.append(p[0] * math.factorial(k) / (p[1] - t) ** (k + 1))
        else:
            raise ValueError(kind)
    return np.array(out)


def leibniz(A, B):
    C = np.zeros_like(A)
    for k in range(A.shape[0]):
        for j in range(k + 1):
            C[k] += math.comb(k, j) * A[j] * B[k - j]
    return C


def random_member(rng):
    kind = rng.choice(["const", "exp", "sin", "pole"])
    if kind == "const":
        return kind, (rng.uniform(-2, 2),)
    if kind == "exp":
        return kind, (rng.uniform(-2, 2), rng.uniform(-1, 1))
    if kind == "sin":
        return kind, (rng.uniform(-2, 2), rng.uniform(0.2, 2), rng.uniform(0, 2 * np.pi))
    return kind, (rng.uniform(-2, 2), 2.0)


def algebra_violations(norm, params, pairs=200, seed=1, slack=1e-9):
    """Count pairs with ``norm(uv) > norm(u) norm(v) + slack``; also the worst quotient."""
    rng = np.random.default_rng(seed)
    bad, worst = 0, 0.0
    for _ in range(pairs):
        u = derivs(*random_member(rng))
        v = derivs(*random_member(rng))
        w = leibniz(u, v)
        nu, nv, nw = (norm(z[0], np.abs(z[1:]), params) for z in (u, v, w))
        if nu * nv > 0:
            worst = max(worst, nw / (nu * nv))
        bad += nw > nu * nv + slack
    return bad, worst
