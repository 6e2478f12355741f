"""Limited-memory BFGS with a strong-Wolfe cubic line search.

Termination: gradient 2-norm at or below ``tol``, relative objective decrease
at or below ``tol`` on an accepted step, or the iteration cap.  The best
evaluated point is always returned, so a failed line search degrades
gracefully instead of raising.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInput


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    grad_norm: float
    n_iter: int
    converged: bool
    status: str


def _cubic_min(a, fa, dfa, b, fb, dfb):
    """Minimizer of the cubic interpolating values/slopes at a and b."""
    d1 = dfa + dfb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - dfa * dfb
    if disc < 0.0:
        return None
    d2 = np.sqrt(disc) * np.sign(b - a)
    denom = dfb - dfa + 2.0 * d2
    if denom == 0.0:
        return None
    t = b - (b - a) * (dfb + d2 - d1) / denom
    return t if np.isfinite(t) else None


class _Tracker:
    """Remembers the best (lowest-f) point among all evaluations."""

    def __init__(self, fun):
        self._fun = fun
        self.best_f = np.inf
        self.best_x = None
        self.n_evals = 0

    def __call__(self, x):
        f, g = self._fun(x)
        self.n_evals += 1
        if f < self.best_f:
            self.best_f = f
            self.best_x = x.copy()
        return f, g


def _zoom(fun, x, d, f0, df0, lo, hi, c1, c2, max_iter=30):
    a_lo, f_lo, df_lo = lo
    a_hi, f_hi, df_hi = hi
    for _ in range(max_iter):
        a = _cubic_min(a_lo, f_lo, df_lo, a_hi, f_hi, df_hi)
        width = abs(a_hi - a_lo)
        inner = (min(a_lo, a_hi) + 0.1 * width, max(a_lo, a_hi) - 0.1 * width)
        if a is None or not inner[0] <= a <= inner[1]:
            a = 0.5 * (a_lo + a_hi)  # bisection fallback
        f, g = fun(x + a * d)
        df = float(g @ d)
        if f > f0 + c1 * a * df0 or f >= f_lo:
            a_hi, f_hi, df_hi = a, f, df
        else:
            if abs(df) <= -c2 * df0:
                return a, f, g
            if df * (a_hi - a_lo) >= 0.0:
                a_hi, f_hi, df_hi = a_lo, f_lo, df_lo
            a_lo, f_lo, df_lo = a, f, df
        if abs(a_hi - a_lo) < 1e-16 * max(1.0, abs(a_lo)):
            break
    return None


def _wolfe_search(fun, x, f0, g0, d, c1, c2, max_iter=25):
    """Strong-Wolfe step along d; returns (alpha, f, g) or None."""
    df0 = float(g0 @ d)
    if df0 >= 0.0:
        return None
    a_prev, f_prev, df_prev = 0.0, f0, df0
    a = 1.0
    for i in range(max_iter):
        f, g = fun(x + a * d)
        df = float(g @ d)
        if f > f0 + c1 * a * df0 or (i > 0 and f >= f_prev):
            return _zoom(fun, x, d, f0, df0,
                         (a_prev, f_prev, df_prev), (a, f, df), c1, c2)
        if abs(df) <= -c2 * df0:
            return a, f, g
        if df >= 0.0:
            return _zoom(fun, x, d, f0, df0,
                         (a, f, df), (a_prev, f_prev, df_prev), c1, c2)
        a_prev, f_prev, df_prev = a, f, df
        a *= 2.0
    return None


def lbfgs_minimize(fun, x0, max_iter: int = 10000, tol: float = 1e-10,
                   memory: int = 10, c1: float = 1e-4, c2: float = 0.9) -> LbfgsResult:
    """Minimize ``fun(x) -> (f, grad)`` from ``x0``.

    The objective must be deterministic (full-batch) for the quasi-Newton
    curvature pairs to make sense.
    """
    if memory < 1:
        raise InvalidInput("memory must be >= 1")
    x = np.asarray(x0, dtype=float).copy()
    track = _Tracker(fun)
    f, g = track(x)
    gnorm = float(np.linalg.norm(g))
    if gnorm <= tol:
        return LbfgsResult(x=x, f=f, grad_norm=gnorm, n_iter=0,
                           converged=True, status="gradient-tolerance")

    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []
    status = "max-iterations"
    converged = False
    n_iter = 0

    for n_iter in range(1, max_iter + 1):
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * (s @ q)
            alphas.append(a)
            q -= a * y
        if y_hist:
            gamma = (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
            q *= gamma
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        d = -q

        res = _wolfe_search(track, x, f, g, d, c1, c2)
        if res is None:
            status = "line-search-failed"
            break
        alpha, f_new, g_new = res
        s = alpha * d
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)

        x = x + s
        f_prev, f, g = f, f_new, g_new
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            status, converged = "gradient-tolerance", True
            break
        if abs(f_prev - f) <= tol * max(1.0, abs(f_prev)):
            status, converged = "objective-tolerance", True
            break

    if track.best_f < f:
        x, f = track.best_x, track.best_f
        gnorm = float(np.linalg.norm(fun(x)[1]))
    return LbfgsResult(x=x, f=f, grad_norm=gnorm, n_iter=n_iter,
                       converged=converged, status=status)
