"""Dense BFGS with a strong Wolfe line search (bracketing + zoom)."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "OptimizerSettings",
    "OptimTrace",
    "OptimResult",
    "LineSearchError",
    "wolfe_line_search",
    "minimize",
]

log = logging.getLogger(__name__)


class LineSearchError(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimizerSettings:
    max_iters: int = 10000
    gtol: float = 1e-8
    c1: float = 1e-4
    c2: float = 0.9
    max_ls_evals: int = 50
    step_max: float = 1e10

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("Wolfe constants must satisfy 0 < c1 < c2 < 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.max_ls_evals < 1 or not self.step_max > 0 or self.gtol < 0:
            raise ValueError("invalid line-search settings")


@dataclass
class OptimTrace:
    loss: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    step: list = field(default_factory=list)
    fevals: list = field(default_factory=list)

    def append(self, f, gnorm, step, fevals):
        self.loss.append(float(f))
        self.grad_norm.append(float(gnorm))
        self.step.append(float(step))
        self.fevals.append(int(fevals))

    def __len__(self):
        return len(self.loss)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "loss", "grad_norm", "step", "fevals"])
            for k, row in enumerate(zip(self.loss, self.grad_norm, self.step, self.fevals)):
                w.writerow([k, format(row[0], ".17g"), format(row[1], ".17g"), format(row[2], ".17g"), row[3]])


@dataclass
class OptimResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    nit: int
    nfev: int
    status: str  # "converged", "max_iters" or "line_search_failed"
    trace: OptimTrace
    message: str = ""


def _cubic_min(a, fa, da, b, fb, db):
    """Minimiser of the cubic through (a, fa, da), (b, fb, db), or None."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0 or not np.isfinite(disc):
        return None
    d2 = np.copysign(np.sqrt(disc), b - a)
    den = db - da + 2.0 * d2
    if den == 0:
        return None
    t = b - (b - a) * (db + d2 - d1) / den
    return t if np.isfinite(t) else None


def wolfe_line_search(fun, x, direction, initial_step=1.0, f0=None, g0=None, settings=None):
    """Step length satisfying the strong Wolfe conditions along ``direction``.

    ``fun`` maps a point to ``(f, grad)``. Returns ``(step, f, grad, nfev)``.
    When the step cap is reached with sufficient decrease still holding, the
    cap is accepted.
    """
    st = settings or OptimizerSettings()
    nfev = 0
    if f0 is None or g0 is None:
        f0, g0 = fun(x)
        nfev += 1
    d0 = float(g0 @ direction)
    if not d0 < 0:
        raise ValueError("direction is not a descent direction")
    c1, c2 = st.c1, st.c2

    def phi(t):
        nonlocal nfev
        nfev += 1
        f, g = fun(x + t * direction)
        if not np.isfinite(f):
            return np.inf, g, np.nan
        return f, g, float(g @ direction)

    def zoom(lo, f_lo, d_lo, g_lo, hi, f_hi, d_hi):
        for _ in range(st.max_ls_evals):
            if nfev >= st.max_ls_evals:
                break
            t = None
            if np.isfinite(f_hi) and np.isfinite(d_hi):
                t = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            a, b = min(lo, hi), max(lo, hi)
            margin = 0.1 * (b - a)
            if t is None or not (a + margin <= t <= b - margin):
                t = 0.5 * (lo + hi)
            if t == lo or t == hi:
                break
            f, g, d = phi(t)
            if f > f0 + c1 * t * d0 or f >= f_lo:
                hi, f_hi, d_hi = t, f, d
            else:
                if abs(d) <= -c2 * d0:
                    return t, f, g
                if d * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo, g_lo = t, f, d, g
        raise LineSearchError(f"zoom found no strong Wolfe step after {nfev} evaluations")

    prev, f_prev, d_prev, g_prev = 0.0, f0, d0, g0
    t = min(float(initial_step), st.step_max)
    first = True
    while True:
        f, g, d = phi(t)
        if f > f0 + c1 * t * d0 or (not first and f >= f_prev):
            t, f, g = zoom(prev, f_prev, d_prev, g_prev, t, f, d)
            return t, f, g, nfev
        if abs(d) <= -c2 * d0:
            return t, f, g, nfev
        if d >= 0:
            t, f, g = zoom(t, f, d, g, prev, f_prev, d_prev)
            return t, f, g, nfev
        if t >= st.step_max:
            return t, f, g, nfev
        if nfev >= st.max_ls_evals:
            raise LineSearchError("bracketing exhausted")
        prev, f_prev, d_prev, g_prev = t, f, d, g
        t = min(2.0 * t, st.step_max)
        first = False


def minimize(fun, x0, settings: OptimizerSettings | None = None, callback=None) -> OptimResult:
    """Minimise ``fun`` (returning value and gradient) from ``x0`` with dense BFGS.

    The inverse Hessian starts as the identity, is rescaled by s'y / y'y before
    the first update, and pairs with s'y <= 1e-10 |s| |y| are skipped.
    """
    st = settings or OptimizerSettings()
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    nfev = 1
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise ValueError("objective is not finite at the starting point")
    trace = OptimTrace()
    gnorm = np.max(np.abs(g)) if g.size else 0.0
    trace.append(f, gnorm, 0.0, nfev)
    n = x.size
    Hinv = np.eye(n)
    scaled = False
    status, message = "max_iters", ""
    nit = 0
    while True:
        if gnorm <= st.gtol:
            status = "converged"
            break
        if nit >= st.max_iters:
            break
        d = -Hinv @ g
        if not g @ d < 0:
            Hinv = np.eye(n)
            d = -g
        t0 = 1.0 if nit > 0 else min(1.0, 1.0 / max(np.linalg.norm(g), 1e-300))
        try:
            t, f_new, g_new, ne = wolfe_line_search(fun, x, d, t0, f, g, st)
        except LineSearchError as err:
            status, message = "line_search_failed", str(err)
            break
        nfev += ne
        s = t * d
        y = g_new - g
        x = x + s
        f, g = f_new, g_new
        nit += 1
        sy = float(s @ y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            if not scaled:
                Hinv *= sy / float(y @ y)
                scaled = True
            Hy = Hinv @ y
            rho = 1.0 / sy
            Hinv += (rho * rho * (sy + y @ Hy)) * np.outer(s, s) - rho * (np.outer(Hy, s) + np.outer(s, Hy))
        gnorm = np.max(np.abs(g))
        trace.append(f, gnorm, t, nfev)
        if callback is not None:
            callback(nit, x, f)
    log.debug("BFGS stopped: %s after %d iterations (f=%.3e, |g|=%.2e)", status, nit, f, gnorm)
    return OptimResult(x, float(f), g, nit, nfev, status, trace, message)
