"""Stochastic systems dx = F(x) dt + Lambda dW with constant diffusion D = Lambda Lambda^T / 2."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex

__all__ = [
    "DynamicalSystem",
    "parse_drift",
    "differentiate",
    "make_builtin",
    "make_custom",
    "eval_drift_and_divergence",
    "BUILTINS",
]

parse_drift = ex.parse
differentiate = ex.differentiate

# Drift components of the built-in systems, written in the expression language.
BUILTINS = {
    "vdp": ("x2", "(1 - x1^2)*x2 - x1"),
    "vdp_rayleigh": ("x2", "(1 - x1^2 - x2^2)*x2 - x1"),
    "ou1d": ("-x1",),
}


@dataclass(frozen=True)
class DynamicalSystem:
    """Drift field, its per-component divergence terms and a constant diffusion matrix.

    ``divergence[i]`` is the expression for dF_i/dx_i; it is derived from the
    drift when not supplied.
    """

    name: str
    drift: tuple
    diffusion: np.ndarray
    sigma: float
    divergence: tuple = field(default=None)

    def __post_init__(self):
        n = len(self.drift)
        if n < 1:
            raise ValueError("a system needs at least one drift component")
        for k, e in enumerate(self.drift):
            if not isinstance(e, ex.Expr):
                raise TypeError(f"drift component {k + 1} is not an expression")
            if e.max_index() > n:
                raise ValueError(f"drift component {k + 1} references x{e.max_index()} but n = {n}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        try:
            D = np.array(self.diffusion, dtype=float)
        except (TypeError, ValueError) as err:
            raise ValueError("diffusion must be a constant numeric matrix") from err
        if D.shape != (n, n):
            raise ValueError(f"diffusion must be {n}x{n}, got {D.shape}")
        D = 0.5 * (D + D.T)
        if np.linalg.eigvalsh(D).min() < -1e-12:
            raise ValueError("diffusion matrix must be positive semidefinite")
        D.setflags(write=False)
        object.__setattr__(self, "diffusion", D)
        object.__setattr__(self, "drift", tuple(self.drift))
        if self.divergence is None:
            div = tuple(ex.differentiate(e, i + 1) for i, e in enumerate(self.drift))
            object.__setattr__(self, "divergence", div)
        elif len(self.divergence) != n:
            raise ValueError("one divergence term per drift component is required")

    @property
    def n(self) -> int:
        return len(self.drift)

    def drift_at(self, X) -> np.ndarray:
        """F evaluated at the rows of ``X`` (shape (N, n)); returns (N, n)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        cols = [X[:, k] for k in range(self.n)]
        return np.stack([np.broadcast_to(e.evaluate(cols), (X.shape[0],)) for e in self.drift], axis=1)

    def divergence_at(self, X) -> np.ndarray:
        """sum_i dF_i/dx_i at the rows of ``X``; returns (N,)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        cols = [X[:, k] for k in range(self.n)]
        total = np.zeros(X.shape[0])
        for e in self.divergence:
            total = total + e.evaluate(cols)
        return total


def _noise_diffusion(n, sigma, noise=None):
    if noise is None:
        # white noise enters the last state equation only
        L = np.zeros((n, 1))
        L[-1, 0] = 1.0
    else:
        L = np.asarray(noise, dtype=float)
        if L.ndim == 1:
            L = L[:, None]
        if L.shape[0] != n:
            raise ValueError(f"noise matrix needs {n} rows")
    return 0.5 * sigma**2 * (L @ L.T)


def make_builtin(name: str, sigma: float = np.sqrt(0.1)) -> DynamicalSystem:
    """One of ``vdp``, ``vdp_rayleigh`` or ``ou1d`` driven by noise of intensity ``sigma``."""
    if name not in BUILTINS:
        raise ValueError(f"unknown built-in system {name!r}; choose from {sorted(BUILTINS)}")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    sources = BUILTINS[name]
    n = len(sources)
    drift = tuple(ex.parse(s, n) for s in sources)
    return DynamicalSystem(name, drift, _noise_diffusion(n, sigma), float(sigma))


def make_custom(drift_sources, sigma: float, noise=None, name: str = "custom") -> DynamicalSystem:
    """System from drift strings; ``noise`` is the n x m matrix Lambda / sigma (default e_n)."""
    n = len(drift_sources)
    if noise is not None and any(isinstance(v, str) for v in np.ravel(np.asarray(noise, dtype=object))):
        raise ValueError("state-dependent diffusion is not supported; noise must be numeric")
    drift = tuple(ex.parse(s, n) for s in drift_sources)
    return DynamicalSystem(name, drift, _noise_diffusion(n, sigma, noise), float(sigma))


def eval_drift_and_divergence(system: DynamicalSystem, x):
    """F(x) and div F(x) at a single point."""
    x = np.asarray(x, dtype=float)
    if x.shape != (system.n,):
        raise ValueError(f"expected a point of length {system.n}")
    F = system.drift_at(x[None, :])[0]
    return F, float(system.divergence_at(x[None, :])[0])
