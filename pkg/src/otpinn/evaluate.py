"""Normalisation and accuracy metrics for trained potentials."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import trapezoid

from .dynamics import DynamicalSystem
from .grid import Domain, axis_nodes
from .network import PotentialNetwork, forward, jets
from .residual import EXP_LIMIT, residuals

__all__ = [
    "SolutionField",
    "Metrics",
    "AnalyticReference",
    "analytic_reference",
    "quadrature_nodes",
    "log_partition",
    "normalize",
    "solution_field",
    "eps_pde",
    "eps_rho",
    "write_solution_csv",
]


def quadrature_nodes(domain: Domain, dx):
    """Per-axis node arrays and the full tensor grid (ij ordering) for quadrature."""
    dx = np.broadcast_to(np.asarray(dx, dtype=float), (domain.n,))
    axes = [axis_nodes(lo, hi, h) for lo, hi, h in zip(domain.lower, domain.upper, dx)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return axes, np.stack([m.ravel() for m in mesh], axis=1)


def _trapezoid_nd(values, axes):
    v = values.reshape([len(a) for a in axes])
    for a in reversed(axes):
        v = trapezoid(v, a, axis=-1)
    return float(v)


def log_partition(eta_values, axes) -> float:
    """log of the trapezoidal integral of exp(-eta), computed with a shift for range safety."""
    eta_values = np.asarray(eta_values, dtype=float)
    if not np.all(np.isfinite(eta_values)):
        raise ValueError("potential is not finite on the quadrature grid")
    shift = float(eta_values.min())
    Z = _trapezoid_nd(np.exp(-(eta_values - shift)), axes)
    if not Z > 0:
        raise ValueError("quadrature of exp(-eta) is not positive")
    return np.log(Z) - shift


def normalize(net: PotentialNetwork, domain: Domain, dx_quad) -> float:
    """N0 = 1 / (trapezoidal integral of exp(-eta) over the box)."""
    axes, X = quadrature_nodes(domain, dx_quad)
    return float(np.exp(-log_partition(forward(net, X), axes)))


@dataclass(frozen=True)
class SolutionField:
    points: np.ndarray
    eta: np.ndarray
    rho: np.ndarray  # exp(-eta), unnormalised
    N0: float
    rho_hat: np.ndarray


def solution_field(net: PotentialNetwork, domain: Domain, dx) -> SolutionField:
    axes, X = quadrature_nodes(domain, dx)
    eta = forward(net, X)
    logZ = log_partition(eta, axes)
    with np.errstate(over="ignore", under="ignore"):
        rho = np.exp(-eta)
    return SolutionField(X, eta, rho, float(np.exp(-logZ)), np.exp(-eta - logZ))


@dataclass(frozen=True)
class AnalyticReference:
    name: str
    sigma: float

    def potential(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        s2 = self.sigma**2
        if self.name == "vdp_rayleigh":
            r2 = np.sum(X * X, axis=1)
            return -(r2 - 0.5 * r2 * r2) / s2
        return X[:, 0] ** 2 / s2

    def unnormalized(self, X) -> np.ndarray:
        return np.exp(-self.potential(X))

    def density(self, X, domain: Domain, dx_quad) -> np.ndarray:
        """Density normalised over ``domain`` by the same trapezoidal rule as the network."""
        axes, Q = quadrature_nodes(domain, dx_quad)
        logZ = log_partition(self.potential(Q), axes)
        return np.exp(-self.potential(X) - logZ)


REFERENCES = ("vdp_rayleigh", "ou1d")


def analytic_reference(name: str, sigma: float) -> AnalyticReference:
    if name not in REFERENCES:
        raise ValueError(f"no analytical stationary density is known for {name!r}")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return AnalyticReference(name, float(sigma))


def eps_pde(net: PotentialNetwork, system: DynamicalSystem, test_interior, form: str = "eta") -> float:
    """Mean squared residual over the test interior, in potential or density form."""
    X = np.atleast_2d(np.asarray(test_interior, dtype=float))
    if X.size == 0:
        raise ValueError("empty test set")
    R = residuals(system, net, X)
    if form == "eta":
        return float(np.mean(R * R))
    if form == "rho":
        eta = jets(net, X)[0]
        if np.any(eta < -EXP_LIMIT):
            raise OverflowError("exp(-eta) overflows on the test set")
        rR = np.exp(-eta) * R
        return float(np.mean(rR * rR))
    raise ValueError("form must be 'eta' or 'rho'")


def eps_rho(net: PotentialNetwork, reference, test_interior, N0: float, domain: Domain, dx_quad) -> float:
    """Mean squared difference between N0 exp(-eta) and the normalised reference density."""
    if reference is None:
        raise ValueError("no analytical reference available")
    X = np.atleast_2d(np.asarray(test_interior, dtype=float))
    rho_hat = N0 * np.exp(-forward(net, X))
    rho_true = reference.density(X, domain, dx_quad)
    d = rho_hat - rho_true
    return float(np.mean(d * d))


@dataclass(frozen=True)
class Metrics:
    eps_pde: float
    eps_rho: float | None
    N0: float
    N_U: int
    form: str = "eta"
    iteration: int = 0
    eps_pde_rho: float | None = None

    def to_dict(self):
        return asdict(self)


def write_solution_csv(path, field: SolutionField):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        n = field.points.shape[1]
        w.writerow([f"x_{k + 1}" for k in range(n)] + ["eta", "rho_hat"])
        for p, e, r in zip(field.points, field.eta, field.rho_hat):
            w.writerow([format(v, ".17g") for v in p] + [format(e, ".17g"), format(r, ".17g")])
