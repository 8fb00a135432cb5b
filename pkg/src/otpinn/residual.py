"""Stationary Fokker-Planck residual in potential form, composite loss and its gradient.

With rho = exp(-eta), the stationary equation

    sum_i d/dx_i (F_i rho) - sum_ij D_ij d^2 rho / dx_i dx_j = 0

divided by rho becomes

    R(x) = sum_i (dF_i/dx_i - F_i g_i) + sum_ij D_ij (h_ij - g_i g_j) = 0

where g and h are the gradient and Hessian of eta.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .dynamics import DynamicalSystem, eval_drift_and_divergence
from .grid import CollocationSet
from .network import NetworkJet, PotentialNetwork, activations, unflatten

__all__ = [
    "BOUNDARY_MODES",
    "LossReport",
    "ResidualProblem",
    "eta_residual",
    "rho_residual",
    "residuals",
    "loss",
    "loss_gradient",
    "write_residuals_csv",
]

BOUNDARY_MODES = ("exp_zero", "relative", "eta_target", "none")
EXP_LIMIT = 700.0


def _check(system, jet, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (system.n,) or np.shape(jet.gradient) != (system.n,):
        raise ValueError("point, jet and system dimensions disagree")
    return x


def eta_residual(system: DynamicalSystem, jet: NetworkJet, x) -> float:
    x = _check(system, jet, x)
    F, divF = eval_drift_and_divergence(system, x)
    g, h, D = jet.gradient, jet.hessian, system.diffusion
    return float(divF - F @ g + np.sum(D * (h - np.outer(g, g))))


def rho_residual(system: DynamicalSystem, jet: NetworkJet, x) -> float:
    """Density-form operator applied to rho = exp(-eta) (unnormalised)."""
    x = _check(system, jet, x)
    if jet.value < -EXP_LIMIT:
        raise OverflowError(f"exp(-eta) overflows for eta = {jet.value}")
    F, divF = eval_drift_and_divergence(system, x)
    rho = np.exp(-jet.value)
    g, h = jet.gradient, jet.hessian
    drho = -rho * g
    d2rho = rho * (np.outer(g, g) - h)
    return float(divF * rho + F @ drho - np.sum(system.diffusion * d2rho))


@dataclass(frozen=True)
class LossReport:
    L_r: float
    L_b: float
    total: float
    points: np.ndarray
    residuals: np.ndarray

    @property
    def per_point_residuals(self):
        return list(zip(map(tuple, self.points), self.residuals.tolist()))


class ResidualProblem:
    """Loss and gradient over a fixed collocation set, with drift values cached.

    Calling the instance with a flat parameter vector returns ``(loss, grad)``.
    """

    def __init__(
        self,
        system: DynamicalSystem,
        interior,
        boundary=None,
        H: int = 48,
        boundary_mode: str = "exp_zero",
        eta_max: float = 0.0,
    ):
        if boundary_mode not in BOUNDARY_MODES:
            raise ValueError(f"boundary_mode must be one of {BOUNDARY_MODES}")
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(interior, dtype=float)))
        if X.size == 0:
            raise ValueError("the interior collocation set is empty")
        if X.shape[1] != system.n:
            raise ValueError("collocation points and system dimensions disagree")
        self.system = system
        self.H = H
        self.n = system.n
        self.X = X
        self.F = system.drift_at(X)
        self.divF = system.divergence_at(X)
        self.D = system.diffusion
        self.boundary_mode = boundary_mode
        self.eta_max = float(eta_max)
        if boundary is None or boundary_mode == "none":
            self.Xb = np.zeros((0, self.n))
        else:
            self.Xb = np.ascontiguousarray(np.reshape(np.asarray(boundary, dtype=float), (-1, self.n)))
        self.nfev = 0

    @classmethod
    def from_points(cls, system, points: CollocationSet, H=48, boundary_mode="exp_zero", eta_max=0.0):
        return cls(system, points.interior, points.boundary, H, boundary_mode, eta_max)

    def residuals(self, net: PotentialNetwork) -> np.ndarray:
        return self._forward(net)[0]

    def _forward(self, net):
        W1, w2, D = net.W1, net.w2, self.D
        s, s1, s2, s3 = activations(net, self.X)
        A = s1 * w2
        B = s2 * w2
        p = self.F @ W1.T
        q = np.einsum("ki,ij,kj->k", W1, D, W1)
        g = A @ W1
        m = g @ D
        R = self.divF - np.sum(A * p, axis=1) + B @ q - np.sum(g * m, axis=1)
        return R, (s, s1, s2, s3, A, B, p, q, m)

    def _boundary(self, net, s=None):
        """Boundary loss, its derivative in the boundary outputs and, for ``relative``, in the interior outputs."""
        if len(self.Xb) == 0:
            return 0.0, None, None, None
        z = self.Xb @ net.W1.T + net.b1
        sb = np.tanh(z)
        eta = sb @ net.w2 + net.b2
        nb = len(self.Xb)
        alpha = None
        with np.errstate(over="ignore"):
            if self.boundary_mode == "relative":
                # squared boundary density relative to the mean interior density; invariant under eta -> eta + c
                if s is None:
                    s = np.tanh(self.X @ net.W1.T + net.b1)
                eta_in = s @ net.w2 + net.b2
                log_mean_rho = logsumexp(-eta_in) - np.log(len(eta_in))
                log_terms = -2.0 * (eta + log_mean_rho) - np.log(nb)
                Lb = float(np.exp(logsumexp(log_terms)))
                beta = -2.0 * np.exp(log_terms)
                w = np.exp(-eta_in - logsumexp(-eta_in))
                alpha = 2.0 * Lb * w
            elif self.boundary_mode == "exp_zero":
                e2 = np.exp(-2.0 * eta)
                Lb = float(np.sum(e2) / nb)
                beta = -2.0 * e2 / nb
            else:
                d = eta - self.eta_max
                Lb = float(np.sum(d * d) / nb)
                beta = 2.0 * d / nb
        return Lb, beta, sb, alpha

    def report(self, net: PotentialNetwork) -> LossReport:
        R, _ = self._forward(net)
        Lr = float(np.sum(R * R) / len(R))
        Lb = self._boundary(net)[0]
        return LossReport(Lr, Lb, Lr + Lb, self.X, R)

    def __call__(self, theta):
        net = unflatten(theta, self.n, self.H)
        self.nfev += 1
        return self.value_and_grad(net)

    def value_and_grad(self, net: PotentialNetwork):
        W1, w2, D, X = net.W1, net.w2, self.D, self.X
        R, (s, s1, s2, s3, A, B, p, q, m) = self._forward(net)
        N = len(R)
        Lr = float(np.sum(R * R) / N)
        delta = 2.0 * R / N

        r = m @ W1.T
        u = -p - 2.0 * r
        a = s1 * u + s2 * q
        c = w2 * (s2 * u + s3 * q)
        g_w2 = delta @ a
        g_b1 = delta @ c
        g_W1 = (c * delta[:, None]).T @ X
        g_W1 += (A * delta[:, None]).T @ (-self.F - 2.0 * m)
        g_W1 += 2.0 * (delta @ B)[:, None] * (W1 @ D)
        g_b2 = 0.0

        Lb, beta, sb, alpha = self._boundary(net, s)
        if alpha is not None:
            ta = alpha[:, None] * A
            g_w2 = g_w2 + alpha @ s
            g_b1 = g_b1 + ta.sum(axis=0)
            g_W1 = g_W1 + ta.T @ X
            g_b2 = float(np.sum(alpha))
        if beta is not None:
            tb = beta[:, None] * (1.0 - sb * sb) * w2
            g_w2 = g_w2 + beta @ sb
            g_b1 = g_b1 + tb.sum(axis=0)
            g_W1 = g_W1 + tb.T @ self.Xb
            g_b2 = g_b2 + float(np.sum(beta))
        grad = np.concatenate([g_W1.ravel(), g_b1, g_w2, [g_b2]])
        return Lr + Lb, grad


def residuals(system: DynamicalSystem, net: PotentialNetwork, X) -> np.ndarray:
    """Potential-form residual at the rows of ``X``."""
    return ResidualProblem(system, X, None, net.H, boundary_mode="none").residuals(net)


def loss(net, system, points, boundary_mode="exp_zero", eta_max=0.0) -> LossReport:
    return ResidualProblem.from_points(system, points, net.H, boundary_mode, eta_max).report(net)


def loss_gradient(net, system, points, boundary_mode="exp_zero", eta_max=0.0) -> np.ndarray:
    return ResidualProblem.from_points(system, points, net.H, boundary_mode, eta_max).value_and_grad(net)[1]


def write_residuals_csv(path, points, R):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        n = np.shape(points)[1]
        w.writerow([f"x_{k + 1}" for k in range(n)] + ["R", "R2"])
        for p, r in zip(points, R):
            w.writerow([format(v, ".17g") for v in p] + [format(r, ".17g"), format(r * r, ".17g")])
