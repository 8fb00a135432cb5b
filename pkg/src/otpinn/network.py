"""Single hidden layer tanh network for the potential eta(x).

eta(x) = w2 . tanh(W1 x + b1) + b2

Value, input gradient and input Hessian are computed in closed form, as are
their derivatives with respect to the flattened parameters
``[W1 (row-major), b1, w2, b2]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "PotentialNetwork",
    "NetworkJet",
    "init",
    "evaluate_jet",
    "jets",
    "parameter_jacobians",
    "forward",
    "save_snapshot",
    "load_snapshot",
]


@dataclass(frozen=True)
class PotentialNetwork:
    W1: np.ndarray  # (H, n)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (H,)
    b2: float
    seed: int | None = None

    def __post_init__(self):
        W1 = np.array(self.W1, dtype=np.float64, ndmin=2)
        b1 = np.array(self.b1, dtype=np.float64).ravel()
        w2 = np.array(self.w2, dtype=np.float64).ravel()
        if b1.shape != (W1.shape[0],) or w2.shape != (W1.shape[0],):
            raise ValueError("inconsistent layer shapes")
        for a in (W1, b1, w2):
            a.setflags(write=False)
        object.__setattr__(self, "W1", W1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "w2", w2)
        object.__setattr__(self, "b2", float(self.b2))

    @property
    def n(self) -> int:
        return self.W1.shape[1]

    @property
    def H(self) -> int:
        return self.W1.shape[0]

    @property
    def size(self) -> int:
        return self.H * self.n + 2 * self.H + 1

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.w2, [self.b2]])

    def with_params(self, theta) -> "PotentialNetwork":
        return unflatten(theta, self.n, self.H, seed=self.seed)


def unflatten(theta, n: int, H: int, seed=None) -> PotentialNetwork:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (H * n + 2 * H + 1,):
        raise ValueError(f"expected {H * n + 2 * H + 1} parameters, got {theta.shape}")
    i = H * n
    return PotentialNetwork(
        theta[:i].reshape(H, n), theta[i : i + H], theta[i + H : i + 2 * H], theta[-1], seed
    )


def init(n: int, H: int = 48, seed: int = 0) -> PotentialNetwork:
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    if n < 1 or H < 1:
        raise ValueError("n and H must be positive")
    rng = np.random.default_rng(seed)
    a1 = np.sqrt(6.0 / (n + H))
    a2 = np.sqrt(6.0 / (H + 1))
    W1 = rng.uniform(-a1, a1, size=(H, n))
    w2 = rng.uniform(-a2, a2, size=H)
    return PotentialNetwork(W1, np.zeros(H), w2, 0.0, seed)


class NetworkJet(NamedTuple):
    value: float
    gradient: np.ndarray
    hessian: np.ndarray


class Activations(NamedTuple):
    """tanh and its first three derivatives at the hidden pre-activations, each (N, H)."""

    s: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    s3: np.ndarray


def activations(net: PotentialNetwork, X) -> Activations:
    z = np.asarray(X, dtype=np.float64) @ net.W1.T + net.b1
    s = np.tanh(z)
    s1 = 1.0 - s * s
    s2 = -2.0 * s * s1
    s3 = s1 * (6.0 * s * s - 2.0)
    return Activations(s, s1, s2, s3)


def forward(net: PotentialNetwork, X) -> np.ndarray:
    """Plain forward pass at the rows of ``X``."""
    return np.tanh(np.asarray(X, dtype=np.float64) @ net.W1.T + net.b1) @ net.w2 + net.b2


def jets(net: PotentialNetwork, X, act: Activations | None = None):
    """Batched (eta, grad, hess) with shapes (N,), (N, n), (N, n, n)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    a = act if act is not None else activations(net, X)
    eta = a.s @ net.w2 + net.b2
    g = (a.s1 * net.w2) @ net.W1
    # Hm_ij = sum_k w2_k s2_k W1_ki W1_kj, assembled from upper triangle and mirrored
    c = a.s2 * net.w2
    n = net.n
    hess = np.empty((X.shape[0], n, n))
    for i in range(n):
        for j in range(i, n):
            hij = c @ (net.W1[:, i] * net.W1[:, j])
            hess[:, i, j] = hij
            hess[:, j, i] = hij
    return eta, g, hess


def evaluate_jet(net: PotentialNetwork, x) -> NetworkJet:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.n,):
        raise ValueError(f"expected a point of length {net.n}")
    eta, g, hess = jets(net, x[None, :])
    return NetworkJet(float(eta[0]), g[0], hess[0])


def parameter_jacobians(net: PotentialNetwork, x):
    """Derivatives of (eta, grad, hess) at ``x`` with respect to the flat parameters.

    Returns arrays of shape (P,), (n, P) and (n, n, P).
    """
    x = np.asarray(x, dtype=np.float64)
    n, H = net.n, net.H
    W1, w2 = net.W1, net.w2
    a = activations(net, x[None, :])
    s, s1, s2, s3 = (v[0] for v in a)
    P = net.size
    iW, ib, iw, ic = 0, H * n, H * n + H, H * n + 2 * H

    d_eta = np.zeros(P)
    d_eta[iW:ib] = np.outer(w2 * s1, x).ravel()
    d_eta[ib:iw] = w2 * s1
    d_eta[iw:ic] = s
    d_eta[ic] = 1.0

    eye = np.eye(n)
    d_g = np.zeros((n, P))
    for i in range(n):
        # d g_i / d W1_kl = w2_k s2_k x_l W1_ki + w2_k s1_k delta_il
        dW = np.outer(w2 * s2 * W1[:, i], x) + np.outer(w2 * s1, eye[i])
        d_g[i, iW:ib] = dW.ravel()
        d_g[i, ib:iw] = w2 * s2 * W1[:, i]
        d_g[i, iw:ic] = s1 * W1[:, i]

    d_h = np.zeros((n, n, P))
    for i in range(n):
        for j in range(n):
            wij = W1[:, i] * W1[:, j]
            dW = np.outer(w2 * s3 * wij, x)
            dW += np.outer(w2 * s2 * W1[:, j], eye[i]) + np.outer(w2 * s2 * W1[:, i], eye[j])
            d_h[i, j, iW:ib] = dW.ravel()
            d_h[i, j, ib:iw] = w2 * s3 * wij
            d_h[i, j, iw:ic] = s2 * wij
    return d_eta, d_g, d_h


def snapshot(net: PotentialNetwork) -> dict:
    return {
        "n": net.n,
        "H": net.H,
        "W1": net.W1.ravel().tolist(),
        "b1": net.b1.tolist(),
        "w2": net.w2.tolist(),
        "b2": net.b2,
        "seed": net.seed,
    }


def from_snapshot(data: dict) -> PotentialNetwork:
    n, H = int(data["n"]), int(data["H"])
    W1 = np.asarray(data["W1"], dtype=np.float64).reshape(H, n)
    return PotentialNetwork(W1, data["b1"], data["w2"], data["b2"], data.get("seed"))


def save_snapshot(path, net: PotentialNetwork):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(snapshot(net), fh, indent=1)


def load_snapshot(path) -> PotentialNetwork:
    with open(path, encoding="utf-8") as fh:
        return from_snapshot(json.load(fh))
