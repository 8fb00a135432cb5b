"""Discrete optimal transport between an error-weighted ensemble and the uniform measure.

The transportation problem

    min sum_ij t_ij c_ij   s.t.  sum_j t_ij = w_i,  sum_i t_ij = 1/M,  t >= 0

is solved exactly by the transportation simplex (MODI potentials, stepping-stone
cycles). Degeneracy is removed by the classical perturbation of the marginals
(every supply gets +eps, the last demand +M eps); the perturbation is carried
symbolically as an integer eps-coefficient next to each basic flow, so it never
leaks into the returned plan. An entropic Sinkhorn solver is provided for large
ensembles.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

__all__ = [
    "ErrorEnsemble",
    "TransportPlan",
    "build_ensemble",
    "cost_matrix",
    "solve_transport",
    "solve_transport_sinkhorn",
    "resample",
    "write_plan_csv",
]


@dataclass(frozen=True)
class ErrorEnsemble:
    points: np.ndarray  # (M, n) source points
    sq_residuals: np.ndarray  # (M,)
    weights: np.ndarray  # (M,), sums to 1

    @property
    def M(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class TransportPlan:
    T: np.ndarray
    objective: float
    solver: str
    iterations: int
    converged: bool = True
    u: np.ndarray | None = None  # row potentials (exact solver)
    v: np.ndarray | None = None  # column potentials (exact solver)

    def marginal_errors(self, weights):
        M = self.T.shape[1]
        return (
            float(np.max(np.abs(self.T.sum(axis=1) - weights))),
            float(np.max(np.abs(self.T.sum(axis=0) - 1.0 / M))),
        )


def build_ensemble(points, residuals) -> ErrorEnsemble:
    """Weights proportional to squared residuals; uniform if all residuals vanish."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.asarray(residuals, dtype=float).ravel()
    if len(r) != len(X) or len(r) == 0:
        raise ValueError("points and residuals must have the same non-zero length")
    if not np.all(np.isfinite(r)):
        raise ValueError("residuals must be finite")
    r2 = r * r
    total = r2.sum()
    M = len(r2)
    if total == 0 or np.all(r2 == r2[0]):
        w = np.full(M, 1.0 / M)
    else:
        w = r2 / total
    return ErrorEnsemble(X, r2, w)


def cost_matrix(points, mode: str = "euclidean") -> np.ndarray:
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if mode == "euclidean":
        return cdist(X, X)
    if mode == "sq_euclidean":
        return cdist(X, X, "sqeuclidean")
    raise ValueError(f"unknown cost mode {mode!r}")


# ---------------------------------------------------------------- exact solver


class _Basis:
    """Spanning tree of basic cells over row nodes 0..M-1 and column nodes M..M+N-1."""

    def __init__(self, m, n):
        self.m, self.n = m, n
        self.adj = [dict() for _ in range(m + n)]  # node -> {neighbour: cell id}
        self.cells = {}  # cell id -> (i, j)
        self.x = {}  # cell id -> real part of the flow
        self.k = {}  # cell id -> eps coefficient of the flow
        self._next = 0

    def add(self, i, j, x, k):
        cid = self._next
        self._next += 1
        self.cells[cid] = (i, j)
        self.x[cid] = x
        self.k[cid] = k
        self.adj[i][self.m + j] = cid
        self.adj[self.m + j][i] = cid
        return cid

    def remove(self, cid):
        i, j = self.cells.pop(cid)
        del self.x[cid], self.k[cid]
        del self.adj[i][self.m + j]
        del self.adj[self.m + j][i]

    def tree(self, C):
        """Dual potentials (u_0 = 0) plus parent links and depths from a BFS at row 0."""
        m = self.m
        N = m + self.n
        pot = np.zeros(N)
        parent = [-1] * N
        pedge = [-1] * N
        depth = [0] * N
        seen = [False] * N
        seen[0] = True
        queue = deque([0])
        while queue:
            a = queue.popleft()
            for b, cid in self.adj[a].items():
                if seen[b]:
                    continue
                seen[b] = True
                parent[b], pedge[b], depth[b] = a, cid, depth[a] + 1
                i, j = self.cells[cid]
                # u_i + v_j = c_ij
                pot[b] = C[i, j] - pot[a]
                queue.append(b)
        if not all(seen):
            raise RuntimeError("basis is not a spanning tree")
        return pot[:m], pot[m:], parent, pedge, depth


def _lex_less(xa, ka, xb, kb, tol):
    if abs(xa - xb) > tol:
        return xa < xb
    return ka < kb


def _initial_basis(C, a, b, tol):
    """Least-cost rule on the perturbed marginals; yields m + n - 1 basic cells."""
    m, n = C.shape
    basis = _Basis(m, n)
    ra = [(float(v), 1) for v in a]
    rb = [(float(v), 0) for v in b]
    rb[-1] = (rb[-1][0], m)
    row_open = [True] * m
    col_open = [True] * n
    needed = m + n - 1
    for flat in np.argsort(C, axis=None, kind="stable"):
        i, j = divmod(int(flat), n)
        if not (row_open[i] and col_open[j]):
            continue
        (xa, ka), (xb, kb) = ra[i], rb[j]
        if _lex_less(xa, ka, xb, kb, tol):
            basis.add(i, j, xa, ka)
            rb[j] = (xb - xa, kb - ka)
            ra[i] = (0.0, 0)
            row_open[i] = False
        else:
            basis.add(i, j, xb, kb)
            ra[i] = (xa - xb, ka - kb)
            rb[j] = (0.0, 0)
            col_open[j] = False
        if len(basis.cells) == needed:
            break
    return basis


def _peel_flows(basis, a, b):
    """Flows on the basis tree for the unperturbed marginals (leaf elimination)."""
    m = basis.m
    rem = np.concatenate([np.asarray(a, float), np.asarray(b, float)])
    adj = [dict(d) for d in basis.adj]
    flows = {}
    leaves = deque(v for v in range(len(adj)) if len(adj[v]) == 1)
    while leaves:
        v = leaves.popleft()
        if len(adj[v]) != 1:
            continue
        (w, cid), = adj[v].items()
        f = rem[v]
        flows[cid] = f
        rem[w] -= f
        rem[v] = 0.0
        del adj[v][w], adj[w][v]
        if len(adj[w]) == 1:
            leaves.append(w)
    T = np.zeros((m, basis.n))
    for cid, f in flows.items():
        i, j = basis.cells[cid]
        T[i, j] = f
    return T


def solve_transport(ens: ErrorEnsemble, cost, max_pivots: int | None = None) -> TransportPlan:
    """Optimal basic plan of the transportation LP by the transportation simplex.

    The entering cell has the most negative reduced cost, ties going to the
    lowest (row, column) index.
    """
    C = np.asarray(cost, dtype=float)
    M = ens.M
    if C.shape != (M, M):
        raise ValueError(f"cost must be {M}x{M}")
    if not np.all(np.isfinite(C)) or np.any(C < 0):
        raise ValueError("cost must be finite and non-negative")
    a = ens.weights
    b = np.full(M, 1.0 / M)
    if abs(a.sum() - 1.0) > 1e-9:
        raise ValueError("ensemble weights must sum to one")
    if M == 1:
        return TransportPlan(np.ones((1, 1)), 0.0, "exact", 0, True, np.array([C[0, 0]]), np.zeros(1))

    tol_x = 1e-14
    tol_r = 1e-12 * max(1.0, float(C.max()))
    basis = _initial_basis(C, a, b, tol_x)
    limit = max_pivots if max_pivots is not None else 50 * M * M
    pivots = 0
    while True:
        u, v, parent, pedge, depth = basis.tree(C)
        red = C - u[:, None] - v[None, :]
        flat = int(np.argmin(red))
        if red.flat[flat] >= -tol_r:
            break
        if pivots >= limit:
            raise RuntimeError(f"transportation simplex did not converge in {limit} pivots")
        i, j = divmod(flat, M)
        # path in the tree between row node i and column node M + j
        p, q = i, M + j
        up_p, up_q = [], []
        while depth[p] > depth[q]:
            up_p.append(pedge[p])
            p = parent[p]
        while depth[q] > depth[p]:
            up_q.append(pedge[q])
            q = parent[q]
        while p != q:
            up_p.append(pedge[p])
            p = parent[p]
            up_q.append(pedge[q])
            q = parent[q]
        cycle = up_q + up_p[::-1]  # starts next to column j; alternates -, +, -, ...
        minus = cycle[0::2]
        plus = cycle[1::2]
        leave = minus[0]
        for cid in minus[1:]:
            if _lex_less(basis.x[cid], basis.k[cid], basis.x[leave], basis.k[leave], tol_x):
                leave = cid
        tx, tk = basis.x[leave], basis.k[leave]
        for cid in minus:
            basis.x[cid] -= tx
            basis.k[cid] -= tk
        for cid in plus:
            basis.x[cid] += tx
            basis.k[cid] += tk
        basis.remove(leave)
        basis.add(i, j, tx, tk)
        pivots += 1

    T = _peel_flows(basis, a, b)
    T[(T < 0) & (T >= -1e-12)] = 0.0
    if np.any(T < 0):
        raise RuntimeError("negative flow in the final basis")
    return TransportPlan(T, float(np.sum(T * C)), "exact", pivots, True, u, v)


# ---------------------------------------------------------------- entropic solver


def solve_transport_sinkhorn(
    ens: ErrorEnsemble, cost, epsilon: float, max_sweeps: int = 10000, marginal_tol: float = 1e-9
) -> TransportPlan:
    """Entropic plan by log-domain Sinkhorn sweeps.

    Stops once the row marginal error is below ``marginal_tol`` (columns are
    exact after every sweep); otherwise returns the last plan with
    ``converged=False``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    C = np.asarray(cost, dtype=float)
    M = ens.M
    if C.shape != (M, M):
        raise ValueError(f"cost must be {M}x{M}")
    with np.errstate(divide="ignore"):
        log_a = np.log(ens.weights)
    log_b = np.full(M, -np.log(M))
    f = np.zeros(M)
    g = np.zeros(M)
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        f = epsilon * (log_a - logsumexp((g[None, :] - C) / epsilon, axis=1))
        g = epsilon * (log_b - logsumexp((f[:, None] - C) / epsilon, axis=0))
        T = np.exp((f[:, None] + g[None, :] - C) / epsilon)
        if np.max(np.abs(T.sum(axis=1) - ens.weights)) < marginal_tol:
            converged = True
            break
    T = np.exp((f[:, None] + g[None, :] - C) / epsilon)
    return TransportPlan(T, float(np.sum(T * C)), "sinkhorn", sweeps, converged)


# ---------------------------------------------------------------- resampling


def resample(ens: ErrorEnsemble, plan: TransportPlan) -> np.ndarray:
    """New points x_j = sum_i x_i M t_ij, i.e. column-normalised barycentres of the sources."""
    T = plan.T
    if T.shape != (ens.M, ens.M):
        raise ValueError("plan does not match the ensemble")
    col = T.sum(axis=0)
    Phi = T / np.where(col > 0, col, 1.0)
    return Phi.T @ ens.points


def write_plan_csv(path, plan: TransportPlan):
    """Non-zero entries of the plan as (i, j, t_ij) triplets."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "t_ij"])
        for i, j in zip(*np.nonzero(plan.T)):
            w.writerow([int(i), int(j), format(plan.T[i, j], ".17g")])
