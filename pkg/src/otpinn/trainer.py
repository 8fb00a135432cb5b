"""Nominal training followed by optimal-transport refinement of the collocation set."""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import evaluate, network, transport
from .config import TrainingConfig, resolve_seed
from .dynamics import DynamicalSystem, make_builtin, make_custom
from .grid import CollocationSet, Domain, append_points, uniform_grid
from .optim import OptimResult, minimize
from .residual import ResidualProblem, residuals

__all__ = [
    "Experiment",
    "IterationEntry",
    "RunRecord",
    "TrainingError",
    "build_system",
    "setup",
    "train",
    "train_nominal",
    "top_m_errors",
    "ot_refinement_loop",
    "run_training",
]

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    """A stage failed; ``record`` holds everything completed before the failure.

    ``net`` is the last successfully trained network, if any.
    """

    def __init__(self, message, record, net=None):
        super().__init__(message)
        self.record = record
        self.net = net


@dataclass(frozen=True)
class Experiment:
    config: TrainingConfig
    system: DynamicalSystem
    domain: Domain
    train: CollocationSet
    test: CollocationSet
    reference: evaluate.AnalyticReference | None


@dataclass
class IterationEntry:
    iteration: int
    n_train: int
    eps_pde: float
    eps_rho: float | None
    eps_pde_rho: float | None
    N0: float
    loss: float
    optimizer_status: str
    optimizer_iters: int
    wall_time: float
    n_proposed: int = 0
    n_added: int = 0
    added_points_file: str | None = None

    def metrics(self, form: str, N_U: int) -> dict:
        """Reproducible subset (no timings) in the metrics file layout."""
        return {
            "iteration": self.iteration,
            "N_S": self.n_train,
            "N_U": N_U,
            "form": form,
            "eps_pde": self.eps_pde,
            "eps_pde_rho": self.eps_pde_rho,
            "eps_rho": self.eps_rho,
            "N0": self.N0,
        }


@dataclass
class RunRecord:
    config: dict
    system: str
    N_U: int
    entries: list = field(default_factory=list)
    error: str | None = None
    train_set: CollocationSet | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "system": self.system,
            "N_U": self.N_U,
            "entries": [asdict(e) for e in self.entries],
            "error": self.error,
        }

    def metrics(self) -> list:
        form = self.config.get("eps_pde_form", "eta")
        return [e.metrics(form, self.N_U) for e in self.entries]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "RunRecord":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        try:
            entries = [IterationEntry(**e) for e in data["entries"]]
            return cls(data["config"], data["system"], int(data["N_U"]), entries, data.get("error"))
        except (KeyError, TypeError) as err:
            raise ValueError(f"{path} is not a run record: {err}") from err


def build_system(cfg: TrainingConfig) -> DynamicalSystem:
    if cfg.system == "custom":
        return make_custom(cfg.drift, cfg.sigma, cfg.noise)
    return make_builtin(cfg.system, cfg.sigma)


def setup(cfg: TrainingConfig) -> Experiment:
    lo, hi = cfg.bounds()
    domain = Domain(tuple(lo), tuple(hi))
    try:
        reference = evaluate.analytic_reference(cfg.system, cfg.sigma)
    except ValueError:
        reference = None
    return Experiment(
        cfg,
        build_system(cfg),
        domain,
        uniform_grid(domain, cfg.dx_train),
        uniform_grid(domain, cfg.dx_test),
        reference,
    )


def train(net: network.PotentialNetwork, system, points: CollocationSet, cfg: TrainingConfig):
    """BFGS on the composite loss, starting exactly at ``net``'s parameters."""
    problem = ResidualProblem.from_points(system, points, net.H, cfg.boundary_mode, cfg.eta_max)
    result: OptimResult = minimize(problem, net.flatten(), cfg.optimizer)
    return net.with_params(result.x), result


def _entry(exp: Experiment, net, iteration, n_train, result, wall, **extra) -> IterationEntry:
    cfg = exp.config
    test = exp.test.interior
    e_pde = evaluate.eps_pde(net, exp.system, test, "eta")
    try:
        e_pde_rho = evaluate.eps_pde(net, exp.system, test, "rho")
    except OverflowError:
        e_pde_rho = None
    if cfg.eps_pde_form == "rho":
        e_pde, e_pde_rho = e_pde_rho, e_pde
    N0 = evaluate.normalize(net, exp.domain, cfg.dx_quad)
    e_rho = None
    if exp.reference is not None:
        e_rho = evaluate.eps_rho(net, exp.reference, test, N0, exp.domain, cfg.dx_quad)
    return IterationEntry(
        iteration=iteration,
        n_train=n_train,
        eps_pde=e_pde,
        eps_rho=e_rho,
        eps_pde_rho=e_pde_rho,
        N0=N0,
        loss=result.fun,
        optimizer_status=result.status,
        optimizer_iters=result.nit,
        wall_time=wall,
        **extra,
    )


def train_nominal(cfg: TrainingConfig, exp: Experiment | None = None):
    """Train from the seeded initialisation on the nominal grid; returns (net, record)."""
    if cfg.seed is None:
        raise ValueError("train_nominal needs a concrete seed; see config.resolve_seed")
    exp = exp or setup(cfg)
    net = network.init(exp.system.n, cfg.H, cfg.seed)
    record = RunRecord(cfg.to_dict(), exp.system.name, len(exp.test.interior), train_set=exp.train)
    try:
        t0 = time.perf_counter()
        net, result = train(net, exp.system, exp.train, cfg)
        entry = _entry(exp, net, 0, len(exp.train), result, time.perf_counter() - t0)
    except Exception as err:
        record.error = f"nominal training: {type(err).__name__}: {err}"
        raise TrainingError(record.error, record) from err
    record.entries.append(entry)
    log.info("nominal: N_S=%d eps_pde=%.3e (%s)", entry.n_train, entry.eps_pde, result.status)
    return net, record


def top_m_errors(net, system, test_interior, M: int):
    """The M test points with the largest squared residual, in descending order.

    Ties keep the test-grid order.
    """
    X = np.atleast_2d(np.asarray(test_interior, dtype=float))
    if M > len(X):
        raise ValueError(f"M = {M} exceeds the {len(X)} available test points")
    R = residuals(system, net, X)
    order = np.argsort(-(R * R), kind="stable")[:M]
    return X[order], R[order]


def _plan(cfg: TrainingConfig, ens, C):
    use_exact = cfg.ot_solver == "exact" or (cfg.ot_solver == "auto" and ens.M <= cfg.exact_max_M)
    if use_exact:
        return transport.solve_transport(ens, C)
    eps = cfg.sinkhorn_epsilon * float(np.median(C[C > 0])) if np.any(C > 0) else 1.0
    return transport.solve_transport_sinkhorn(ens, C, eps, cfg.sinkhorn_max_sweeps)


def ot_refinement_loop(cfg: TrainingConfig, net, record: RunRecord, exp: Experiment | None = None, out_dir=None):
    """Grow the training set with transported high-error points and retrain, nOT times."""
    exp = exp or setup(cfg)
    points = record.train_set if record.train_set is not None else exp.train
    for i in range(1, cfg.nOT + 1):
        try:
            t0 = time.perf_counter()
            X_err, R_err = top_m_errors(net, exp.system, exp.test.interior, cfg.M)
            ens = transport.build_ensemble(X_err, R_err)
            plan = _plan(cfg, ens, transport.cost_matrix(ens.points, cfg.cost))
            new = transport.resample(ens, plan)
            before = len(points)
            points = append_points(points, new)
            added_file = None
            if out_dir is not None:
                added_file = f"added_points_{i:03d}.csv"
                _write_added(os.path.join(out_dir, added_file), new)
            net, result = train(net, exp.system, points, cfg)
            entry = _entry(
                exp, net, i, len(points), result, time.perf_counter() - t0,
                n_proposed=len(new), n_added=len(points) - before, added_points_file=added_file,
            )
        except Exception as err:
            record.error = f"iteration {i}: {type(err).__name__}: {err}"
            record.train_set = points
            raise TrainingError(record.error, record, net) from err
        record.entries.append(entry)
        record.train_set = points
        log.info("OT iteration %d: N_S=%d eps_pde=%.3e (%s)", i, entry.n_train, entry.eps_pde, result.status)
    return net, record


def _write_added(path, pts):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"x_{k + 1}" for k in range(pts.shape[1])])
        for p in pts:
            w.writerow([format(v, ".17g") for v in p])


def run_training(cfg: TrainingConfig, out_dir=None):
    """Nominal training plus the refinement loop; returns (net, record)."""
    cfg = resolve_seed(cfg)
    exp = setup(cfg)
    net, record = train_nominal(cfg, exp)
    return ot_refinement_loop(cfg, net, record, exp, out_dir)
