"""Command-line entry point: ``solver run | compare | dump-solution | check``."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import os
import sys

import click
import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__, evaluate, network, trainer
from .config import ConfigError, config_from_dict, load_config, resolve_seed
from .grid import Domain, write_points_csv
from .residual import residuals, write_residuals_csv

OUT_ENV = "OTPINN_OUTPUT_DIR"
DEFAULT_OUT = "otpinn_run"

log = logging.getLogger("otpinn")


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def metrics_document(record: trainer.RunRecord, seed) -> dict:
    """Reproducible summary of a run: no timings, no paths."""
    return {"system": record.system, "seed": seed, "N_U": record.N_U, "entries": record.metrics(), "error": record.error}


def write_metrics_csv(path, record: trainer.RunRecord):
    cols = ["iteration", "N_S", "n_added", "eps_pde", "eps_pde_rho", "eps_rho", "N0", "loss", "optimizer_status", "optimizer_iters", "wall_time"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for e in record.entries:
            row = [e.iteration, e.n_train, e.n_added, e.eps_pde, e.eps_pde_rho, e.eps_rho, e.N0, e.loss, e.optimizer_status, e.optimizer_iters, e.wall_time]
            w.writerow(["" if v is None else format(v, ".17g") if isinstance(v, float) else v for v in row])


def write_run_artifacts(out_dir, cfg, exp, net, record):
    """Everything except the manifest; returns the list of written file names."""
    files = ["config.json", "record.json", "metrics.json", "metrics.csv"]
    _write_json(os.path.join(out_dir, "config.json"), cfg.to_dict())
    record.save(os.path.join(out_dir, "record.json"))
    _write_json(os.path.join(out_dir, "metrics.json"), metrics_document(record, cfg.seed))
    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), record)
    files += [e.added_points_file for e in record.entries if e.added_points_file]
    if record.train_set is not None:
        write_points_csv(os.path.join(out_dir, "training_points.csv"), record.train_set)
        files.append("training_points.csv")
    if net is not None:
        network.save_snapshot(os.path.join(out_dir, "network.json"), net)
        R = residuals(exp.system, net, exp.test.interior)
        write_residuals_csv(os.path.join(out_dir, "residuals.csv"), exp.test.interior, R)
        field = evaluate.solution_field(net, exp.domain, cfg.dx_quad)
        evaluate.write_solution_csv(os.path.join(out_dir, "solution.csv"), field)
        files += ["network.json", "residuals.csv", "solution.csv"]
    return files


def write_manifest(out_dir, cfg, files, started, error=None):
    inventory = []
    for name in files:
        path = os.path.join(out_dir, name)
        inventory.append({"file": name, "sha256": _sha256(path), "bytes": os.path.getsize(path)})
    manifest = {
        "tool": "otpinn",
        "version": __version__,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "started": started,
        "finished": _now(),
        "files": inventory,
        "error": error,
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


def execute(cfg, out_dir):
    """Run the whole method and persist artifacts. Returns (manifest, exit code)."""
    os.makedirs(out_dir, exist_ok=True)
    started = _now()
    cfg = resolve_seed(cfg)
    exp = trainer.setup(cfg)
    error, code = None, 0
    try:
        net, record = trainer.train_nominal(cfg, exp)
        net, record = trainer.ot_refinement_loop(cfg, net, record, exp, out_dir)
    except trainer.TrainingError as err:
        net, record, error, code = err.net, err.record, str(err), 1
    files = write_run_artifacts(out_dir, cfg, exp, net, record)
    return write_manifest(out_dir, cfg, files, started, error), code


# ---------------------------------------------------------------- compare


def _final(record: trainer.RunRecord):
    if not record.entries:
        raise click.ClickException("record has no entries")
    last = record.entries[-1]
    wall = sum(e.wall_time for e in record.entries)
    method = "OT-PINNs" if len(record.entries) > 1 else "PINNs"
    return method, last, wall


def _fmt(v, spec=".3e"):
    return "-" if v is None else format(v, spec)


def comparison_rows(a: trainer.RunRecord, b: trainer.RunRecord, labels=("a", "b")):
    base = _final(a)[1]
    rows = []
    for label, rec in zip(labels, (a, b)):
        method, last, wall = _final(rec)
        d_pde = last.eps_pde - base.eps_pde
        d_rho = None if last.eps_rho is None or base.eps_rho is None else last.eps_rho - base.eps_rho
        rows.append(
            {
                "record": label,
                "system": rec.system,
                "method": method,
                "N_S": last.n_train,
                "eps_pde": last.eps_pde,
                "eps_rho": last.eps_rho,
                "wall_time": wall,
                "N_S_ratio": last.n_train / base.n_train,
                "d_eps_pde": d_pde,
                "d_eps_rho": d_rho,
            }
        )
    return rows


def comparison_text(rows) -> str:
    head = ["record", "system", "method", "N_S", "eps_pde", "eps_rho", "wall_s", "N_S ratio", "d eps_pde", "d eps_rho"]
    body = [
        [r["record"], r["system"], r["method"], str(r["N_S"]), _fmt(r["eps_pde"]), _fmt(r["eps_rho"]),
         format(r["wall_time"], ".1f"), format(r["N_S_ratio"], ".3f"), _fmt(r["d_eps_pde"]), _fmt(r["d_eps_rho"])]
        for r in rows
    ]
    widths = [max(len(x[k]) for x in [head] + body) for k in range(len(head))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(line, widths)).rstrip() for line in [head] + body]
    return "\n".join(lines)


def comparison_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("-" if v is None else format(v, ".17g") if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


# ---------------------------------------------------------------- self-test


def self_checks():
    """Fast invariant checks that need nothing but the installed package."""
    from .dynamics import make_builtin
    from .grid import uniform_grid
    from .residual import ResidualProblem
    from .transport import build_ensemble, cost_matrix, resample, solve_transport

    out = []

    def check(name, ok):
        out.append((name, bool(ok)))

    sigma = np.sqrt(0.1)
    vr = make_builtin("vdp_rayleigh", sigma)
    X = uniform_grid(Domain.box(-2, 2, 2), 0.05).interior
    r2 = np.sum(X * X, axis=1)
    g = (2 / sigma**2) * (r2 - 1)[:, None] * X
    h22 = (2 / sigma**2) * ((r2 - 1) + 2 * X[:, 1] ** 2)
    # only D_22 is non-zero for this system
    R = vr.divergence_at(X) - np.sum(vr.drift_at(X) * g, axis=1) + vr.diffusion[1, 1] * (h22 - g[:, 1] ** 2)
    check("analytic potential has zero residual", np.max(np.abs(R)) < 1e-8)

    counts = [len(uniform_grid(Domain.box(lo, hi, 2), dx).interior) for lo, hi, dx in ((-2, 2, 0.25), (-2, 2, 0.05), (-4, 4, 0.1), (-4, 4, 0.05))]
    check("grid interior counts", counts == [225, 6241, 6241, 25281])

    rng = np.random.default_rng(0)
    net = network.PotentialNetwork(rng.normal(size=(4, 2)), rng.normal(size=4), rng.normal(size=4), 0.0)
    prob = ResidualProblem(vr, rng.uniform(-1, 1, (10, 2)), rng.uniform(-2, 2, (4, 2)), 4, "exp_zero")
    theta = net.flatten()
    grad = prob(theta)[1]
    fd = np.array([(prob(theta + h)[0] - prob(theta - h)[0]) / 2e-6 for h in np.eye(theta.size) * 1e-6])
    check("loss gradient matches finite differences", np.linalg.norm(grad - fd) < 1e-6 * np.linalg.norm(fd))

    pts = rng.uniform(-1, 1, (20, 2))
    ens = build_ensemble(pts, np.ones(20))
    plan = solve_transport(ens, cost_matrix(pts))
    check("uniform ensemble resamples to itself", np.array_equal(resample(ens, plan), pts))
    ens = build_ensemble(pts, rng.normal(size=20))
    plan = solve_transport(ens, cost_matrix(pts))
    new = resample(ens, plan)
    rows, cols = plan.marginal_errors(ens.weights)
    check("transport marginals", rows < 1e-9 and cols < 1e-9)
    check("resampled points inside source box", np.all(new >= pts.min(0) - 1e-12) and np.all(new <= pts.max(0) + 1e-12))

    dom = Domain.box(-2, 2, 2)
    field = evaluate.solution_field(net, dom, 0.05)
    axes, _ = evaluate.quadrature_nodes(dom, 0.05)
    check("normalised density integrates to one", abs(evaluate._trapezoid_nd(field.rho_hat, axes) - 1) < 1e-6)
    return out


# ---------------------------------------------------------------- commands


@click.group()
@click.version_option(__version__, prog_name="solver")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Stationary Fokker-Planck solver with optimal-transport collocation refinement."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON config; defaults apply when omitted.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help=f"Output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT}).")
@click.option("--threads", type=click.IntRange(min=1), default=None, help="Upper bound on BLAS worker threads.")
@click.option("--deterministic", is_flag=True, help="Single-threaded, fixed-order reductions; requires a seed.")
def run(config_path, out_dir, threads, deterministic):
    """Train the nominal network, run the refinement loop and write all artifacts."""
    try:
        cfg = load_config(config_path) if config_path else config_from_dict({})
    except ConfigError as err:
        raise click.ClickException(str(err)) from err
    if deterministic and cfg.seed is None:
        raise click.ClickException("--deterministic needs an explicit 'seed' in the config")
    out_dir = out_dir or os.environ.get(OUT_ENV) or DEFAULT_OUT
    limit = 1 if deterministic else threads
    with threadpool_limits(limits=limit):
        manifest, code = execute(cfg, out_dir)
    with open(os.path.join(out_dir, "metrics.json"), encoding="utf-8") as fh:
        doc = json.load(fh)
    for e in doc["entries"]:
        click.echo(f"iter {e['iteration']:2d}  N_S={e['N_S']:6d}  eps_pde={e['eps_pde']:.3e}  eps_rho={_fmt(e['eps_rho'])}")
    click.echo(f"artifacts in {out_dir} (seed {manifest['seed']})")
    if code:
        click.echo(f"error: {manifest['error']}", err=True)
        sys.exit(code)


@main.command()
@click.argument("record_a", type=click.Path(exists=True, dir_okay=False))
@click.argument("record_b", type=click.Path(exists=True, dir_okay=False))
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None, help="Also write the table as CSV.")
def compare(record_a, record_b, csv_path):
    """Side-by-side table of two run records (record.json files)."""
    try:
        recs = [trainer.RunRecord.load(p) for p in (record_a, record_b)]
    except (ValueError, OSError) as err:
        raise click.ClickException(str(err)) from err
    labels = [os.path.basename(os.path.dirname(os.path.abspath(p))) or p for p in (record_a, record_b)]
    if labels[0] == labels[1]:
        labels = ["a", "b"]
    rows = comparison_rows(*recs, labels=labels)
    click.echo(comparison_text(rows))
    if csv_path:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(comparison_csv(rows))


@main.command("dump-solution")
@click.option("--net", "net_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Network snapshot JSON.")
@click.option("--dx", required=True, type=float, help="Grid spacing.")
@click.option("--lower", type=float, default=-2.0, show_default=True)
@click.option("--upper", type=float, default=2.0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None, help="CSV path (default: stdout).")
def dump_solution(net_path, dx, lower, upper, out_path):
    """Write eta and the normalised density on a uniform grid as CSV."""
    try:
        net = network.load_snapshot(net_path)
        field = evaluate.solution_field(net, Domain.box(lower, upper, net.n), dx)
    except ValueError as err:
        raise click.ClickException(str(err)) from err
    if out_path:
        evaluate.write_solution_csv(out_path, field)
        click.echo(f"N0 = {field.N0:.17g}; {len(field.points)} points written to {out_path}")
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        n = field.points.shape[1]
        w.writerow([f"x_{k + 1}" for k in range(n)] + ["eta", "rho_hat"])
        for p, e, r in zip(field.points, field.eta, field.rho_hat):
            w.writerow([format(v, ".17g") for v in p] + [format(e, ".17g"), format(r, ".17g")])


@main.command()
def check():
    """Run the built-in invariant checks."""
    results = self_checks()
    for name, ok in results:
        click.echo(f"{'PASS' if ok else 'FAIL'}  {name}")
    if not all(ok for _, ok in results):
        sys.exit(1)


if __name__ == "__main__":  # pragma: no cover
    main()
