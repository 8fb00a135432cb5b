import numpy as np
import pytest

from otpinn.optim import LineSearchError, OptimizerSettings, minimize, wolfe_line_search


def quadratic(A, b):
    def f(x):
        return 0.5 * x @ A @ x - b @ x, A @ x - b

    return f


def rosenbrock(x):
    a, b = x
    f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
    g = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
    return f, g


def test_convex_quadratic_converges_quickly():
    rng = np.random.default_rng(0)
    n = 6
    Q = rng.normal(size=(n, n))
    A = Q @ Q.T + n * np.eye(n)
    b = rng.normal(size=n)
    res = minimize(quadratic(A, b), np.zeros(n))
    assert res.status == "converged"
    assert res.nit <= n + 5
    assert np.allclose(res.x, np.linalg.solve(A, b), atol=1e-8)


def test_rosenbrock():
    res = minimize(rosenbrock, np.array([-1.2, 1.0]))
    assert res.status == "converged"
    assert np.allclose(res.x, [1.0, 1.0], atol=1e-6)


def test_start_at_optimum_takes_no_steps():
    res = minimize(rosenbrock, np.array([1.0, 1.0]))
    assert res.status == "converged" and res.nit == 0 and res.nfev == 1


def test_loss_is_monotone_and_every_direction_descends():
    seen = []

    def f(x):
        val, g = rosenbrock(x)
        seen.append(val)
        return val, g

    res = minimize(f, np.array([-1.5, 2.0]), OptimizerSettings(max_iters=200))
    assert np.all(np.diff(res.trace.loss) <= 0)
    assert len(res.trace) == res.nit + 1
    assert res.trace.fevals[-1] == res.nfev == len(seen)


def test_max_iters_status():
    res = minimize(rosenbrock, np.array([-1.2, 1.0]), OptimizerSettings(max_iters=3))
    assert res.status == "max_iters" and res.nit == 3


def test_non_finite_start_is_rejected():
    with pytest.raises(ValueError):
        minimize(lambda x: (np.inf, x), np.zeros(2))


def test_line_search_on_quadratic_accepts_unit_step():
    f = quadratic(np.eye(2), np.zeros(2))
    x = np.array([1.0, 1.0])
    f0, g0 = f(x)
    t, fv, g, nfev = wolfe_line_search(f, x, -x, 1.0, f0, g0)
    assert t == 1.0 and fv == 0.0 and nfev == 1
    assert wolfe_line_search(f, x, -x)[3] == 2


def test_line_search_satisfies_strong_wolfe():
    x = np.array([-1.2, 1.0])
    f0, g0 = rosenbrock(x)
    d = -g0
    st = OptimizerSettings()
    t, ft, gt, _ = wolfe_line_search(rosenbrock, x, d, 1e-3, f0, g0, st)
    assert ft <= f0 + st.c1 * t * (g0 @ d)
    assert abs(gt @ d) <= st.c2 * abs(g0 @ d)


def test_line_search_rejects_ascent_direction():
    f = quadratic(np.eye(2), np.zeros(2))
    x = np.array([1.0, 0.0])
    with pytest.raises(ValueError):
        wolfe_line_search(f, x, x)


def test_line_search_on_unbounded_linear_stops_at_cap():
    st = OptimizerSettings(step_max=64.0)
    t, fv, _, _ = wolfe_line_search(lambda x: (-x[0], np.array([-1.0])), np.zeros(1), np.ones(1), 1.0, settings=st)
    assert t == 64.0 and fv == -64.0


def test_line_search_failure_reports_status():
    calls = {"n": 0}

    def bad(x):
        # descending slope at the start, NaN everywhere else
        calls["n"] += 1
        if calls["n"] == 1:
            return 0.0, np.array([1.0])
        return np.nan, np.array([np.nan])

    with pytest.raises(LineSearchError):
        wolfe_line_search(bad, np.zeros(1), np.array([-1.0]), settings=OptimizerSettings(max_ls_evals=5))


@pytest.mark.parametrize("kw", [{"c1": 0.9, "c2": 0.1}, {"max_iters": 0}, {"gtol": -1.0}, {"step_max": 0.0}])
def test_settings_validation(kw):
    with pytest.raises(ValueError):
        OptimizerSettings(**kw)


def test_trace_csv(tmp_path):
    res = minimize(rosenbrock, np.array([0.0, 0.0]), OptimizerSettings(max_iters=2))
    path = tmp_path / "trace.csv"
    res.trace.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,loss,grad_norm,step,fevals"
    assert len(lines) == 4
