import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otpinn import dynamics, network, residual
from otpinn.grid import Domain, uniform_grid
from otpinn.network import NetworkJet

SIGMA = np.sqrt(0.1)


def vdpr_jet(x, sigma=SIGMA):
    """Exact potential of the Van der Pol-Rayleigh oscillator and its derivatives."""
    x = np.asarray(x, float)
    r2 = x @ x
    c = 1.0 / sigma**2
    eta = -c * (r2 - 0.5 * r2 * r2)
    g = 2 * c * (r2 - 1) * x
    h = 2 * c * ((r2 - 1) * np.eye(2) + 2 * np.outer(x, x))
    return NetworkJet(eta, g, h)


def ou_jet(x, sigma=SIGMA):
    x = float(np.asarray(x).ravel()[0])
    c = 1.0 / sigma**2
    return NetworkJet(c * x * x, np.array([2 * c * x]), np.array([[2 * c]]))


def random_net(n, H, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return network.PotentialNetwork(
        scale * rng.normal(0, 1, (H, n)), rng.normal(0, 1, H), rng.normal(0, 1, H), rng.normal(), seed
    )


def test_analytic_potentials_have_zero_residual():
    vr = dynamics.make_builtin("vdp_rayleigh", SIGMA)
    cs = uniform_grid(Domain.box(-2, 2, 2), 0.05)
    worst = max(abs(residual.eta_residual(vr, vdpr_jet(x), x)) for x in cs.interior)
    assert worst < 1e-8
    ou = dynamics.make_builtin("ou1d", SIGMA)
    cs = uniform_grid(Domain((-2.0,), (2.0,)), 0.05)
    worst = max(abs(residual.eta_residual(ou, ou_jet(x), x)) for x in cs.interior)
    assert worst < 1e-10


def test_flipped_sign_convention_does_not_vanish():
    # the form with -D(h + g g') leaves a residual of order 1/sigma^2
    vr = dynamics.make_builtin("vdp_rayleigh", SIGMA)
    x = np.array([0.3, 0.9])
    jet = vdpr_jet(x)
    F, divF = dynamics.eval_drift_and_divergence(vr, x)
    wrong = divF - F @ jet.gradient - np.sum(vr.diffusion * (jet.hessian + np.outer(jet.gradient, jet.gradient)))
    assert abs(wrong) > 1.0


def test_constant_network_gives_divergence():
    vdp = dynamics.make_builtin("vdp", SIGMA)
    net = network.PotentialNetwork(np.ones((3, 2)), np.zeros(3), np.zeros(3), 0.7)
    R = residual.residuals(vdp, net, [[0.0, 1.0], [0.5, 2.0]])
    assert R[0] == 1.0
    assert R[1] == pytest.approx(1 - 0.25)


def test_single_point_loss():
    sysm = dynamics.make_custom(["2*x1"], 1.0)
    net = network.PotentialNetwork([[1.0]], [0.0], [0.0], 0.0)
    rep = residual.ResidualProblem(sysm, [[0.3]], boundary_mode="none", H=1).report(net)
    assert rep.residuals.tolist() == [2.0]
    assert rep.L_r == 4.0 and rep.L_b == 0.0 and rep.total == 4.0
    assert rep.per_point_residuals == [((0.3,), 2.0)]


def test_duplicated_points_leave_mean_loss_unchanged():
    vr = dynamics.make_builtin("vdp_rayleigh", SIGMA)
    net = random_net(2, 8, 0, 0.5)
    X = np.random.default_rng(0).uniform(-2, 2, (30, 2))
    a = residual.ResidualProblem(vr, X, boundary_mode="none", H=8).report(net)
    b = residual.ResidualProblem(vr, np.vstack([X, X]), boundary_mode="none", H=8).report(net)
    assert b.L_r == pytest.approx(a.L_r, rel=1e-14)


def test_batched_residual_matches_pointwise_jets():
    vr = dynamics.make_builtin("vdp_rayleigh", SIGMA)
    net = random_net(2, 10, 1)
    X = np.random.default_rng(1).uniform(-2, 2, (40, 2))
    R = residual.residuals(vr, net, X)
    ref = [residual.eta_residual(vr, network.evaluate_jet(net, x), x) for x in X]
    assert np.allclose(R, ref, rtol=1e-12, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.integers(0, 1000))
def test_density_and_potential_forms_agree(x1, x2, seed):
    vr = dynamics.make_builtin("vdp_rayleigh", SIGMA)
    net = random_net(2, 6, seed, 0.5)
    x = np.array([x1, x2])
    jet = network.evaluate_jet(net, x)
    lhs = residual.rho_residual(vr, jet, x)
    rhs = np.exp(-jet.value) * residual.eta_residual(vr, jet, x)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_density_form_refuses_overflow():
    ou = dynamics.make_builtin("ou1d", SIGMA)
    with pytest.raises(OverflowError):
        residual.rho_residual(ou, NetworkJet(-800.0, np.zeros(1), np.zeros((1, 1))), [0.0])


@pytest.mark.parametrize("mode", residual.BOUNDARY_MODES)
def test_gradient_matches_finite_differences(mode):
    systems = [dynamics.make_builtin("vdp_rayleigh", SIGMA), dynamics.make_builtin("vdp", 0.5), dynamics.make_builtin("ou1d", SIGMA)]
    rng = np.random.default_rng(7)
    for trial in range(20):
        sysm = systems[trial % 3]
        H = 5
        net = random_net(sysm.n, H, trial, 0.7)
        X = rng.uniform(-1.5, 1.5, (15, sysm.n))
        Xb = rng.uniform(-2, 2, (6, sysm.n))
        prob = residual.ResidualProblem(sysm, X, Xb, H, mode, eta_max=1.0)
        theta = net.flatten()
        _, grad = prob(theta)
        h = 1e-6
        fd = np.empty_like(theta)
        for p in range(theta.size):
            e = np.zeros_like(theta)
            e[p] = h
            fd[p] = (prob(theta + e)[0] - prob(theta - e)[0]) / (2 * h)
        err = np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12)
        assert err < 1e-6, (trial, err)


def test_boundary_terms():
    ou = dynamics.make_builtin("ou1d", SIGMA)
    net = network.PotentialNetwork([[1.0]], [0.0], [0.0], 2.0)
    Xb = [[-2.0], [2.0]]
    assert residual.ResidualProblem(ou, [[0.0]], Xb, 1, "exp_zero").report(net).L_b == pytest.approx(np.exp(-4.0))
    assert residual.ResidualProblem(ou, [[0.0]], Xb, 1, "eta_target", eta_max=5.0).report(net).L_b == 9.0
    assert residual.ResidualProblem(ou, [[0.0]], Xb, 1, "none").report(net).L_b == 0.0
    # eta is 2 everywhere, so the boundary density equals the interior mean
    assert residual.ResidualProblem(ou, [[0.0]], Xb, 1, "relative").report(net).L_b == pytest.approx(1.0)
    tanh_net = network.PotentialNetwork([[1.0]], [0.0], [1.0], 0.0)
    expected = np.cosh(2 * np.tanh(2.0))
    assert residual.ResidualProblem(ou, [[0.0]], Xb, 1, "relative").report(tanh_net).L_b == pytest.approx(expected)
    with pytest.raises(ValueError):
        residual.ResidualProblem(ou, [[0.0]], Xb, 1, "dirichlet")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(-50, 50))
def test_relative_boundary_ignores_the_normalisation_constant(seed, shift):
    sysm = dynamics.make_builtin("vdp", 0.5)
    rng = np.random.default_rng(seed)
    net = random_net(2, 4, seed, 0.7)
    prob = residual.ResidualProblem(sysm, rng.uniform(-1, 1, (12, 2)), rng.uniform(-2, 2, (6, 2)), 4, "relative")
    theta = net.flatten()
    moved = theta.copy()
    moved[-1] += shift
    (f0, g0), (f1, g1) = prob(theta), prob(moved)
    assert f1 == pytest.approx(f0, rel=1e-9)
    assert abs(g0[-1]) < 1e-9 * max(1.0, f0)
    np.testing.assert_allclose(g1, g0, rtol=1e-7, atol=1e-9 * max(1.0, np.abs(g0).max()))


def test_gradient_vanishes_for_zero_drift_and_flat_network():
    ou = dynamics.make_custom(["0*x1"], 1.0)
    net = network.PotentialNetwork([[0.3]], [0.1], [0.0], 4.0)
    loss, grad = residual.ResidualProblem(ou, [[0.2], [0.5]], boundary_mode="none", H=1)(net.flatten())
    assert loss == 0.0
    assert np.all(grad == 0.0)


def test_residuals_csv(tmp_path):
    path = tmp_path / "r.csv"
    residual.write_residuals_csv(path, np.array([[0.5, 1.0]]), np.array([-2.0]))
    assert path.read_text().splitlines() == ["x_1,x_2,R,R2", "0.5,1,-2,4"]


def test_doubling_the_residual_quadruples_loss_and_gradient():
    # R is linear in (F, div F, D), so doubling drift and diffusion doubles R at every point
    net = random_net(1, 3, 4, 0.8)
    one = residual.ResidualProblem(dynamics.make_custom(["-x1 + sin(x1)"], 1.0), [[0.4]], boundary_mode="none", H=3)
    two = residual.ResidualProblem(dynamics.make_custom(["2*(-x1 + sin(x1))"], np.sqrt(2.0)), [[0.4]], boundary_mode="none", H=3)
    assert two.residuals(net)[0] == pytest.approx(2 * one.residuals(net)[0], rel=1e-14)
    f1, g1 = one(net.flatten())
    f2, g2 = two(net.flatten())
    assert f2 == pytest.approx(4 * f1, rel=1e-13)
    assert np.allclose(g2, 4 * g1, rtol=1e-12, atol=1e-14)


def test_directional_derivative_vanishes_at_line_minimum():
    from scipy.optimize import minimize_scalar

    vr = dynamics.make_builtin("vdp_rayleigh", SIGMA)
    rng = np.random.default_rng(11)
    net = random_net(2, 6, 11, 0.5)
    prob = residual.ResidualProblem(vr, rng.uniform(-1, 1, (20, 2)), boundary_mode="none", H=6)
    theta = net.flatten()
    d = -prob(theta)[1]
    d /= np.linalg.norm(d)
    best = minimize_scalar(lambda t: prob(theta + t * d)[0], bracket=(0.0, 1e-3), tol=1e-12)
    slope = prob(theta + best.x * d)[1] @ d
    assert abs(slope) < 1e-8 * max(1.0, abs(d @ prob(theta)[1]))
