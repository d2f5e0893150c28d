import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import brute_force_loglik, random_bivariate
from tickhawkes.analytics import covariance_at_scale, covariance_coefficients, signature_plot_1d
from tickhawkes.curves import Curve
from tickhawkes.estimation import (
    EstimationError,
    FitResult,
    _loglik_core,
    _loglik_theta,
    _make_layout,
    fit_mle,
    fit_regression,
    log_likelihood,
)
from tickhawkes.model import (
    BivariateParams,
    EventLog,
    ModelError,
    UnivariateParams,
    spectral_radius,
)
from tickhawkes.simulation import simulate

DEFAULT = UnivariateParams.from_values(0.016, 0.023, 0.11)
SYM = BivariateParams.symmetric(0.015, 0.023, 0.05, 0.11)
GRID = np.logspace(0, 3, 30)


def rel_err(est, truth):
    return abs(est - truth) / abs(truth)


# ---------------------------------------------------------------- likelihood

def test_empty_log_value():
    empty = EventLog([], [], 100.0)
    assert log_likelihood(DEFAULT, empty) == pytest.approx(2 * 98.4, rel=1e-15)
    np.testing.assert_allclose(log_likelihood(DEFAULT, empty, per_stream=True), [98.4, 98.4],
                               rtol=1e-15)


def test_single_event_value():
    log = EventLog([30.0], [1], 100.0)
    per = log_likelihood(DEFAULT, log, per_stream=True)
    assert per[0] == pytest.approx(math.log(0.016) + 98.4, rel=1e-14)
    assert per[0] == pytest.approx(94.2648, abs=1e-4)
    # the stream-1 event excites stream 2, whose compensator grows accordingly
    expected2 = 98.4 - 0.023 / 0.11 * (1 - math.exp(-0.11 * 70.0))
    assert per[1] == pytest.approx(expected2, rel=1e-14)


def test_zero_intensity_gives_minus_inf():
    p = BivariateParams.from_values(0.01, 0.01, 0.0, 0.0, 0.0, 0.0, 0.1)
    assert np.isfinite(log_likelihood(p, EventLog([1.0], [3], 10.0, n_streams=4)))
    # public parameters always have mu > 0; the guard is exercised on the core routine
    values, *_ = _loglik_core(np.array([1.0, 2.0]), np.array([0, 1]), 10.0, np.zeros(2),
                              np.array([1, 0]), np.array([0, 1]), np.array([0.05, 0.05]),
                              np.array([0.1, 0.1]))
    assert values[0] == -np.inf and np.isfinite(values[1])


def test_stream_count_mismatch():
    with pytest.raises(ModelError):
        log_likelihood(SYM, EventLog([1.0], [1], 10.0))
    with pytest.raises(ModelError):
        log_likelihood(DEFAULT, EventLog([5.0], [1], 10.0), horizon=4.0)


@pytest.mark.parametrize("seed", range(6))
def test_recursion_matches_brute_force_univariate(seed):
    rng = np.random.default_rng(seed)
    p = UnivariateParams.from_values(rng.uniform(0.01, 0.05), *sorted(rng.uniform(0.01, 0.3, 2)))
    log = simulate(p, 3000.0, seed=seed)
    assert log_likelihood(p, log) == pytest.approx(brute_force_loglik(p, log), rel=1e-10)


@pytest.mark.parametrize("seed", range(6))
def test_recursion_matches_brute_force_bivariate(seed):
    rng = np.random.default_rng(seed)
    p = random_bivariate(rng)
    log = simulate(p, 2000.0, seed=seed)
    q = random_bivariate(rng)   # evaluate away from the generating parameters too
    for params in (p, q):
        assert log_likelihood(params, log) == pytest.approx(brute_force_loglik(params, log),
                                                           rel=1e-10)


def test_ties_use_strict_past():
    log = EventLog([1.0, 1.0, 1.0, 4.0], [1, 2, 1, 2], 10.0)
    assert log_likelihood(DEFAULT, log) == pytest.approx(brute_force_loglik(DEFAULT, log),
                                                        rel=1e-13)
    p = BivariateParams.from_values(0.01, 0.02, 0.03, 0.02, 0.04, 0.01, 0.2)
    log = EventLog([0.5, 0.5, 0.5, 0.5, 2.0], [1, 3, 4, 2, 3], 5.0, n_streams=4)
    assert log_likelihood(p, log) == pytest.approx(brute_force_loglik(p, log), rel=1e-13)


@given(st.lists(st.floats(0.0, 200.0), max_size=40), st.floats(0.001, 0.1),
       st.floats(0.0, 0.9), st.floats(0.01, 1.0))
def test_recursion_property(times, mu, x, beta):
    times = np.sort(times)
    log = EventLog(times, np.arange(times.size) % 2 + 1, 200.0)
    p = UnivariateParams.from_values(mu, x * beta, beta)
    assert log_likelihood(p, log) == pytest.approx(brute_force_loglik(p, log), rel=1e-10, abs=1e-9)


@pytest.mark.parametrize("model,theta", [
    ("univariate", [0.02, 0.03, 0.12]),
    ("symmetric", [0.015, 0.02, 0.04, 0.11]),
    ("general", [0.01, 0.02, 0.03, 0.02, 0.04, 0.01, 0.2]),
])
def test_analytic_gradient(model, theta):
    layout = _make_layout(model)
    truth = layout.to_params(np.array(theta))
    log = simulate(truth, 4000.0, seed=1)
    theta = np.array(theta) * 1.1
    _, grad = _loglik_theta(layout, theta, log, log.horizon)
    for i in range(theta.size):
        h = 1e-6 * theta[i]
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        fd = (_loglik_theta(layout, up, log, log.horizon)[0]
              - _loglik_theta(layout, dn, log, log.horizon)[0]) / (2 * h)
        assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-6)


# ---------------------------------------------------------------- layouts

@given(st.lists(st.floats(-8, 8), min_size=7, max_size=7))
def test_unconstrained_map_is_always_stable(z):
    for model, n in (("univariate", 3), ("symmetric", 4), ("general", 7)):
        layout = _make_layout(model)
        theta, _ = layout.to_theta(np.array(z[:n]))
        assert spectral_radius(layout.to_params(theta)) < 1


@pytest.mark.parametrize("model", ["univariate", "symmetric", "general"])
def test_layout_roundtrip_and_jacobian(model):
    layout = _make_layout(model)
    z = np.random.default_rng(0).normal(size=layout.size) * 0.5 - 1
    theta, jac = layout.to_theta(z)
    np.testing.assert_allclose(layout.to_z(theta), z, rtol=1e-10, atol=1e-12)
    for i in range(z.size):
        dz = np.zeros_like(z)
        dz[i] = 1e-6
        fd = (layout.to_theta(z + dz)[0] - layout.to_theta(z - dz)[0]) / 2e-6
        np.testing.assert_allclose(jac[:, i], fd, rtol=1e-6, atol=1e-12)


def test_unknown_model():
    with pytest.raises(EstimationError):
        _make_layout("trivariate")


# ---------------------------------------------------------------- MLE

def test_mle_recovers_defaults():
    # one path only: the 10% median bound over replications lives in the acceptance suite
    log = simulate(DEFAULT, 42 * 3600.0, seed=2024)
    fit = fit_mle(log, seed=0)
    assert fit.converged and fit.method == "mle" and fit.model == "univariate"
    assert fit.grad_norm < 1e-6
    assert rel_err(fit.params.mu, 0.016) < 0.15
    assert rel_err(fit.params.alpha, 0.023) < 0.15
    assert rel_err(fit.params.beta, 0.11) < 0.15
    assert fit.at_boundary == ()
    assert fit.objective == pytest.approx(log_likelihood(fit.params, log), rel=1e-12)
    assert fit.objective >= log_likelihood(DEFAULT, log)


def test_mle_is_a_local_maximum():
    log = simulate(DEFAULT, 20 * 3600.0, seed=5)
    fit = fit_mle(log, n_starts=3)
    best = fit.objective
    p = fit.params
    for dmu, da, db in ((1.01, 1, 1), (0.99, 1, 1), (1, 1.02, 1), (1, 0.98, 1), (1, 1, 1.02)):
        q = UnivariateParams.from_values(p.mu * dmu, p.alpha * da, p.beta * db)
        assert log_likelihood(q, log) < best


def test_mle_init_and_starts_agree():
    log = simulate(DEFAULT, 20 * 3600.0, seed=6)
    a = fit_mle(log, n_starts=1)
    b = fit_mle(log, init=DEFAULT, n_starts=4, seed=3)
    assert a.params.mu == pytest.approx(b.params.mu, rel=1e-5)
    assert a.params.alpha == pytest.approx(b.params.alpha, rel=1e-5)
    assert a.objective == pytest.approx(b.objective, rel=1e-10)


def test_mle_jobs_deterministic():
    log = simulate(DEFAULT, 10 * 3600.0, seed=7)
    a = fit_mle(log, n_starts=4, jobs=1)
    b = fit_mle(log, n_starts=4, jobs=4)
    assert a.to_json() == b.to_json()


def test_mle_poisson_data_flags_alpha():
    log = simulate(UnivariateParams.from_values(0.016, 0.0, 0.11), 42 * 3600.0, seed=8)
    fit = fit_mle(log)
    assert "alpha" in fit.at_boundary
    assert fit.params.alpha < 0.05 * fit.params.mu
    assert rel_err(fit.params.mu, 0.016) < 0.05


def test_mle_bivariate_symmetric():
    log = simulate(SYM, 30 * 3600.0, seed=9)
    fit = fit_mle(log)
    assert fit.model == "symmetric" and fit.converged
    assert rel_err(fit.params.mu1, 0.015) < 0.15
    assert rel_err(fit.params.k12.alpha, 0.023) < 0.15
    assert rel_err(fit.params.k13.alpha, 0.05) < 0.15
    assert rel_err(fit.params.k12.beta, 0.11) < 0.15
    general = fit_mle(log, model="general", n_starts=3)
    # the general model nests the symmetric one
    assert general.objective >= fit.objective - 1e-6
    assert general.constraint_margin > 0


def test_mle_errors():
    with pytest.raises(EstimationError):
        fit_mle(EventLog([], [], 10.0))
    with pytest.raises(EstimationError):
        fit_mle(EventLog([1.0], [1], 10.0), model="symmetric")
    with pytest.raises(EstimationError):
        fit_mle(EventLog([1.0], [1], 10.0), init=UnivariateParams.from_values(0.01, 0.2, 0.1))


def test_fit_result_roundtrip():
    log = simulate(DEFAULT, 3 * 3600.0, seed=1)
    fit = fit_mle(log, n_starts=2)
    back = FitResult.from_dict(json.loads(fit.to_json()))
    assert back.to_json() == fit.to_json()
    assert back.params == fit.params


# ---------------------------------------------------------------- regression

def test_regression_noiseless_univariate():
    curve = Curve(GRID, signature_plot_1d(DEFAULT, GRID))
    fit = fit_regression(curve)
    assert fit.method == "regression" and fit.model == "univariate"
    for est, truth in ((fit.params.mu, 0.016), (fit.params.alpha, 0.023), (fit.params.beta, 0.11)):
        assert rel_err(est, truth) < 1e-6
    assert fit.objective < 1e-20


@pytest.mark.parametrize("weighting", ["none", "sqrt"])
def test_regression_noiseless_weighting(weighting):
    curve = Curve(GRID, signature_plot_1d(DEFAULT, GRID))
    fit = fit_regression(curve, tau_weighting=weighting, normalize=False)
    assert rel_err(fit.params.alpha, 0.023) < 1e-6


def test_regression_stderr_weighting_requires_stderr():
    curve = Curve(GRID, signature_plot_1d(DEFAULT, GRID))
    with pytest.raises(EstimationError):
        fit_regression(curve, tau_weighting="stderr")
    with pytest.raises(EstimationError):
        fit_regression(curve, tau_weighting="cubic")
    fit = fit_regression(Curve(GRID, curve.values, 1e-3 * curve.values), tau_weighting="stderr")
    assert rel_err(fit.params.beta, 0.11) < 1e-6


def _bivariate_curves(p):
    m = covariance_at_scale(covariance_coefficients(p), GRID)
    return (Curve(GRID, m[:, 0, 0]), Curve(GRID, m[:, 1, 1]), Curve(GRID, m[:, 0, 1]))


def test_regression_noiseless_symmetric():
    fit = fit_regression(_bivariate_curves(SYM))
    p = fit.params
    assert fit.model == "symmetric"
    for est, truth in ((p.mu1, 0.015), (p.k12.alpha, 0.023), (p.k13.alpha, 0.05), (p.k12.beta, 0.11)):
        assert rel_err(est, truth) < 1e-6


def test_regression_noiseless_general():
    truth = BivariateParams.from_values(0.01, 0.02, 0.03, 0.02, 0.04, 0.01, 0.2)
    c11, c22, c12 = _bivariate_curves(truth)
    fit = fit_regression({"c11": c11, "c22": c22, "c12": c12}, model="general", n_starts=12)
    est = fit.params
    for a, b in zip(est.as_dict().values(), truth.as_dict().values()):
        if isinstance(b, float):
            assert a == pytest.approx(b, rel=1e-5)


def test_regression_decoupled_when_cross_weight_zero():
    fit = fit_regression(_bivariate_curves(SYM), weights=(1, 1, 0))
    assert fit.model == "decoupled"
    assert fit.params.k13.alpha == 0 and fit.params.k31.alpha == 0
    assert "asset1" in fit.extra


def test_regression_errors():
    short = Curve([1.0, 2.0], [0.04, 0.03])
    with pytest.raises(EstimationError):
        fit_regression(short)
    c11, c22, c12 = _bivariate_curves(SYM)
    with pytest.raises(EstimationError):
        fit_regression((c11, c22, c12), weights=(1, -1, 1))
    with pytest.raises(EstimationError):
        fit_regression((c11, c22, Curve(GRID[:-1], c12.values[:-1])))
    with pytest.raises(EstimationError):
        fit_regression((c11, c22, c12), model="univariate")
