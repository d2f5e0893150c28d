import math

import numpy as np
import pytest

from tickhawkes.model import (
    BivariateParams,
    ModelError,
    UnivariateParams,
    UnstableParametersError,
    mean_intensities,
)
from tickhawkes.simulation import (
    SimulationError,
    default_burn_in,
    make_rng,
    read_event_log_csv,
    simulate,
    simulate_days,
    write_event_log_csv,
)

DEFAULT = UnivariateParams.from_values(0.016, 0.023, 0.11)
SYM = BivariateParams.symmetric(0.015, 0.023, 0.05, 0.11)


def reference_thinning(params, horizon, seed, burn_in):
    """Plain-Python thinning with the documented draw order, for bit-level comparison."""
    mu, alpha, beta = params.system()
    rng = make_rng(seed)
    n = len(mu)
    hist_t, hist_s = [], []
    t = -burn_in
    bound = mu.sum()

    def lam_at(s):
        out = mu.copy()
        for tj, sj in zip(hist_t, hist_s):
            out += alpha[:, sj] * np.exp(-beta[:, sj] * (s - tj))
        return out

    while True:
        t += -math.log1p(-rng.random()) / bound
        if t > horizon:
            break
        lam = lam_at(t)
        total = lam.sum()
        if rng.random() * bound < total:
            target = rng.random() * total
            chosen = int(np.searchsorted(np.cumsum(lam), target, side="right"))
            hist_t.append(t)
            hist_s.append(min(chosen, n - 1))
            bound = total + alpha[:, hist_s[-1]].sum()
        else:
            bound = total
    times = np.array(hist_t)
    streams = np.array(hist_s, dtype=int) + 1
    keep = times >= 0
    return times[keep], streams[keep]


@pytest.mark.parametrize("params,horizon,burn_in", [
    (DEFAULT, 2000.0, 0.0),
    (DEFAULT, 1500.0, 300.0),
    (SYM, 800.0, 100.0),
    (BivariateParams.from_values(0.01, 0.03, 0.04, 0.02, 0.05, 0.01, 0.2), 600.0, 50.0),
])
def test_matches_reference_thinning(params, horizon, burn_in):
    log = simulate(params, horizon, seed=7, burn_in=burn_in)
    times, streams = reference_thinning(params, horizon, 7, burn_in)
    assert log.times.size == times.size > 20
    np.testing.assert_allclose(log.times, times, rtol=1e-12)
    np.testing.assert_array_equal(log.streams, streams)


def test_bit_identical_rerun():
    a = simulate(SYM, 3600.0, seed=123)
    b = simulate(SYM, 3600.0, seed=123)
    assert a.times.tobytes() == b.times.tobytes()
    assert a.streams.tobytes() == b.streams.tobytes()
    c = simulate(SYM, 3600.0, seed=124)
    assert c.times.size != a.times.size or not np.array_equal(c.times, a.times)


def test_log_shape():
    log = simulate(SYM, 1000.0, seed=1)
    assert log.n_streams == 4 and log.horizon == 1000.0
    assert np.all(np.diff(log.times) >= 0)
    assert log.times.min() >= 0 and log.times.max() <= 1000.0
    assert set(np.unique(log.streams)) <= {1, 2, 3, 4}
    assert log.meta["burn_in"] == pytest.approx(default_burn_in(SYM))


def test_default_burn_in_univariate():
    assert default_burn_in(DEFAULT) == pytest.approx(20 / (0.11 - 0.023))


def test_input_validation():
    with pytest.raises(UnstableParametersError):
        simulate(UnivariateParams.from_values(0.01, 0.2, 0.1), 10.0)
    with pytest.raises(ModelError):
        simulate(DEFAULT, 0.0)
    with pytest.raises(ModelError):
        simulate(DEFAULT, 10.0, burn_in=-1.0)
    with pytest.raises(ModelError):
        simulate(DEFAULT, 10.0, fixed_bound=0.01)


def test_fixed_bound_violation_detected():
    with pytest.raises(SimulationError):
        simulate(DEFAULT, 1e5, seed=0, fixed_bound=0.033)


def test_fixed_bound_generous_agrees_in_law():
    log = simulate(DEFAULT, 2e5, seed=3, fixed_bound=5.0)
    assert log.times.size / 2e5 / 2 == pytest.approx(0.020230, rel=0.05)


def test_poisson_counts():
    p = UnivariateParams.from_values(0.016, 0.0, 0.11)
    log = simulate(p, 1e6, seed=11)
    n1 = int(np.sum(log.streams == 1))
    assert abs(n1 - 16000) < 3 * math.sqrt(16000)


def test_mean_rate_over_seeds():
    lbar = 0.016 * 0.11 / (0.11 - 0.023)
    rates = np.array([np.sum(log.streams == 1) / 1e6
                      for log in simulate_days(DEFAULT, 1e6, 20, seed=5)])
    se = rates.std(ddof=1) / np.sqrt(rates.size)
    assert abs(rates.mean() - lbar) < 3 * se
    assert rates.mean() == pytest.approx(0.020230, rel=0.01)


def test_bivariate_mean_rates():
    p = BivariateParams.from_values(0.01, 0.02, 0.03, 0.02, 0.01, 0.04, 0.2)
    log = simulate(p, 5e5, seed=2)
    counts = log.counts() / 5e5
    np.testing.assert_allclose(counts, mean_intensities(p), rtol=0.05)


def test_price_symmetry():
    finals = []
    for log in simulate_days(DEFAULT, 7200.0, 200, seed=9):
        finals.append(np.sum(log.streams == 1) - np.sum(log.streams == 2))
    finals = np.asarray(finals, dtype=float)
    assert abs(finals.mean()) < 3 * finals.std(ddof=1) / np.sqrt(finals.size)


def test_simulate_days_jobs_identical():
    a = simulate_days(DEFAULT, 3600.0, 6, seed=4, jobs=1)
    b = simulate_days(DEFAULT, 3600.0, 6, seed=4, jobs=3)
    for x, y in zip(a, b):
        assert x.times.tobytes() == y.times.tobytes()
    assert len({x.times.size for x in a}) > 1


def test_burn_in_reaches_stationarity():
    p = UnivariateParams.from_values(0.05, 0.09, 0.1)
    lbar = float(mean_intensities(p)[0])

    def early_rate(burn_in):
        logs = simulate_days(p, 5.0, 3000, seed=21, burn_in=burn_in)
        counts = np.array([np.sum(log.streams == 1) for log in logs]) / 5.0
        return counts.mean(), counts.std(ddof=1) / np.sqrt(counts.size)

    warm, se = early_rate(None)
    cold, _ = early_rate(0.0)
    assert abs(warm - lbar) < 3 * se
    assert cold < lbar - 3 * se


def test_csv_roundtrip(tmp_path):
    log = simulate(SYM, 2000.0, seed=8)
    write_event_log_csv(log, tmp_path / "day.csv")
    assert (tmp_path / "day.json").exists()
    back = read_event_log_csv(tmp_path / "day.csv")
    assert back.horizon == log.horizon and back.n_streams == 4
    np.testing.assert_array_equal(back.times, log.times)
    np.testing.assert_array_equal(back.streams, log.streams)
    assert (tmp_path / "day.csv").read_text().splitlines()[0] == "time,stream"


def test_csv_without_sidecar(tmp_path):
    (tmp_path / "x.csv").write_text("time,stream\n1.5,1\n2.5,2\n")
    with pytest.raises(ModelError):
        read_event_log_csv(tmp_path / "x.csv")
    log = read_event_log_csv(tmp_path / "x.csv", horizon=10.0)
    assert log.times.tolist() == [1.5, 2.5] and log.streams.tolist() == [1, 2]
