"""Model-free estimators on price paths: signature plots, cross-covariances, Epps curves.

Paths are sampled at grid times by previous-tick interpolation (the path is
right-continuous).  Every estimator normalizes by the number of increments it
actually uses, so ``Chat(tau) = sum |dX|^2 / (N_tau * tau)`` with
``N_tau = floor(T / tau)``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .curves import Curve, CurveError
from .model import EventLog, ModelError, PricePath, price_path


def _as_path(p) -> PricePath:
    if isinstance(p, EventLog):
        return price_path(p)
    return p


def sample_increments(path, tau: float, lag: float = 0.0, asset: int = 0,
                      n: int | None = None) -> np.ndarray:
    """``X(t0 + tau) - X(t0)`` on ``t0 = n*tau + lag``, ``n = 0 .. floor(T/tau) - 1``.

    ``n`` truncates the grid; increments reaching past the horizon are an error.
    """
    path = _as_path(path)
    if not tau > 0:
        raise ModelError("tau must be > 0")
    if tau > path.horizon:
        raise ModelError(f"tau={tau} exceeds the horizon {path.horizon}")
    count = int(np.floor(path.horizon / tau)) if n is None else int(n)
    starts = np.arange(count) * tau + lag
    if count and (starts[0] < 0 or starts[-1] + tau > path.horizon * (1 + 1e-12)):
        raise ModelError("increment grid leaves [0, horizon]")
    grid = np.append(starts, starts[-1] + tau) if count else np.array([lag])
    x = path.value_at(grid, asset)
    return np.diff(x).astype(float)


def _lagged_pair(path1, asset1, path2, asset2, tau, lag):
    """Increment pairs ``(dX1(n tau), dX2(n tau + lag))`` that fit in the common horizon."""
    horizon = path1.horizon
    if lag < 0:
        raise ModelError("lag must be >= 0")
    count = int(np.floor((horizon - lag) / tau + 1e-9))
    if count < 1:
        raise ModelError(f"no increments of size {tau} at lag {lag} fit in the horizon")
    d1 = sample_increments(path1, tau, 0.0, asset1, n=count)
    d2 = sample_increments(path2, tau, lag, asset2, n=count)
    return d1, d2


def realized_variance(path, tau: float, asset: int = 0) -> float:
    d = sample_increments(path, tau, asset=asset)
    return float(np.dot(d, d) / (d.size * tau))


def realized_signature_plot(path, taus: Sequence[float], asset: int = 0) -> Curve:
    path = _as_path(path)
    taus = np.asarray(taus, dtype=float)
    if np.any(taus <= 0):
        raise ModelError("tau must be > 0")
    values = [realized_variance(path, t, asset) for t in taus]
    return Curve(taus, values, name="signature")


def _split_assets(paths):
    """Accept a 4-stream path/log, or a pair of 2-stream ones; return (p1, a1, p2, a2)."""
    if isinstance(paths, (EventLog, PricePath)):
        p = _as_path(paths)
        if p.n_assets != 2:
            raise ModelError("a single path must carry two assets (4 streams)")
        return p, 0, p, 1
    p1, p2 = (_as_path(p) for p in paths)
    if p1.horizon != p2.horizon:
        raise ModelError(f"misaligned horizons {p1.horizon} and {p2.horizon}")
    return p1, 0, p2, 0


def realized_cross_covariance(path1, path2=None, tau: float = 1.0, lag: float = 0.0) -> float:
    """``(1/(N tau)) sum dX_1(n tau) dX_2(n tau + lag)``.

    With ``path2=None``, ``path1`` must be a two-asset (4-stream) path and the
    covariance is between its assets.
    """
    if not tau > 0:
        raise ModelError("tau must be > 0")
    p1, a1, p2, a2 = _split_assets(path1 if path2 is None else (path1, path2))
    d1, d2 = _lagged_pair(p1, a1, p2, a2, tau, lag)
    return float(np.dot(d1, d2) / (d1.size * tau))


def realized_covariance_matrix(paths, tau: float, lag: float = 0.0) -> np.ndarray:
    """2x2 matrix ``Chat_kl(tau, lag)`` (asset ``k`` leading by ``lag``)."""
    p1, a1, p2, a2 = _split_assets(paths)
    legs = ((p1, a1), (p2, a2))
    out = np.empty((2, 2))
    for k in range(2):
        for l in range(2):
            d1, d2 = _lagged_pair(legs[k][0], legs[k][1], legs[l][0], legs[l][1], tau, lag)
            out[k, l] = np.dot(d1, d2) / (d1.size * tau)
    return out


def realized_leadlag(paths, tau: float) -> float:
    """``Chat_12(tau, tau) - Chat_21(tau, tau)``; positive when asset 1 leads.

    Like every estimator here this is per unit time, so it estimates
    ``leadlag_delta(c, tau) / tau``.
    """
    m = realized_covariance_matrix(paths, tau, lag=tau)
    return float(m[0, 1] - m[1, 0])


def _day_moments(paths_per_day, taus):
    """Per-day (C11, C22, C12) at lag 0: array of shape (days, taus, 3)."""
    out = np.empty((len(paths_per_day), len(taus), 3))
    for d, paths in enumerate(paths_per_day):
        for j, tau in enumerate(taus):
            m = realized_covariance_matrix(paths, tau)
            out[d, j] = m[0, 0], m[1, 1], m[0, 1]
    return out


def _epps_from_moments(m):
    return m[..., 2] / np.sqrt(m[..., 0] * m[..., 1])


def realized_epps(paths, taus: Sequence[float]) -> Curve:
    """Epps curve ``rho(tau) = C12 / sqrt(C11 C22)``.

    ``paths`` is one two-asset path (no standard error) or a list of days, each
    a two-asset path or a pair of single-asset paths.  Moments are averaged over
    days before forming the ratio; the standard error is the delete-one-day
    jackknife.
    """
    taus = np.asarray(taus, dtype=float)
    if isinstance(paths, (EventLog, PricePath)):
        m = _day_moments([paths], taus)[0]
        return Curve(taus, _epps_from_moments(m), name="epps")
    days = list(paths)
    m = _day_moments(days, taus)
    rho = _epps_from_moments(m.mean(axis=0))
    n = len(days)
    if n < 2:
        return Curve(taus, rho, np.zeros_like(rho), name="epps")
    total = m.sum(axis=0)
    loo = _epps_from_moments((total[None] - m) / (n - 1))
    se = np.sqrt((n - 1) / n * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))
    return Curve(taus, rho, se, name="epps")


def aggregate_days(curves: Sequence[Curve]) -> Curve:
    """Pointwise mean and standard error (``std / sqrt(n)``) across days."""
    curves = list(curves)
    if not curves:
        raise CurveError("no curves to aggregate")
    taus = curves[0].taus
    for c in curves[1:]:
        if c.taus.shape != taus.shape or not np.allclose(c.taus, taus, rtol=1e-12, atol=0):
            raise CurveError("all curves must share the same tau grid")
    values = np.vstack([c.values for c in curves])
    mean = values.mean(axis=0)
    if len(curves) == 1:
        se = np.zeros_like(mean)
    else:
        se = values.std(axis=0, ddof=1) / np.sqrt(len(curves))
    return Curve(taus, mean, se, name=curves[0].name)


def daily_signature_plot(logs: Sequence[EventLog], taus, asset: int = 0) -> Curve:
    """Signature plot per day, then :func:`aggregate_days`."""
    return aggregate_days([realized_signature_plot(log, taus, asset) for log in logs])


def daily_cross_covariance(logs: Sequence[EventLog], taus) -> Curve:
    """Day-averaged ``Chat_12(tau)`` of two-asset logs, with standard error."""
    taus = np.asarray(taus, dtype=float)
    curves = []
    for log in logs:
        vals = [realized_covariance_matrix(log, t)[0, 1] for t in taus]
        curves.append(Curve(taus, vals, name="cross"))
    return aggregate_days(curves)
