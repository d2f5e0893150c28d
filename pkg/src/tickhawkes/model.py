"""Parameter types, kernels, event logs and mean-intensity algebra.

Streams are numbered from 1.  In the univariate model stream 1 carries the
upward ticks and stream 2 the downward ticks of a single price; the bivariate
model adds streams 3 and 4 for the second asset.  Times are seconds and every
rate is expressed in s^-1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np


class ModelError(ValueError):
    """Invalid model parameters or inputs."""


class UnstableParametersError(ModelError):
    """Raised when an operation needs a stationary (stable) model."""


@dataclass(frozen=True)
class ExpKernel:
    """Causal exponential kernel ``alpha * exp(-beta * t)`` for ``t >= 0``."""

    alpha: float
    beta: float

    def __post_init__(self):
        alpha, beta = float(self.alpha), float(self.beta)
        if not np.isfinite(alpha) or alpha < 0:
            raise ModelError(f"kernel alpha must be finite and >= 0, got {self.alpha}")
        if not np.isfinite(beta) or beta <= 0:
            raise ModelError(f"kernel beta must be finite and > 0, got {self.beta}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def l1_norm(self) -> float:
        return self.alpha / self.beta

    def __call__(self, t):
        return kernel_eval(self, t)


ZERO_KERNEL = ExpKernel(0.0, 1.0)


def kernel_eval(k: ExpKernel, t):
    """Evaluate the kernel at ``t``; zero for negative arguments."""
    t_arr = np.asarray(t, dtype=float)
    out = np.where(t_arr >= 0, k.alpha * np.exp(-k.beta * np.maximum(t_arr, 0.0)), 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def _check_mu(name: str, value: float) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ModelError(f"{name} must be finite and > 0, got {value}")
    return value


@dataclass(frozen=True)
class UnivariateParams:
    """Up/down streams of one price, coupled only through the cross kernel.

    ``lambda_1(t) = mu + sum_{down events s < t} phi(t - s)`` and symmetrically
    for ``lambda_2``.  Stability (``alpha/beta < 1``) is not enforced here; use
    :func:`stability_check` or let the consuming operation refuse.
    """

    mu: float
    kernel: ExpKernel

    def __post_init__(self):
        object.__setattr__(self, "mu", _check_mu("mu", self.mu))
        if not isinstance(self.kernel, ExpKernel):
            raise ModelError("kernel must be an ExpKernel")

    @classmethod
    def from_values(cls, mu: float, alpha: float, beta: float) -> "UnivariateParams":
        return cls(mu, ExpKernel(alpha, beta))

    @property
    def alpha(self) -> float:
        return self.kernel.alpha

    @property
    def beta(self) -> float:
        return self.kernel.beta

    @property
    def n_streams(self) -> int:
        return 2

    def system(self):
        """Return ``(mu, alpha, beta)`` arrays of the equivalent 2-stream system.

        ``alpha[i, j]`` is the jump of ``lambda_i`` caused by an event of stream j.
        """
        mu = np.array([self.mu, self.mu])
        alpha = np.array([[0.0, self.alpha], [self.alpha, 0.0]])
        beta = np.full((2, 2), self.beta)
        return mu, alpha, beta

    def as_dict(self) -> dict:
        return {"model": "univariate", "mu": self.mu, "alpha": self.alpha, "beta": self.beta}


# Non-zero slots of the 4x4 kernel matrix, as (row, col, kernel name), 0-based.
PHI_PATTERN = (
    (0, 1, "k12"), (0, 2, "k13"),
    (1, 0, "k12"), (1, 3, "k13"),
    (2, 0, "k31"), (2, 3, "k34"),
    (3, 1, "k31"), (3, 2, "k34"),
)


@dataclass(frozen=True)
class BivariateParams:
    """Four streams (up/down of two assets) with the restricted kernel matrix.

    ``k12`` couples up and down moves within asset 1 (mean reversion), ``k34``
    does the same for asset 2.  ``k13`` lets asset-2 moves excite same-direction
    moves of asset 1 and ``k31`` the converse.  No other coupling exists.
    """

    mu1: float
    mu3: float
    k12: ExpKernel
    k13: ExpKernel = ZERO_KERNEL
    k31: ExpKernel = ZERO_KERNEL
    k34: ExpKernel = None

    def __post_init__(self):
        object.__setattr__(self, "mu1", _check_mu("mu1", self.mu1))
        object.__setattr__(self, "mu3", _check_mu("mu3", self.mu3))
        if self.k34 is None:
            object.__setattr__(self, "k34", self.k12)
        for name in ("k12", "k13", "k31", "k34"):
            if not isinstance(getattr(self, name), ExpKernel):
                raise ModelError(f"{name} must be an ExpKernel")

    @classmethod
    def symmetric(cls, mu: float, alpha12: float, alpha13: float, beta: float) -> "BivariateParams":
        """Fully symmetric model: ``phi12 = phi34``, ``phi13 = phi31``, ``mu1 = mu3``."""
        k12 = ExpKernel(alpha12, beta)
        k13 = ExpKernel(alpha13, beta)
        return cls(mu, mu, k12, k13, k13, k12)

    @classmethod
    def from_values(cls, mu1, mu3, alpha12, alpha13, alpha31, alpha34, beta) -> "BivariateParams":
        return cls(mu1, mu3, ExpKernel(alpha12, beta), ExpKernel(alpha13, beta),
                   ExpKernel(alpha31, beta), ExpKernel(alpha34, beta))

    @classmethod
    def from_matrix(cls, mu, alpha, beta) -> "BivariateParams":
        """Build from a 4-vector of baselines and 4x4 ``alpha``/``beta`` matrices.

        Raises if any kernel sits outside the allowed zero pattern or if the
        repeated slots disagree (e.g. ``phi21 != phi12``).
        """
        mu = np.asarray(mu, dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        beta = np.broadcast_to(np.asarray(beta, dtype=float), (4, 4))
        if mu.shape != (4,) or alpha.shape != (4, 4):
            raise ModelError("expected mu of shape (4,) and alpha of shape (4, 4)")
        if mu[0] != mu[1] or mu[2] != mu[3]:
            raise ModelError("baselines must satisfy mu1 == mu2 and mu3 == mu4")
        allowed = np.zeros((4, 4), dtype=bool)
        for i, j, _ in PHI_PATTERN:
            allowed[i, j] = True
        bad = np.argwhere((alpha != 0) & ~allowed)
        if bad.size:
            i, j = bad[0]
            raise ModelError(f"kernel phi_{i + 1}{j + 1} is outside the allowed coupling pattern")
        kernels = {}
        for i, j, name in PHI_PATTERN:
            k = ExpKernel(alpha[i, j], beta[i, j])
            if name in kernels and kernels[name] != k:
                raise ModelError(f"inconsistent entries for {name} at phi_{i + 1}{j + 1}")
            kernels[name] = k
        return cls(mu[0], mu[2], **kernels)

    @property
    def n_streams(self) -> int:
        return 4

    @property
    def kernels(self) -> dict:
        return {"k12": self.k12, "k13": self.k13, "k31": self.k31, "k34": self.k34}

    def system(self):
        mu = np.array([self.mu1, self.mu1, self.mu3, self.mu3])
        alpha = np.zeros((4, 4))
        beta = np.ones((4, 4))
        for i, j, name in PHI_PATTERN:
            k = getattr(self, name)
            alpha[i, j] = k.alpha
            beta[i, j] = k.beta
        return mu, alpha, beta

    def gamma_matrix(self) -> np.ndarray:
        _, alpha, beta = self.system()
        return alpha / beta

    def is_symmetric(self, rtol: float = 0.0) -> bool:
        return (np.isclose(self.mu1, self.mu3, rtol=rtol, atol=0)
                and _close_kernel(self.k12, self.k34, rtol)
                and _close_kernel(self.k13, self.k31, rtol))

    def as_dict(self) -> dict:
        out = {"model": "bivariate", "mu1": self.mu1, "mu3": self.mu3}
        for name, k in self.kernels.items():
            out[f"alpha{name[1:]}"] = k.alpha
            out[f"beta{name[1:]}"] = k.beta
        return out


def _close_kernel(a: ExpKernel, b: ExpKernel, rtol: float) -> bool:
    return bool(np.isclose(a.alpha, b.alpha, rtol=rtol, atol=0)
                and np.isclose(a.beta, b.beta, rtol=rtol, atol=0))


Params = Union[UnivariateParams, BivariateParams]


def params_from_dict(d: dict) -> Params:
    """Inverse of ``as_dict`` (missing betas default to a shared ``beta``)."""
    model = d.get("model", "univariate")
    if model == "univariate":
        return UnivariateParams.from_values(d["mu"], d["alpha"], d["beta"])
    if model != "bivariate":
        raise ModelError(f"unknown model {model!r}")
    shared = d.get("beta")
    kernels = {}
    for suffix in ("12", "13", "31", "34"):
        beta = d.get(f"beta{suffix}", shared)
        if beta is None:
            raise ModelError(f"missing beta{suffix}")
        kernels[f"k{suffix}"] = ExpKernel(d.get(f"alpha{suffix}", 0.0), beta)
    mu1 = d.get("mu1", d.get("mu"))
    mu3 = d.get("mu3", mu1)
    return BivariateParams(mu1, mu3, **kernels)


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    spectral_radius: float


def spectral_radius(params: Params) -> float:
    if isinstance(params, UnivariateParams):
        return params.kernel.l1_norm
    return float(np.max(np.abs(np.linalg.eigvals(params.gamma_matrix()))))


def stability_check(params: Params) -> StabilityReport:
    radius = spectral_radius(params)
    return StabilityReport(stable=bool(radius < 1.0), spectral_radius=radius)


def require_stable(params: Params) -> float:
    radius = spectral_radius(params)
    if not radius < 1.0:
        raise UnstableParametersError(f"spectral radius {radius:.6g} >= 1: no stationary version exists")
    return radius


def mean_intensities(params: Params) -> np.ndarray:
    """Stationary mean intensities ``(Id - Gamma)^-1 mu``, one entry per stream."""
    require_stable(params)
    mu, alpha, beta = params.system()
    gamma = alpha / beta
    lam = np.linalg.solve(np.eye(len(mu)) - gamma, mu)
    # Up and down streams of an asset have equal rates; average out solver rounding.
    return np.repeat(lam.reshape(-1, 2).mean(axis=1), 2)


def mean_intensities_explicit(params: BivariateParams) -> np.ndarray:
    """Closed-form rational solution of the 4-stream mean-intensity system."""
    require_stable(params)
    g12, g13 = params.k12.l1_norm, params.k13.l1_norm
    g31, g34 = params.k31.l1_norm, params.k34.l1_norm
    mu1, mu3 = params.mu1, params.mu3
    den = g12 * g34 - g12 - g34 + 1 - g31 * g13
    lam1 = -(mu1 * g34 - mu1 - g13 * mu3) / den
    lam3 = (-mu3 * g12 + g31 * mu1 + mu3) / den
    return np.array([lam1, lam1, lam3, lam3])


@dataclass(frozen=True, eq=False)
class EventLog:
    """Time-sorted marked events on ``[0, horizon]``.

    ``streams`` holds 1-based stream indices.  Events sharing a timestamp are
    kept in their input order.
    """

    times: np.ndarray
    streams: np.ndarray
    horizon: float
    n_streams: int = 2
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=np.float64)
        streams = np.ascontiguousarray(self.streams, dtype=np.int64)
        horizon = float(self.horizon)
        if times.ndim != 1 or times.shape != streams.shape:
            raise ModelError("times and streams must be 1-d arrays of equal length")
        if self.n_streams not in (2, 4):
            raise ModelError(f"n_streams must be 2 or 4, got {self.n_streams}")
        if not np.isfinite(horizon) or horizon <= 0:
            raise ModelError(f"horizon must be > 0, got {self.horizon}")
        if times.size:
            if np.any(np.diff(times) < 0):
                raise ModelError("event times must be non-decreasing")
            if times[0] < 0 or times[-1] > horizon:
                raise ModelError("event times must lie in [0, horizon]")
            if streams.min() < 1 or streams.max() > self.n_streams:
                raise ModelError(f"stream indices must be in 1..{self.n_streams}")
        times.flags.writeable = False
        streams.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "streams", streams)
        object.__setattr__(self, "horizon", horizon)

    def __len__(self) -> int:
        return int(self.times.size)

    def times_of(self, stream: int) -> np.ndarray:
        return self.times[self.streams == stream]

    def counts(self) -> np.ndarray:
        return np.bincount(self.streams, minlength=self.n_streams + 1)[1:]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventLog):
            return NotImplemented
        return (self.horizon == other.horizon and self.n_streams == other.n_streams
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.streams, other.streams))


def intensity_at(params: Params, log: EventLog, t: float, stream: int) -> float:
    """Left-limit intensity ``lambda_stream(t-)``; events at exactly ``t`` are excluded."""
    if t < 0:
        raise ModelError("t must be >= 0")
    if not 1 <= stream <= params.n_streams:
        raise ModelError(f"stream must be in 1..{params.n_streams}, got {stream}")
    if log.n_streams > params.n_streams:
        raise ModelError("event log has more streams than the model")
    mu, alpha, beta = params.system()
    i = stream - 1
    past = log.times < t
    lam = mu[i]
    for j in range(params.n_streams):
        if alpha[i, j] == 0:
            continue
        s = log.times[past & (log.streams == j + 1)]
        lam += alpha[i, j] * np.exp(-beta[i, j] * (t - s)).sum()
    return float(lam)


@dataclass(frozen=True, eq=False)
class PricePath:
    """Right-continuous unit-jump price path(s) derived from an event log.

    Asset ``k`` (0-based) moves up on stream ``2k+1`` and down on ``2k+2``.
    """

    log: EventLog

    @property
    def horizon(self) -> float:
        return self.log.horizon

    @property
    def n_assets(self) -> int:
        return self.log.n_streams // 2

    def jumps(self, asset: int = 0):
        """Return jump times and the +-1 sizes of one asset."""
        up, down = 2 * asset + 1, 2 * asset + 2
        mask = (self.log.streams == up) | (self.log.streams == down)
        times = self.log.times[mask]
        sizes = np.where(self.log.streams[mask] == up, 1, -1)
        return times, sizes

    def value_at(self, t, asset: int = 0):
        """``X_k(t)`` with ``X_k(0) = 0`` (events at 0 count, path is right-continuous)."""
        if not 0 <= asset < self.n_assets:
            raise ModelError(f"asset must be in 0..{self.n_assets - 1}")
        times, sizes = self.jumps(asset)
        cum = np.concatenate(([0], np.cumsum(sizes)))
        idx = np.searchsorted(times, np.asarray(t, dtype=float), side="right")
        out = cum[idx]
        if np.ndim(out) == 0:
            return int(out)
        return out


def price_path(log: EventLog) -> PricePath:
    return PricePath(log)
