"""Calibration by exact maximum likelihood and by multiscale regression.

Both estimators work in unconstrained coordinates ``z``:

* every baseline is ``mu = exp(u)`` and the shared decay is ``beta = exp(w)``;
* the kernel norms are ``Gamma = G / (1 + r(G))`` with ``G = exp(v)`` and
  ``r`` the spectral radius of the norm matrix built from ``G``.

``r`` is homogeneous of degree one, so the fitted norm matrix has spectral
radius ``r(G) / (1 + r(G)) < 1``: stability holds for every ``z``.  With one
kernel this is the logistic map ``Gamma = sigmoid(v)``.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np
from scipy import optimize

from .analytics import covariance_at_scale, covariance_coefficients, signature_plot_1d
from .curves import Curve
from .model import (
    PHI_PATTERN,
    BivariateParams,
    EventLog,
    ExpKernel,
    ModelError,
    Params,
    UnivariateParams,
    ZERO_KERNEL,
    params_from_dict,
    spectral_radius,
)


class EstimationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Log-likelihood
# ---------------------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _loglik_core(times, streams, horizon, mu, src, dst, alpha, beta):
    """Per-stream log-likelihoods and the gradient of their sum w.r.t. per-stream ``mu`` and per-kernel ``alpha``/``beta``.

    ``S_k`` holds ``sum exp(-beta_k (t - t_j))`` over strictly earlier source
    events and ``D_k`` its derivative in ``beta_k``.  Events sharing a
    timestamp are evaluated before any of them is added to the state.
    """
    n = times.shape[0]
    n_streams = mu.shape[0]
    n_kernels = alpha.shape[0]
    s_acc = np.zeros(n_kernels)
    d_acc = np.zeros(n_kernels)
    g_mu = np.zeros(n_streams)
    g_alpha = np.zeros(n_kernels)
    g_beta = np.zeros(n_kernels)
    per_stream = np.zeros(n_streams)
    last = 0.0
    i = 0
    while i < n:
        t = times[i]
        w = t - last
        if w > 0.0:
            for k in range(n_kernels):
                e = np.exp(-beta[k] * w)
                d_acc[k] = e * (d_acc[k] - w * s_acc[k])
                s_acc[k] = e * s_acc[k]
            last = t
        j = i
        while j < n and times[j] == t:
            j += 1
        for e_idx in range(i, j):
            s = streams[e_idx]
            lam = mu[s]
            for k in range(n_kernels):
                if dst[k] == s:
                    lam += alpha[k] * s_acc[k]
            if not lam > 0.0:
                per_stream[s] = -np.inf
                return per_stream, g_mu, g_alpha, g_beta
            per_stream[s] += np.log(lam)
            g_mu[s] += 1.0 / lam
            for k in range(n_kernels):
                if dst[k] == s:
                    g_alpha[k] += s_acc[k] / lam
                    g_beta[k] += alpha[k] * d_acc[k] / lam
        for e_idx in range(i, j):
            s = streams[e_idx]
            for k in range(n_kernels):
                if src[k] == s:
                    s_acc[k] += 1.0
        i = j
    # Compensator terms.
    for s in range(n_streams):
        per_stream[s] -= (mu[s] - 1.0) * horizon
        g_mu[s] -= horizon
    for k in range(n_kernels):
        total = 0.0
        dtotal = 0.0
        for e_idx in range(n):
            if streams[e_idx] == src[k]:
                r = horizon - times[e_idx]
                ex = np.exp(-beta[k] * r)
                total += 1.0 - ex
                dtotal += r * ex
        per_stream[dst[k]] -= alpha[k] / beta[k] * total
        g_alpha[k] -= total / beta[k]
        g_beta[k] -= -alpha[k] / beta[k] ** 2 * total + alpha[k] / beta[k] * dtotal
    return per_stream, g_mu, g_alpha, g_beta


def _kernel_slots(n_streams: int):
    """(dst, src) slots of every kernel of the model family, including zero ones."""
    if n_streams == 2:
        return np.array([0, 1]), np.array([1, 0])
    dst = np.array([i for i, _, _ in PHI_PATTERN])
    src = np.array([j for _, j, _ in PHI_PATTERN])
    return dst, src


def _check_log(params: Params, log: EventLog, horizon: Optional[float]) -> float:
    if log.n_streams != params.n_streams:
        raise ModelError(f"log has {log.n_streams} streams, model expects {params.n_streams}")
    horizon = log.horizon if horizon is None else float(horizon)
    if len(log) and log.times[-1] > horizon:
        raise ModelError("events beyond the horizon")
    return horizon


def log_likelihood(params: Params, log: EventLog, horizon: Optional[float] = None,
                   per_stream: bool = False):
    """Sum over streams of ``L_i = sum log lambda_i(t-) - (mu_i - 1) T - compensator``.

    ``per_stream=True`` returns the array of ``L_i`` instead.  The value is
    ``-inf`` when an event falls where its intensity is zero.
    """
    horizon = _check_log(params, log, horizon)
    mu, alpha, beta = params.system()
    dst, src = _kernel_slots(params.n_streams)
    values, *_ = _loglik_core(log.times, log.streams - 1, horizon, mu.astype(float),
                              src, dst, alpha[dst, src].copy(), beta[dst, src].copy())
    if per_stream:
        return values
    return float(values.sum())


# ---------------------------------------------------------------------------
# Parameter layouts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Layout:
    """Map between a flat parameter vector ``(mus..., alphas..., beta)`` and a model.

    ``gamma_slots`` names the kernel norm entries that form the 2x2 "sum"
    block ``[[g12, g13], [g31, g34]]`` whose spectral radius is that of the full
    norm matrix.
    """

    name: str
    n_streams: int
    mu_names: tuple
    alpha_names: tuple
    stream_mu: np.ndarray          # stream -> mu index
    kernel_alpha: np.ndarray       # kernel slot -> alpha index
    gamma_slots: tuple             # for each of g12, g13, g31, g34: alpha index or -1

    @property
    def names(self):
        return self.mu_names + self.alpha_names + ("beta",)

    @property
    def size(self) -> int:
        return len(self.names)

    def split(self, theta):
        m, a = len(self.mu_names), len(self.alpha_names)
        return theta[:m], theta[m:m + a], theta[m + a]

    def radius(self, gam):
        """Spectral radius of the norm matrix and its gradient w.r.t. ``gam``."""
        g = [gam[i] if i >= 0 else 0.0 for i in self.gamma_slots]
        g12, g13, g31, g34 = g
        if self.n_streams == 2:
            return g12, np.ones(1)
        d = 0.5 * (g12 - g34)
        s = np.sqrt(d * d + g13 * g31)
        r = 0.5 * (g12 + g34) + s
        inv = 0.5 / s if s > 0 else 0.0
        partial = (0.5 + d * inv, g31 * inv, g13 * inv, 0.5 - d * inv)
        grad = np.zeros(len(gam))
        for slot, p in zip(self.gamma_slots, partial):
            if slot >= 0:
                grad[slot] += p
        return r, grad

    def to_params(self, theta) -> Params:
        mus, alphas, beta = self.split(np.asarray(theta, dtype=float))
        if self.name == "univariate":
            return UnivariateParams.from_values(mus[0], alphas[0], beta)
        if self.name == "symmetric":
            return BivariateParams.symmetric(mus[0], alphas[0], alphas[1], beta)
        return BivariateParams.from_values(mus[0], mus[1], alphas[0], alphas[1],
                                           alphas[2], alphas[3], beta)

    def from_params(self, p: Params) -> np.ndarray:
        if self.name == "univariate":
            if not isinstance(p, UnivariateParams):
                raise EstimationError("expected univariate parameters")
            return np.array([p.mu, p.alpha, p.beta])
        if not isinstance(p, BivariateParams):
            raise EstimationError("expected bivariate parameters")
        betas = {k.beta for k in p.kernels.values() if k.alpha > 0} or {p.k12.beta}
        if len(betas) != 1:
            raise EstimationError("fitting requires one decay rate shared by all kernels")
        beta = betas.pop()
        if self.name == "symmetric":
            return np.array([p.mu1, p.k12.alpha, p.k13.alpha, beta])
        return np.array([p.mu1, p.mu3, p.k12.alpha, p.k13.alpha, p.k31.alpha,
                         p.k34.alpha, beta])

    def kernel_arrays(self, theta):
        mus, alphas, beta = self.split(theta)
        mu = mus[self.stream_mu]
        alpha = alphas[self.kernel_alpha]
        return mu, alpha, np.full(alpha.size, beta)

    # -- unconstrained coordinates ------------------------------------------
    def to_theta(self, z):
        """``theta(z)`` and the Jacobian ``d theta / d z``."""
        z = np.asarray(z, dtype=float)
        m, a = len(self.mu_names), len(self.alpha_names)
        mus = np.exp(z[:m])
        graw = np.exp(z[m:m + a])
        beta = np.exp(z[-1])
        r, dr = self.radius(graw)
        gam = graw / (1.0 + r)
        theta = np.concatenate((mus, gam * beta, [beta]))
        jac = np.zeros((self.size, self.size))
        jac[:m, :m] = np.diag(mus)
        dgam = (np.diag(graw) / (1.0 + r)
                - np.outer(gam, dr * graw) / (1.0 + r))
        jac[m:m + a, m:m + a] = beta * dgam
        jac[m:m + a, -1] = gam * beta
        jac[-1, -1] = beta
        return theta, jac

    def to_z(self, theta):
        mus, alphas, beta = self.split(np.asarray(theta, dtype=float))
        if np.any(mus <= 0) or beta <= 0:
            raise EstimationError("baselines and decay must be positive")
        gam = np.maximum(alphas / beta, 1e-12)
        rho, _ = self.radius(gam)
        if rho >= 1:
            raise EstimationError("initial parameters are not stable")
        # gam = graw / (1 + r(graw)) with r homogeneous  =>  graw = gam / (1 - r(gam))
        graw = gam / (1.0 - rho)
        return np.concatenate((np.log(mus), np.log(graw), [np.log(beta)]))


def _make_layout(model: str) -> _Layout:
    if model == "univariate":
        return _Layout("univariate", 2, ("mu",), ("alpha",),
                       np.array([0, 0]), np.array([0, 0]), (0, -1, -1, -1))
    if model == "symmetric":
        names = {"k12": 0, "k34": 0, "k13": 1, "k31": 1}
        return _Layout("symmetric", 4, ("mu",), ("alpha12", "alpha13"),
                       np.array([0, 0, 0, 0]),
                       np.array([names[n] for _, _, n in PHI_PATTERN]), (0, 1, 1, 0))
    if model == "general":
        names = {"k12": 0, "k13": 1, "k31": 2, "k34": 3}
        return _Layout("general", 4, ("mu1", "mu3"),
                       ("alpha12", "alpha13", "alpha31", "alpha34"),
                       np.array([0, 0, 1, 1]),
                       np.array([names[n] for _, _, n in PHI_PATTERN]), (0, 1, 2, 3))
    raise EstimationError(f"unknown model {model!r}; expected univariate, symmetric or general")


def _loglik_theta(layout: _Layout, theta, log: EventLog, horizon: float):
    """Log-likelihood and gradient in the flat parameter vector."""
    mu, alpha, beta = layout.kernel_arrays(theta)
    dst, src = _kernel_slots(layout.n_streams)
    values, g_mu, g_alpha, g_beta = _loglik_core(log.times, log.streams - 1, horizon,
                                                mu, src, dst, alpha, beta)
    grad = np.zeros(layout.size)
    m, a = len(layout.mu_names), len(layout.alpha_names)
    np.add.at(grad, layout.stream_mu, g_mu)
    np.add.at(grad, m + layout.kernel_alpha, g_alpha)
    grad[-1] = g_beta.sum()
    return float(values.sum()), grad


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

@dataclass
class FitResult:
    params: Params
    objective: float
    converged: bool
    iterations: int
    constraint_margin: float
    method: str
    model: str
    grad_norm: float = float("nan")
    n_starts: int = 1
    at_boundary: tuple = ()
    message: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "model": self.model,
            "params": self.params.as_dict(),
            "objective": self.objective,
            "converged": self.converged,
            "iterations": self.iterations,
            "constraint_margin": self.constraint_margin,
            "grad_norm": self.grad_norm,
            "n_starts": self.n_starts,
            "at_boundary": list(self.at_boundary),
            "message": self.message,
            "extra": self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        return cls(params=params_from_dict(d["params"]), objective=d["objective"],
                   converged=d["converged"], iterations=d["iterations"],
                   constraint_margin=d["constraint_margin"], method=d["method"],
                   model=d["model"], grad_norm=d.get("grad_norm", float("nan")),
                   n_starts=d.get("n_starts", 1), at_boundary=tuple(d.get("at_boundary", ())),
                   message=d.get("message", ""), extra=d.get("extra", {}))


# A kernel whose jump is below this fraction of the smallest baseline is
# practically absent (the data look Poisson along that coupling).
_NEGLIGIBLE_JUMP = 0.05


def _boundary_flags(layout: _Layout, theta, horizon: Optional[float]) -> tuple:
    """Names of parameters sitting at (or drifting to) the edge of the parameter space."""
    mus, alphas, beta = layout.split(theta)
    flags = [name for name, a in zip(layout.alpha_names, alphas)
             if a < _NEGLIGIBLE_JUMP * mus.min()]
    if horizon is not None and 1.0 / beta > 0.1 * horizon:
        flags.append("beta")
    return tuple(flags)


def _finish(layout, z, objective, converged, iterations, method, grad_norm, n_starts,
            message, extra=None, horizon=None) -> FitResult:
    theta, _ = layout.to_theta(z)
    params = layout.to_params(theta)
    return FitResult(params=params, objective=float(objective), converged=bool(converged),
                     iterations=int(iterations),
                     constraint_margin=float(1.0 - spectral_radius(params)),
                     method=method, model=layout.name, grad_norm=float(grad_norm),
                     n_starts=n_starts, at_boundary=_boundary_flags(layout, theta, horizon),
                     message=message, extra=extra or {})


def _start_points(layout: _Layout, guess: np.ndarray, n_starts: int, seed) -> list:
    """First start is ``guess``; the rest jitter it log-uniformly by up to a factor e."""
    rng = np.random.default_rng(seed)
    z0 = layout.to_z(guess)
    starts = [z0]
    for _ in range(n_starts - 1):
        starts.append(z0 + rng.uniform(-1.0, 1.0, size=z0.size))
    return starts


def _run_starts(func, starts, jobs):
    if jobs <= 1 or len(starts) == 1:
        return [func(z) for z in starts]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, starts))


# ---------------------------------------------------------------------------
# Maximum likelihood
# ---------------------------------------------------------------------------

def _model_for(log: EventLog, model: Optional[str]) -> str:
    if model is None:
        return "univariate" if log.n_streams == 2 else "symmetric"
    expected = 2 if model == "univariate" else 4
    if log.n_streams != expected:
        raise EstimationError(f"model {model!r} needs a {expected}-stream log")
    return model


def _mle_guess(layout: _Layout, log: EventLog, horizon: float, x0: float = 0.3) -> np.ndarray:
    """Moment-based start: ``mu = rate (1 - x0)`` per stream, kernel memory ~ half a mean gap."""
    counts = log.counts().astype(float)
    rate = max(counts.sum() / horizon / log.n_streams, 1.0 / horizon)
    beta = 2.0 * rate * log.n_streams
    if layout.name == "univariate":
        return np.array([rate * (1 - x0), x0 * beta, beta])
    if layout.name == "symmetric":
        return np.array([rate * (1 - x0), 0.5 * x0 * beta, 0.5 * x0 * beta, beta])
    r1 = max(counts[:2].sum() / horizon / 2, 1.0 / horizon)
    r3 = max(counts[2:].sum() / horizon / 2, 1.0 / horizon)
    g = 0.5 * x0 * beta
    return np.array([r1 * (1 - x0), r3 * (1 - x0), g, g, g, g, beta])


def _newton_polish(fun_grad, z, max_steps=20, tol=1e-9):
    """Newton steps with a finite-difference Hessian of the analytic gradient.

    A step is kept only if it does not raise the objective beyond rounding;
    stops at ``|grad|_inf < tol``.
    """
    f, g = fun_grad(z)
    for _ in range(max_steps):
        if np.max(np.abs(g)) < tol:
            break
        h = 1e-6 * np.maximum(1.0, np.abs(z))
        hess = np.empty((z.size, z.size))
        for i in range(z.size):
            e = np.zeros_like(z)
            e[i] = h[i]
            hess[:, i] = (fun_grad(z + e)[1] - fun_grad(z - e)[1]) / (2 * h[i])
        hess = 0.5 * (hess + hess.T)
        try:
            step = np.linalg.solve(hess, g)
        except np.linalg.LinAlgError:
            break
        improved = False
        for scale in (1.0, 0.5, 0.25, 0.125):
            cand = z - scale * step
            fc, gc = fun_grad(cand)
            # Near the optimum the decrease drops below rounding; accept steps that
            # keep the objective within rounding and shrink the gradient.
            flat = fc <= f + 1e-12 * max(1.0, abs(f)) and np.max(np.abs(gc)) < np.max(np.abs(g))
            if np.isfinite(fc) and (fc <= f or flat):
                z, f, g = cand, fc, gc
                improved = True
                break
        if not improved:
            break
    return z, f, g


def fit_mle(log: EventLog, init: Optional[Params] = None, model: Optional[str] = None,
            n_starts: int = 8, seed=0, max_iter: int = 2000, jobs: int = 1,
            horizon: Optional[float] = None) -> FitResult:
    """Maximize the log-likelihood over stable parameters.

    ``model`` is ``"univariate"`` for 2-stream logs and ``"symmetric"`` (default)
    or ``"general"`` for 4-stream logs; all kernels share one decay rate.
    The reported ``objective`` is the maximized log-likelihood and ``grad_norm``
    the sup-norm of its gradient in the unconstrained coordinates.
    """
    if len(log) == 0:
        raise EstimationError("cannot fit an empty event log")
    layout = _make_layout(_model_for(log, model))
    horizon = log.horizon if horizon is None else float(horizon)
    scale = 1.0 / len(log)

    def fun_grad(z):
        theta, jac = layout.to_theta(z)
        value, grad = _loglik_theta(layout, theta, log, horizon)
        if not np.isfinite(value):
            return np.inf, np.zeros_like(z)
        return -value, -(jac.T @ grad)

    def scaled(z):
        f, g = fun_grad(z)
        return f * scale, g * scale

    guess = layout.from_params(init) if init is not None else _mle_guess(layout, log, horizon)
    starts = _start_points(layout, guess, n_starts, seed)

    def run(z0):
        res = optimize.minimize(scaled, z0, jac=True, method="BFGS",
                                options={"maxiter": max_iter, "gtol": 1e-10})
        # BFGS never returns a point worse than its start; guard anyway.
        f0 = scaled(z0)[0]
        if not res.fun <= f0:
            return z0, f0, 0, False, "no improvement over start"
        return res.x, res.fun, res.nit, res.success, res.message

    runs = _run_starts(run, starts, jobs)
    best = min(range(len(runs)), key=lambda i: runs[i][1])
    z, _, nit, success, message = runs[best]
    z, f, g = _newton_polish(fun_grad, np.asarray(z, dtype=float))
    grad_norm = float(np.max(np.abs(g)))
    converged = bool(success) or grad_norm < 1e-6
    return _finish(layout, z, -f, converged, sum(r[2] for r in runs), "mle", grad_norm,
                   n_starts, str(message), {"start": int(best)}, horizon)


# ---------------------------------------------------------------------------
# Multiscale regression
# ---------------------------------------------------------------------------

def _univariate_guess(curve: Curve) -> np.ndarray:
    """Invert the signature-plot shape: ``V0 = C(tau_min)``, ``V_inf = C(tau_max)``."""
    v0 = float(curve.values[0])
    vinf = float(curve.values[-1])
    if not (v0 > 0 and vinf > 0):
        v0 = vinf = max(abs(float(np.mean(curve.values))), 1e-12)
    kappa = np.sqrt(min(vinf / v0, 0.999)) if vinf < v0 else 0.95
    x = min(max(1.0 / kappa - 1.0, 0.02), 0.9)
    mu = 0.5 * v0 * (1 - x)
    # Halfway between V0 and V_inf is reached near gamma * tau ~ 2.
    half = 0.5 * (v0 + vinf)
    idx = int(np.argmin(np.abs(curve.values - half)))
    gamma = 2.0 / float(curve.taus[idx])
    beta = gamma / (1 + x)
    return np.array([mu, x * beta, beta])


def _check_grid(n_points: int, n_params: int):
    if n_points < n_params:
        raise EstimationError(f"{n_points} grid points cannot identify {n_params} parameters")


def _scale_of(values) -> float:
    s = abs(float(np.mean(values)))
    if not s > 0:
        raise EstimationError("curve has zero mean; cannot normalize residuals")
    return s


_TAU_WEIGHTINGS = ("sqrt", "none", "stderr")


def _divisors(curve: Curve, level: float, tau_weighting: str) -> np.ndarray:
    """Per-point residual divisors.

    ``"sqrt"`` scales by ``sqrt(tau / tau_min)``: a realized variance built from
    ``T / tau`` increments has a standard error roughly proportional to
    ``sqrt(tau)``.  ``"stderr"`` divides by the curve's own standard errors.
    """
    if tau_weighting == "none":
        return np.full(len(curve), level)
    if tau_weighting == "sqrt":
        return level * np.sqrt(curve.taus / curve.taus[0])
    if tau_weighting == "stderr":
        if curve.stderr is None or np.any(curve.stderr <= 0):
            raise EstimationError("stderr weighting needs positive standard errors on every curve")
        return curve.stderr
    raise EstimationError(f"tau_weighting must be one of {_TAU_WEIGHTINGS}")


def _least_squares_starts(layout, residuals, guess, n_starts, seed, max_iter, jobs):
    starts = _start_points(layout, guess, n_starts, seed)

    def run(z0):
        res = optimize.least_squares(residuals, z0, method="trf", xtol=1e-15, ftol=1e-15,
                                     gtol=1e-15, max_nfev=max_iter)
        f0 = 0.5 * float(np.dot(residuals(z0), residuals(z0)))
        if not res.cost <= f0:
            return z0, f0, res.nfev, False, "no improvement over start"
        return res.x, res.cost, res.nfev, res.status > 0, res.message

    runs = _run_starts(run, starts, jobs)
    best = min(range(len(runs)), key=lambda i: runs[i][1])
    return runs, best


def _fit_regression_univariate(curve: Curve, init, n_starts, seed, max_iter, jobs,
                               normalize, tau_weighting) -> FitResult:
    layout = _make_layout("univariate")
    _check_grid(len(curve), layout.size)
    div = _divisors(curve, _scale_of(curve.values) if normalize else 1.0, tau_weighting)

    def residuals(z):
        theta, _ = layout.to_theta(z)
        return (signature_plot_1d(layout.to_params(theta), curve.taus) - curve.values) / div

    guess = layout.from_params(init) if init is not None else _univariate_guess(curve)
    runs, best = _least_squares_starts(layout, residuals, guess, n_starts, seed, max_iter, jobs)
    z, cost, _, success, message = runs[best]
    return _finish(layout, z, 2 * cost, success, sum(r[2] for r in runs), "regression",
                   float("nan"), n_starts, str(message), {"start": int(best)})


def _bivariate_curves(curves):
    if isinstance(curves, dict):
        return curves["c11"], curves["c22"], curves["c12"]
    c11, c22, c12 = curves
    return c11, c22, c12


def fit_regression(curves, weights: Sequence[float] = (1.0, 1.0, 1.0), init: Optional[Params] = None,
                   model: Optional[str] = None, n_starts: int = 8, seed=0, max_iter: int = 5000,
                   jobs: int = 1, normalize: bool = True,
                   tau_weighting: str = "sqrt") -> FitResult:
    """Least-squares fit of closed-form curves to empirical ones.

    ``curves`` is a single signature-plot :class:`Curve` (univariate) or the
    triple ``(C11, C22, C12)`` of per-unit-time curves on one grid (bivariate;
    a dict with keys ``c11``, ``c22``, ``c12`` also works).  Residuals are
    divided by each curve's mean level (the cross curve uses the geometric
    mean of the two diagonal levels) and, with the default
    ``tau_weighting="sqrt"``, by ``sqrt(tau / tau_min)`` to account for the
    growing sampling noise at coarse scales.  The objective is
    ``sum_curves weight * sum_grid residual**2``.

    With a zero cross weight the diagonal curves are fitted independently as
    two univariate models and the cross kernels are set to zero.
    """
    if isinstance(curves, Curve):
        return _fit_regression_univariate(curves, init, n_starts, seed, max_iter, jobs,
                                          normalize, tau_weighting)
    c11, c22, c12 = _bivariate_curves(curves)
    a1, a2, a12 = (float(w) for w in weights)
    if min(a1, a2, a12) < 0:
        raise EstimationError("weights must be non-negative")
    if a12 == 0:
        fits = [_fit_regression_univariate(c, None, n_starts, seed, max_iter, jobs, normalize,
                                           tau_weighting) for c in (c11, c22)]
        p1, p2 = fits[0].params, fits[1].params
        params = BivariateParams(p1.mu, p2.mu, p1.kernel, ZERO_KERNEL, ZERO_KERNEL, p2.kernel)
        return FitResult(params=params,
                         objective=a1 * fits[0].objective + a2 * fits[1].objective,
                         converged=fits[0].converged and fits[1].converged,
                         iterations=fits[0].iterations + fits[1].iterations,
                         constraint_margin=float(1.0 - spectral_radius(params)),
                         method="regression", model="decoupled", n_starts=n_starts,
                         message="diagonal curves fitted independently",
                         extra={"asset1": fits[0].to_dict(), "asset2": fits[1].to_dict()})
    taus = c11.taus
    for c in (c22, c12):
        if c.taus.shape != taus.shape or not np.allclose(c.taus, taus, rtol=1e-12, atol=0):
            raise EstimationError("bivariate curves must share one tau grid")
    layout = _make_layout(model or "symmetric")
    if layout.n_streams != 4:
        raise EstimationError("bivariate curves need a bivariate model")
    n_used = sum(len(taus) for w in (a1, a2, a12) if w > 0)
    _check_grid(n_used, layout.size)
    if normalize:
        s11, s22 = _scale_of(c11.values), _scale_of(c22.values)
        s12 = np.sqrt(s11 * s22)
    else:
        s11 = s22 = s12 = 1.0
    w = np.sqrt([a1, a2, a12])
    d11 = _divisors(c11, s11, tau_weighting)
    d22 = _divisors(c22, s22, tau_weighting)
    d12 = _divisors(c12, s12, tau_weighting) if a12 > 0 else np.ones(len(taus))

    def residuals(z):
        theta, _ = layout.to_theta(z)
        m = covariance_at_scale(covariance_coefficients(layout.to_params(theta)), taus)
        return np.concatenate((w[0] * (m[:, 0, 0] - c11.values) / d11,
                               w[1] * (m[:, 1, 1] - c22.values) / d22,
                               w[2] * (m[:, 0, 1] - c12.values) / d12))

    if init is not None:
        guess = layout.from_params(init)
    else:
        g1, g2 = _univariate_guess(c11), _univariate_guess(c22)
        beta = np.sqrt(g1[2] * g2[2])
        rho = float(np.clip(c12.values[-1] / np.sqrt(abs(c11.values[-1] * c22.values[-1]) + 1e-300),
                            0.02, 0.9))
        g13 = 0.5 * rho
        if layout.name == "symmetric":
            guess = np.array([0.5 * (g1[0] + g2[0]) * (1 - g13), 0.5 * (g1[1] + g2[1]) * 0.7,
                              g13 * beta, beta])
        else:
            guess = np.array([g1[0] * (1 - g13), g2[0] * (1 - g13), g1[1] * 0.7, g13 * beta,
                              g13 * beta, g2[1] * 0.7, beta])
        mus, alphas, b = layout.split(guess)
        rad, _ = layout.radius(alphas / b)
        if rad >= 0.95:
            guess = np.concatenate((mus, alphas * 0.9 / rad, [b]))
    runs, best = _least_squares_starts(layout, residuals, guess, n_starts, seed, max_iter, jobs)
    z, cost, _, success, message = runs[best]
    return _finish(layout, z, 2 * cost, success, sum(r[2] for r in runs), "regression",
                   float("nan"), n_starts, str(message), {"start": int(best)})


__all__ = [
    "EstimationError",
    "FitResult",
    "fit_mle",
    "fit_regression",
    "log_likelihood",
]
