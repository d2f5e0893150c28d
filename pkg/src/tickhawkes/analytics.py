"""Closed-form second-order properties of the tick model.

Conventions
-----------
``C_kl(tau, t) = Cov(X_k(t0 + tau) - X_k(t0), X_l(t0 + t + tau) - X_l(t0 + t))``.

The bivariate covariance density of the price increments has the form

    K_kk(z) = 2 Lambda_k delta(z) + A_kk exp(-G1 |z|) + B_kk exp(-G2 |z|)

and, for the cross terms, ``A_kl exp(-G1 z) + B_kl exp(-G2 z)`` (z > 0) is the
covariance between a move of asset ``l`` and a later (by z) move of asset
``k``.  With this naming the constants ``Q_i``, ``A_kl`` and ``B_kl`` follow the
classical exponential-Hawkes derivation; ``Q_2``/``Q_3`` are the Laplace
transforms at ``beta`` of the cross densities in the same orientation.

All coefficient pairs are stored as an even part ``A + B`` and an odd part
``Z (A - B)``, both finite when ``Z -> 0``.  Evaluations combine them with
divided differences in ``G``, so the confluent case ``G1 = G2`` is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curves import Curve
from .model import (
    BivariateParams,
    ModelError,
    UnivariateParams,
    mean_intensities,
    require_stable,
)

_SERIES_CUTOFF = 0.5
_SERIES_TERMS = 24
_FACT = np.cumprod(np.concatenate(([1.0], np.arange(1.0, _SERIES_TERMS + 4))))  # _FACT[n] = n!


def _series(x, coef):
    """Evaluate ``sum_k coef(k) x**k`` for k = 0.._SERIES_TERMS by Horner's rule."""
    out = np.zeros_like(x)
    for k in range(_SERIES_TERMS, -1, -1):
        out = out * x + coef(k)
    return out


def _g(x):
    """``(1 - exp(-x)) / x`` with ``g(0) = 1``."""
    x = np.asarray(x, dtype=float)
    small = x < 1e-6
    xs = np.where(small, 0.0, x)
    direct = -np.expm1(-xs) / np.where(small, 1.0, xs)
    taylor = 1 - x / 2 + x * x / 6 - x ** 3 / 24
    return np.where(small, taylor, direct)


def _g_prime(x):
    x = np.asarray(x, dtype=float)
    small = x < _SERIES_CUTOFF
    xs = np.where(small, 1.0, x)
    direct = (np.exp(-xs) * (xs + 1) - 1) / (xs * xs)
    series = _series(np.where(small, x, 0.0), lambda k: (k + 1) * (-1) ** (k + 1) / _FACT[k + 2])
    return np.where(small, series, direct)


def _phi(x):
    """``1 - g(x) = (x - 1 + exp(-x)) / x``."""
    x = np.asarray(x, dtype=float)
    small = x < _SERIES_CUTOFF
    xs = np.where(small, 1.0, x)
    direct = (xs + np.expm1(-xs)) / xs
    series = x * _series(np.where(small, x, 0.0), lambda k: (-1) ** k / _FACT[k + 2])
    return np.where(small, series, direct)


def _psi(x):
    """``x phi'(x) - phi(x)``."""
    x = np.asarray(x, dtype=float)
    small = x < _SERIES_CUTOFF
    xs = np.where(small, 1.0, x)
    direct = (1 - np.exp(-xs) * (1 + xs)) / xs - 1 + (-np.expm1(-xs)) / xs
    series = x * x * _series(np.where(small, x, 0.0), lambda k: (k + 1) * (-1) ** (k + 1) / _FACT[k + 3])
    return np.where(small, series, direct)


# Scale functions of G and tau.  Each comes with its derivative in G, used when
# G1 and G2 (nearly) coincide.

def _var_kernel(G, tau):
    """``int_0^tau (1 - z/tau) exp(-G z) dz = 1/G - (1 - exp(-G tau)) / (G^2 tau)``."""
    return _phi(G * tau) / G


def _var_kernel_dG(G, tau):
    return _psi(G * tau) / (G * G)


def _lag_kernel(G, tau):
    """``((1 - exp(-G tau)) / G)^2``: triangle weight on ``[0, 2 tau]`` against ``exp(-G z)``."""
    return (tau * _g(G * tau)) ** 2


def _lag_kernel_dG(G, tau):
    x = G * tau
    return 2 * tau ** 3 * _g(x) * _g_prime(x)


_CONFLUENT = 1e-6


def _combine(even, odd, Y, Z, f, f_dG, tau):
    """``A f(G1) + B f(G2)`` from ``even = A + B`` and ``odd = Z (A - B)``."""
    if Z <= _CONFLUENT * Y:
        mean = f(Y, tau)
        divided = f_dG(Y, tau)
    else:
        f1, f2 = f(Y + Z, tau), f(Y - Z, tau)
        mean = 0.5 * (f1 + f2)
        divided = (f1 - f2) / (2 * Z)
    return even * mean + odd * divided


# --------------------------------------------------------------------------
# Univariate model


@dataclass(frozen=True)
class SignaturePlotParams1D:
    Lambda: float
    kappa: float
    gamma: float

    @classmethod
    def from_params(cls, p: UnivariateParams) -> "SignaturePlotParams1D":
        x = require_stable(p)
        return cls(Lambda=2 * p.mu / (1 - x), kappa=1 / (1 + x), gamma=p.alpha + p.beta)

    @property
    def v0(self) -> float:
        return self.Lambda

    @property
    def v_inf(self) -> float:
        return self.Lambda * self.kappa ** 2


def signature_plot_1d(p: UnivariateParams, tau):
    """Mean realized variance per unit time at scale ``tau`` (s^-1).

    ``tau = 0`` returns the microstructure limit ``Lambda``.
    """
    sp = SignaturePlotParams1D.from_params(p)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ModelError("tau must be >= 0")
    k2 = sp.kappa ** 2
    out = sp.Lambda * (k2 + (1 - k2) * _g(sp.gamma * tau))
    return float(out) if out.ndim == 0 else out


def covariance_density_1d(p: UnivariateParams):
    """Exponential solution ``M(x) = a exp(-rate |x|)`` of the up-minus-cross density.

    ``M = M_11 - M_12`` enters ``C(tau) = 2 (Lbar + tau^-1 int int M)``, where
    ``Lbar = mu beta / (beta - alpha)`` is the per-stream mean rate.
    """
    require_stable(p)
    a_, b_ = p.alpha, p.beta
    lbar = p.mu * b_ / (b_ - a_)
    a = -lbar * a_ * (a_ + 2 * b_) / (2 * (a_ + b_))
    return a, a_ + b_


# --------------------------------------------------------------------------
# Bivariate model


_PAIR_NAMES = ("11", "12", "21", "22")


@dataclass(frozen=True, eq=False)
class CovarianceCoefficients:
    """Constants parameterizing every bivariate closed form.

    ``even[k, l] = A_kl + B_kl`` and ``odd[k, l] = Z (A_kl - B_kl)``; the
    individual ``A``/``B`` are available whenever ``Z > 0``.
    """

    Lambda1: float
    Lambda3: float
    Q: tuple
    Y: float
    Z: float
    even: np.ndarray
    odd: np.ndarray
    params: BivariateParams

    @property
    def G1(self) -> float:
        return self.Y + self.Z

    @property
    def G2(self) -> float:
        return self.Y - self.Z

    @property
    def Q1(self):
        return self.Q[0]

    @property
    def Q2(self):
        return self.Q[1]

    @property
    def Q3(self):
        return self.Q[2]

    @property
    def Q4(self):
        return self.Q[3]

    def _odd_over_z(self) -> np.ndarray:
        if self.Z > 0:
            return self.odd / self.Z
        # G1 == G2: the split into A and B is only meaningful if the odd part vanishes.
        if np.any(self.odd != 0):
            raise ZeroDivisionError("A and B are not separately defined when G1 == G2")
        return np.zeros_like(self.odd)

    @property
    def A(self) -> np.ndarray:
        return 0.5 * (self.even + self._odd_over_z())

    @property
    def B(self) -> np.ndarray:
        return 0.5 * (self.even - self._odd_over_z())

    def __getattr__(self, name):
        # A11, B12, ... accessors
        if len(name) == 3 and name[0] in "AB" and name[1:] in _PAIR_NAMES:
            k, l = int(name[1]) - 1, int(name[2]) - 1
            return float(getattr(self, name[0])[k, l])
        raise AttributeError(name)

    @property
    def D1(self) -> float:
        """``A_12 - A_21``."""
        return self.A12 - self.A21

    @property
    def D2(self) -> float:
        return self.B12 - self.B21

    # symmetric-case constants
    def _symmetric(self):
        p = self.params
        if not p.is_symmetric(rtol=1e-12):
            raise ModelError("R, C1, C2 are only defined for fully symmetric parameters")
        return p.mu1, p.k12.beta, p.k12.l1_norm, p.k13.l1_norm

    @property
    def R(self) -> float:
        mu, beta, g12, g13 = self._symmetric()
        return beta * mu / (g12 + g13 - 1)

    @property
    def C1(self) -> float:
        _, _, g12, g13 = self._symmetric()
        s = g12 + g13
        return (2 + s) * s / (1 + s)

    @property
    def C2(self) -> float:
        _, _, g12, g13 = self._symmetric()
        d = g12 - g13
        return (2 + d) * d / (1 + d)

    def kernel_density(self, k: int, l: int, z):
        """Continuous part of the increment covariance density ``K_kl(z)`` for ``z > 0``."""
        z = np.asarray(z, dtype=float)
        e, o = self.even[k - 1, l - 1], self.odd[k - 1, l - 1]
        Zz = self.Z * z
        sinhc = np.where(Zz == 0, z, np.sinh(Zz) / np.where(self.Z == 0, 1.0, self.Z))
        return np.exp(-self.Y * z) * (e * np.cosh(Zz) - o * sinhc)


def shared_beta(p: BivariateParams) -> float:
    """Common decay rate of all non-zero kernels; raises if they differ."""
    betas = {k.beta for k in p.kernels.values() if k.alpha > 0}
    if not betas:
        return p.k12.beta
    if len(betas) > 1:
        raise ModelError("closed forms need one beta shared by every non-zero kernel, "
                         f"got {sorted(betas)}")
    return betas.pop()


def covariance_coefficients(p: BivariateParams) -> CovarianceCoefficients:
    require_stable(p)
    b = shared_beta(p)
    a12, a13, a31, a34 = p.k12.alpha, p.k13.alpha, p.k31.alpha, p.k34.alpha
    lam = mean_intensities(p)
    L1, L3 = float(lam[0]), float(lam[2])

    den = (a13 * a31 * (2 * b + a12 + a34) - 3 * b * b * a12 - a12 ** 2 * a34 - a34 ** 2 * a12
           - 3 * b * b * a34 - 2 * b ** 3 - 4 * b * a34 * a12 - b * a34 ** 2 - a12 ** 2 * b)
    Q1 = -(L1 * (a31 * a13 * (a34 + b + a12) - 3 * b * a34 * a12 - b * a12 ** 2 - a34 ** 2 * a12
                 - 2 * a12 * b * b - a12 ** 2 * a34) + b * L3 * a13 ** 2) / den
    Q2 = -(L3 * (2 * b * b * a13 - a31 * a13 ** 2 + 2 * a12 * b * a13 + a34 * a12 * a13 + a34 * b * a13)
           + L1 * (a13 * a31 ** 2 - a12 * b * a31 - a31 * a34 * a12)) / den
    Q3 = -(L1 * (2 * b * b * a31 - a13 * a31 ** 2 + 2 * a34 * b * a31 + a34 * a12 * a31 + a12 * b * a31)
           + L3 * (a31 * a13 ** 2 - a34 * b * a13 - a13 * a34 * a12)) / den
    Q4 = -(L3 * (a31 * a13 * (a12 + b + a34) - 3 * b * a34 * a12 - b * a34 ** 2 - a12 ** 2 * a34
                 - 2 * a34 * b * b - a34 ** 2 * a12) + b * L1 * a31 ** 2) / den

    Y = b + 0.5 * (a12 + a34)
    Z = 0.5 * np.sqrt((a12 - a34) ** 2 + 4 * a13 * a31)

    # Each A_kl = s (P + Z S) / (4Z) and B_kl = s (-P + Z S) / (4Z) with sign s,
    # hence even = s S / 2 and odd = s P / 2.
    P11 = (Q1 * (2 * a13 * a31 + a12 ** 2 - a34 * a12) - Q2 * (a12 * a13 + a34 * a13)
           + L1 * (4 * a13 * a31 + 2 * a12 ** 2 - 2 * a34 * a12))
    S11 = 2 * Q1 * a12 - 2 * Q2 * a13 + 4 * L1 * a12
    P12 = (Q3 * (2 * a13 * a31 + a12 ** 2 - a34 * a12) - Q4 * (a13 * a12 + a34 * a13)
           - L3 * (2 * a34 * a13 + 2 * a12 * a13))
    S12 = 2 * Q3 * a12 - 2 * Q4 * a13 - 4 * L3 * a13
    P21 = (Q1 * (a12 * a31 + a34 * a31) + Q2 * (a12 * a34 - a34 ** 2 - 2 * a13 * a31)
           + L1 * (2 * a12 * a31 + 2 * a34 * a31))
    S21 = 2 * Q1 * a31 - 2 * Q2 * a34 + 4 * L1 * a31
    P22 = (Q4 * (a12 * a34 - 2 * a13 * a31 - a34 ** 2) + Q3 * (a31 * a34 + a31 * a12)
           + L3 * (2 * a12 * a34 - 2 * a34 ** 2 - 4 * a13 * a31))
    S22 = -2 * Q4 * a34 + 2 * Q3 * a31 - 4 * L3 * a34

    even = 0.5 * np.array([[-S11, -S12], [S21, S22]])
    odd = 0.5 * np.array([[-P11, -P12], [P21, P22]])
    return CovarianceCoefficients(L1, L3, (Q1, Q2, Q3, Q4), float(Y), float(Z), even, odd, p)


def covariance_at_scale(c: CovarianceCoefficients, tau) -> np.ndarray:
    """``C(tau) / tau`` as a 2x2 matrix (s^-1); shape ``tau.shape + (2, 2)``.

    At ``tau = 0`` this is the microstructure limit ``diag(2 Lambda_1, 2 Lambda_3)``.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ModelError("tau must be >= 0")
    Y, Z = c.Y, c.Z
    out = np.empty(tau.shape + (2, 2))
    for k in range(2):
        lam = c.Lambda1 if k == 0 else c.Lambda3
        out[..., k, k] = 2 * lam + 2 * _combine(c.even[k, k], c.odd[k, k], Y, Z,
                                                 _var_kernel, _var_kernel_dG, tau)
    cross = _combine(c.even[0, 1] + c.even[1, 0], c.odd[0, 1] + c.odd[1, 0], Y, Z,
                     _var_kernel, _var_kernel_dG, tau)
    out[..., 0, 1] = cross
    out[..., 1, 0] = cross
    return out


def lagged_covariance(c: CovarianceCoefficients, tau) -> np.ndarray:
    """``C_kl(tau, t=tau)``: covariance of adjacent increments, asset ``k`` first."""
    tau = np.asarray(tau, dtype=float)
    out = np.empty(tau.shape + (2, 2))
    for k in range(2):
        for l in range(2):
            # asset l responds to the earlier asset k
            out[..., k, l] = _combine(c.even[l, k], c.odd[l, k], c.Y, c.Z,
                                      _lag_kernel, _lag_kernel_dG, tau)
    return out


def leadlag_delta(c: CovarianceCoefficients, tau):
    """``Delta(tau) = C_12(tau, tau) - C_21(tau, tau)``.

    Positive when moves of asset 1 anticipate moves of asset 2.  In terms of
    the coefficients this is ``-(D1 f(G1) + D2 f(G2))`` with
    ``f(G) = (1 - exp(-G tau))^2 / G^2``.
    """
    tau = np.asarray(tau, dtype=float)
    out = _combine(c.even[1, 0] - c.even[0, 1], c.odd[1, 0] - c.odd[0, 1], c.Y, c.Z,
                   _lag_kernel, _lag_kernel_dG, tau)
    return float(out) if out.ndim == 0 else out


def diffusive_covariance(c: CovarianceCoefficients) -> np.ndarray:
    """Large-scale limit ``lim C(tau) / tau`` (s^-1)."""
    g1g2 = c.Y ** 2 - c.Z ** 2

    def limit(even, odd):
        # A/G1 + B/G2
        return (even * c.Y - odd) / g1g2

    out = np.empty((2, 2))
    out[0, 0] = 2 * c.Lambda1 + 2 * limit(c.even[0, 0], c.odd[0, 0])
    out[1, 1] = 2 * c.Lambda3 + 2 * limit(c.even[1, 1], c.odd[1, 1])
    out[0, 1] = out[1, 0] = limit(c.even[0, 1] + c.even[1, 0], c.odd[0, 1] + c.odd[1, 0])
    return out


def _require_symmetric(p: BivariateParams):
    if not p.is_symmetric(rtol=1e-12):
        raise ModelError("fully symmetric parameters required (phi12 = phi34, phi13 = phi31, mu1 = mu3)")
    if p.k12.beta != p.k13.beta and p.k13.alpha > 0:
        raise ModelError("closed forms need a shared beta")
    require_stable(p)


def symmetric_covariance(p: BivariateParams, tau):
    """``(C11/tau, C12/tau)`` of the fully symmetric model, from ``R``, ``C1``, ``C2``.

    Independent of :func:`covariance_coefficients`; used to cross-check it.
    """
    _require_symmetric(p)
    tau = np.asarray(tau, dtype=float)
    mu, beta = p.mu1, p.k12.beta
    g12, g13 = p.k12.l1_norm, p.k13.l1_norm
    lam = mu / (1 - g12 - g13)
    R = beta * mu / (g12 + g13 - 1)
    C1 = (2 + g12 + g13) * (g12 + g13) / (1 + g12 + g13)
    C2 = (2 + g12 - g13) * (g12 - g13) / (1 + g12 - g13)
    G1 = beta * (1 + g12 + g13)
    G2 = beta * (1 + g12 - g13)
    # (1 - exp(-G tau)) / (G^2 tau) - 1/G, written without cancellation
    w1 = -_phi(G1 * tau) / G1
    w2 = -_phi(G2 * tau) / G2
    c11 = 2 * lam - R * C1 * w1 - R * C2 * w2
    c12 = R * C1 * w1 - R * C2 * w2
    if tau.ndim == 0:
        return float(c11), float(c12)
    return c11, c12


def epps_asymptote(p: BivariateParams) -> float:
    """Large-scale correlation of the symmetric model."""
    _require_symmetric(p)
    g12, g13 = p.k12.l1_norm, p.k13.l1_norm
    return 2 * g13 * (1 + g12) / (1 + g13 ** 2 + 2 * g12 + g12 ** 2)


def epps_slope(p: BivariateParams) -> float:
    """``d rho / d tau`` at ``tau = 0`` for the symmetric model (s^-1)."""
    _require_symmetric(p)
    mu, beta = p.mu1, p.k12.beta
    g12, g13 = p.k12.l1_norm, p.k13.l1_norm
    lam = mu / (1 - g12 - g13)
    R = beta * mu / (g12 + g13 - 1)
    C1 = (2 + g12 + g13) * (g12 + g13) / (1 + g12 + g13)
    C2 = (2 + g12 - g13) * (g12 - g13) / (1 + g12 - g13)
    return R * (C2 - C1) / (4 * lam)


def correlation_at_scale(c: CovarianceCoefficients, tau):
    """``rho(tau) = C12 / sqrt(C11 C22)``; equals ``C12 / C11`` in the symmetric case."""
    m = covariance_at_scale(c, tau)
    out = m[..., 0, 1] / np.sqrt(m[..., 0, 0] * m[..., 1, 1])
    return float(out) if np.ndim(out) == 0 else out


def epps_curve(p: BivariateParams, taus) -> Curve:
    taus = np.asarray(taus, dtype=float)
    return Curve(taus, correlation_at_scale(covariance_coefficients(p), taus), name="epps")


def volatility_ratio(x):
    """Large-scale variance per unit of ``2 mu``: ``1 / ((1 - x)(1 + x)^2)`` with ``x = alpha/beta``."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0) or np.any(x_arr >= 1):
        raise ModelError("volatility_ratio needs 0 <= x < 1")
    out = 1.0 / ((1 - x_arr) * (1 + x_arr) ** 2)
    return float(out) if out.ndim == 0 else out


def volatility_ratio_minimizer() -> float:
    """Interior stationary point of :func:`volatility_ratio` (root of ``(1+x)(1-3x) = 0``)."""
    return 1.0 / 3.0
