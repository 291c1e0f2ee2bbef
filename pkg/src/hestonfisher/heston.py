"""Heston characteristic function, Carr-Madan damped integrand and a
direct-quadrature reference pricer.

The coefficients ``C`` and ``D`` use the "little trap" arrangement, in which the
principal branch of ``d`` keeps the complex logarithm continuous in maturity.
They are evaluated through algebraically equivalent forms that avoid the
cancellation in ``Q - d`` when the vol-of-variance is small, so the model
degenerates cleanly to Black-Scholes as ``sigma -> 0``.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from ._quadrature import integrate_to_infinity
from ._validation import (check_epsilon, check_finite, check_interval,
                          check_positive)
from .exceptions import DomainError, GridConstructionError

DEFAULT_ALPHA = 1.5


@dataclass(frozen=True)
class ModelParams:
    """Hidden Heston parameters of the variance process.

    ``kappa`` is the mean-reversion rate, ``theta`` the long-run variance,
    ``sigma`` the volatility of variance and ``rho`` the correlation between
    the price and variance Brownian motions.
    """

    kappa: float
    theta: float
    sigma: float
    rho: float

    def __post_init__(self):
        object.__setattr__(self, "kappa", check_positive("kappa", self.kappa))
        object.__setattr__(self, "theta", check_positive("theta", self.theta))
        object.__setattr__(self, "sigma", check_positive("sigma", self.sigma))
        object.__setattr__(self, "rho", check_interval("rho", self.rho, -1.0, 1.0))

    @property
    def sqrt_theta(self):
        return math.sqrt(self.theta)

    @property
    def feller_satisfied(self):
        return 2.0 * self.kappa * self.theta >= self.sigma ** 2

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def as_dict(self):
        return dataclasses.asdict(self)


# S&P 500 estimates used throughout the examples and as CLI defaults.
SPX_PARAMS = ModelParams(kappa=5.07, theta=0.0457, sigma=0.48, rho=-0.767)


@dataclass(frozen=True)
class MarketState:
    """Observables of one trading day: spot, zero rate and dividend yield."""

    spot: float
    rate: float = 0.0
    dividend_yield: float = 0.0
    date: dt.date | None = None

    def __post_init__(self):
        object.__setattr__(self, "spot", check_positive("spot", self.spot))
        object.__setattr__(self, "rate", check_finite("rate", self.rate))
        object.__setattr__(self, "dividend_yield",
                           check_finite("dividend_yield", self.dividend_yield))

    @property
    def log_price(self):
        return math.log(self.spot)

    def with_rate(self, rate):
        return dataclasses.replace(self, rate=rate)


@dataclass(frozen=True)
class OptionSpec:
    """European option: ``epsilon`` is +1 for a call and -1 for a put."""

    epsilon: int
    strike: float
    maturity: float

    def __post_init__(self):
        object.__setattr__(self, "epsilon", check_epsilon(self.epsilon))
        object.__setattr__(self, "strike", check_positive("strike", self.strike))
        object.__setattr__(self, "maturity", check_positive("maturity", self.maturity))

    @property
    def log_strike(self):
        return math.log(self.strike)

    @property
    def is_call(self):
        return self.epsilon == 1

    @classmethod
    def call(cls, strike, maturity):
        return cls(1, strike, maturity)

    @classmethod
    def put(cls, strike, maturity):
        return cls(-1, strike, maturity)


@dataclass(frozen=True)
class QuadratureConfig:
    """Settings of the adaptive reference quadrature.

    ``tol`` is an absolute price tolerance expressed as a fraction of spot.
    """

    phi_max: float = 200.0
    tol: float = 1e-10
    initial_panels: int = 64
    max_evaluations: int = 1 << 21

    def __post_init__(self):
        check_positive("phi_max", self.phi_max)
        check_positive("tol", self.tol)


def _log1p_over_z(z):
    """``log(1 + z) / z`` with a series branch near zero."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-3
    zs = np.where(small, z, 0.0)
    series = 1.0 - zs * (1 / 2 - zs * (1 / 3 - zs * (1 / 4 - zs * (1 / 5 - zs / 6))))
    zl = np.where(small, 1.0, z)
    return np.where(small, series, np.log(1.0 + zl) / zl)


@dataclass(frozen=True)
class _TrapTerms:
    """Intermediate quantities of the little-trap coefficients."""

    u: np.ndarray
    s: np.ndarray      # i u + u^2
    Q: np.ndarray      # kappa - i rho sigma u
    d: np.ndarray
    P: np.ndarray      # Q + d
    n: np.ndarray      # (Q - d) / sigma^2
    c: np.ndarray      # (Q - d) / (Q + d)
    E: np.ndarray      # exp(-d tau)
    F: np.ndarray      # 1 - exp(-d tau)
    g: np.ndarray      # 1 - c exp(-d tau)
    L: np.ndarray      # log((1 - c e^{-d tau}) / (1 - c)) / sigma^2
    C: np.ndarray
    D: np.ndarray


def _trap_terms(phi, tau, params, rate, dividend):
    u = np.asarray(phi, dtype=complex)
    kappa, theta, sigma, rho = params.kappa, params.theta, params.sigma, params.rho
    s = 1j * u + u * u
    Q = kappa - 1j * rho * sigma * u
    d = np.sqrt(Q * Q + sigma * sigma * s)
    P = Q + d
    # Q - d = -sigma^2 s / (Q + d) avoids cancellation for small sigma.
    n = -s / P
    c = sigma * sigma * n / P
    F = -np.expm1(-d * tau)
    E = 1.0 - F
    g = 1.0 - c * E
    L = _log1p_over_z(c * F / (1.0 - c)) * (n / P) * F / (1.0 - c)
    C = 1j * (rate - dividend) * u * tau + kappa * theta * (n * tau - 2.0 * L)
    D = n * F / g
    return _TrapTerms(u=u, s=s, Q=Q, d=d, P=P, n=n, c=c, E=E, F=F, g=g, L=L, C=C, D=D)


def _raise_if_nonfinite(phi, *arrays):
    for arr in arrays:
        bad = ~np.isfinite(arr)
        if np.any(bad):
            where = np.asarray(phi, dtype=complex).reshape(-1) if np.ndim(phi) else np.asarray([phi])
            flat = np.broadcast_to(bad, np.shape(arr)).reshape(-1)
            first = where[np.argmax(flat)] if where.size == flat.size else phi
            raise DomainError(f"non-finite characteristic-function coefficient at phi={first}",
                              phi=first)


def cd_coefficients(phi, tau, params, rate=0.0, dividend=0.0):
    """Little-trap coefficients ``(C(phi, tau), D(phi, tau))``.

    ``phi`` may be a complex scalar or array.  ``tau = 0`` returns zeros.
    """
    with np.errstate(all="ignore"):
        terms = _trap_terms(phi, tau, params, rate, dividend)
    _raise_if_nonfinite(phi, terms.C, terms.D)
    return terms.C, terms.D


def char_fn(phi, state, variance, tau, params):
    """Characteristic function ``exp(C + D v + i phi x)`` of the log-price."""
    C, D = cd_coefficients(phi, tau, params, state.rate, state.dividend_yield)
    return np.exp(C + D * variance + 1j * np.asarray(phi, dtype=complex) * state.log_price)


def damping_denominator(epsilon, phi, alpha):
    a = epsilon * alpha
    phi = np.asarray(phi, dtype=float)
    return a * a + a - phi * phi + 1j * phi * (2.0 * a + 1.0)


def shifted_argument(epsilon, phi, alpha):
    return np.asarray(phi, dtype=float) - 1j * (epsilon * alpha + 1.0)


def damped_integrand(epsilon, phi, state, variance, tau, params, alpha=DEFAULT_ALPHA):
    """Damped transform ``e_hat(epsilon, phi)`` of the call (or put) price."""
    epsilon = check_epsilon(epsilon)
    denom = damping_denominator(epsilon, phi, alpha)
    if np.any(denom == 0):
        raise GridConstructionError(
            f"damping denominator vanishes for alpha={alpha}, epsilon={epsilon}; "
            "shift the frequency grid or change alpha")
    u = shifted_argument(epsilon, phi, alpha)
    return math.exp(-state.rate * tau) * char_fn(u, state, variance, tau, params) / denom


def _direct_integral(factor, spec, state, variance, params, alpha, quad):
    """Shared Carr-Madan quadrature: ``factor(u)`` multiplies the integrand."""
    k = spec.log_strike
    scale = math.exp(-spec.epsilon * alpha * k) / math.pi

    def integrand(phi):
        e_hat = damped_integrand(spec.epsilon, phi, state, variance, spec.maturity, params, alpha)
        if factor is not None:
            e_hat = e_hat * factor(shifted_argument(spec.epsilon, phi, alpha))
        return np.real(np.exp(-1j * k * phi) * e_hat)

    value, _ = integrate_to_infinity(
        integrand, quad.phi_max, quad.tol * state.spot / scale,
        initial_panels=quad.initial_panels, max_evaluations=quad.max_evaluations)
    return scale * value


def price_direct(spec, state, variance, params, alpha=DEFAULT_ALPHA, quad=None):
    """Carr-Madan price by adaptive quadrature (the reference pricer).

    The absolute error target is ``quad.tol * spot``.
    """
    check_positive("variance", variance, allow_zero=True)
    return _direct_integral(None, spec, state, variance, params, alpha,
                            quad or QuadratureConfig())


def put_from_call(call_price, spec, state):
    """Put price from the matching call through put-call parity."""
    tau = spec.maturity
    return (call_price + spec.strike * math.exp(-state.rate * tau)
            - state.spot * math.exp(-state.dividend_yield * tau))


def parity_gap(strike, state, tau):
    """``P - C`` for strike ``K``; independent of the hidden parameters."""
    return strike * math.exp(-state.rate * tau) - state.spot * math.exp(-state.dividend_yield * tau)
