"""Analytic first-order sensitivities of Heston prices to the hidden parameters.

The price gradient is taken with respect to ``(sigma0, kappa, sqrt_theta,
sigma, rho)`` where ``sigma0 = sqrt(v)``.  Since the damped integrand is
proportional to the characteristic function, every Greek is the Carr-Madan
integral of ``dlog f / dgamma`` times the price integrand.  The derivatives of
the little-trap coefficients are obtained by differentiating ``C`` and ``D``
through ``Q``, ``d`` and ``c``.
"""
from __future__ import annotations

import math
from dataclasses import astuple, dataclass

import numpy as np

from .heston import (DEFAULT_ALPHA, QuadratureConfig, _direct_integral,
                     _trap_terms, price_direct)
from .exceptions import ParameterError

GREEK_ORDER = ("sigma0", "kappa", "sqrt_theta", "sigma", "rho")
SHARED_ORDER = GREEK_ORDER[1:]


def _check_gamma(gamma):
    if gamma not in GREEK_ORDER:
        raise ParameterError(f"unknown parameter tag {gamma!r}; expected one of {GREEK_ORDER}")
    return gamma


@dataclass(frozen=True)
class GreekVector:
    """Price gradient in the canonical order ``(sigma0, kappa, sqrt_theta, sigma, rho)``."""

    d_sigma0: float
    d_kappa: float
    d_sqrt_theta: float
    d_sigma: float
    d_rho: float

    def __post_init__(self):
        if not all(math.isfinite(x) for x in astuple(self)):
            raise ParameterError(f"GreekVector entries must be finite: {self}")

    def as_array(self):
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values):
        return cls(*(float(x) for x in np.asarray(values, dtype=float)))

    def __getitem__(self, gamma):
        return getattr(self, "d_" + _check_gamma(gamma))


def _coefficient_partials(terms, tau, params, wrt):
    """``(dC/dp, dD/dp)`` for ``p`` in ``kappa``, ``sigma`` or ``rho``."""
    u, s, Q, d, P, n, c = terms.u, terms.s, terms.Q, terms.d, terms.P, terms.n, terms.c
    E, F, g = terms.E, terms.F, terms.g
    kappa, theta, sigma, rho = params.kappa, params.theta, params.sigma, params.rho

    if wrt == "kappa":
        dQ, dsig = 1.0, 0.0
    elif wrt == "sigma":
        dQ, dsig = -1j * rho * u, 1.0
    else:  # rho
        dQ, dsig = -1j * sigma * u, 0.0

    dd = (Q * dQ + sigma * dsig * s) / d
    dP = dQ + dd
    dn = s * dP / (P * P)
    dc = 2.0 * sigma * dsig * n / P + sigma * sigma * (dn * P - n * dP) / (P * P)
    dE = -tau * dd * E
    dF = -dE
    dg = -(dc * E + c * dE)

    dD = (dn * F + n * dF) / g - n * F * dg / (g * g)

    dlog_ratio = dg / g + dc / (1.0 - c)
    dL = dlog_ratio / (sigma * sigma) - 2.0 * dsig * terms.L / sigma
    dC = kappa * theta * (dn * tau - 2.0 * dL)
    if wrt == "kappa":
        dC = dC + theta * (n * tau - 2.0 * terms.L)
    return dC, dD


def _log_cf_gradient_from_terms(terms, variance, tau, params):
    sigma0 = math.sqrt(variance)
    out = np.empty((5,) + np.shape(terms.u), dtype=complex)
    out[0] = 2.0 * sigma0 * terms.D
    for i, wrt in ((1, "kappa"), (3, "sigma"), (4, "rho")):
        dC, dD = _coefficient_partials(terms, tau, params, wrt)
        out[i] = dC + variance * dD
    dC_dtheta = params.kappa * (terms.n * tau - 2.0 * terms.L)
    out[2] = 2.0 * params.sqrt_theta * dC_dtheta
    return out


def log_cf_gradient(phi, state, variance, tau, params):
    """All five ``dlog f / dgamma`` at (complex) ``phi``; shape ``(5,) + phi.shape``."""
    terms = _trap_terms(phi, tau, params, state.rate, state.dividend_yield)
    return _log_cf_gradient_from_terms(terms, variance, tau, params)


def log_cf_derivative(gamma, phi, state, variance, tau, params):
    """``dlog f / dgamma`` at (complex) ``phi`` for one parameter tag."""
    idx = GREEK_ORDER.index(_check_gamma(gamma))
    return log_cf_gradient(phi, state, variance, tau, params)[idx]


def greek_direct(gamma, spec, state, variance, params, alpha=DEFAULT_ALPHA, quad=None):
    """``dE/dgamma`` by adaptive quadrature of the Greek integrand."""
    _check_gamma(gamma)

    def factor(u):
        return log_cf_derivative(gamma, u, state, variance, spec.maturity, params)

    return _direct_integral(factor, spec, state, variance, params, alpha,
                            quad or QuadratureConfig())


def greek_vector(spec, state, variance, params, alpha=DEFAULT_ALPHA, quad=None):
    return GreekVector(*(greek_direct(g, spec, state, variance, params, alpha, quad)
                         for g in GREEK_ORDER))


def perturb(gamma, variance, params, h):
    """Shift parameter ``gamma`` by ``h``; returns ``(variance, params)``."""
    _check_gamma(gamma)
    if gamma == "sigma0":
        return (math.sqrt(variance) + h) ** 2, params
    if gamma == "sqrt_theta":
        return variance, params.replace(theta=(params.sqrt_theta + h) ** 2)
    return variance, params.replace(**{gamma: getattr(params, gamma) + h})


def parameter_value(gamma, variance, params):
    if gamma == "sigma0":
        return math.sqrt(variance)
    if gamma == "sqrt_theta":
        return params.sqrt_theta
    return getattr(params, gamma)


def greek_fd(gamma, spec, state, variance, params, alpha=DEFAULT_ALPHA, quad=None, h=None):
    """Central finite difference of ``price_direct``; ``h`` defaults to ``1e-4 (1 + |gamma|)``."""
    if h is None:
        h = 1e-4 * (1.0 + abs(parameter_value(gamma, variance, params)))
    v_up, p_up = perturb(gamma, variance, params, h)
    v_dn, p_dn = perturb(gamma, variance, params, -h)
    up = price_direct(spec, state, v_up, p_up, alpha, quad)
    dn = price_direct(spec, state, v_dn, p_dn, alpha, quad)
    return (up - dn) / (2.0 * h)
