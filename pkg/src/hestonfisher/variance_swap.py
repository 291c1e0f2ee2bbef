"""Variance-swap strike implied by the CIR variance process and the matching
reparametrisation of the panel Fisher information.

The fair strike volatility over a horizon ``T`` is

    K_var^2 = (v0 - theta) (1 - exp(-kappa T)) / (kappa T) + theta,

the annualised expected integrated variance.  Switching the daily parameters
from ``sigma_t = sqrt(v_t)`` to ``K_var,t`` transforms the information matrix
as ``J(Lambda) = D^T J(Theta) D`` with ``D = dTheta / dLambda``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import as_1d_float, check_positive
from .exceptions import DomainError
from .fisher import (BlockFisher, CredibilityBand, credibility_bands,
                     invert_block_diagonal_entries)
from .heston import ModelParams

VIX_HORIZON = 30.0 / 365.0


def _weight(kappa, horizon):
    """``(1 - exp(-kappa T)) / (kappa T)``, the weight of the initial deviation."""
    x = kappa * horizon
    return -math.expm1(-x) / x


def expected_variance(v0, t, params):
    """Conditional mean ``E[v_t | v_0] = (v0 - theta) exp(-kappa t) + theta``."""
    return (np.asarray(v0, dtype=float) - params.theta) * np.exp(-params.kappa * np.asarray(t)) + params.theta


def integrated_variance(v0, t, params):
    """Expected integrated variance ``(v0 - theta)(1 - exp(-kappa t)) / kappa + theta t``."""
    t = np.asarray(t, dtype=float)
    return (np.asarray(v0, dtype=float) - params.theta) * -np.expm1(-params.kappa * t) / params.kappa \
        + params.theta * t


def kvar_squared(v0, params, horizon=VIX_HORIZON):
    check_positive("horizon", horizon)
    return (np.asarray(v0, dtype=float) - params.theta) * _weight(params.kappa, horizon) + params.theta


def kvar(v0, params, horizon=VIX_HORIZON):
    """Fair variance-swap strike volatility ``K_var``."""
    k2 = kvar_squared(v0, params, horizon)
    if np.any(k2 < 0):
        raise DomainError(f"negative strike variance {np.min(k2)!r}; is v0 >= 0?")
    out = np.sqrt(k2)
    return float(out) if out.ndim == 0 else out


def variance_from_kvar(k, params, horizon=VIX_HORIZON):
    """Inverse map ``v = (K_var^2 - theta) / w + theta`` with the weight ``w``."""
    k = np.asarray(k, dtype=float)
    out = (k * k - params.theta) / _weight(params.kappa, horizon) + params.theta
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SwapParams:
    """Horizon of the variance swap together with the model parameters."""

    params: ModelParams
    horizon: float = VIX_HORIZON

    def __post_init__(self):
        check_positive("horizon", self.horizon)

    def kvar(self, v0):
        return kvar(v0, self.params, self.horizon)

    def variance(self, k):
        return variance_from_kvar(k, self.params, self.horizon)


@dataclass(frozen=True)
class KvarJacobian:
    """Block Jacobian ``d(sigma_t, shared) / d(K_var,t, shared)``.

    ``diag`` holds ``d sigma_t / d K_var,t``; ``border`` is ``m x 4`` with the
    ``kappa`` and ``sqrt_theta`` partials of ``sigma_t`` at fixed ``K_var,t``
    (the ``sigma`` and ``rho`` columns are zero).  The lower-left block is zero
    because the shared parameters do not depend on ``K_var``; the lower-right
    block is the identity.  ``singular`` flags days with ``sigma_t = 0``.
    """

    diag: np.ndarray
    border: np.ndarray
    singular: np.ndarray

    @property
    def m(self):
        return self.diag.size

    def dense(self, literal_transpose=False):
        """Full ``(m + 4) x (m + 4)`` matrix.

        ``literal_transpose=True`` fills the lower-left block with
        ``border^T`` instead of zeros; that matrix is not the Jacobian of the
        reparametrisation and is offered for comparison only.
        """
        m, p = self.m, self.border.shape[1]
        out = np.zeros((m + p, m + p))
        out[np.arange(m), np.arange(m)] = self.diag
        out[:m, m:] = self.border
        if literal_transpose:
            out[m:, :m] = self.border.T
        out[m:, m:] = np.eye(p)
        return out


def kvar_jacobian(variances, params, horizon=VIX_HORIZON):
    """Jacobian of ``Theta = (sigma_t) + shared`` with respect to ``Lambda = (K_var,t) + shared``."""
    v = as_1d_float("variances", variances)
    check_positive("horizon", horizon)
    kappa, theta, T = params.kappa, params.theta, horizon
    x = kappa * T
    one_minus = -math.expm1(-x)
    sigma = np.sqrt(np.maximum(v, 0.0))
    singular = ~(sigma > 0)
    safe = np.where(singular, 1.0, sigma)
    k = np.sqrt(kvar_squared(v, params, horizon))
    diag = k * x / one_minus / safe
    d_kappa = (k * k - theta) * T / (2.0 * safe) * (1.0 - (1.0 + x) * math.exp(-x)) / one_minus ** 2
    d_sqrt_theta = params.sqrt_theta / safe * (1.0 - x / one_minus)
    border = np.zeros((v.size, 4))
    border[:, 0] = d_kappa
    border[:, 1] = d_sqrt_theta
    diag = np.where(singular, np.nan, diag)
    border[singular] = np.nan
    return KvarJacobian(diag, border, singular)


def transform_block_fisher(bf, jac):
    """``D^T J D`` kept in arrow form.

    With ``J = (1/v_hat)[[A, R], [R^T, S]]`` and ``D = [[Delta, B], [0, I]]``
    the result has day block ``Delta A Delta``, border ``Delta (A B + R)`` and
    corner ``B^T A B + B^T R + R^T B + S``.
    """
    if jac.m != bf.m or jac.border.shape[1] != bf.n_shared:
        raise ValueError(f"Jacobian for {jac.m} days/{jac.border.shape[1]} shared "
                         f"does not match Fisher with {bf.m} days/{bf.n_shared} shared")
    ok = ~jac.singular
    delta = np.where(ok, jac.diag, 0.0)
    B = np.where(ok[:, None], jac.border, 0.0)
    A = bf.a11_diag
    R = bf.a12
    AB_R = A[:, None] * B + R
    a11 = delta * A * delta
    a12 = delta[:, None] * AB_R
    corner = B.T @ AB_R + R.T @ B + bf.a22
    return BlockFisher(a11, a12, 0.5 * (corner + corner.T), bf.noise_variance, bf.mode)


@dataclass(frozen=True)
class VarSwapSeries:
    """Daily swap strikes with their Cramer-Rao double standard deviations."""

    kvar: np.ndarray
    band: CredibilityBand

    @property
    def beta(self):
        return self.band.beta

    @property
    def relative(self):
        return self.band.relative


def transform_fisher(bf, jac, variances, params, horizon=VIX_HORIZON):
    """Bands on ``K_var,t`` from the panel information in the volatility parametrisation."""
    transformed = transform_block_fisher(bf, jac)
    diag_inv = invert_block_diagonal_entries(transformed)
    k = np.sqrt(kvar_squared(as_1d_float("variances", variances), params, horizon))
    band = credibility_bands(diag_inv, k)
    day = np.where(jac.singular, np.inf, band.beta)
    band = CredibilityBand(day, np.where(jac.singular, np.inf, band.relative), band.shared_se,
                           band.shared_reliable)
    return VarSwapSeries(k, band)


def dense_transformed_diagonal(bf, jac, literal_transpose=False):
    """Reference: dense ``D^T J D`` followed by dense inversion (diagonal only)."""
    D = jac.dense(literal_transpose)
    J = D.T @ bf.full_matrix() @ D
    return np.diag(np.linalg.inv(J))
