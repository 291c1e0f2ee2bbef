"""Estimator-style wrappers around the calibration and Fisher pipelines.

``HestonVarianceCalibrator`` learns the daily variances and the noise
variance from a panel of day chains; ``FisherBands`` turns a fitted panel
into Cramer-Rao bands on the daily volatilities (or swap strikes).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .calibration import DEFAULT_BOUNDS, ChainPricer, chain_gradients, fit_panel
from .fisher import (assemble_block_fisher, credibility_bands,
                     invert_block_diagonal_entries)
from .frft import FrftConfig
from .heston import DEFAULT_ALPHA, SPX_PARAMS, ModelParams
from .variance_swap import VIX_HORIZON, kvar_jacobian, transform_fisher


class _HestonParamsMixin:
    def _model_params(self):
        return ModelParams(self.kappa, self.theta, self.sigma, self.rho)

    def _frft_config(self):
        return FrftConfig(self.n_points, self.eta, self.lam, self.alpha)


class HestonVarianceCalibrator(_HestonParamsMixin, BaseEstimator):
    """Daily least-squares variance fit with fixed process parameters.

    Parameters
    ----------
    kappa, theta, sigma, rho : float
        Variance-process parameters, held fixed during the fit.
    n_points, eta, lam, alpha : FRFT discretisation.
    v_bounds : tuple of float
        Search interval for each day's variance.
    n_jobs : int
        Threads used across days; results do not depend on it.

    Attributes
    ----------
    variances_ : ndarray of shape (m,)
    sigmas_ : ndarray of shape (m,)
    noise_variance_ : float
    result_ : CalibrationResult
    """

    def __init__(self, kappa=SPX_PARAMS.kappa, theta=SPX_PARAMS.theta,
                 sigma=SPX_PARAMS.sigma, rho=SPX_PARAMS.rho, n_points=2 ** 11,
                 eta=0.4, lam=3.6549e-4, alpha=DEFAULT_ALPHA, v_bounds=DEFAULT_BOUNDS, n_jobs=1):
        self.kappa = kappa
        self.theta = theta
        self.sigma = sigma
        self.rho = rho
        self.n_points = n_points
        self.eta = eta
        self.lam = lam
        self.alpha = alpha
        self.v_bounds = v_bounds
        self.n_jobs = n_jobs

    def fit(self, panel, y=None):
        result = fit_panel(list(panel), self._model_params(), self.v_bounds,
                           self._frft_config(), self.n_jobs)
        self.result_ = result
        self.variances_ = result.variances
        self.sigmas_ = result.sigmas
        self.noise_variance_ = result.noise_variance
        self.n_days_ = len(result.variances)
        return self

    def transform(self, panel):
        """Fitted ``(variance, sigma)`` per day of a (possibly new) panel."""
        check_is_fitted(self, "variances_")
        result = fit_panel(list(panel), self._model_params(), self.v_bounds,
                           self._frft_config(), self.n_jobs)
        return np.column_stack([result.variances, result.sigmas])

    def predict(self, panel):
        """Model prices of each day's admitted calls at the fitted variances."""
        check_is_fitted(self, "variances_")
        panel = list(panel)
        if len(panel) != self.n_days_:
            raise ValueError(f"fitted on {self.n_days_} days, got {len(panel)}")
        params, config = self._model_params(), self._frft_config()
        return [ChainPricer(chain, chain.calls(), params, config).prices(v)
                for chain, v in zip(panel, self.variances_)]

    def score(self, panel, y=None):
        """Negative mean squared call residual (higher is better)."""
        predictions = self.predict(panel)
        resid = np.concatenate([np.array([q.observed for q in chain.calls()]) - p
                                for chain, p in zip(panel, predictions)])
        return -float(resid @ resid / resid.size)


class FisherBands(_HestonParamsMixin, TransformerMixin, BaseEstimator):
    """Cramer-Rao bands for a fitted panel.

    ``fit(panel, variances, noise_variance)`` assembles the block information
    from the admitted quotes (calls and puts) at the given variances.
    ``transform`` returns an ``(m, 3)`` array of ``(value, beta, beta / value)``
    where ``value`` is ``sigma_t``, or ``K_var,t`` when ``swap=True``.
    """

    def __init__(self, kappa=SPX_PARAMS.kappa, theta=SPX_PARAMS.theta,
                 sigma=SPX_PARAMS.sigma, rho=SPX_PARAMS.rho, n_points=2 ** 11,
                 eta=0.4, lam=3.6549e-4, alpha=DEFAULT_ALPHA, mode="per_option",
                 swap=False, horizon=VIX_HORIZON, include_puts=True):
        self.kappa = kappa
        self.theta = theta
        self.sigma = sigma
        self.rho = rho
        self.n_points = n_points
        self.eta = eta
        self.lam = lam
        self.alpha = alpha
        self.mode = mode
        self.swap = swap
        self.horizon = horizon
        self.include_puts = include_puts

    def fit(self, panel, variances, noise_variance=None):
        panel = list(panel)
        variances = np.asarray(variances, dtype=float)
        if noise_variance is None:
            raise ValueError("noise_variance is required")
        params, config = self._model_params(), self._frft_config()
        grads = [chain_gradients(c, v, params, config, self.include_puts)
                 for c, v in zip(panel, variances)]
        dates = [c.date for c in panel]
        self.block_ = assemble_block_fisher(grads, noise_variance, self.mode, dates)
        self.diagonal_inverse_ = invert_block_diagonal_entries(self.block_)
        self.variances_ = variances
        if self.swap:
            jac = kvar_jacobian(variances, params, self.horizon)
            series = transform_fisher(self.block_, jac, variances, params, self.horizon)
            self.values_, self.bands_ = series.kvar, series.band
        else:
            self.values_ = np.sqrt(variances)
            self.bands_ = credibility_bands(self.diagonal_inverse_, self.values_)
        self.shared_se_ = self.bands_.shared_se
        return self

    def transform(self, X):
        """Per-day ``(value, beta, beta / value)`` of the fitted panel; ``X`` is ignored."""
        check_is_fitted(self, "bands_")
        return np.column_stack([self.values_, self.bands_.beta, self.bands_.relative])
