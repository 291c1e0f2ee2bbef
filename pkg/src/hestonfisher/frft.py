"""Simpson-weighted Carr-Madan sums and their evaluation on a log-strike grid
by the fractional fast Fourier transform.

Sampling the frequency axis makes the sum reproduce a log-strike periodised
price; the resulting images are known in closed form and are removed by
default (``FrftConfig.alias_correction``).

The discretised price at log-strike ``k`` is

    E(k) ~ exp(-eps alpha k) eta / pi * sum_j Re[exp(-i phi_j k) e_hat_j] w_j,

with ``phi_j = j eta``.  On the grid ``k_u = -b + u lambda + x`` the sum becomes a
fractional DFT with ``beta = lambda eta``, evaluated here with a chirp
(Bluestein) convolution of length ``2N`` on top of a radix-2 FFT.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._validation import check_epsilon, check_positive, check_power_of_two
from .exceptions import GridConstructionError
from .greeks import GREEK_ORDER, _check_gamma, _log_cf_gradient_from_terms
from .heston import DEFAULT_ALPHA, _trap_terms, damping_denominator, shifted_argument


@dataclass(frozen=True)
class FrftConfig:
    """Frequency/log-strike grid: ``N`` points, spacings ``eta`` and ``lam``."""

    n_points: int = 2 ** 11
    eta: float = 0.4
    lam: float = 3.6549e-4
    alpha: float = DEFAULT_ALPHA
    alias_correction: bool = True

    def __post_init__(self):
        object.__setattr__(self, "n_points", check_power_of_two("n_points", self.n_points))
        check_positive("eta", self.eta)
        check_positive("lam", self.lam)
        check_positive("alpha", self.alpha)

    @property
    def beta(self):
        return self.lam * self.eta

    @property
    def half_width(self):
        return self.n_points * self.lam / 2.0

    def phi_grid(self):
        return np.arange(self.n_points) * self.eta

    @classmethod
    def fft_compatible(cls, n_points=2 ** 11, eta=0.4, alpha=DEFAULT_ALPHA):
        """Grid obeying ``lam * eta = 2 pi / N`` (plain-FFT Carr-Madan)."""
        return cls(n_points, eta, 2.0 * math.pi / (n_points * eta), alpha)

    @property
    def period(self):
        """Log-strike period ``2 pi / eta`` of the sampled transform."""
        return 2.0 * math.pi / self.eta


@dataclass(frozen=True)
class StrikeGrid:
    log_strikes: np.ndarray

    @property
    def strikes(self):
        return np.exp(self.log_strikes)

    @property
    def spacing(self):
        return float(self.log_strikes[1] - self.log_strikes[0])

    def __len__(self):
        return self.log_strikes.size

    def nearest(self, log_strike):
        """Index of the grid node closest to ``log_strike``."""
        return int(np.argmin(np.abs(self.log_strikes - log_strike)))


def strike_grid(log_price, config):
    """Log-strikes ``k_u = -b + u lam + x`` centred on the log-price."""
    u = np.arange(config.n_points)
    return StrikeGrid(-config.half_width + u * config.lam + log_price)


def simpson_weights(n_points):
    """Weights ``1/3, 4/3, 2/3, 4/3, ..., 1/3`` (odd interior 4/3, even interior 2/3)."""
    if n_points < 4:
        raise ValueError(f"Simpson weights need at least 4 points, got {n_points}")
    w = np.where(np.arange(n_points) % 2 == 1, 4.0, 2.0) / 3.0
    w[0] = w[-1] = 1.0 / 3.0
    return w


# --- radix-2 FFT -----------------------------------------------------------

@lru_cache(maxsize=32)
def _bit_reversal(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=64)
def _twiddles(size, sign):
    return np.exp(sign * 2j * np.pi * np.arange(size // 2) / size)


def _radix2(x, sign):
    x = np.asarray(x, dtype=complex)
    n = check_power_of_two("transform length", x.size, minimum=1)
    a = x[_bit_reversal(n)]
    size = 2
    while size <= n:
        half = size // 2
        blocks = a.reshape(-1, size)
        even = blocks[:, :half]
        odd = blocks[:, half:] * _twiddles(size, sign)
        a = np.concatenate([even + odd, even - odd], axis=1).reshape(n)
        size *= 2
    return a


def fft(x):
    """Forward DFT ``X_u = sum_j x_j exp(-2 pi i u j / n)``; ``n`` a power of two."""
    return _radix2(x, -1)


def ifft(x):
    """Inverse DFT, normalised by ``1/n``."""
    x = np.asarray(x, dtype=complex)
    return _radix2(x, +1) / x.size


@lru_cache(maxsize=16)
def _chirp_plan(n, beta):
    j = np.arange(n, dtype=float)
    half_phase = 0.5 * beta * j * j
    chirp = np.exp(1j * half_phase)
    tail = np.exp(-0.5j * beta * (n - j) ** 2)
    z = np.concatenate([np.conj(chirp), tail])
    return chirp, fft(z)


def frft(x_vec, beta):
    """Fractional DFT ``y_u = sum_j exp(i beta u j) x_j`` for ``u = 0..N-1``.

    Built from the chirp vectors ``y = (c_j x_j, 0)``, ``z = (conj(c_j),
    conj(c_{N-j}))`` with ``c_j = exp(i beta j^2 / 2)``; the result is
    ``c * IDFT(DFT(y) DFT(z))`` truncated to the first ``N`` entries.
    """
    x_vec = np.asarray(x_vec, dtype=complex)
    n = x_vec.size
    chirp, z_hat = _chirp_plan(n, float(beta))
    y = np.concatenate([chirp * x_vec, np.zeros(n, dtype=complex)])
    h = ifft(fft(y) * z_hat)
    return chirp * h[:n]


# --- Carr-Madan on a grid ----------------------------------------------------

def _image_sum(epsilon, log_strikes, state, tau, alpha, period):
    """Sum of the periodic images ``exp(a m T) E(k + m T)``, ``m != 0``, ``a = eps alpha``.

    A frequency sum with spacing ``eta`` reproduces the damped price
    periodised in log-strike with period ``T = 2 pi / eta``.  The images that
    matter sit at extreme strikes, where the option is worth its forward
    intrinsic value, so their sum is a pair of geometric series.
    """
    k = np.asarray(log_strikes, dtype=float)
    discount = math.exp(-state.rate * tau)
    forward = state.spot * math.exp(-state.dividend_yield * tau)
    if epsilon == 1:
        q_spot = math.exp(-alpha * period)
        q_strike = math.exp(-(alpha + 1.0) * period)
        return forward * q_spot / (1 - q_spot) - np.exp(k) * discount * q_strike / (1 - q_strike)
    q_strike = math.exp(-(alpha - 1.0) * period)
    q_spot = math.exp(-alpha * period)
    return np.exp(k) * discount * q_strike / (1 - q_strike) - forward * q_spot / (1 - q_spot)


def aliasing_bias(epsilon, log_strikes, state, tau, config):
    """Leading discretisation bias of the Simpson sum at ``log_strikes``.

    Simpson weights equal ``4/3`` of the trapezoid rule at spacing ``eta``
    minus ``1/3`` of the trapezoid rule at ``2 eta``, so the bias combines the
    images at periods ``T`` and ``T / 2``.  It does not depend on the hidden
    parameters, hence Greeks carry no such bias.
    """
    epsilon = check_epsilon(epsilon)
    if config.alpha <= 1.0 and epsilon == -1:
        raise GridConstructionError("put damping needs alpha > 1 for a convergent image sum")
    T = config.period
    return (4.0 * _image_sum(epsilon, log_strikes, state, tau, config.alpha, T)
            - _image_sum(epsilon, log_strikes, state, tau, config.alpha, 0.5 * T)) / 3.0


def _checked_denominator(epsilon, phi, alpha):
    denom = damping_denominator(epsilon, phi, alpha)
    if np.any(denom == 0):
        j = int(np.argmax(denom == 0))
        raise GridConstructionError(
            f"damping denominator vanishes at phi_{j}={phi[j]:g} "
            f"(alpha={alpha}, epsilon={epsilon}); change eta or alpha")
    return denom


def _grid_terms(epsilon, state, variance, tau, params, config, gamma):
    """Frequency grid, damped integrand (optionally Greek-weighted) and Simpson weights."""
    epsilon = check_epsilon(epsilon)
    phi = config.phi_grid()
    denom = _checked_denominator(epsilon, phi, config.alpha)
    u = shifted_argument(epsilon, phi, config.alpha)
    terms = _trap_terms(u, tau, params, state.rate, state.dividend_yield)
    e_hat = math.exp(-state.rate * tau) * np.exp(
        terms.C + terms.D * variance + 1j * u * state.log_price) / denom
    if gamma is not None:
        idx = GREEK_ORDER.index(gamma)
        e_hat = e_hat * _log_cf_gradient_from_terms(terms, variance, tau, params)[idx]
    return phi, e_hat, simpson_weights(config.n_points)


def _grid_values(epsilon, state, variance, tau, params, config, gamma):
    phi, e_hat, w = _grid_terms(epsilon, state, variance, tau, params, config, gamma)
    grid = strike_grid(state.log_price, config)
    x = np.exp(1j * (config.half_width - state.log_price) * phi) * e_hat * w
    # exp(-i phi_j k_u) contributes exp(-i beta u j): a fractional DFT at -beta.
    summed = np.real(frft(x, -config.beta))
    scale = np.exp(-epsilon * config.alpha * grid.log_strikes) * config.eta / math.pi
    values = scale * summed
    if gamma is None and config.alias_correction:
        values = values - aliasing_bias(epsilon, grid.log_strikes, state, tau, config)
    return grid, values


def price_grid(epsilon, state, variance, tau, params, config=None):
    """Prices for all ``N`` grid strikes in one transform; returns ``(grid, prices)``."""
    check_positive("variance", variance, allow_zero=True)
    return _grid_values(epsilon, state, variance, tau, params, config or FrftConfig(), None)


def greek_grid(gamma, epsilon, state, variance, tau, params, config=None):
    """``dE/dgamma`` for all grid strikes; returns ``(grid, values)``."""
    _check_gamma(gamma)
    check_positive("variance", variance, allow_zero=True)
    return _grid_values(epsilon, state, variance, tau, params, config or FrftConfig(), gamma)


def simpson_sum(epsilon, log_strikes, state, variance, tau, params, config=None, gamma=None):
    """The same Simpson sum evaluated directly (O(N) per strike) at arbitrary log-strikes."""
    config = config or FrftConfig()
    phi, e_hat, w = _grid_terms(epsilon, state, variance, tau, params, config, gamma)
    k = np.atleast_1d(np.asarray(log_strikes, dtype=float))
    kernel = np.exp(-1j * np.outer(k, phi))
    scale = np.exp(-epsilon * config.alpha * k) * config.eta / math.pi
    values = scale * np.real(kernel @ (e_hat * w))
    if gamma is None and config.alias_correction:
        values = values - aliasing_bias(epsilon, k, state, tau, config)
    return values


class SimpsonPricer:
    """Simpson-discretised Carr-Madan prices and gradients at fixed strikes.

    Everything that does not depend on the instantaneous variance is computed
    once, so repeated evaluations for different ``v`` (as in a 1-D fit) cost a
    single matrix-vector product.  At grid strikes the values coincide with
    :func:`price_grid` up to round-off.
    """

    def __init__(self, epsilon, log_strikes, state, tau, params, config=None):
        self.epsilon = check_epsilon(epsilon)
        self.config = config or FrftConfig()
        self.tau = tau
        self.params = params
        self.log_strikes = np.atleast_1d(np.asarray(log_strikes, dtype=float))
        phi = self.config.phi_grid()
        denom = _checked_denominator(self.epsilon, phi, self.config.alpha)
        u = shifted_argument(self.epsilon, phi, self.config.alpha)
        self._terms = _trap_terms(u, tau, params, state.rate, state.dividend_yield)
        self._base = (math.exp(-state.rate * tau) * simpson_weights(self.config.n_points)
                      * np.exp(self._terms.C + 1j * u * state.log_price) / denom)
        scale = np.exp(-self.epsilon * self.config.alpha * self.log_strikes)
        self._kernel = (scale * self.config.eta / math.pi)[:, None] * np.exp(
            -1j * np.outer(self.log_strikes, phi))
        self._bias = (aliasing_bias(self.epsilon, self.log_strikes, state, tau, self.config)
                      if self.config.alias_correction else 0.0)

    def prices(self, variance):
        raw = np.real(self._kernel @ (self._base * np.exp(self._terms.D * variance)))
        return raw - self._bias

    def prices_many(self, variances):
        """Prices for several variances at once; shape ``(n_strikes, n_variances)``."""
        v = np.atleast_1d(np.asarray(variances, dtype=float))
        weighted = self._base[:, None] * np.exp(np.outer(self._terms.D, v))
        bias = np.asarray(self._bias)[..., None] if np.ndim(self._bias) else self._bias
        return np.real(self._kernel @ weighted) - bias

    def variance_derivative(self, variance):
        """``dE/dv`` at each strike."""
        weighted = self._base * self._terms.D * np.exp(self._terms.D * variance)
        return np.real(self._kernel @ weighted)

    def gradients(self, variance):
        """Array of shape ``(n_strikes, 5)`` in ``GREEK_ORDER``."""
        weighted = self._base * np.exp(self._terms.D * variance)
        factors = _log_cf_gradient_from_terms(self._terms, variance, self.tau, self.params)
        return np.real((factors * weighted) @ self._kernel.T).T
