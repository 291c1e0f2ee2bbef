"""Fisher information under additive Gaussian price noise and Cramer-Rao bands.

With observed prices ``e = E(Theta) + noise``, noise i.i.d. ``N(0, v_hat)``,
the information of one option is ``grad E grad E^T / v_hat``.  For a panel of
``m`` days the parameter vector is ``(sigma_t)_t`` followed by the four shared
parameters ``(kappa, sqrt_theta, sigma, rho)``.  Its information matrix has an
"arrow" shape: a diagonal day block bordered by ``m x 4`` couplings and a dense
``4 x 4`` corner.  The diagonal of its inverse is obtained in ``O(m)`` through
the Schur complement of the day block.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive, check_square
from .exceptions import AssemblyError, NoiseVarianceError
from .greeks import GREEK_ORDER, SHARED_ORDER, GreekVector

BAND_LABEL = "2-SE band (CR lower bound)"
CONDITION_LIMIT = 1e12
FISHER_MODES = ("per_option", "summed")


def _check_noise(noise_variance):
    try:
        return check_positive("noise_variance", noise_variance)
    except ValueError as exc:
        raise NoiseVarianceError(str(exc)) from None


def is_symmetric(matrix, rtol=1e-12):
    matrix = np.asarray(matrix, dtype=float)
    scale = max(np.max(np.abs(matrix)), np.finfo(float).tiny)
    return bool(np.max(np.abs(matrix - matrix.T)) <= rtol * scale)


def is_psd(matrix, rtol=1e-10):
    """Minimum eigenvalue ``>= -rtol * max eigenvalue`` (symmetric input)."""
    eig = np.linalg.eigvalsh(np.asarray(matrix, dtype=float))
    return bool(eig[0] >= -rtol * max(eig[-1], 0.0))


@dataclass(frozen=True)
class FisherMatrix:
    """Symmetric information matrix with parameter labels."""

    labels: tuple
    entries: np.ndarray

    def __post_init__(self):
        entries = check_square("entries", self.entries)
        labels = tuple(self.labels)
        if len(labels) != entries.shape[0]:
            raise ValueError(f"{len(labels)} labels for a {entries.shape[0]}x{entries.shape[0]} matrix")
        if not is_symmetric(entries):
            raise ValueError("Fisher matrix must be symmetric")
        entries = 0.5 * (entries + entries.T)
        entries.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "entries", entries)

    @property
    def shape(self):
        return self.entries.shape

    @property
    def is_psd(self):
        return is_psd(self.entries)

    def __getitem__(self, key):
        i, j = key
        return self.entries[self.labels.index(i), self.labels.index(j)]

    def __add__(self, other):
        if self.labels != other.labels:
            raise ValueError(f"label mismatch: {self.labels} vs {other.labels}")
        return FisherMatrix(self.labels, self.entries + other.entries)

    def reparametrize(self, jacobian, labels=None):
        """``D^T J D`` for ``D = d(old)/d(new)``."""
        jacobian = np.asarray(jacobian, dtype=float)
        return FisherMatrix(labels or self.labels, jacobian.T @ self.entries @ jacobian)

    def inverse_diagonal(self):
        return np.diag(np.linalg.inv(self.entries))

    @classmethod
    def zeros(cls, labels=GREEK_ORDER):
        return cls(labels, np.zeros((len(labels), len(labels))))


def fisher_single(grad, noise_variance):
    """Rank-one information ``grad grad^T / v_hat`` of one noisy price."""
    v_hat = _check_noise(noise_variance)
    g = grad.as_array() if isinstance(grad, GreekVector) else np.asarray(grad, dtype=float)
    if g.shape != (len(GREEK_ORDER),):
        raise ValueError(f"gradient must have {len(GREEK_ORDER)} entries, got shape {g.shape}")
    return FisherMatrix(GREEK_ORDER, np.outer(g, g) / v_hat)


def fisher_aggregate(matrices, labels=GREEK_ORDER):
    """Sum of information matrices; the empty sum is the zero matrix."""
    total = FisherMatrix.zeros(labels)
    for matrix in matrices:
        total = total + matrix
    return total


@dataclass(frozen=True)
class TimeSeriesTheta:
    """Panel parameter vector: daily volatilities followed by the shared parameters."""

    sigmas: np.ndarray
    shared: tuple

    def __post_init__(self):
        sigmas = np.atleast_1d(np.asarray(self.sigmas, dtype=float))
        if sigmas.size < 1:
            raise ValueError("need at least one day")
        if np.any(sigmas < 0) or not np.all(np.isfinite(sigmas)):
            raise ValueError("daily volatilities must be finite and non-negative")
        if len(self.shared) != len(SHARED_ORDER):
            raise ValueError(f"shared parameters must be {SHARED_ORDER}")
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "shared", tuple(float(x) for x in self.shared))

    @classmethod
    def from_variances(cls, variances, params):
        return cls(np.sqrt(np.asarray(variances, dtype=float)),
                   (params.kappa, params.sqrt_theta, params.sigma, params.rho))

    @property
    def m(self):
        return self.sigmas.size

    def as_vector(self):
        return np.concatenate([self.sigmas, self.shared])

    def labels(self):
        return tuple(f"sigma_{i}" for i in range(self.m)) + SHARED_ORDER


@dataclass(frozen=True)
class BlockFisher:
    """Arrow-shaped panel information ``(1/v_hat) [[diag(a11), a12], [a12^T, a22]]``."""

    a11_diag: np.ndarray
    a12: np.ndarray
    a22: np.ndarray
    noise_variance: float
    mode: str = "per_option"

    def __post_init__(self):
        a11 = np.atleast_1d(np.asarray(self.a11_diag, dtype=float))
        a12 = np.asarray(self.a12, dtype=float).reshape(a11.size, -1)
        a22 = check_square("a22", self.a22)
        if a12.shape[1] != a22.shape[0]:
            raise ValueError(f"a12 has {a12.shape[1]} columns but a22 is {a22.shape[0]}x{a22.shape[0]}")
        if np.any(a11 < 0):
            raise ValueError("a11 entries are squared sensitivities and must be >= 0")
        if not is_symmetric(a22):
            raise ValueError("a22 must be symmetric")
        _check_noise(self.noise_variance)
        object.__setattr__(self, "a11_diag", a11)
        object.__setattr__(self, "a12", a12)
        object.__setattr__(self, "a22", 0.5 * (a22 + a22.T))

    @property
    def m(self):
        return self.a11_diag.size

    @property
    def n_shared(self):
        return self.a22.shape[0]

    def full_matrix(self):
        """Dense ``(m + p) x (m + p)`` matrix including the ``1/v_hat`` factor."""
        m, p = self.m, self.n_shared
        out = np.zeros((m + p, m + p))
        out[np.arange(m), np.arange(m)] = self.a11_diag
        out[:m, m:] = self.a12
        out[m:, :m] = self.a12.T
        out[m:, m:] = self.a22
        return out / self.noise_variance

    def as_fisher_matrix(self):
        labels = tuple(f"sigma_{i}" for i in range(self.m)) + SHARED_ORDER[:self.n_shared]
        return FisherMatrix(labels, self.full_matrix())


def assemble_block_fisher(day_gradients, noise_variance, mode="per_option", dates=None):
    """Block information of a panel from per-option price gradients.

    Parameters
    ----------
    day_gradients : sequence of array_like
        One ``(n_options, 5)`` array per day in ``GREEK_ORDER`` (sigma0 first).
    noise_variance : float
        Gaussian noise variance ``v_hat``.
    mode : {"per_option", "summed"}
        ``"per_option"`` sums the outer products of the individual option
        gradients, the information of independent noisy prices.
        ``"summed"`` forms outer products of the gradient of each day's summed
        price.  That matrix has one rank per day and its shared block equals
        the coupling it removes, so its Schur complement vanishes; it is kept
        for comparison only.
    dates : sequence, optional
        Day labels used in error messages.
    """
    if mode not in FISHER_MODES:
        raise ValueError(f"mode must be one of {FISHER_MODES}, got {mode!r}")
    v_hat = _check_noise(noise_variance)
    day_gradients = list(day_gradients)
    if not day_gradients:
        raise AssemblyError("cannot assemble a Fisher matrix for an empty panel")
    m = len(day_gradients)
    a11 = np.zeros(m)
    a12 = np.zeros((m, len(SHARED_ORDER)))
    a22 = np.zeros((len(SHARED_ORDER), len(SHARED_ORDER)))
    for i, grads in enumerate(day_gradients):
        grads = np.asarray(grads, dtype=float).reshape(-1, len(GREEK_ORDER))
        if grads.shape[0] == 0:
            label = dates[i] if dates is not None else f"day {i}"
            raise AssemblyError(f"no options on {label}")
        if not np.all(np.isfinite(grads)):
            label = dates[i] if dates is not None else f"day {i}"
            raise AssemblyError(f"non-finite price gradient on {label}")
        if mode == "summed":
            grads = grads.sum(axis=0, keepdims=True)
        vega, shared = grads[:, 0], grads[:, 1:]
        a11[i] = vega @ vega
        a12[i] = vega @ shared
        a22 += shared.T @ shared
    return BlockFisher(a11, a12, a22, v_hat, mode)


@dataclass(frozen=True)
class DiagonalInverse:
    """Diagonal of ``J^{-1}`` split into day and shared entries.

    ``singular_days`` marks days without information (entries ``inf``).
    ``shared_reliable`` is False when the Schur complement is ill-conditioned
    beyond ``CONDITION_LIMIT`` (or singular, in which case all entries of the
    connected days are ``inf``).
    """

    day_entries: np.ndarray
    shared_entries: np.ndarray
    singular_days: np.ndarray
    schur_condition: float
    shared_reliable: bool
    noise_variance: float = field(default=float("nan"))

    @property
    def all_entries(self):
        return np.concatenate([self.day_entries, self.shared_entries])


def _schur_inverse(bf):
    """``(S^{-1}, condition, ok)`` for ``S = a22 - a12^T diag(a)^{-1} a12`` over informative days."""
    a = bf.a11_diag
    ok = a > 0
    r = bf.a12[ok]
    schur = bf.a22 - r.T @ (r / a[ok, None])
    schur = 0.5 * (schur + schur.T)
    if bf.n_shared == 0:
        return schur, 1.0, True
    eig = np.linalg.eigvalsh(schur)
    top = max(abs(eig[-1]), np.max(np.abs(bf.a22)), np.finfo(float).tiny)
    if eig[0] <= 1e-14 * top:
        return None, math.inf, False
    return np.linalg.inv(schur), float(eig[-1] / eig[0]), True


def invert_block_diagonal_entries(bf):
    """All ``m + 4`` diagonal entries of ``J^{-1}`` in ``O(m)``.

    Day entries are ``v_hat (1/a_ii + r_i S^{-1} r_i^T / a_ii^2)`` with ``r_i``
    the day's coupling row; shared entries are ``v_hat diag(S^{-1})``.
    """
    a = bf.a11_diag
    singular = ~(a > 0)
    s_inv, cond, invertible = _schur_inverse(bf)
    day = np.full(bf.m, math.inf)
    if not invertible:
        shared = np.full(bf.n_shared, math.inf)
        return DiagonalInverse(day, shared, singular, cond, False, bf.noise_variance)
    ok = ~singular
    r = bf.a12[ok]
    quad = np.einsum("ij,jk,ik->i", r, s_inv, r)
    day[ok] = bf.noise_variance * (1.0 / a[ok] + quad / a[ok] ** 2)
    shared = bf.noise_variance * np.diag(s_inv).copy()
    return DiagonalInverse(day, shared, singular, cond, cond <= CONDITION_LIMIT,
                           bf.noise_variance)


def dense_diagonal_inverse(bf):
    """Reference diagonal of ``J^{-1}`` by dense inversion (days without information dropped)."""
    ok = bf.a11_diag > 0
    keep = np.concatenate([ok, np.ones(bf.n_shared, dtype=bool)])
    full = bf.full_matrix()[np.ix_(keep, keep)]
    diag = np.diag(np.linalg.inv(full))
    day = np.full(bf.m, math.inf)
    day[ok] = diag[:int(ok.sum())]
    return np.concatenate([day, diag[int(ok.sum()):]])


@dataclass(frozen=True)
class CredibilityBand:
    """Cramer-Rao double standard deviations for the daily volatilities."""

    beta: np.ndarray
    relative: np.ndarray
    shared_se: np.ndarray
    shared_reliable: bool = True
    label: str = BAND_LABEL

    @property
    def finite(self):
        return np.isfinite(self.beta)

    @property
    def mean_beta(self):
        """Average band over days with finite uncertainty."""
        finite = self.beta[self.finite]
        return float(finite.mean()) if finite.size else math.inf


def credibility_bands(diag_inv, sigmas):
    """``beta_t = 2 sqrt(J^{-1}_tt)``, relative bands ``beta_t / sigma_t`` and shared SEs."""
    if isinstance(diag_inv, DiagonalInverse):
        day, shared, reliable = diag_inv.day_entries, diag_inv.shared_entries, diag_inv.shared_reliable
    else:
        day, shared, reliable = np.asarray(diag_inv, dtype=float), np.zeros(0), True
    day = np.asarray(day, dtype=float)
    if np.any(day < 0):
        raise ValueError("diagonal inverse entries must be >= 0")
    sigmas = np.asarray(sigmas, dtype=float)
    beta = 2.0 * np.sqrt(day)
    with np.errstate(divide="ignore", invalid="ignore"):
        relative = np.where(sigmas > 0, beta / np.where(sigmas > 0, sigmas, 1.0), math.inf)
    return CredibilityBand(beta, relative, np.sqrt(np.asarray(shared, dtype=float)), reliable)


@dataclass(frozen=True)
class LemmaBound:
    """Both sides of ``(J^{-1})_ii >= 1 / J_ii``."""

    inverse_diagonal: np.ndarray
    reciprocal_diagonal: np.ndarray
    bound_only: bool = False

    @property
    def slack(self):
        return self.inverse_diagonal - self.reciprocal_diagonal

    @property
    def holds(self):
        if self.bound_only:
            return True
        return bool(np.all(self.slack >= -1e-12 * np.maximum(1.0, np.abs(self.inverse_diagonal))))


def lemma_lower_bound(fisher):
    """Joint-estimation variance versus the single-parameter bound for each parameter.

    Accepts a :class:`BlockFisher`, a :class:`FisherMatrix` or a plain array.
    If the matrix is singular only the reciprocal diagonal is reported.
    """
    if isinstance(fisher, BlockFisher):
        full = fisher.full_matrix()
        inv = invert_block_diagonal_entries(fisher)
        with np.errstate(divide="ignore"):
            recip = 1.0 / np.diag(full)
        if not np.all(np.isfinite(inv.all_entries)):
            return LemmaBound(inv.all_entries, recip, bound_only=True)
        return LemmaBound(inv.all_entries, recip)
    J = fisher.entries if isinstance(fisher, FisherMatrix) else check_square("J", fisher)
    with np.errstate(divide="ignore"):
        recip = 1.0 / np.diag(J)
    try:
        cond = np.linalg.cond(J)
    except np.linalg.LinAlgError:
        cond = math.inf
    if not np.isfinite(cond) or cond > 1e15:
        return LemmaBound(np.full(J.shape[0], math.inf), recip, bound_only=True)
    return LemmaBound(np.diag(np.linalg.inv(J)), recip)


def vega_only_band(block, day=None):
    """Cheap lower bound ``2 sqrt(v_hat / a_ii)`` on the daily band."""
    with np.errstate(divide="ignore"):
        band = 2.0 * np.sqrt(block.noise_variance / block.a11_diag)
    return band if day is None else band[day]
