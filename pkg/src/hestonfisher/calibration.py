"""Per-day least-squares variance fits and the pooled noise-variance estimate.

Under i.i.d. Gaussian price noise the maximum-likelihood variance of a day is
the minimiser of the squared error over the day's call quotes.  The fit scans
a log-spaced variance grid to locate the global basin, refines with a bounded
Brent search and polishes with Gauss-Newton steps.  Model prices are the
discretised Carr-Madan sums evaluated directly at the quoted strikes, which
coincide with the fractional-FFT grid values at grid strikes.
"""
from __future__ import annotations

import math
import warnings
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import datetime as dt

import numpy as np
from scipy.optimize import minimize_scalar

from ._validation import as_1d_float, check_finite, check_positive
from .exceptions import FitError, HestonError, PanelFormatError
from .frft import FrftConfig, SimpsonPricer
from .heston import MarketState, OptionSpec

DAYS_PER_YEAR = 365.0
DEFAULT_BOUNDS = (1e-6, 4.0)
SCAN_GRID = np.geomspace(1e-5, 1.0, 64)


class MultipleMinimaWarning(UserWarning):
    """The day objective has more than one local minimum on the scan grid."""


@dataclass(frozen=True)
class RateCurve:
    """Zero rates by calendar days to maturity, linearly interpolated."""

    maturity_days: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        days = as_1d_float("maturity_days", self.maturity_days)
        rates = as_1d_float("rates", self.rates)
        if days.size != rates.size or days.size == 0:
            raise PanelFormatError("rate curve needs matching, non-empty maturity and rate columns")
        order = np.argsort(days, kind="stable")
        days, rates = days[order], rates[order]
        if np.any(np.diff(days) == 0):
            raise PanelFormatError("rate curve has duplicate maturities")
        object.__setattr__(self, "maturity_days", days)
        object.__setattr__(self, "rates", rates)

    @classmethod
    def flat(cls, rate, days=(1.0, 3650.0)):
        return cls(np.asarray(days, dtype=float), np.full(len(days), float(rate)))

    def covers(self, days):
        return self.maturity_days[0] <= days <= self.maturity_days[-1]

    def rate(self, days):
        if not self.covers(days):
            raise PanelFormatError(
                f"missing rate for maturity {days} days (curve covers "
                f"{self.maturity_days[0]:g}-{self.maturity_days[-1]:g})")
        return float(np.interp(days, self.maturity_days, self.rates))


@dataclass(frozen=True)
class OptionQuote:
    """One quoted option; ``observed`` defaults to the bid-ask mid."""

    epsilon: int
    strike: float
    days: int
    bid: float
    ask: float
    observed: float | None = None
    expiry: dt.date | None = None

    def __post_init__(self):
        bid = check_positive("bid", self.bid, allow_zero=True)
        ask = check_finite("ask", self.ask)
        if ask < bid:
            raise PanelFormatError(f"ask {ask} below bid {bid}")
        if int(self.days) <= 0:
            raise PanelFormatError(f"days to expiry must be positive, got {self.days}")
        object.__setattr__(self, "days", int(self.days))
        if self.observed is None:
            object.__setattr__(self, "observed", 0.5 * (bid + ask))

    @property
    def mid(self):
        return 0.5 * (self.bid + self.ask)

    @property
    def maturity(self):
        return self.days / DAYS_PER_YEAR

    @property
    def spec(self):
        return OptionSpec(self.epsilon, self.strike, self.maturity)

    @property
    def is_call(self):
        return self.epsilon == 1

    @property
    def admitted(self):
        """Quotes enter fits and Fisher sums only with a positive bid and price."""
        return self.bid > 0 and self.observed > 0


@dataclass(frozen=True)
class DayChain:
    """All quotes of one trading day together with the day's market state."""

    state: MarketState
    quotes: tuple
    rate_curve: RateCurve | None = None

    def __post_init__(self):
        object.__setattr__(self, "quotes", tuple(self.quotes))

    @property
    def date(self):
        return self.state.date

    def state_for(self, days):
        """Market state with the zero rate matching ``days`` to maturity."""
        if self.rate_curve is None:
            return self.state
        return self.state.with_rate(self.rate_curve.rate(days))

    def calls(self):
        return [q for q in self.quotes if q.is_call and q.admitted]

    def admitted(self):
        return [q for q in self.quotes if q.admitted]

    def with_quotes(self, quotes):
        return DayChain(self.state, tuple(quotes), self.rate_curve)

    def with_observed(self, observed):
        """Copy with new observed prices for the admitted calls (in :meth:`calls` order)."""
        observed = list(observed)
        calls = self.calls()
        if len(observed) != len(calls):
            raise ValueError(f"{len(observed)} prices for {len(calls)} admitted calls")
        lookup = {id(q): o for q, o in zip(calls, observed)}
        new = [OptionQuote(q.epsilon, q.strike, q.days, q.bid, q.ask, lookup[id(q)], q.expiry)
               if id(q) in lookup else q for q in self.quotes]
        return self.with_quotes(new)


class ChainPricer:
    """Model prices and gradients for a fixed list of quotes of one day.

    Quotes are grouped by ``(epsilon, days)``; each group shares one
    :class:`SimpsonPricer`, so evaluations for new variances are cheap.
    """

    def __init__(self, chain, quotes, params, config=None):
        self.config = config or FrftConfig()
        self.quotes = list(quotes)
        groups = defaultdict(list)
        for i, q in enumerate(self.quotes):
            groups[(q.epsilon, q.days)].append(i)
        self._groups = []
        for (eps, days), idx in sorted(groups.items()):
            strikes = np.log([self.quotes[i].strike for i in idx])
            pricer = SimpsonPricer(eps, strikes, chain.state_for(days), days / DAYS_PER_YEAR,
                                   params, self.config)
            self._groups.append((np.asarray(idx), pricer))

    def __len__(self):
        return len(self.quotes)

    def prices(self, variance):
        out = np.empty(len(self.quotes))
        for idx, pricer in self._groups:
            out[idx] = pricer.prices(variance)
        return out

    def prices_many(self, variances):
        out = np.empty((len(self.quotes), np.size(variances)))
        for idx, pricer in self._groups:
            out[idx] = pricer.prices_many(variances)
        return out

    def variance_derivative(self, variance):
        out = np.empty(len(self.quotes))
        for idx, pricer in self._groups:
            out[idx] = pricer.variance_derivative(variance)
        return out

    def gradients(self, variance):
        """``(n_quotes, 5)`` price gradients in ``GREEK_ORDER``."""
        out = np.empty((len(self.quotes), 5))
        for idx, pricer in self._groups:
            out[idx] = pricer.gradients(variance)
        return out


def chain_gradients(chain, variance, params, config=None, include_puts=True):
    """Price gradients of the admitted quotes of a day (calls and, optionally, puts)."""
    quotes = chain.admitted() if include_puts else chain.calls()
    if not quotes:
        return np.zeros((0, 5))
    return ChainPricer(chain, quotes, params, config).gradients(variance)


@dataclass(frozen=True)
class DayFit:
    variance: float
    objective: float
    residuals: np.ndarray
    n_quotes: int
    multiple_minima: bool = False

    @property
    def sigma(self):
        return math.sqrt(self.variance)


class DayObjective:
    """Squared error of a day's admitted calls as a function of the variance."""

    def __init__(self, chain, params, config=None):
        calls = chain.calls()
        if not calls:
            raise FitError(f"no admitted call quotes on {chain.date}")
        self.chain = chain
        self.pricer = ChainPricer(chain, calls, params, config)
        self.observed = np.array([q.observed for q in calls])
        self._scan_cache = {}

    def __call__(self, variance, observed=None):
        obs = self.observed if observed is None else observed
        r = obs - self.pricer.prices(variance)
        return float(r @ r)

    def scan(self, variances, observed=None):
        obs = self.observed if observed is None else observed
        key = tuple(np.atleast_1d(np.asarray(variances, dtype=float)))
        # model prices on a grid do not depend on the quotes; reuse across refits
        if key not in self._scan_cache:
            self._scan_cache[key] = self.pricer.prices_many(key)
        r = np.asarray(obs)[:, None] - self._scan_cache[key]
        return np.einsum("ij,ij->j", r, r)

    def fit(self, bounds=DEFAULT_BOUNDS, observed=None, xtol=1e-10):
        """Global-basin scan, bounded Brent refinement and Gauss-Newton polish."""
        lo, hi = float(bounds[0]), float(bounds[1])
        if not 0 <= lo < hi:
            raise FitError(f"invalid variance bounds {bounds}")
        obs = self.observed if observed is None else np.asarray(observed, dtype=float)
        grid = np.unique(np.concatenate([[lo], SCAN_GRID[(SCAN_GRID > lo) & (SCAN_GRID < hi)], [hi]]))
        values = self.scan(grid, obs)
        if not np.all(np.isfinite(values)):
            raise FitError(f"non-finite objective on the scan grid for {self.chain.date}")
        interior = (values[1:-1] < values[:-2]) & (values[1:-1] <= values[2:])
        n_minima = int(interior.sum()) + int(values[0] < values[1]) + int(values[-1] < values[-2])
        multiple = n_minima > 1
        if multiple:
            warnings.warn(f"objective on {self.chain.date} has {n_minima} local minima on the "
                          "scan grid; the global one is refined", MultipleMinimaWarning, stacklevel=3)
        best = int(np.argmin(values))
        a, b = grid[max(best - 1, 0)], grid[min(best + 1, grid.size - 1)]

        def objective(v):
            return self(v, obs)

        res = minimize_scalar(objective, bounds=(a, b), method="bounded",
                              options={"xatol": xtol, "maxiter": 500})
        v, f = float(res.x), float(res.fun)
        if values[best] < f:
            v, f = float(grid[best]), float(values[best])
        v, f = self._polish(v, f, obs, a, b, xtol)
        resid = obs - self.pricer.prices(v)
        return DayFit(v, f, resid, len(obs), multiple)

    def _polish(self, v, f, obs, a, b, xtol):
        for _ in range(8):
            r = obs - self.pricer.prices(v)
            g = self.pricer.variance_derivative(v)
            denom = g @ g
            if denom <= 0:
                break
            step = (r @ g) / denom
            trial = min(max(v + step, a), b)
            f_trial = self(trial, obs)
            if f_trial > f:
                break
            moved = abs(trial - v)
            v, f = trial, f_trial
            if moved < xtol:
                break
        return v, f


def fit_day_variance(chain, params, bounds=DEFAULT_BOUNDS, config=None):
    """Least-squares variance of one day from its admitted call quotes."""
    return DayObjective(chain, params, config).fit(bounds)


def estimate_noise_variance(fits):
    """Mean squared call residual over all fitted days."""
    resid = [np.asarray(f.residuals if isinstance(f, DayFit) else f, dtype=float) for f in fits]
    total = sum(r.size for r in resid)
    if total == 0:
        raise FitError("no admitted quotes to estimate the noise variance")
    return float(sum(r @ r for r in resid) / total)


@dataclass(frozen=True)
class CalibrationResult:
    """Fitted daily variances with the pooled noise variance.

    Failed days carry ``nan`` variance and an entry in ``failures``.
    """

    dates: tuple
    variances: np.ndarray
    noise_variance: float
    residuals: tuple
    objective: np.ndarray
    n_quotes: np.ndarray
    failures: dict = field(default_factory=dict)

    @property
    def sigmas(self):
        return np.sqrt(self.variances)

    @property
    def succeeded(self):
        return np.isfinite(self.variances)


def fit_panel(panel, params, bounds=DEFAULT_BOUNDS, config=None, n_jobs=1):
    """Fit every day of a panel, then pool the residuals into ``v_hat``.

    Per-day failures are recorded and do not abort the panel.  Results do not
    depend on ``n_jobs``.
    """
    panel = list(panel)
    if not panel:
        raise FitError("empty panel")

    def one(chain):
        try:
            return fit_day_variance(chain, params, bounds, config)
        except HestonError as exc:
            return exc

    if n_jobs == 1:
        outcomes = [one(c) for c in panel]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            outcomes = list(pool.map(one, panel))

    failures = {}
    variances, objective, n_quotes, residuals = [], [], [], []
    for i, (chain, out) in enumerate(zip(panel, outcomes)):
        if isinstance(out, Exception):
            failures[i] = f"{type(out).__name__}: {out}"
            variances.append(math.nan)
            objective.append(math.nan)
            n_quotes.append(len(chain.calls()))
            residuals.append(np.zeros(0))
        else:
            variances.append(out.variance)
            objective.append(out.objective)
            n_quotes.append(out.n_quotes)
            residuals.append(out.residuals)
    ok = [r for i, r in enumerate(residuals) if i not in failures]
    if not ok:
        raise FitError(f"all {len(panel)} days failed: {failures}")
    return CalibrationResult(
        dates=tuple(c.date for c in panel),
        variances=np.asarray(variances),
        noise_variance=estimate_noise_variance(ok),
        residuals=tuple(residuals),
        objective=np.asarray(objective),
        n_quotes=np.asarray(n_quotes, dtype=int),
        failures=failures,
    )
