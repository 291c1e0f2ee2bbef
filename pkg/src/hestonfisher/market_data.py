"""Option-chain, rate and close files, the VIX component filter and a synthetic
panel generator.

File formats (ISO-8601 dates, ``#`` lines are comments)::

    chains: trade_date,expiry_date,flag,strike,bid,ask      (flag C or P)
    rates:  date,maturity_days,rate                          (continuous, decimal)
    closes: date,close,dividend_yield
"""
from __future__ import annotations

import csv
import datetime as dt
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_positive
from .calibration import DAYS_PER_YEAR, DayChain, OptionQuote, RateCurve
from .exceptions import HestonError, PanelFormatError
from .frft import FrftConfig, SimpsonPricer, strike_grid
from .heston import SPX_PARAMS, MarketState, ModelParams

CHAIN_HEADER = ("trade_date", "expiry_date", "flag", "strike", "bid", "ask")
RATE_HEADER = ("date", "maturity_days", "rate")
CLOSE_HEADER = ("date", "close", "dividend_yield")

VIX_MIN_DAYS = 23
VIX_MAX_DAYS = 37


@dataclass(frozen=True)
class Rejection:
    line: int
    reason: str

    def __str__(self):
        return f"line {self.line}: {self.reason}"


def _rows(path, header):
    """Yield ``(line_number, fields)`` for data rows; checks the header."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        seen_header = False
        for lineno, row in enumerate(reader, start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            row = [f.strip() for f in row]
            if not seen_header:
                if tuple(row) != header:
                    raise PanelFormatError(
                        f"{path}: line {lineno}: expected header {','.join(header)}, "
                        f"got {','.join(row)}")
                seen_header = True
                continue
            yield lineno, row
        if not seen_header:
            raise PanelFormatError(f"{path}: missing header {','.join(header)}")


def _date(text):
    return dt.date.fromisoformat(text)


def _read_rates(path):
    curves = defaultdict(list)
    for lineno, row in _rows(path, RATE_HEADER):
        if len(row) != len(RATE_HEADER):
            raise PanelFormatError(f"{path}: line {lineno}: expected 3 fields, got {len(row)}")
        try:
            curves[_date(row[0])].append((float(row[1]), float(row[2])))
        except ValueError as exc:
            raise PanelFormatError(f"{path}: line {lineno}: {exc}") from None
    out = {}
    for day, points in curves.items():
        days, rates = zip(*points)
        try:
            out[day] = RateCurve(np.array(days), np.array(rates))
        except PanelFormatError as exc:
            raise PanelFormatError(f"{path}: curve for {day}: {exc}") from None
    return out


def _read_closes(path):
    out = {}
    for lineno, row in _rows(path, CLOSE_HEADER):
        if len(row) != len(CLOSE_HEADER):
            raise PanelFormatError(f"{path}: line {lineno}: expected 3 fields, got {len(row)}")
        try:
            day = _date(row[0])
            if day in out:
                raise ValueError(f"duplicate close for {day}")
            out[day] = (float(row[1]), float(row[2]))
        except ValueError as exc:
            raise PanelFormatError(f"{path}: line {lineno}: {exc}") from None
    return out


@dataclass
class ParsedPanel:
    """Day chains in date order plus the per-line diagnostics of rejected records."""

    chains: list
    rejected: list = field(default_factory=list)
    n_records: int = 0

    @property
    def n_accepted(self):
        return sum(len(c.quotes) for c in self.chains)

    def __iter__(self):
        return iter(self.chains)

    def __len__(self):
        return len(self.chains)

    def __getitem__(self, i):
        return self.chains[i]


def parse_panel(chain_file, rates_file, closes_file, strict=False):
    """Read the three CSV files into one :class:`DayChain` per trade date.

    Record-level problems (bad fields, expiry not after the trade date,
    duplicates, no close or no rate for the maturity) are collected as
    :class:`Rejection` entries; every data line is either accepted or rejected.
    With ``strict=True`` any rejection raises :class:`PanelFormatError`.
    A wrong header is always an error.
    """
    rates = _read_rates(rates_file)
    closes = _read_closes(closes_file)
    by_day = defaultdict(list)
    rejected = []
    seen = set()
    n_records = 0
    for lineno, row in _rows(chain_file, CHAIN_HEADER):
        n_records += 1
        try:
            if len(row) != len(CHAIN_HEADER):
                raise ValueError(f"expected {len(CHAIN_HEADER)} fields, got {len(row)}")
            trade, expiry = _date(row[0]), _date(row[1])
            flag = row[2].upper()
            if flag not in ("C", "P"):
                raise ValueError(f"flag must be C or P, got {row[2]!r}")
            strike, bid, ask = float(row[3]), float(row[4]), float(row[5])
            days = (expiry - trade).days
            if days <= 0:
                raise ValueError(f"expiry {expiry} not after trade date {trade}")
            if not strike > 0 or not math.isfinite(strike):
                raise ValueError(f"strike must be positive, got {strike}")
            key = (trade, expiry, strike, flag)
            if key in seen:
                raise ValueError(f"duplicate record {trade},{expiry},{flag},{strike}")
            if trade not in closes:
                raise ValueError(f"no close for {trade}")
            if trade not in rates or not rates[trade].covers(days):
                raise ValueError(f"missing rate for {trade} at {days} days")
            quote = OptionQuote(1 if flag == "C" else -1, strike, days, bid, ask, expiry=expiry)
        except (ValueError, HestonError) as exc:
            rejected.append(Rejection(lineno, str(exc)))
            continue
        seen.add(key)
        by_day[trade].append(quote)

    if strict and rejected:
        raise PanelFormatError(f"{len(rejected)} rejected records; first: {rejected[0]}", rejected)
    chains = []
    for day in sorted(by_day):
        spot, dividend = closes[day]
        curve = rates[day]
        state = MarketState(spot, float(curve.rates[0]), dividend, day)
        chains.append(DayChain(state, tuple(by_day[day]), curve))
    return ParsedPanel(chains, rejected, n_records)


def _fmt(x):
    return repr(float(x))


def write_panel(chains, chain_file, rates_file, closes_file, header_comment=None):
    """Write day chains to the three CSV files (inverse of :func:`parse_panel`)."""
    chains = list(chains)

    def open_out(path):
        fh = open(path, "w", newline="")
        if header_comment:
            fh.write(f"# {header_comment}\n")
        return fh

    with open_out(chain_file) as fc, open_out(rates_file) as fr, open_out(closes_file) as fx:
        wc, wr, wx = csv.writer(fc, lineterminator="\n"), csv.writer(fr, lineterminator="\n"), \
            csv.writer(fx, lineterminator="\n")
        wc.writerow(CHAIN_HEADER)
        wr.writerow(RATE_HEADER)
        wx.writerow(CLOSE_HEADER)
        for chain in chains:
            day = chain.date
            if day is None:
                raise PanelFormatError("chains need dates to be written")
            wx.writerow([day.isoformat(), _fmt(chain.state.spot), _fmt(chain.state.dividend_yield)])
            curve = chain.rate_curve or RateCurve.flat(chain.state.rate)
            for d, r in zip(curve.maturity_days, curve.rates):
                wr.writerow([day.isoformat(), _fmt(d), _fmt(r)])
            for q in chain.quotes:
                expiry = q.expiry or day + dt.timedelta(days=q.days)
                wc.writerow([day.isoformat(), expiry.isoformat(), "C" if q.is_call else "P",
                             _fmt(q.strike), _fmt(q.bid), _fmt(q.ask)])


def vix_component_filter(chain):
    """Keep near- and next-term quotes: ``23 < days < 37`` and a positive bid.

    "Near and next term" is the two smallest distinct expiries surviving the
    window; quotes of any further expiry in the window are dropped.
    """
    window = [q for q in chain.quotes if VIX_MIN_DAYS < q.days < VIX_MAX_DAYS and q.bid > 0]
    terms = sorted({q.days for q in window})[:2]
    return chain.with_quotes(q for q in window if q.days in terms)


# --- synthetic panels ----------------------------------------------------------

@dataclass(frozen=True)
class SyntheticPanelSpec:
    """Recipe for a reproducible synthetic panel.

    Strikes are the FRFT grid nodes closest to ``spot * moneyness`` for
    ``strikes_per_day`` points evenly spaced in log-moneyness over
    ``moneyness``.  If ``variances`` is given it replaces the simulated
    variance path (the spot path is still simulated).
    """

    params: ModelParams = SPX_PARAMS
    v0: float = 0.0108
    day_count: int = 20
    strikes_per_day: int = 15
    moneyness: tuple = (0.94, 1.02)
    maturities: tuple = (25, 32)
    noise_sd: float = 0.0
    rng_seed: int = 0
    spot0: float = 1845.73
    rate: float = 0.00167
    dividend_yield: float = 0.01894
    include_puts: bool = False
    variances: tuple | None = None
    start_date: dt.date = dt.date(2014, 1, 2)
    substeps: int = 10
    frft: FrftConfig = FrftConfig()

    def __post_init__(self):
        check_positive("noise_sd", self.noise_sd, allow_zero=True)
        check_positive("v0", self.v0, allow_zero=True)
        if self.day_count < 1:
            raise ValueError("day_count must be >= 1")
        if self.variances is not None:
            object.__setattr__(self, "variances", tuple(float(v) for v in self.variances))
            if len(self.variances) != self.day_count:
                raise ValueError("variances must have day_count entries")


def simulate_heston_paths(params, v0, s0, n_steps, dt_step, rng, rate=0.0, dividend=0.0,
                          n_paths=1):
    """Full-truncation Euler paths; returns ``(spot, variance)`` arrays of shape ``(n_steps + 1, n_paths)``."""
    kappa, theta, sigma, rho = params.kappa, params.theta, params.sigma, params.rho
    v = np.full(n_paths, float(v0))
    x = np.full(n_paths, math.log(s0))
    vs, xs = [v.copy()], [x.copy()]
    sq = math.sqrt(dt_step)
    rho_c = math.sqrt(max(1.0 - rho * rho, 0.0))
    for _ in range(n_steps):
        z1 = rng.standard_normal(n_paths)
        z2 = rho * z1 + rho_c * rng.standard_normal(n_paths)
        vp = np.maximum(v, 0.0)
        root = np.sqrt(vp)
        x = x + (rate - dividend - 0.5 * vp) * dt_step + root * sq * z1
        v = v + kappa * (theta - vp) * dt_step + sigma * root * sq * z2
        vs.append(v.copy())
        xs.append(x.copy())
    return np.exp(np.array(xs)), np.array(vs)


def simulate_variance_paths(params, v0, t, n_paths, seed=0, substeps_per_day=10):
    """Terminal truncated variances ``v_t^+`` of independent CIR paths."""
    rng = np.random.default_rng(seed)
    n_steps = max(1, int(round(t * DAYS_PER_YEAR * substeps_per_day)))
    _, v = simulate_heston_paths(params, v0, 1.0, n_steps, t / n_steps, rng, n_paths=n_paths)
    return np.maximum(v[-1], 0.0)


@dataclass(frozen=True)
class SyntheticPanel:
    true_variances: np.ndarray
    spots: np.ndarray
    chains: list
    model_prices: list

    def __iter__(self):
        return iter(self.chains)

    def __len__(self):
        return len(self.chains)


def ladder_strikes(spot, spec):
    grid = strike_grid(math.log(spot), spec.frft)
    targets = np.log(spot) + np.linspace(math.log(spec.moneyness[0]), math.log(spec.moneyness[1]),
                                         spec.strikes_per_day)
    idx = sorted({grid.nearest(t) for t in targets})
    return grid.strikes[idx]


def simulate_heston_panel(spec):
    """Simulate daily spot/variance, price each day's ladder and add Gaussian noise.

    Returns a :class:`SyntheticPanel`; ``noise_sd = 0`` gives quotes equal to
    the model prices.  Quotes whose noisy price is not positive get a zero bid
    (and are later excluded by the positive-bid rule).
    """
    rng = np.random.default_rng(spec.rng_seed)
    dt_day = 1.0 / DAYS_PER_YEAR
    spots_all, v_all = simulate_heston_paths(
        spec.params, spec.v0, spec.spot0, spec.day_count * spec.substeps, dt_day / spec.substeps,
        rng, spec.rate, spec.dividend_yield)
    spots = spots_all[::spec.substeps, 0][:spec.day_count]
    if spec.variances is None:
        variances = np.maximum(v_all[::spec.substeps, 0][:spec.day_count], 0.0)
    else:
        variances = np.asarray(spec.variances, dtype=float)
    noise_rng = np.random.default_rng([spec.rng_seed, 1])
    flags = (1, -1) if spec.include_puts else (1,)
    days_curve = sorted(set(spec.maturities) | {1, 365})
    curve = RateCurve(np.asarray(days_curve, dtype=float), np.full(len(days_curve), spec.rate))
    chains, model_prices = [], []
    for t in range(spec.day_count):
        date = spec.start_date + dt.timedelta(days=t)
        state = MarketState(float(spots[t]), spec.rate, spec.dividend_yield, date)
        strikes = ladder_strikes(state.spot, spec)
        quotes, prices = [], []
        for days in spec.maturities:
            for eps in flags:
                pricer = SimpsonPricer(eps, np.log(strikes), state, days / DAYS_PER_YEAR,
                                       spec.params, spec.frft)
                model = pricer.prices(float(variances[t]))
                noisy = model + spec.noise_sd * noise_rng.standard_normal(model.size)
                expiry = date + dt.timedelta(days=days)
                for K, price in zip(strikes, noisy):
                    bid = float(price) if price > 0 else 0.0
                    quotes.append(OptionQuote(eps, float(K), days, bid, bid, expiry=expiry))
                prices.append(model)
        chains.append(DayChain(state, tuple(quotes), curve))
        model_prices.append(np.concatenate(prices))
    return SyntheticPanel(variances, spots, chains, model_prices)
