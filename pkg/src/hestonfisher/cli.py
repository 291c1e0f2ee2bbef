"""Command-line interface: ``price``, ``surface``, ``synth``, ``fit`` and ``fisher``.

Every CSV written starts with a ``# config_hash=...`` comment line.  Exit codes:
0 success, 2 configuration error, 3 empty data, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .calibration import DAYS_PER_YEAR, chain_gradients, fit_panel
from .exceptions import (DomainError, FitError, GridConstructionError, HestonError,
                         IntegrationError, NoiseVarianceError, ParameterError,
                         PanelFormatError)
from .fisher import (FISHER_MODES, assemble_block_fisher, credibility_bands,
                     dense_diagonal_inverse, invert_block_diagonal_entries)
from .frft import FrftConfig, price_grid, simpson_sum
from .greeks import GREEK_ORDER, greek_direct
from .heston import (DEFAULT_ALPHA, SPX_PARAMS, MarketState, ModelParams, OptionSpec,
                     QuadratureConfig, price_direct)
from .market_data import (SyntheticPanelSpec, parse_panel, simulate_heston_panel,
                          vix_component_filter, write_panel)
from .variance_swap import (VIX_HORIZON, dense_transformed_diagonal, kvar_jacobian,
                            transform_fisher)

EXIT_OK, EXIT_CONFIG, EXIT_EMPTY, EXIT_NUMERIC = 0, 2, 3, 4

SPX_SPOT = 1845.73
SPX_RATE = 0.00167
SPX_DIVIDEND = 0.01894

CHAIN_FILE, RATES_FILE, CLOSES_FILE, TRUTH_FILE = "chains.csv", "rates.csv", "closes.csv", "truth.csv"


class ConfigError(Exception):
    pass


class EmptyDataError(Exception):
    pass


# --- configuration -------------------------------------------------------------

_FLOAT_KEYS = {"kappa", "theta", "sigma", "rho", "eta", "lambda", "alpha", "quad_tol",
               "spot", "rate", "dividend"}
_INT_KEYS = {"n", "seed"}


def read_params_file(path):
    """Flat ``key=value`` file; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read params file: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        try:
            if key in _FLOAT_KEYS:
                out[key] = float(value)
            elif key in _INT_KEYS:
                out[key] = int(value)
            else:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Resolved settings; precedence is flags, then params file, then defaults."""

    kappa: float = SPX_PARAMS.kappa
    theta: float = SPX_PARAMS.theta
    sigma: float = SPX_PARAMS.sigma
    rho: float = SPX_PARAMS.rho
    n: int = 2 ** 11
    eta: float = 0.4
    lam: float = 3.6549e-4
    alpha: float = DEFAULT_ALPHA
    quad_tol: float = 1e-10
    seed: int = 0
    spot: float = SPX_SPOT
    rate: float = SPX_RATE
    dividend: float = SPX_DIVIDEND

    @classmethod
    def from_args(cls, args):
        values = {}
        if getattr(args, "params_file", None):
            values.update(read_params_file(args.params_file))
        if "lambda" in values:
            values["lam"] = values.pop("lambda")
        for field in dataclasses.fields(cls):
            flag = getattr(args, field.name, None)
            if flag is not None:
                values[field.name] = flag
        return cls(**values)

    def params(self):
        return ModelParams(self.kappa, self.theta, self.sigma, self.rho)

    def frft(self):
        return FrftConfig(self.n, self.eta, self.lam, self.alpha)

    def quad(self):
        return QuadratureConfig(tol=self.quad_tol)

    def state(self, date=None):
        return MarketState(self.spot, self.rate, self.dividend, date)

    def validate(self):
        self.params()
        self.frft()
        self.quad()
        self.state()
        return self


def config_hash(config, command, options, inputs=()):
    """Stable short hash of the resolved config, subcommand options and input file contents."""
    h = hashlib.sha256()
    payload = {"command": command, "config": dataclasses.asdict(config), "options": options}
    h.update(json.dumps(payload, sort_keys=True, default=str).encode())
    for path in inputs:
        h.update(Path(path).read_bytes())
    return h.hexdigest()[:16]


def _fmt(x):
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return repr(x)


class CsvOut:
    """CSV destination (file or stdout) with a leading config-hash comment."""

    def __init__(self, path, digest, comments=()):
        self.path = path
        self.buffer = io.StringIO()
        self.buffer.write(f"# config_hash={digest}\n")
        for comment in comments:
            self.buffer.write(f"# {comment}\n")
        self.writer = csv.writer(self.buffer, lineterminator="\n")

    def comment(self, text):
        self.buffer.write(f"# {text}\n")

    def row(self, values):
        self.writer.writerow([v if isinstance(v, str) else _fmt(v) for v in values])

    def close(self):
        text = self.buffer.getvalue()
        if self.path:
            Path(self.path).write_text(text)
        else:
            sys.stdout.write(text)


def _float_list(text):
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _panel_files(args):
    base = Path(args.panel) if args.panel else None
    chains = args.chains or (base / CHAIN_FILE if base else None)
    rates = args.rates or (base / RATES_FILE if base else None)
    closes = args.closes or (base / CLOSES_FILE if base else None)
    if not (chains and rates and closes):
        raise ConfigError("give --panel DIR or all of --chains, --rates, --closes")
    for p in (chains, rates, closes):
        if not Path(p).is_file():
            raise ConfigError(f"input file not found: {p}")
    return Path(chains), Path(rates), Path(closes)


def _load_filtered_panel(args):
    files = _panel_files(args)
    parsed = parse_panel(*files)
    for rej in parsed.rejected:
        print(f"rejected {rej}", file=sys.stderr)
    chains = [vix_component_filter(c) for c in parsed.chains]
    chains = [c for c in chains if c.calls()]
    if not chains:
        raise EmptyDataError("no day has admitted call quotes after the VIX component filter")
    return chains, files


# --- subcommands -----------------------------------------------------------------

def cmd_price(args, config):
    params, state, tau = config.params(), config.state(), args.maturity / DAYS_PER_YEAR
    eps = -1 if args.put else 1
    digest = config_hash(config, "price", {k: getattr(args, k) for k in
                                           ("strike", "maturity", "variance", "put", "grid",
                                            "method", "check")})
    out = CsvOut(args.out, digest)
    if args.grid:
        grid, prices = price_grid(eps, state, args.variance, tau, params, config.frft())
        out.row(["log_strike", "strike", "price"])
        for k, K, p in zip(grid.log_strikes, grid.strikes, prices):
            out.row([k, K, p])
        out.close()
        return EXIT_OK
    if args.strike is None:
        raise ConfigError("--strike is required unless --grid is given")
    spec = OptionSpec(eps, args.strike, tau)
    values = {}
    methods = ("direct", "frft") if args.check else (args.method,)
    for method in methods:
        if method == "direct":
            values[method] = price_direct(spec, state, args.variance, params, config.alpha,
                                          config.quad())
        else:
            values[method] = float(simpson_sum(eps, spec.log_strike, state, args.variance, tau,
                                               params, config.frft())[0])
    out.row(["method", "strike", "maturity_days", "price"])
    out.row([args.method, args.strike, args.maturity, values[args.method]])
    out.close()
    if args.check:
        diff = values["frft"] - values["direct"]
        print(f"check: direct={values['direct']!r} frft={values['frft']!r} "
              f"diff={diff!r} rel={diff / values['direct']!r}", file=sys.stderr)
    return EXIT_OK


def cmd_surface(args, config):
    params, state = config.params(), config.state()
    maturities = _float_list(args.maturities)
    gamma = args.greek
    options = {"greek": gamma, "maturities": maturities, "strikes": args.strikes,
               "vega_drop": args.vega_drop, "variances": args.variances,
               "variance": args.variance, "method": args.method}
    out = CsvOut(args.out, config_hash(config, "surface", options))
    if args.vega_drop:
        variances = _float_list(args.variances) if args.variances else \
            list(np.linspace(1e-4, 0.1, 100))
        out.row(["variance", "maturity_days", "vega"])
        for days in maturities:
            spec = OptionSpec(1, state.spot, days / DAYS_PER_YEAR)
            for v in variances:
                if args.method == "direct":
                    value = greek_direct("sigma0", spec, state, v, params, config.alpha, config.quad())
                else:
                    value = simpson_sum(1, spec.log_strike, state, v, spec.maturity, params,
                                        config.frft(), gamma="sigma0")[0]
                out.row([v, days, value])
        out.close()
        return EXIT_OK
    strikes = _float_list(args.strikes) if args.strikes else \
        list(np.linspace(0.8 * state.spot, 1.2 * state.spot, 41))
    out.row(["strike", "maturity_days", gamma])
    for days in maturities:
        tau = days / DAYS_PER_YEAR
        if args.method == "direct":
            values = [greek_direct(gamma, OptionSpec(1, K, tau), state, args.variance, params,
                                   config.alpha, config.quad()) for K in strikes]
        else:
            values = simpson_sum(1, np.log(strikes), state, args.variance, tau, params,
                                 config.frft(), gamma=gamma)
        for K, value in zip(strikes, values):
            out.row([K, days, value])
    out.close()
    return EXIT_OK


def cmd_synth(args, config):
    if not args.out:
        raise ConfigError("synth needs --out DIR")
    maturities = tuple(int(d) for d in _float_list(args.maturities))
    variances = tuple(_float_list(args.variances)) if args.variances else None
    if variances is not None and len(variances) != args.days:
        if args.days % len(variances):
            raise ConfigError("--days must be a multiple of the --variances ladder length")
        variances = variances * (args.days // len(variances))
    spec = SyntheticPanelSpec(
        params=config.params(), v0=args.v0, day_count=args.days,
        strikes_per_day=args.strikes_per_day, maturities=maturities, noise_sd=args.noise_sd,
        rng_seed=config.seed, spot0=config.spot, rate=config.rate,
        dividend_yield=config.dividend, include_puts=args.puts, variances=variances,
        frft=config.frft())
    panel = simulate_heston_panel(spec)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    options = {k: getattr(args, k) for k in ("days", "v0", "noise_sd", "strikes_per_day",
                                             "maturities", "puts", "variances")}
    digest = config_hash(config, "synth", options)
    write_panel(panel.chains, outdir / CHAIN_FILE, outdir / RATES_FILE, outdir / CLOSES_FILE,
                header_comment=f"config_hash={digest}")
    truth = CsvOut(outdir / TRUTH_FILE, digest)
    truth.row(["date", "spot", "variance", "sigma"])
    for chain, s, v in zip(panel.chains, panel.spots, panel.true_variances):
        truth.row([chain.date.isoformat(), s, v, math.sqrt(v)])
    truth.close()
    print(f"wrote {len(panel.chains)} days to {outdir}", file=sys.stderr)
    return EXIT_OK


def cmd_fit(args, config):
    chains, files = _load_filtered_panel(args)
    result = fit_panel(chains, config.params(), config=config.frft(), n_jobs=args.jobs)
    digest = config_hash(config, "fit", {}, files)
    out = CsvOut(args.out, digest, [f"noise_variance={_fmt(result.noise_variance)}"])
    out.row(["date", "variance", "sigma", "objective", "n_quotes"])
    for date, v, f, n in zip(result.dates, result.variances, result.objective, result.n_quotes):
        out.row([date.isoformat(), v, math.sqrt(v) if v == v else math.nan, f, str(int(n))])
    out.close()
    for i, msg in sorted(result.failures.items()):
        print(f"fit failed on {result.dates[i]}: {msg}", file=sys.stderr)
    print(f"noise_variance={result.noise_variance!r} days={len(chains)} "
          f"failed={len(result.failures)}", file=sys.stderr)
    return EXIT_OK


def read_fit_file(path):
    """``(dates, variances, noise_variance)`` from a ``fit`` output file."""
    noise, dates, variances = None, [], []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read fit file: {exc}") from None
    rows = []
    for line in lines:
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("noise_variance="):
                noise = float(body.split("=", 1)[1])
            continue
        rows.append(line)
    reader = csv.DictReader(rows)
    for row in reader:
        dates.append(row["date"])
        variances.append(float(row["variance"]))
    if noise is None:
        raise ConfigError(f"{path}: missing '# noise_variance=' line")
    return dates, np.asarray(variances), noise


def cmd_fisher(args, config):
    if not args.fit:
        raise ConfigError("fisher needs --fit FILE (output of the fit subcommand)")
    chains, files = _load_filtered_panel(args)
    fit_dates, variances, noise = read_fit_file(args.fit)
    by_date = {c.date.isoformat(): c for c in chains}
    missing = [d for d in fit_dates if d not in by_date]
    if missing:
        raise ConfigError(f"fit file has dates without panel data: {missing[:3]}")
    ok = np.isfinite(variances)
    if not np.any(ok):
        raise EmptyDataError("no successfully fitted day in the fit file")
    dates = [d for d, good in zip(fit_dates, ok) if good]
    variances = variances[ok]
    panel = [by_date[d] for d in dates]
    params, frft = config.params(), config.frft()
    grads = [chain_gradients(c, v, params, frft) for c, v in zip(panel, variances)]
    block = assemble_block_fisher(grads, noise, args.mode, dates)
    diag_inv = invert_block_diagonal_entries(block)
    options = {"swap": args.swap, "mode": args.mode, "horizon_days": args.horizon_days}
    digest = config_hash(config, "fisher", options, list(files) + [args.fit])
    horizon = args.horizon_days / DAYS_PER_YEAR
    if args.swap:
        jac = kvar_jacobian(variances, params, horizon)
        series = transform_fisher(block, jac, variances, params, horizon)
        values, band = series.kvar, series.band
        header = ["date", "kvar", "beta", "relative_beta"]
    else:
        values = np.sqrt(variances)
        band = credibility_bands(diag_inv, values)
        header = ["date", "sigma", "beta", "relative_beta"]
    comments = [f"band={band.label}", f"mode={args.mode}",
                "shared_se " + " ".join(f"{name}={_fmt(se)}" for name, se in
                                        zip(GREEK_ORDER[1:], band.shared_se))]
    if not band.shared_reliable:
        comments.append("warning=shared standard errors unreliable (ill-conditioned Schur complement)")
    out = CsvOut(args.out, digest, comments)
    out.row(header)
    for d, value, beta, rel in zip(dates, values, band.beta, band.relative):
        out.row([d, value, beta, rel])
    out.close()
    if args.dense_check:
        if args.swap:
            dense = dense_transformed_diagonal(block, jac)
            fast = np.concatenate([(band.beta / 2) ** 2, band.shared_se ** 2])
        else:
            dense = dense_diagonal_inverse(block)
            fast = diag_inv.all_entries
        finite = np.isfinite(dense) & np.isfinite(fast)
        dev = float(np.max(np.abs(fast[finite] - dense[finite]) / np.abs(dense[finite])))
        print(f"dense-check max relative deviation={dev:.3e}", file=sys.stderr)
    print(f"mean beta={band.mean_beta!r}", file=sys.stderr)
    return EXIT_OK


# --- parser ---------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--params-file", help="flat key=value file (kappa, theta, sigma, rho, n, "
                   "eta, lambda, alpha, quad_tol, seed, spot, rate, dividend)")
    p.add_argument("--kappa", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--n", type=int, help="FRFT grid size (power of two)")
    p.add_argument("--eta", type=float, help="frequency spacing")
    p.add_argument("--lambda", dest="lam", type=float, help="log-strike spacing")
    p.add_argument("--alpha", type=float, help="damping factor")
    p.add_argument("--quad-tol", dest="quad_tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--spot", type=float)
    p.add_argument("--rate", type=float)
    p.add_argument("--dividend", type=float)
    p.add_argument("--out", help="output file (or directory for synth); stdout if omitted")


def _add_panel(p):
    p.add_argument("--panel", help="directory with chains.csv, rates.csv, closes.csv")
    p.add_argument("--chains")
    p.add_argument("--rates")
    p.add_argument("--closes")


def build_parser():
    parser = argparse.ArgumentParser(prog="hestonfisher", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("price", help="price one option or a whole strike grid")
    _add_common(p)
    p.add_argument("--strike", type=float)
    p.add_argument("--maturity", type=float, default=30.0, help="days to expiry")
    p.add_argument("--variance", type=float, default=0.0108)
    p.add_argument("--put", action="store_true")
    p.add_argument("--grid", action="store_true", help="all N grid strikes via the FRFT")
    p.add_argument("--method", choices=("direct", "frft"), default="frft")
    p.add_argument("--check", action="store_true", help="also run the other method; report difference")
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("surface", help="Greek surfaces or the Vega-versus-variance curves")
    _add_common(p)
    p.add_argument("--greek", choices=GREEK_ORDER, default="sigma0")
    p.add_argument("--strikes", help="comma-separated strikes (default 41 from 0.8 to 1.2 spot)")
    p.add_argument("--maturities", default="23,30,37", help="comma-separated days")
    p.add_argument("--variance", type=float, default=0.0108)
    p.add_argument("--vega-drop", action="store_true", help="ATM Vega over a variance ladder")
    p.add_argument("--variances", help="comma-separated variance ladder for --vega-drop")
    p.add_argument("--method", choices=("direct", "frft"), default="frft")
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("synth", help="write a synthetic panel and its truth file")
    _add_common(p)
    p.add_argument("--days", type=int, default=20)
    p.add_argument("--v0", type=float, default=0.0108)
    p.add_argument("--noise-sd", dest="noise_sd", type=float, default=0.3)
    p.add_argument("--strikes-per-day", dest="strikes_per_day", type=int, default=15)
    p.add_argument("--maturities", default="25,32", help="comma-separated days")
    p.add_argument("--variances", help="comma-separated variance ladder replacing the simulated path")
    p.add_argument("--puts", action="store_true", help="also quote puts")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="per-day variance fit and noise variance")
    _add_common(p)
    _add_panel(p)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("fisher", help="Cramer-Rao bands for a fitted panel")
    _add_common(p)
    _add_panel(p)
    p.add_argument("--fit", help="output file of the fit subcommand")
    p.add_argument("--swap", action="store_true", help="bands on the variance-swap strike")
    p.add_argument("--horizon-days", dest="horizon_days", type=float, default=30.0)
    p.add_argument("--mode", choices=FISHER_MODES, default="per_option")
    p.add_argument("--dense-check", dest="dense_check", action="store_true",
                   help="compare the Schur path against dense inversion (stderr only)")
    p.set_defaults(func=cmd_fisher)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = RunConfig.from_args(args).validate()
        return args.func(args, config)
    except (ConfigError, ParameterError, NoiseVarianceError, PanelFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EmptyDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (DomainError, IntegrationError, GridConstructionError, FitError, HestonError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
