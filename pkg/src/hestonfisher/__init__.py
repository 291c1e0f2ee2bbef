"""Heston option pricing by fractional FFT, analytic Greeks and Fisher-information
uncertainty of volatility inferred from option prices."""

from .calibration import (CalibrationResult, DayChain, OptionQuote, RateCurve,
                          chain_gradients, estimate_noise_variance, fit_day_variance,
                          fit_panel)
from .estimators import FisherBands, HestonVarianceCalibrator
from .exceptions import (AssemblyError, DomainError, FitError, GridConstructionError,
                         HestonError, IntegrationError, NoiseVarianceError,
                         PanelFormatError, ParameterError)
from .fisher import (BlockFisher, CredibilityBand, FisherMatrix, TimeSeriesTheta,
                     assemble_block_fisher, credibility_bands, fisher_aggregate,
                     fisher_single, invert_block_diagonal_entries, lemma_lower_bound)
from .frft import (FrftConfig, SimpsonPricer, StrikeGrid, frft, greek_grid, price_grid,
                   simpson_weights, strike_grid)
from .greeks import GREEK_ORDER, GreekVector, greek_direct, greek_vector, log_cf_derivative
from .heston import (SPX_PARAMS, MarketState, ModelParams, OptionSpec, QuadratureConfig,
                     cd_coefficients, char_fn, damped_integrand, price_direct,
                     put_from_call)
from .market_data import (SyntheticPanelSpec, parse_panel, simulate_heston_panel,
                          vix_component_filter, write_panel)
from .variance_swap import (SwapParams, VarSwapSeries, expected_variance,
                            integrated_variance, kvar, kvar_jacobian, transform_fisher,
                            variance_from_kvar)

__version__ = "0.1.0"
