import math
from types import SimpleNamespace

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hestonfisher.exceptions import DomainError, GridConstructionError, IntegrationError, ParameterError
from hestonfisher.heston import (SPX_PARAMS, MarketState, ModelParams, OptionSpec,
                                 QuadratureConfig, cd_coefficients, char_fn, damped_integrand,
                                 parity_gap, price_direct, put_from_call)

from _oracles import cd_literal, damped_literal
from conftest import SPX_SPOT, SPX_TAU, SPX_V, black_scholes_call

params_strategy = st.builds(
    ModelParams,
    kappa=st.floats(0.2, 8.0),
    theta=st.floats(0.005, 0.2),
    sigma=st.floats(0.05, 1.0),
    rho=st.floats(-0.95, 0.5),
)


class TestDomainTypes:
    def test_rejects_invalid_params(self):
        for bad in [dict(kappa=0), dict(theta=-1), dict(sigma=0), dict(rho=1.01), dict(rho=-1.5)]:
            kwargs = dict(kappa=1.0, theta=0.04, sigma=0.3, rho=-0.5) | bad
            with pytest.raises(ParameterError):
                ModelParams(**kwargs)

    def test_negative_rho_accepted(self):
        assert SPX_PARAMS.rho == -0.767

    def test_feller_flag(self):
        assert ModelParams(5.07, 0.0457, 0.48, -0.767).feller_satisfied
        assert not ModelParams(0.5, 0.02, 1.0, 0.0).feller_satisfied

    def test_market_state(self):
        s = MarketState(SPX_SPOT)
        assert s.log_price == math.log(SPX_SPOT)
        with pytest.raises(ParameterError):
            MarketState(0.0)

    def test_option_spec(self):
        spec = OptionSpec.put(100.0, 0.5)
        assert spec.epsilon == -1 and not spec.is_call
        assert spec.log_strike == math.log(100.0)
        with pytest.raises(ParameterError):
            OptionSpec(0, 100.0, 0.5)
        with pytest.raises(ParameterError):
            OptionSpec(1, 100.0, 0.0)


class TestCDCoefficients:
    def test_zero_frequency(self, spx_params):
        C, D = cd_coefficients(0.0, 0.7, spx_params, 0.01, 0.02)
        assert C == 0 and D == 0

    def test_zero_maturity(self, spx_params):
        C, D = cd_coefficients(np.array([0.3, 2.0, 17.0 - 1j]), 0.0, spx_params)
        assert np.all(C == 0) and np.all(D == 0)

    def test_spx_point_matches_transcription(self, spx_params):
        C, D = cd_coefficients(1.0, SPX_TAU, spx_params, 0.00167, 0.01894)
        C_ref, D_ref = cd_literal(1.0, SPX_TAU, 5.07, 0.0457, 0.48, -0.767, 0.00167, 0.01894)
        assert abs(C - complex(C_ref)) <= 1e-13 * abs(complex(C_ref))
        assert abs(D - complex(D_ref)) <= 1e-13 * abs(complex(D_ref))

    @settings(max_examples=40, deadline=None)
    @given(params=params_strategy, re=st.floats(0.0, 150.0), shift=st.sampled_from([0.0, -2.5, 0.5]),
           tau=st.floats(0.01, 2.0))
    def test_matches_transcription(self, params, re, shift, tau):
        phi = complex(re, shift)
        C, D = cd_coefficients(phi, tau, params, 0.01, 0.02)
        C_ref, D_ref = cd_literal(phi, tau, params.kappa, params.theta, params.sigma, params.rho,
                                  0.01, 0.02)
        assert abs(C - complex(C_ref)) <= 1e-9 * max(1.0, abs(complex(C_ref)))
        assert abs(D - complex(D_ref)) <= 1e-9 * max(1.0, abs(complex(D_ref)))

    def test_continuous_in_maturity(self, spx_params):
        taus = np.linspace(1e-3, 2.0, 4001)
        C = np.array([cd_coefficients(40.0 - 2.5j, t, spx_params)[0] for t in taus])
        jumps = np.abs(np.diff(C))
        # a branch jump of the logarithm would show up as a step of size ~2 pi kappa theta / sigma^2
        assert jumps.max() < 0.05 * 2 * math.pi * spx_params.kappa * spx_params.theta / spx_params.sigma ** 2
        assert jumps.max() < 5 * np.median(jumps)

    def test_overflow_reports_frequency(self, spx_params):
        with pytest.raises(DomainError) as info:
            cd_coefficients(1e200, 1.0, spx_params)
        assert info.value.phi is not None


class TestCharFn:
    def test_normalisation(self, spx_state, spx_params):
        f = char_fn(0.0, spx_state, SPX_V, SPX_TAU, spx_params)
        assert abs(f) == pytest.approx(1.0, abs=1e-15) and f.imag == 0

    def test_zero_maturity(self, spx_state, spx_params):
        phi = np.array([0.5, 3.0, 11.0])
        f = char_fn(phi, spx_state, SPX_V, 0.0, spx_params)
        np.testing.assert_allclose(f, np.exp(1j * phi * spx_state.log_price), rtol=1e-14)

    def test_modulus_bound(self, spx_state, spx_params):
        phi = np.linspace(0, 200, 2001)
        assert np.all(np.abs(char_fn(phi, spx_state, SPX_V, SPX_TAU, spx_params)) <= 1 + 1e-14)

    @settings(max_examples=60, deadline=None)
    @given(params=params_strategy, v=st.floats(0.0, 0.5), tau=st.floats(0.01, 2.0),
           r=st.floats(-0.02, 0.08), q=st.floats(0.0, 0.05))
    def test_characteristic_function_properties(self, params, v, tau, r, q):
        state = MarketState(100.0, 0.0, 0.0)
        assert char_fn(0.0, state, v, tau, params) == pytest.approx(1.0, abs=1e-14)
        phi = np.linspace(0, 200, 101)
        assert np.all(np.abs(char_fn(phi, state, v, tau, params)) <= 1 + 1e-12)


class TestDampedIntegrand:
    def test_call_and_put_distinct(self, spx_state, spx_params):
        c = damped_integrand(1, 0.4, spx_state, SPX_V, SPX_TAU, spx_params)
        p = damped_integrand(-1, 0.4, spx_state, SPX_V, SPX_TAU, spx_params)
        assert np.isfinite(c) and np.isfinite(p) and c != p

    def test_tail_decays(self, spx_state, spx_params):
        mags = np.abs(damped_integrand(1, np.array([10.0, 100.0, 500.0]), spx_state, SPX_V,
                                       SPX_TAU, spx_params))
        assert mags[0] > mags[1] > mags[2]

    @pytest.mark.parametrize("epsilon", [1, -1])
    def test_matches_transcription(self, spx_state, spx_params, epsilon):
        value = damped_integrand(epsilon, 1.0, spx_state, SPX_V, SPX_TAU, spx_params)
        ref = complex(damped_literal(epsilon, 1.0, SPX_SPOT, SPX_V, SPX_TAU, 5.07, 0.0457,
                                     0.48, -0.767, 0.00167, 0.01894, 1.5))
        assert abs(value - ref) <= 1e-12 * abs(ref)

    def test_vanishing_denominator(self, spx_state, spx_params):
        with pytest.raises(GridConstructionError):
            damped_integrand(-1, np.array([0.0, 0.4]), spx_state, SPX_V, SPX_TAU,
                             spx_params, alpha=1.0)


def _dense_simpson_price(spec, state, v, params, eta=1e-3, phi_max=500.0, alpha=1.5):
    """Composite Simpson on a fixed fine grid, independent of the adaptive rule."""
    n = int(round(phi_max / eta))
    n += n % 2
    phi = np.linspace(0.0, phi_max, n + 1)
    f = np.real(np.exp(-1j * spec.log_strike * phi)
                * damped_integrand(spec.epsilon, phi, state, v, spec.maturity, params, alpha))
    w = np.ones(n + 1)
    w[1:-1:2], w[2:-1:2] = 4, 2
    return math.exp(-spec.epsilon * alpha * spec.log_strike) / math.pi * eta / 3 * (w @ f)


class TestPriceDirect:
    def test_deep_in_the_money(self, spx_state, spx_params):
        spec = OptionSpec.call(1.0, SPX_TAU)
        price = price_direct(spec, spx_state, SPX_V, spx_params)
        fwd = spx_state.spot * math.exp(-0.01894 * SPX_TAU) - math.exp(-0.00167 * SPX_TAU)
        assert price == pytest.approx(fwd, rel=1e-4)

    def test_spx_atm_against_dense_simpson(self, spx_state, spx_params, tight_quad):
        spec = OptionSpec.call(SPX_SPOT, SPX_TAU)
        ref = _dense_simpson_price(spec, spx_state, SPX_V, spx_params)
        price = price_direct(spec, spx_state, SPX_V, spx_params, quad=tight_quad)
        assert price == pytest.approx(ref, rel=1e-9)

    def test_monotone_in_strike(self, spx_state, spx_params):
        prices = [price_direct(OptionSpec.call(K, SPX_TAU), spx_state, SPX_V, spx_params)
                  for K in (1500, 1700, SPX_SPOT, 2000, 2200)]
        assert all(a >= b for a, b in zip(prices, prices[1:]))

    def test_reports_non_convergence(self, spx_state, spx_params):
        quad = QuadratureConfig(tol=1e-16, max_evaluations=500)
        with pytest.raises(IntegrationError) as info:
            price_direct(OptionSpec.call(SPX_SPOT, SPX_TAU), spx_state, SPX_V, spx_params,
                         quad=quad)
        assert info.value.partial is not None

    def test_zero_variance_allowed(self, spx_state, spx_params):
        price = price_direct(OptionSpec.call(SPX_SPOT, SPX_TAU), spx_state, 0.0, spx_params)
        assert 0 < price < 25.3


class TestParity:
    def test_atm_forward(self, spx_state):
        K = spx_state.spot * math.exp((0.00167 - 0.01894) * SPX_TAU)
        assert put_from_call(3.21, OptionSpec.call(K, SPX_TAU), spx_state) == pytest.approx(3.21, abs=1e-12)

    def test_degenerate_zero_strike(self, spx_state):
        spec = SimpleNamespace(strike=0.0, maturity=SPX_TAU)
        assert put_from_call(0.0, spec, spx_state) == pytest.approx(
            -spx_state.spot * math.exp(-0.01894 * SPX_TAU))
        assert parity_gap(0.0, spx_state, SPX_TAU) == put_from_call(0.0, spec, spx_state)

    def test_spx_put_from_quadrature(self, spx_state, spx_params, tight_quad):
        call = price_direct(OptionSpec.call(SPX_SPOT, SPX_TAU), spx_state, SPX_V,
                            spx_params, quad=tight_quad)
        put = price_direct(OptionSpec.put(SPX_SPOT, SPX_TAU), spx_state, SPX_V,
                           spx_params, quad=tight_quad)
        assert put_from_call(call, OptionSpec.call(SPX_SPOT, SPX_TAU), spx_state) == \
            pytest.approx(put, abs=1e-8)

    @settings(max_examples=25, deadline=None)
    @given(params=params_strategy, v=st.floats(1e-3, 0.3), tau=st.floats(7 / 365, 1.0),
           m=st.floats(0.8, 1.2), r=st.floats(0.0, 0.05), q=st.floats(0.0, 0.04))
    def test_parity_residual(self, params, v, tau, m, r, q):
        state = MarketState(100.0, r, q)
        call = price_direct(OptionSpec.call(100.0 * m, tau), state, v, params)
        put = price_direct(OptionSpec.put(100.0 * m, tau), state, v, params)
        assert abs(put - call - parity_gap(100.0 * m, state, tau)) < 1e-8 * state.spot


class TestBlackScholesLimit:
    @pytest.mark.parametrize("tau", [30 / 365, 0.5])
    @pytest.mark.parametrize("moneyness", [0.8, 0.9, 1.0, 1.1, 1.2])
    def test_degenerates(self, spx_state, tau, moneyness):
        params = ModelParams(5.07, 0.0457, 1e-6, -0.767)
        K = SPX_SPOT * moneyness
        price = price_direct(OptionSpec.call(K, tau), spx_state, params.theta, params,
                             quad=QuadratureConfig(tol=1e-14))
        ref = black_scholes_call(SPX_SPOT, K, tau, math.sqrt(params.theta), 0.00167, 0.01894)
        assert price == pytest.approx(ref, rel=1e-4)


@settings(max_examples=30, deadline=None)
@given(params=params_strategy, v=st.floats(1e-3, 0.3), tau=st.floats(7 / 365, 1.0),
       m=st.floats(0.7, 1.3), r=st.floats(0.0, 0.05), q=st.floats(0.0, 0.04))
def test_call_price_bounds(params, v, tau, m, r, q):
    state = MarketState(100.0, r, q)
    K = 100.0 * m
    price = price_direct(OptionSpec.call(K, tau), state, v, params)
    lower = max(100.0 * math.exp(-q * tau) - K * math.exp(-r * tau), 0.0)
    slack = 1e-9 * state.spot
    assert lower - slack <= price <= 100.0 * math.exp(-q * tau) + slack
