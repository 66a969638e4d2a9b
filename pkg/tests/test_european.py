import math

import numpy as np
import pytest

from premex.european import (EuropeanPricer, FourierConfig, bs_price,
                             heston_price, heston_value)
from premex.models import BlackScholesParams, HestonParams, OptionSpec, payoff

BS_12 = BlackScholesParams(r=0.08, y=0.12, sigma=0.2)
HESTON_02 = HestonParams(r=0.05, y=0.0, v0=0.04, xi=3.0, theta=0.04, eta=0.1, rho=-0.1)


def put_spec(s0, expiry=3.0):
    return OptionSpec("put", 100.0, expiry, s0)


def test_bs_put_reference_values():
    # frozen reference prices of the 3y dividend-put panel
    for s0, ref in [(100.0, 15.252), (80.0, 24.777)]:
        assert bs_price(BS_12, put_spec(s0), 0.0, s0) == pytest.approx(ref, abs=5e-4)


def test_bs_price_at_expiry_is_payoff():
    spec = put_spec(80.0)
    assert bs_price(BS_12, spec, 3.0, 80.0) == pytest.approx(20.0)


def test_bs_parity():
    params = BlackScholesParams(r=0.06, y=0.03, sigma=0.35)
    for s in (60.0, 100.0, 170.0):
        call = bs_price(params, OptionSpec("call", 100.0, 2.0, s), 0.3, s)
        put = bs_price(params, OptionSpec("put", 100.0, 2.0, s), 0.3, s)
        rhs = s * math.exp(-0.03 * 1.7) - 100.0 * math.exp(-0.06 * 1.7)
        assert call - put == pytest.approx(rhs, rel=1e-8, abs=1e-8)


def test_bs_monotonicity_in_spot():
    grid = np.linspace(40.0, 220.0, 60)
    puts = bs_price(BS_12, put_spec(100.0), 0.5, grid)
    calls = bs_price(BS_12, OptionSpec("call", 100.0, 3.0, 100.0), 0.5, grid)
    assert np.all(np.diff(puts) <= 1e-12)
    assert np.all(np.diff(calls) >= -1e-12)


def test_heston_put_reference_values():
    # quoted 3-decimal values come from an approximate pricer; allow 1.5 cents
    cases = [(90.0, 0.25, 9.643), (100.0, 0.25, 3.374), (110.0, 0.25, 0.758),
             (100.0, 0.5, 4.423)]
    for s0, expiry, ref in cases:
        spec = put_spec(s0, expiry)
        assert heston_price(HESTON_02, spec, 0.0, s0, 0.04) == pytest.approx(ref, abs=1.5e-2)


def test_heston_parity():
    params = HestonParams(r=0.05, y=0.03, v0=0.04, xi=3.0, theta=0.04, eta=0.3, rho=-0.5)
    for s in (70.0, 100.0, 140.0):
        call = heston_value(params, OptionSpec("call", 100.0, 0.5, s), 0.0, s, 0.04)
        put = heston_value(params, OptionSpec("put", 100.0, 0.5, s), 0.0, s, 0.04)
        rhs = s * math.exp(-0.03 * 0.5) - 100.0 * math.exp(-0.05 * 0.5)
        assert call - put == pytest.approx(rhs, rel=1e-5, abs=1e-5)


def test_heston_monotonicity_in_spot():
    grid = np.linspace(60.0, 150.0, 40)
    puts = heston_value(HESTON_02, put_spec(100.0, 0.5), 0.0, grid, np.full(40, 0.04))
    assert np.all(np.diff(puts) <= 1e-10)


def test_heston_vanishing_vol_of_vol_matches_bs():
    params = HestonParams(r=0.05, y=0.0, v0=0.04, xi=3.0, theta=0.04, eta=1e-6, rho=-0.5)
    bs = BlackScholesParams(r=0.05, y=0.0, sigma=0.2)
    for s0, expiry in [(90.0, 0.25), (100.0, 0.5), (110.0, 1.0)]:
        spec = put_spec(s0, expiry)
        ref = bs_price(bs, spec, 0.0, s0)
        got = heston_value(params, spec, 0.0, s0, 0.04)
        assert got == pytest.approx(ref, rel=1e-4)


def test_price_converges_to_payoff_near_expiry():
    spec = put_spec(100.0, 1.0)
    grid = np.concatenate([np.linspace(60.0, 95.0, 15), np.linspace(105.0, 150.0, 15)])
    near_bs = bs_price(BS_12, spec, 1.0 - 1e-5, grid)
    near_h = heston_value(HESTON_02, put_spec(100.0, 1.0), 1.0 - 1e-5, grid,
                          np.full(30, 0.04))
    target = payoff(spec, grid)[1]
    assert np.max(np.abs(near_bs - target)) < 5e-3
    assert np.max(np.abs(near_h - target)) < 5e-3


def test_price_above_discounted_forward_intrinsic():
    for s in (60.0, 100.0, 150.0):
        spec = put_spec(s, 0.5)
        lower = max(100.0 * math.exp(-0.05 * 0.5) - s, 0.0)
        assert heston_value(HESTON_02, spec, 0.0, s, 0.04) >= lower - 1e-9
        lower_bs = max(100.0 * math.exp(-0.08 * 3.0) - s * math.exp(-0.12 * 3.0), 0.0)
        assert bs_price(BS_12, put_spec(s), 0.0, s) >= lower_bs - 1e-9


def test_heston_prices_nonnegative_and_fallback_continuous():
    spec = put_spec(100.0, 0.5)
    cfg = FourierConfig()
    # straddle the near-expiry fallback boundary: values must join smoothly
    t_lo = 0.5 - cfg.tau_switch * 1.02
    t_hi = 0.5 - cfg.tau_switch * 0.98
    lo = heston_value(HESTON_02, spec, t_lo, 100.0, 0.04, cfg)
    hi = heston_value(HESTON_02, spec, t_hi, 100.0, 0.04, cfg)
    assert lo >= 0.0 and hi >= 0.0
    assert abs(lo - hi) < 5e-3


def test_pricer_table_matches_direct_evaluation():
    pricer = EuropeanPricer(BS_12, put_spec(100.0)).enable_table(n_t=120, n_s=400)
    rng = np.random.default_rng(3)
    t = rng.uniform(0.0, 2.9, 200)
    s = rng.uniform(70.0, 140.0, 200)
    direct = bs_price(BS_12, put_spec(100.0), t, s)
    interp = pricer.value(t, s)
    rel = np.abs(interp - direct) / np.maximum(direct, 1.0)
    assert np.max(rel) < 1e-3  # linear table at this resolution

    plain = EuropeanPricer(BS_12, put_spec(100.0))
    assert np.allclose(plain.value(t, s), direct)


def test_scalar_heston_price_runs_convergence_check():
    val = heston_price(HESTON_02, put_spec(100.0, 0.25), 0.0, 100.0, 0.04)
    assert val > 0.0
