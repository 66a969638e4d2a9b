import math

import numpy as np
import pytest

from premex.models import (BlackScholesParams, HestonParams, OptionSpec,
                           PathState, bs_transition, heston_step_arrays,
                           payoff, premium_rate, step_bs, step_heston)


def test_payoff_put_itm():
    spec = OptionSpec("put", 100.0, 1.0, 100.0)
    psi, psi_plus = payoff(spec, 80.0)
    assert psi == 20.0 and psi_plus == 20.0


def test_payoff_call_otm_clips():
    spec = OptionSpec("call", 100.0, 1.0, 100.0)
    psi, psi_plus = payoff(spec, 80.0)
    assert psi == -20.0 and psi_plus == 0.0


def test_payoff_at_the_money_boundary():
    spec = OptionSpec("call", 100.0, 1.0, 100.0)
    psi, psi_plus = payoff(spec, 100.0)
    assert psi == 0.0 and psi_plus == 0.0


def test_premium_rate_call():
    spec = OptionSpec("call", 100.0, 1.0, 100.0)
    assert premium_rate(spec, r=0.03, y=0.07, s=100.0) == pytest.approx(4.0)


def test_premium_rate_put_negative():
    spec = OptionSpec("put", 100.0, 1.0, 100.0)
    assert premium_rate(spec, r=0.08, y=0.12, s=80.0) == pytest.approx(-1.6)


def test_premium_rate_zero_rates():
    spec = OptionSpec("call", 100.0, 1.0, 100.0)
    for s in (1.0, 100.0, 1e4):
        assert premium_rate(spec, 0.0, 0.0, s) == 0.0


def test_premium_rate_sign_symmetry():
    call = OptionSpec("call", 100.0, 1.0, 100.0)
    put = OptionSpec("put", 100.0, 1.0, 100.0)
    for s in (50.0, 100.0, 150.0):
        assert premium_rate(call, 0.04, 0.02, s) == pytest.approx(
            -premium_rate(put, 0.04, 0.02, s))


def test_step_bs_deterministic_drift():
    params = BlackScholesParams(r=0.08, y=0.12, sigma=0.2)
    state = PathState(t=0.0, spot=100.0)
    out = step_bs(params, state, dt=1.0, z=0.0)
    assert out.spot == pytest.approx(100.0 * math.exp(-0.06))
    assert out.t == 1.0
    assert out.int_r == pytest.approx(0.08)


def test_step_bs_zero_vol():
    params = BlackScholesParams(r=0.05, y=0.01, sigma=0.0)
    state = PathState(t=0.0, spot=70.0)
    for z in (-3.0, 0.0, 3.0):
        out = step_bs(params, state, dt=0.7, z=z)
        assert out.spot == pytest.approx(70.0 * math.exp(0.04 * 0.7))


def test_step_bs_spot_stays_positive():
    params = BlackScholesParams(r=0.0, y=0.0, sigma=0.9)
    state = PathState(t=0.0, spot=1e-8)
    out = step_bs(params, state, dt=1.0, z=-8.0)
    assert out.spot > 0.0


def test_discounted_stock_martingale():
    # for y=0 the mean of e^{-rT} S_T must equal S0 within MC noise
    params = BlackScholesParams(r=0.06, y=0.0, sigma=0.25)
    rng = np.random.default_rng(11)
    n = 200_000
    s_T = bs_transition(params, np.full(n, 100.0), 2.0, rng.standard_normal(n))
    disc = math.exp(-0.06 * 2.0) * s_T
    se = disc.std(ddof=1) / math.sqrt(n)
    assert abs(disc.mean() - 100.0) < 3.0 * se


def test_reinvested_stock_terminal_law():
    # mean of e^{-(r-y)T} S_T / S0 -> 1 (exact stepper, single step to T)
    params = BlackScholesParams(r=0.08, y=0.12, sigma=0.2)
    rng = np.random.default_rng(12)
    n = 150_000
    s_T = bs_transition(params, np.full(n, 100.0), 3.0, rng.standard_normal(n))
    ratio = math.exp(0.04 * 3.0) * s_T / 100.0
    se = ratio.std(ddof=1) / math.sqrt(n)
    assert abs(ratio.mean() - 1.0) < 3.0 * se


def test_step_heston_mean_reversion_fixed_point():
    params = HestonParams(r=0.05, y=0.0, v0=0.04, xi=3.0, theta=0.04, eta=0.0001, rho=0.0)
    state = PathState(t=0.0, spot=100.0, variance=0.04)
    out = step_heston(params, state, dt=0.01, z1=0.0, z2=0.0)
    assert out.variance == pytest.approx(0.04)


def test_step_heston_drift_vanishes_at_theta():
    params = HestonParams(r=0.05, y=0.0, v0=0.04, xi=3.0, theta=0.04, eta=0.1, rho=-0.5)
    state = PathState(t=0.0, spot=100.0, variance=0.04)
    out = step_heston(params, state, dt=0.005, z1=0.0, z2=0.0)
    assert out.variance == pytest.approx(0.04)
    assert out.spot == pytest.approx(100.0 * math.exp((0.05 - 0.02) * 0.005))


def test_step_heston_truncates_negative_variance():
    params = HestonParams(r=0.0, y=0.0, v0=0.04, xi=2.0, theta=0.04, eta=0.5, rho=0.0)
    state = PathState(t=0.0, spot=100.0, variance=-0.01)
    out = step_heston(params, state, dt=0.01, z1=1.0, z2=1.0)
    # v+ = 0: spot unchanged up to drift, variance pulled toward theta
    assert out.spot == pytest.approx(100.0)
    assert out.variance == pytest.approx(-0.01 + 2.0 * 0.04 * 0.01)


def test_heston_euler_matches_fourier_price():
    # European MC under the discretised dynamics vs the semi-analytic pricer
    from premex.european import heston_value

    params = HestonParams(r=0.05, y=0.0, v0=0.04, xi=3.0, theta=0.04, eta=0.1, rho=-0.1)
    spec = OptionSpec("put", 100.0, 0.25, 100.0)
    rng = np.random.default_rng(21)
    n, steps = 120_000, 500
    dt = spec.expiry / steps
    s = np.full(n, 100.0)
    v = np.full(n, params.v0)
    for _ in range(steps):
        s, v = heston_step_arrays(params, s, v, dt, rng.standard_normal(n),
                                  rng.standard_normal(n))
    disc_pay = math.exp(-params.r * spec.expiry) * np.maximum(spec.strike - s, 0.0)
    se = disc_pay.std(ddof=1) / math.sqrt(n)
    ref = heston_value(params, spec, 0.0, 100.0, params.v0)
    assert abs(disc_pay.mean() - ref) < 3.0 * se


def test_feller_violation_warns():
    with pytest.warns(UserWarning, match="Feller"):
        HestonParams(r=0.0, y=0.0, v0=0.04, xi=0.5, theta=0.01, eta=0.5, rho=0.0)


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        BlackScholesParams(r=-0.01, y=0.0, sigma=0.2)
    with pytest.raises(ValueError):
        OptionSpec("put", -100.0, 1.0, 100.0)
    with pytest.raises(ValueError):
        OptionSpec("straddle", 100.0, 1.0, 100.0)
    with pytest.raises(ValueError):
        HestonParams(r=0.05, y=0.0, v0=0.04, xi=3.0, theta=0.04, eta=0.1, rho=-1.5)
    with pytest.raises(ValueError):
        step_bs(BlackScholesParams(0.0, 0.0, 0.2), PathState(0.0, 100.0), dt=0.0, z=0.0)
