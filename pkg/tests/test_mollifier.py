import math

import numpy as np
import pytest

from premex.mollifier import (MollifierConfig, default_scan_grid, delta_gauss,
                              delta_prime_gauss, delta_second_gauss,
                              select_bandwidth, theta_step)


def test_theta_step_values():
    assert theta_step(2.5) == 1.0
    assert theta_step(-0.1) == 0.0
    assert theta_step(0.0) == 0.0  # boundary maps to "no exercise"
    np.testing.assert_array_equal(theta_step(np.array([-1.0, 0.0, 1e-12])),
                                  [0.0, 0.0, 1.0])


def test_delta_gauss_peak_and_symmetry():
    assert delta_gauss(0.0, 1.0) == pytest.approx(0.3989422804014327)
    assert delta_gauss(1.0, 1.0) == pytest.approx(delta_gauss(-1.0, 1.0))
    assert np.all(delta_gauss(np.linspace(-5, 5, 101), 0.3) >= 0.0)


def test_delta_gauss_normalises():
    for h in (0.04, 1.0, 9.0):
        half = 10.0 * math.sqrt(h)
        x = np.linspace(-half, half, 20001)
        integral = np.trapezoid(delta_gauss(x, h), x)
        assert integral == pytest.approx(1.0, abs=1e-6)


def test_delta_prime_odd_and_zero_at_origin():
    assert delta_prime_gauss(0.0, 2.0) == 0.0
    x = np.linspace(0.1, 4.0, 17)
    np.testing.assert_allclose(delta_prime_gauss(x, 0.7),
                               -delta_prime_gauss(-x, 0.7))


def test_delta_second_at_origin():
    assert delta_second_gauss(0.0, 1.0) == pytest.approx(-0.3989422804014327)


@pytest.mark.parametrize("h", [0.25, 1.0, 4.0])
def test_derivatives_match_finite_differences(h):
    xs = np.linspace(-3.0, 3.0, 13)
    eps = 1e-5
    fd1 = (delta_gauss(xs + eps, h) - delta_gauss(xs - eps, h)) / (2 * eps)
    np.testing.assert_allclose(delta_prime_gauss(xs, h), fd1, rtol=1e-7, atol=1e-9)
    eps = 1e-4  # second difference loses ~8 digits to cancellation
    fd2 = (delta_gauss(xs + eps, h) - 2 * delta_gauss(xs, h)
           + delta_gauss(xs - eps, h)) / eps**2
    np.testing.assert_allclose(delta_second_gauss(xs, h), fd2, rtol=1e-4, atol=1e-6)


def test_mollified_step_consistency():
    # integral of delta_h up to x approaches theta(x) as h shrinks
    for x in (-0.8, 0.5):
        vals = []
        for h in (1.0, 1e-4):
            grid = np.linspace(-30.0, x, 400001)
            vals.append(np.trapezoid(delta_gauss(grid, h), grid))
        target = theta_step(x)
        assert abs(vals[1] - target) < 1e-6
        assert abs(vals[1] - target) <= abs(vals[0] - target) + 1e-12


def test_sifting_property_error_order_h():
    # integral f(x) delta_h(x) dx = f(0) + h f''(0)/2 + O(h^2) for smooth f
    def f(x):
        return 1.0 + 2.0 * x + 3.0 * x * x

    errors = []
    for h in (0.1, 0.05, 0.025):
        grid = np.linspace(-20.0, 20.0, 800001)
        integral = np.trapezoid(f(grid) * delta_gauss(grid, h), grid)
        errors.append(abs(integral - f(0.0)))
    # halving h halves the error (first order in h)
    assert errors[1] == pytest.approx(errors[0] / 2.0, rel=0.05)
    assert errors[2] == pytest.approx(errors[1] / 2.0, rel=0.05)


def test_select_bandwidth_stops_before_dispersion_rise():
    dispersions = {4.0: 1.0, 2.0: 0.9, 1.0: 0.9, 0.5: 1.5}
    picked = select_bandwidth(lambda h: (0.0, dispersions[h]), [4.0, 2.0, 1.0, 0.5])
    assert picked == 1.0


def test_select_bandwidth_two_point_grid():
    picked = select_bandwidth(lambda h: (0.0, {4.0: 1.0, 2.0: 0.8}[h]), [4.0, 2.0])
    assert picked == 2.0


def test_select_bandwidth_degenerate_returns_largest_and_warns():
    with pytest.warns(UserWarning, match="degenerate"):
        picked = select_bandwidth(lambda h: (0.0, 1.0 / h), [4.0, 2.0, 1.0])
    assert picked == 4.0


def test_select_bandwidth_collects_rows():
    rows = []
    select_bandwidth(lambda h: (h * 2.0, 1.0), [4.0, 2.0, 1.0], collect=rows)
    assert rows == [(4.0, 8.0, 1.0), (2.0, 4.0, 1.0), (1.0, 2.0, 1.0)]


def test_select_bandwidth_validates_grid():
    with pytest.raises(ValueError):
        select_bandwidth(lambda h: (0.0, 1.0), [1.0])
    with pytest.raises(ValueError):
        select_bandwidth(lambda h: (0.0, 1.0), [1.0, 2.0])


def test_default_scan_grid_descends_kk_scaled():
    grid = default_scan_grid(100.0)
    assert len(grid) == 9
    assert grid[0] == pytest.approx(100.0)
    assert grid[-1] == pytest.approx(0.01)
    assert all(b < a for a, b in zip(grid, grid[1:]))


def test_config_rejects_nonpositive_bandwidths():
    with pytest.raises(ValueError):
        MollifierConfig(h0=0.0, h1=1.0, h2=1.0)


def test_strike_scaled_defaults():
    cfg = MollifierConfig.for_strike(100.0)
    assert cfg.h0 == pytest.approx(0.25)
    assert cfg.h1 == pytest.approx(0.25)
    assert cfg.h2 == pytest.approx(1.0)
