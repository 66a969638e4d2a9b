"""Independent reference calculators for validating the particle estimators.

Three kinds of oracle live here, all deterministic and side-effect free:

* a recombining binomial tree for the full American price,
* the exercise boundary of the order-1 indicator, by bracketed bisection,
* direct quadrature of the order-1 and order-2 time-integral representations
  of the early-exercise premium (lognormal transition density, so BS only).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .european import EuropeanPricer, bs_price
from .mollifier import delta_gauss
from .models import BlackScholesParams, OptionSpec, payoff, premium_rate


@dataclass(frozen=True)
class TreeConfig:
    """Recombining-lattice resolution."""

    n_levels: int = 2000

    def __post_init__(self):
        if self.n_levels < 1:
            raise ValueError("n_levels must be >= 1")


@dataclass(frozen=True)
class QuadratureConfig:
    """Resolution of the premium quadratures.

    n_time : outer Gauss-Legendre nodes on [0, T]
    n_space : inner Gauss-Legendre nodes per spatial interval
    truncation : spatial truncation in sigma-units around the lognormal mean
    delta_bp : variance of the delta kernel in the order-2 integrand, as a
        fraction of the squared spot at each point (1e-4 = one basis point
        of the stock process)
    delta_variance : when set, overrides delta_bp with a constant kernel
        variance in currency^2, matching the particle estimator's kernel so
        the two sides of a cross-check estimate the identical object
    """

    n_time: int = 96
    n_space: int = 192
    truncation: float = 6.0
    delta_bp: float = 1.0e-4
    delta_variance: float | None = None

    def __post_init__(self):
        if self.truncation < 5.0:
            raise ValueError("truncation must be at least 5 sigma-units")
        if self.n_time < 16 or self.n_space < 16:
            raise ValueError("node counts must be at least 16")


def _tree_value(params: BlackScholesParams, spec: OptionSpec, n_levels: int,
                american: bool) -> float:
    if params.sigma <= 0:
        raise ValueError("tree parameterisation needs sigma > 0")
    dt = spec.expiry / n_levels
    up = math.exp(params.sigma * math.sqrt(dt))
    down = 1.0 / up
    growth = math.exp((params.r - params.y) * dt)
    p_up = (growth - down) / (up - down)
    if not 0.0 < p_up < 1.0:
        raise ValueError("risk-neutral up-probability outside (0, 1); refine the lattice")
    disc = math.exp(-params.r * dt)

    j = np.arange(n_levels + 1)
    log_u = math.log(up)
    s_nodes = spec.spot * np.exp((2.0 * j - n_levels) * log_u)
    values = payoff(spec, s_nodes)[1]
    for level in range(n_levels - 1, -1, -1):
        values = disc * (p_up * values[1:] + (1.0 - p_up) * values[:-1])
        if american:
            s_nodes = spec.spot * np.exp((2.0 * j[: level + 1] - level) * log_u)
            values = np.maximum(values, payoff(spec, s_nodes)[1])
    return float(values[0])


def tree_american(params: BlackScholesParams, spec: OptionSpec,
                  cfg: TreeConfig = TreeConfig()) -> float:
    """American price from backward induction on a recombining lattice.

    Standard up/down parameterisation with drift (r - y); early exercise is
    checked at every node.  Converges to the American price as n_levels
    grows.
    """
    return _tree_value(params, spec, cfg.n_levels, american=True)


def tree_european(params: BlackScholesParams, spec: OptionSpec,
                  cfg: TreeConfig = TreeConfig()) -> float:
    """European price on the same lattice (no exercise); for dominance checks."""
    return _tree_value(params, spec, cfg.n_levels, american=False)


def exercise_boundary(pricer: EuropeanPricer, u, tol: float = 1e-10,
                      max_iter: int = 200):
    """Root b(u) of payoff(S) - v0(u, S) = 0 by bracketed bisection.

    For a put the region {payoff > v0} is {S < b(u)}, for a call {S > b(u)}.
    Returns NaN where no root exists in the bracket (empty region).  Accepts
    scalar or array u (vectorised bisection).
    """
    spec = pricer.spec
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any(u_arr < 0.0) or np.any(u_arr >= spec.expiry):
        raise ValueError("u must lie in [0, T)")
    k = spec.strike

    def gap(s):
        return payoff(spec, s)[0] - pricer.value(u_arr, s)

    if spec.kind == "put":
        lo = np.full_like(u_arr, k * 1e-12)
        hi = np.full_like(u_arr, k)
    else:
        lo = np.full_like(u_arr, k)
        hi = np.full_like(u_arr, 2.0 * k)
        # expand until the gap turns positive (deep in the money); give up
        # where it cannot (empty region, e.g. y = 0)
        for _ in range(60):
            still = gap(hi) <= 0.0
            if not still.any():
                break
            hi = np.where(still, hi * 2.0, hi)

    g_lo, g_hi = gap(lo), gap(hi)
    # root exists where the gap changes sign across the bracket
    has_root = (g_lo > 0.0) & (g_hi <= 0.0) if spec.kind == "put" else (g_lo <= 0.0) & (g_hi > 0.0)
    lo = lo.copy()
    hi = hi.copy()
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        g_mid = gap(mid)
        if spec.kind == "put":
            go_right = g_mid > 0.0  # still inside the region, move boundary up
        else:
            go_right = g_mid <= 0.0
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
        if np.all(hi - lo < tol * k):
            break
    root = 0.5 * (lo + hi)
    root = np.where(has_root, root, np.nan)
    if np.isscalar(u) or np.asarray(u).ndim == 0:
        return float(root[0])
    return root


def _region_premium(params, spec, elapsed, s_from, boundary, cfg):
    """E[C(S) 1_region | start spot s_from] after `elapsed` years, by
    quadrature of the lognormal transition density in log space.

    Vectorised over s_from.  boundary is the region edge at the target time
    (NaN = empty region, returns zeros).
    """
    s_from = np.atleast_1d(np.asarray(s_from, dtype=float))
    if not np.isfinite(boundary):
        return np.zeros(s_from.shape)
    sig_rt = params.sigma * math.sqrt(elapsed)
    mean = np.log(s_from) + (params.r - params.y - 0.5 * params.sigma**2) * elapsed
    lo = mean - cfg.truncation * sig_rt
    hi = mean + cfg.truncation * sig_rt
    ln_b = math.log(boundary)
    if spec.kind == "put":
        hi = np.minimum(hi, ln_b)
    else:
        lo = np.maximum(lo, ln_b)
    width = hi - lo
    alive = width > 0.0
    x_gl, w_gl = np.polynomial.legendre.leggauss(cfg.n_space)
    # nodes[i, k] over each start spot's own interval
    nodes = lo[:, None] + np.outer(width, 0.5 * (x_gl + 1.0))
    dens = np.exp(-0.5 * ((nodes - mean[:, None]) / sig_rt) ** 2) / (sig_rt * math.sqrt(2.0 * math.pi))
    c_vals = premium_rate(spec, params.r, params.y, np.exp(nodes))
    integral = (dens * c_vals) @ w_gl * (0.5 * width)
    return np.where(alive, integral, 0.0)


def quadrature_v1(params: BlackScholesParams, spec: OptionSpec,
                  cfg: QuadratureConfig = QuadratureConfig(),
                  t0: float = 0.0, s0: float | None = None) -> float:
    """Order-1 premium by direct double quadrature.

    Outer Gauss-Legendre over time in [t0, T]; the inner expectation
    integrates the premium rate against the lognormal density restricted to
    the exercise region at each time node.
    """
    if s0 is None:
        s0 = spec.spot
    pricer = EuropeanPricer(params, spec)
    horizon = spec.expiry - t0
    if horizon <= 0.0:
        return 0.0
    x_gl, w_gl = np.polynomial.legendre.leggauss(cfg.n_time)
    u_nodes = t0 + 0.5 * horizon * (x_gl + 1.0)
    boundaries = exercise_boundary(pricer, u_nodes)
    total = 0.0
    for u_i, b_i, w_i in zip(u_nodes, boundaries, w_gl):
        slice_val = _region_premium(params, spec, u_i - t0, s0, b_i, cfg)[0]
        total += w_i * math.exp(-params.r * (u_i - t0)) * slice_val
    return total * 0.5 * horizon


def _v1_profile(params, spec, u_level, s_array, u_nodes_all, boundaries_all, cfg):
    """V1(u_level, s) for an array of spots, reusing precomputed boundaries."""
    later = u_nodes_all > u_level
    if not later.any():
        return np.zeros(len(s_array))
    total = np.zeros(len(s_array))
    horizon = spec.expiry - u_level
    # re-quadrature over [u_level, T] with its own GL rule for accuracy
    x_gl, w_gl = np.polynomial.legendre.leggauss(max(cfg.n_time // 2, 24))
    w_nodes = u_level + 0.5 * horizon * (x_gl + 1.0)
    b_interp = np.interp(w_nodes, u_nodes_all, boundaries_all)
    for w_i, b_i, wt in zip(w_nodes, b_interp, w_gl):
        elapsed = w_i - u_level
        if elapsed <= 0.0:
            continue
        total += wt * math.exp(-params.r * elapsed) * _region_premium(
            params, spec, elapsed, s_array, b_i, cfg)
    return total * 0.5 * horizon


def quadrature_v2(params: BlackScholesParams, spec: OptionSpec,
                  cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """Order-2 term by brute-force double quadrature (negative-signed).

    The delta factor is a normal density whose variance is delta_bp of the
    squared spot at each point.  The inner order-1 values come from a
    precomputed (u, S) grid with bilinear interpolation; the spatial interval
    is split at the exercise boundary where the integrand peaks.
    """
    pricer = EuropeanPricer(params, spec)
    expiry = spec.expiry
    x_gl, w_gl = np.polynomial.legendre.leggauss(cfg.n_time)
    u_nodes = 0.5 * expiry * (x_gl + 1.0)
    order = np.argsort(u_nodes)
    u_nodes, w_gl = u_nodes[order], w_gl[order]
    boundaries = exercise_boundary(pricer, u_nodes)
    if not np.any(np.isfinite(boundaries)):
        return 0.0

    # V1 interpolation table over (u, ln S)
    n_u_tab = max(cfg.n_time // 2, 32)
    n_s_tab = max(cfg.n_space // 2, 48)
    u_tab = np.linspace(0.0, expiry * (1.0 - 1e-9), n_u_tab)
    sig_span = cfg.truncation * params.sigma * math.sqrt(expiry)
    x_tab = np.linspace(math.log(spec.spot) - sig_span - 0.5,
                        math.log(spec.spot) + sig_span + 0.5, n_s_tab)
    bounds_fine = exercise_boundary(pricer, np.maximum(u_tab, 0.0))
    v1_tab = np.empty((n_u_tab, n_s_tab))
    for i, u_i in enumerate(u_tab):
        v1_tab[i] = _v1_profile(params, spec, u_i, np.exp(x_tab), u_tab, bounds_fine, cfg)

    from scipy.interpolate import RegularGridInterpolator
    v1_interp = RegularGridInterpolator((u_tab, x_tab), v1_tab, method="linear",
                                        bounds_error=False, fill_value=0.0)

    x_in, w_in = np.polynomial.legendre.leggauss(cfg.n_space)
    total = 0.0
    sig = params.sigma
    for u_i, b_i, wt in zip(u_nodes, boundaries, w_gl):
        if u_i <= 0.0:
            continue
        sig_rt = sig * math.sqrt(u_i)
        mean = math.log(spec.spot) + (params.r - params.y - 0.5 * sig**2) * u_i
        lo, hi = mean - cfg.truncation * sig_rt, mean + cfg.truncation * sig_rt
        cut = math.log(b_i) if np.isfinite(b_i) else None
        pieces = []
        if cut is None or cut <= lo or cut >= hi:
            pieces.append((lo, hi))
        else:
            # dedicated window around the boundary where the kernel peaks
            h_at_b = cfg.delta_variance if cfg.delta_variance is not None \
                else cfg.delta_bp * b_i**2
            w_log = 12.0 * math.sqrt(h_at_b) / b_i
            edges = sorted({lo, max(lo, cut - w_log), cut, min(hi, cut + w_log), hi})
            pieces.extend((a, b) for a, b in zip(edges, edges[1:]) if b > a)
        inner = 0.0
        for a, b in pieces:
            nodes = a + 0.5 * (b - a) * (x_in + 1.0)
            s_nodes = np.exp(nodes)
            dens = np.exp(-0.5 * ((nodes - mean) / sig_rt) ** 2) / (sig_rt * math.sqrt(2.0 * math.pi))
            gap = payoff(spec, s_nodes)[0] - bs_price(params, spec, u_i, s_nodes)
            h_kernel = cfg.delta_variance if cfg.delta_variance is not None \
                else cfg.delta_bp * s_nodes**2
            kernel = delta_gauss(gap, h_kernel)
            c_vals = premium_rate(spec, params.r, params.y, s_nodes)
            v1_vals = v1_interp(np.stack([np.full_like(nodes, u_i), nodes], axis=-1))
            inner += float((dens * c_vals * kernel * v1_vals) @ w_in) * 0.5 * (b - a)
        total += wt * math.exp(-params.r * u_i) * inner
    return -total * 0.5 * expiry
