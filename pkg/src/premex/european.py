"""European option prices: the order-0 value function of the expansion.

The expansion's base value v0(t, state) is needed both as a standalone price
and inside every exercise-region indicator evaluated by the particle engine,
so everything here is vectorised over spots (and variances).

For Black-Scholes the closed form is used.  For Heston the price comes from
the characteristic function and Gil-Pelaez Fourier inversion on a truncated
domain with Gauss-Legendre nodes; puts are obtained from calls by put-call
parity with the dividend yield.  Near expiry (or when v*tau is too small for
the truncated integral to have decayed) the Fourier integrand becomes too
wide-band for a fixed node set, so those evaluations fall back to the
Black-Scholes formula at the current variance; the crossover thresholds are
part of FourierConfig and sized so the fallback error is far below the
quadrature tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from .models import BlackScholesParams, HestonParams, OptionSpec, payoff


class FourierConvergenceError(RuntimeError):
    """Raised when the Fourier integral fails its internal resolution check."""


@dataclass(frozen=True)
class FourierConfig:
    """Truncation and resolution of the characteristic-function integral.

    u_max : truncation bound of the inversion integral
    n_nodes : Gauss-Legendre node count on [0, u_max]
    tau_switch : below this time to expiry, price with the BS formula at the
        current variance instead of the Fourier integral
    vtau_switch : same fallback when variance * tau is below this bound (the
        integrand has not decayed by u_max there)
    """

    u_max: float = 200.0
    n_nodes: int = 160
    tau_switch: float = 0.01
    vtau_switch: float = 6.0e-4


def bs_price(params: BlackScholesParams, spec: OptionSpec, t, s):
    """Black-Scholes price with continuous dividend yield at time t, spot s.

    Vectorised over t and s.  At t = T returns the clipped payoff.
    """
    tau = np.asarray(spec.expiry - t, dtype=float)
    s = np.asarray(s, dtype=float)
    tau, s = np.broadcast_arrays(tau, s)
    out = np.empty(tau.shape)

    expired = tau <= 0.0
    if np.any(expired):
        out[expired] = payoff(spec, s[expired])[1]
    live = ~expired
    if np.any(live):
        out[live] = _bs_live(
            s[live], spec.strike, tau[live], params.r, params.y,
            np.full(np.count_nonzero(live), params.sigma), spec.kind,
        )
    if out.ndim == 0:
        return float(out)
    return out


def _bs_live(s, k, tau, r, y, sigma, kind):
    """BS formula for tau > 0 with per-point sigma (used by the Heston fallback)."""
    sig_rt = np.maximum(sigma * np.sqrt(tau), 1e-300)
    d1 = (np.log(s / k) + (r - y + 0.5 * sigma**2) * tau) / sig_rt
    d2 = d1 - sig_rt
    df_r = np.exp(-r * tau)
    df_y = np.exp(-y * tau)
    if kind == "call":
        val = s * df_y * ndtr(d1) - k * df_r * ndtr(d2)
    else:
        val = k * df_r * ndtr(-d2) - s * df_y * ndtr(-d1)
    # sigma == 0 collapses to the discounted forward intrinsic value
    degenerate = sigma <= 0.0
    if np.any(degenerate):
        fwd = s * df_y - k * df_r
        intrinsic = fwd if kind == "call" else -fwd
        val = np.where(degenerate, np.maximum(intrinsic, 0.0), val)
    return val


@lru_cache(maxsize=32)
def _gl_nodes(n_nodes: int, u_max: float):
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    return 0.5 * u_max * (x + 1.0), 0.5 * u_max * w


def _heston_cf_coeffs(params: HestonParams, u, tau):
    """Coefficients (a, d_coef) of log cf(u) = i u x + a + d_coef * v.

    x = ln S + (r - y) tau.  Uses the branch-stable (b - d) formulation.
    """
    i = 1j
    xi, eta, rho = params.xi, params.eta, params.rho
    b = xi - rho * eta * i * u
    d = np.sqrt(b * b + eta * eta * (i * u + u * u))
    g = (b - d) / (b + d)
    exp_dt = np.exp(-d * tau)
    a = (xi * params.theta / eta**2) * (
        (b - d) * tau - 2.0 * np.log((1.0 - g * exp_dt) / (1.0 - g))
    )
    d_coef = (b - d) / eta**2 * (1.0 - exp_dt) / (1.0 - g * exp_dt)
    return a, d_coef


@lru_cache(maxsize=16384)
def _cf_tables(params: HestonParams, tau: float, n_nodes: int, u_max: float):
    """Per-(model, tau) inversion tables; grid times recur across batches."""
    u, w = _gl_nodes(n_nodes, u_max)
    a2, d2 = _heston_cf_coeffs(params, u, tau)
    a1, d1 = _heston_cf_coeffs(params, u - 1j, tau)
    return u, w / u, a1, d1, a2, d2


def heston_call_fourier(params: HestonParams, strike: float, tau: float, s, v,
                        config: FourierConfig = FourierConfig()):
    """Undiscounted-parity Heston call prices at time-to-expiry tau.

    Vectorised over (s, v); every point is priced with the Fourier integral
    (no fallback logic here).  The integrand decays like exp(-u^2 v tau / 2),
    so the truncation bound is tightened to where that factor is ~1e-28 and
    the node count shrunk proportionally (the node density that resolves the
    log-moneyness oscillation is kept).  Returns an array matching s.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    decay = max(float(np.min(v)), 1e-12) * tau
    need = 7.0 / math.sqrt(decay)  # exp(-need^2 v tau / 2) ~ 2e-11
    u_eff, n_eff = config.u_max, config.n_nodes
    while u_eff >= 2.0 * need and n_eff >= 64:  # halve in lockstep: node density kept
        u_eff *= 0.5
        n_eff //= 2
    u, w_over_u, a1, d1, a2, d2 = _cf_tables(params, tau, n_eff, u_eff)

    x = np.log(s) + (params.r - params.y) * tau  # log forward
    lnk = math.log(strike)
    # phase[j, k] = exp(i u_k (x_j - ln K)); cf at u - i divided by the
    # forward uses the same phase since cf(-i) = exp(x).
    phase = np.exp(1j * np.outer(x - lnk, u))
    int1 = (phase * np.exp(a1[None, :] + np.outer(v, d1))).imag @ w_over_u
    int2 = (phase * np.exp(a2[None, :] + np.outer(v, d2))).imag @ w_over_u
    p1 = 0.5 + int1 / math.pi
    p2 = 0.5 + int2 / math.pi
    df_r = math.exp(-params.r * tau)
    df_y = math.exp(-params.y * tau)
    return s * df_y * p1 - strike * df_r * p2


def heston_value(params: HestonParams, spec: OptionSpec, t, s, v,
                 config: FourierConfig = FourierConfig()):
    """Heston price at (t, s, v), vectorised, with near-expiry BS fallback.

    Puts come from calls by parity.  Variances are truncated at zero before
    use (states produced by the Euler scheme may dip below).
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    v = np.asarray(v, dtype=float)
    t, s, v = np.broadcast_arrays(t, s, v)
    shape = t.shape
    t, s, v = t.ravel(), s.ravel(), np.maximum(v.ravel(), 0.0)
    tau = spec.expiry - t
    out = np.empty(t.shape)

    expired = tau <= 0.0
    if np.any(expired):
        out[expired] = payoff(spec, s[expired])[1]

    live = ~expired
    fourier_ok = live & (tau >= config.tau_switch) & (v * tau >= config.vtau_switch)
    fallback = live & ~fourier_ok
    if np.any(fallback):
        idx = np.flatnonzero(fallback)
        out[idx] = _bs_live(
            s[idx], spec.strike, tau[idx], params.r, params.y,
            np.sqrt(v[idx]), spec.kind,
        )
    if np.any(fourier_ok):
        idx = np.flatnonzero(fourier_ok)
        # group by distinct tau: the cf coefficients are shared within a group
        order = np.argsort(tau[idx], kind="stable")
        idx = idx[order]
        taus = tau[idx]
        starts = np.flatnonzero(np.r_[True, np.diff(taus) > 0.0])
        for lo, hi in zip(starts, np.r_[starts[1:], len(idx)]):
            sel = idx[lo:hi]
            calls = heston_call_fourier(params, spec.strike, taus[lo], s[sel], v[sel], config)
            out[sel] = _from_call(calls, params, spec, taus[lo], s[sel])
    out = np.maximum(out, 0.0)
    if shape == ():
        return float(out[0])
    return out.reshape(shape)


def _from_call(call_values, params, spec, tau, s):
    if spec.kind == "call":
        return call_values
    return call_values - s * math.exp(-params.y * tau) + spec.strike * math.exp(-params.r * tau)


def heston_price(params: HestonParams, spec: OptionSpec, t: float, s: float, v: float,
                 config: FourierConfig = FourierConfig()) -> float:
    """Scalar Heston price with an internal resolution check.

    Re-prices with two thirds of the nodes and raises FourierConvergenceError
    if the two results disagree by more than 1e-5 of the strike (only when
    the Fourier branch is actually used).
    """
    value = heston_value(params, spec, t, s, v, config)
    tau = spec.expiry - t
    if tau >= config.tau_switch and max(v, 0.0) * tau >= config.vtau_switch:
        coarse_cfg = FourierConfig(
            u_max=config.u_max, n_nodes=max(2 * config.n_nodes // 3, 16),
            tau_switch=config.tau_switch, vtau_switch=config.vtau_switch,
        )
        coarse = heston_value(params, spec, t, s, v, coarse_cfg)
        if abs(coarse - value) > 1e-5 * spec.strike:
            raise FourierConvergenceError(
                f"Fourier integral not converged: {value} vs {coarse} at reduced nodes"
            )
    return value


class EuropeanPricer:
    """European price v0(t, spot[, variance]) for either model.

    Immutable after construction; evaluation is vectorised and safe to call
    concurrently.  An optional precomputed interpolation table can replace
    direct evaluation inside hot loops (off by default).
    """

    def __init__(self, model, spec: OptionSpec, fourier: FourierConfig = FourierConfig()):
        self.model = model
        self.spec = spec
        self.fourier = fourier
        self.is_heston = isinstance(model, HestonParams)
        self._table = None

    def value(self, t, s, v=None):
        if self.is_heston:
            if v is None:
                raise ValueError("Heston evaluation needs a variance")
            if self._table is not None:
                return self._table(t, s, v)
            return heston_value(self.model, self.spec, t, s, v, self.fourier)
        if self._table is not None:
            return self._table(t, s)
        return bs_price(self.model, self.spec, t, s)

    def price0(self) -> float:
        """Price at inception for the contract's own spot."""
        if self.is_heston:
            return float(heston_value(self.model, self.spec, 0.0, self.spec.spot,
                                      self.model.v0, self.fourier))
        return float(bs_price(self.model, self.spec, 0.0, self.spec.spot))

    def enable_table(self, n_t=80, n_s=160, n_v=24, s_width=8.0):
        """Precompute an interpolation table over (t, log-spot[, variance]).

        The table covers +-s_width sigma-units of log-spot around the
        forward; evaluation outside the grid falls back to direct pricing.
        Intended relative accuracy is 1e-4 against direct evaluation.
        """
        self._table = _PriceTable(self, n_t, n_s, n_v, s_width)
        return self


class _PriceTable:
    """Precomputed cubic splines of the pricer over (t, ln S[, v]).

    Time nodes are clustered toward expiry where the price's curvature in t
    peaks; the Heston table holds one (t, ln S) spline per variance slice
    and blends the two bracketing slices linearly.  Accuracy is relative to
    max(price, 1e-3 strike): prices below a tenth of a percent of the strike
    are indistinguishable from zero for the consumers of the table.
    """

    def __init__(self, pricer: EuropeanPricer, n_t, n_s, n_v, s_width):
        from scipy.interpolate import RectBivariateSpline

        spec = pricer.spec
        model = pricer.model
        sig = math.sqrt(model.v0) if pricer.is_heston else model.sigma
        half = s_width * max(sig, 0.05) * math.sqrt(spec.expiry) + 0.5
        # keep a margin before expiry: the payoff kink would make the
        # splines ring; points beyond the grid are priced directly
        self.t_margin = max(0.004 * spec.expiry, 0.004)
        u = np.linspace(0.0, 1.0, n_t)
        self.t_grid = (spec.expiry - self.t_margin) * (1.0 - (1.0 - u) ** 2)
        self.x_grid = np.linspace(math.log(spec.spot) - half, math.log(spec.spot) + half, n_s)
        self.pricer = pricer
        tt, xx = np.meshgrid(self.t_grid, self.x_grid, indexing="ij")
        if pricer.is_heston:
            vol_hi = math.sqrt(max(model.v0, model.theta)) * 2.0 + 2.0 * model.eta * math.sqrt(
                spec.expiry)
            # vol-spaced variance grid: price curvature in v blows up at v=0
            self.v_grid = np.linspace(0.0, vol_hi, n_v) ** 2
            self._slices = []
            for v_i in self.v_grid:
                vals = heston_value(model, spec, tt.ravel(), np.exp(xx.ravel()),
                                    np.full(tt.size, v_i), pricer.fourier)
                self._slices.append(RectBivariateSpline(
                    self.t_grid, self.x_grid, vals.reshape(tt.shape)))
        else:
            vals = bs_price(model, spec, tt, np.exp(xx))
            self._spline = RectBivariateSpline(self.t_grid, self.x_grid, vals)

    def _direct(self, t, s, v):
        if self.pricer.is_heston:
            return heston_value(self.pricer.model, self.pricer.spec, t, s, v,
                                self.pricer.fourier)
        return bs_price(self.pricer.model, self.pricer.spec, t, s)

    def __call__(self, t, s, v=None):
        t = np.asarray(t, dtype=float)
        x = np.log(np.asarray(s, dtype=float))
        if self.pricer.is_heston:
            v = np.maximum(np.asarray(v, dtype=float), 0.0)
            t, x, v = np.broadcast_arrays(t, x, v)
        else:
            t, x = np.broadcast_arrays(t, x)
            v = np.zeros_like(t)
        shape = t.shape
        t, x, v = t.ravel(), x.ravel(), v.ravel()
        inside = ((t >= self.t_grid[0]) & (t <= self.t_grid[-1])
                  & (x >= self.x_grid[0]) & (x <= self.x_grid[-1]))
        if self.pricer.is_heston:
            inside &= v <= self.v_grid[-1]
        out = np.empty(t.shape)
        misses = ~inside
        if misses.any():
            out[misses] = np.atleast_1d(self._direct(t[misses], np.exp(x[misses]), v[misses]))
        idx = np.flatnonzero(inside)
        if idx.size:
            if not self.pricer.is_heston:
                out[idx] = self._spline.ev(t[idx], x[idx])
            else:
                # linear blend between the two bracketing slices, in vol space
                vol = np.sqrt(v[idx])
                vol_grid = np.sqrt(self.v_grid)
                hi = np.clip(np.searchsorted(vol_grid, vol), 1, len(vol_grid) - 1)
                w_hi = (vol - vol_grid[hi - 1]) / (vol_grid[hi] - vol_grid[hi - 1])
                vals = np.empty(idx.size)
                for b in np.unique(hi):
                    sel = hi == b
                    lo_vals = self._slices[b - 1].ev(t[idx][sel], x[idx][sel])
                    hi_vals = self._slices[b].ev(t[idx][sel], x[idx][sel])
                    vals[sel] = (1.0 - w_hi[sel]) * lo_vals + w_hi[sel] * hi_vals
                out[idx] = vals
        return np.maximum(out, 0.0).reshape(shape)
