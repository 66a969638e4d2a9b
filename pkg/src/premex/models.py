"""Forward dynamics (Black-Scholes and Heston), payoffs and premium rates.

The steppers are pure value-semantics functions: they take a path state and
return a new one, so they can be called concurrently from any number of
workers.  Vectorised variants (operating on numpy arrays of spots/variances)
are provided for the Monte Carlo engine; they apply the identical update
formulas elementwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Literal, Union

import numpy as np

OptionKind = Literal["call", "put"]


@dataclass(frozen=True)
class BlackScholesParams:
    """Lognormal dynamics dS/S = (r - y) dt + sigma dW.

    r : risk-free rate per year
    y : continuous dividend yield per year
    sigma : volatility per sqrt-year
    """

    r: float
    y: float
    sigma: float

    def __post_init__(self):
        if self.r < 0 or self.y < 0 or self.sigma < 0:
            raise ValueError("r, y and sigma must be nonnegative")


@dataclass(frozen=True)
class HestonParams:
    """Square-root stochastic variance dynamics.

    dS/S  = (r - y) dt + sqrt(v) dW1
    dv    = xi (theta - v) dt + eta sqrt(v) (rho dW1 + sqrt(1-rho^2) dW2)

    v0 is the initial variance (volatility squared).  The standard Feller
    condition 2*xi*theta >= eta^2 is checked and reported as a warning when
    violated; parameters are accepted either way.
    """

    r: float
    y: float
    v0: float
    xi: float
    theta: float
    eta: float
    rho: float

    def __post_init__(self):
        if self.r < 0 or self.y < 0:
            raise ValueError("r and y must be nonnegative")
        if self.xi <= 0 or self.eta <= 0 or self.theta <= 0:
            raise ValueError("xi, eta and theta must be positive")
        if self.v0 < 0:
            raise ValueError("v0 must be nonnegative")
        if abs(self.rho) > 1:
            raise ValueError("rho must lie in [-1, 1]")
        if 2.0 * self.xi * self.theta < self.eta**2:
            warnings.warn(
                "Feller condition 2*xi*theta >= eta^2 violated; "
                "variance paths may spend significant time at zero",
                stacklevel=2,
            )


ModelParams = Union[BlackScholesParams, HestonParams]


@dataclass(frozen=True)
class OptionSpec:
    """Contract definition: call/put, strike, expiry in years, spot."""

    kind: OptionKind
    strike: float
    expiry: float
    spot: float

    def __post_init__(self):
        if self.kind not in ("call", "put"):
            raise ValueError("kind must be 'call' or 'put'")
        if self.strike <= 0 or self.expiry <= 0 or self.spot <= 0:
            raise ValueError("strike, expiry and spot must be positive")


@dataclass(frozen=True)
class PathState:
    """Running simulation state.

    t : current time in years
    spot : current stock level
    variance : current instantaneous variance (Heston only; None for BS)
    int_r : accumulated integral of r du from 0 to t (dimensionless)
    """

    t: float
    spot: float
    variance: float | None = None
    int_r: float = 0.0


def payoff(spec: OptionSpec, s) -> tuple:
    """Raw and clipped payoff (psi, psi_plus) at stock level s.

    psi = s - K for a call, K - s for a put; psi_plus = max(psi, 0).
    Accepts scalars or numpy arrays.
    """
    if spec.kind == "call":
        psi = s - spec.strike
    else:
        psi = spec.strike - s
    return psi, np.maximum(psi, 0.0)


def premium_rate(spec: OptionSpec, r: float, y: float, s):
    """Instantaneous early-exercise benefit per year of holding.

    y*S - r*K for a call, r*K - y*S for a put.  Accepts arrays.
    """
    if spec.kind == "call":
        return y * s - r * spec.strike
    return r * spec.strike - y * s


def step_bs(params: BlackScholesParams, state: PathState, dt: float, z: float) -> PathState:
    """Advance a BS path by dt using the exact lognormal solution.

    S' = S * exp((r - y - sigma^2/2) dt + sigma sqrt(dt) z) for a standard
    normal draw z.  Exact for any dt, so the composition over several grid
    nodes has the same law as one step over the union.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    r, y, sig = params.r, params.y, params.sigma
    s_next = state.spot * math.exp((r - y - 0.5 * sig * sig) * dt + sig * math.sqrt(dt) * z)
    return replace(state, t=state.t + dt, spot=s_next, int_r=state.int_r + r * dt)


def step_heston(
    params: HestonParams, state: PathState, dt: float, z1: float, z2: float
) -> PathState:
    """Advance a Heston path by dt with the full-truncation Euler scheme.

    The truncated variance v+ = max(v, 0) drives both the spot and the
    variance update; the stored variance may dip below zero but is never
    used negative inside a square root.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if state.variance is None:
        raise ValueError("Heston stepping needs a variance in the path state")
    r, y = params.r, params.y
    v_plus = max(state.variance, 0.0)
    sqrt_vdt = math.sqrt(v_plus * dt)
    s_next = state.spot * math.exp((r - y - 0.5 * v_plus) * dt + sqrt_vdt * z1)
    dw_v = params.rho * z1 + math.sqrt(1.0 - params.rho**2) * z2
    v_next = state.variance + params.xi * (params.theta - v_plus) * dt + params.eta * sqrt_vdt * dw_v
    return PathState(
        t=state.t + dt, spot=s_next, variance=v_next, int_r=state.int_r + r * dt
    )


def bs_transition(params: BlackScholesParams, s, dt, z):
    """Vectorised exact lognormal transition over an elapsed time dt.

    Same formula as step_bs, applied elementwise; dt may be an array
    (per-path elapsed times).
    """
    r, y, sig = params.r, params.y, params.sigma
    return s * np.exp((r - y - 0.5 * sig * sig) * dt + sig * np.sqrt(dt) * z)


def heston_step_arrays(params: HestonParams, s, v, dt: float, z1, z2):
    """Vectorised full-truncation Euler step; returns (s_next, v_next)."""
    v_plus = np.maximum(v, 0.0)
    sqrt_vdt = np.sqrt(v_plus * dt)
    s_next = s * np.exp((params.r - params.y - 0.5 * v_plus) * dt + sqrt_vdt * z1)
    dw_v = params.rho * z1 + math.sqrt(1.0 - params.rho**2) * z2
    v_next = v + params.xi * (params.theta - v_plus) * dt + params.eta * sqrt_vdt * dw_v
    return s_next, v_next
