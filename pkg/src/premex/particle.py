"""Branching interacting-particle Monte Carlo for the premium expansion.

The American price is expanded around the European value; each correction
order is a time integral of premium-rate weights over the exercise region,
estimated in a single forward pass: an auxiliary Poisson clock with intensity
lambda turns the time integrals into jump-time evaluations, and nested
conditional expectations at orders >= 3 become independent offspring copies
of the state spawned at the first jump ("branching").

Contributions per order (all discounted to inception, indicator-killed when
the required jumps do not arrive before expiry; x = payoff - European value,
evaluated at the jump state; Chat = premium rate rescaled by exp(lam * wait)
/ lam so the Poisson-time representation is unbiased):

  order 1:  + Chat_1 theta(x_1)
  order 2:  - Chat_1 delta(x_1) Chat_2 theta(x_2)
  order 3:  + Chat_1 delta(x_1) Chat_2 delta(x_2) Chat_3 theta(x_3)
            + 1/2 Chat_1 delta'(x_1) * prod of two offspring theta factors
  order 4:  - [ 1/6 Chat_1 delta''(x_1) * three offspring theta factors
              + Chat_1 delta'(x_1) * offspring theta * offspring delta-theta chain
              + Chat_1 delta(x_1) ... Chat_4 theta(x_4)  (four-jump chain)
              + 1/2 Chat_1 delta(x_1) Chat_2 delta'(x_2) * two offspring from
                the second jump ]

Jump times are exponential inter-arrivals snapped forward to the next grid
node (at most one jump per node); the exponential weight keeps the raw wait
so the node sum is an exact right-endpoint rule of the time integral.  BS
states move between jump nodes with the exact lognormal transition (the
composition over nodes has the same law); Heston states are stepped node by
node with the full-truncation Euler scheme.

Randomness is counter-based (Philox): every (seed, batch, purpose) triple
owns a sub-stream, so results are bit-identical for a given seed regardless
of the worker count, and offspring groups are driven by disjoint streams.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .european import EuropeanPricer, bs_price, heston_value
from .mollifier import (MollifierConfig, delta_gauss, delta_prime_gauss,
                        delta_second_gauss, theta_step)
from .models import (BlackScholesParams, HestonParams, OptionSpec,
                     bs_transition, heston_step_arrays, payoff, premium_rate)

# sub-stream purposes within a batch
_MAIN_CLOCK = 0
_MAIN_BM = 1
_OFFSPRING = (2, 3, 4)     # spawned at the first jump
_SECOND_OFFSPRING = (5, 6)  # spawned at the second jump (order 4 only)


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo run configuration.

    n_paths : simulated path families
    n_steps : uniform grid intervals on [0, T]
    lam : Poisson interaction intensity (per year, constant)
    order : maximum expansion order, 0..4
    mollifier : kernel bandwidths; None picks strike-scaled defaults
    seed : base seed of the counter-based RNG
    workers : process count for batch execution (results do not depend on it)
    batch_size : paths per work unit; part of the deterministic batch layout
    independent_orders : estimate each order from its own path family instead
        of reusing one family for all orders (more draws, no cross-order
        common random numbers)
    """

    n_paths: int
    n_steps: int
    lam: float
    order: int = 3
    mollifier: MollifierConfig | None = None
    seed: int = 0
    workers: int = 1
    batch_size: int = 16384
    independent_orders: bool = False

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if not 0 <= self.order <= 4:
            raise ValueError("order must lie in 0..4")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class JumpSchedule:
    """Grid-snapped interaction times of one path.

    raw_times are the un-snapped arrival times (previous node time plus the
    exponential wait); nodes are the strictly increasing grid indices after
    snapping forward; times are the node times.  Arrivals beyond the last
    interior node are dropped.
    """

    raw_times: tuple
    nodes: tuple
    times: tuple


@dataclass(frozen=True)
class ExpansionResult:
    """Per-order estimates and their accumulation at unit expansion weight."""

    order_means: tuple
    order_stderrs: tuple
    cumulative: tuple
    cumulative_stderrs: tuple
    n_paths: int

    @property
    def price(self) -> float:
        return self.cumulative[-1]


def draw_next_jump(rng, t, lam: float, size=None):
    """Next Poisson arrival after time t: t - ln(U)/lam, U uniform in (0, 1].

    May exceed the expiry; the caller tests tau < T.  With `size` given,
    returns an array of independent draws.
    """
    u = 1.0 - (rng.random() if size is None else rng.random(size))
    return t - np.log(u) / lam


def chat_weight(tau_prev, tau, c_at_tau, lam: float):
    """Premium-rate reweighting (1/lam) exp(lam (tau - tau_prev)) C(tau).

    Constant-intensity form of the general exp(int lam du)/lam factor that
    makes the jump-time representation of the time integral unbiased.
    """
    return np.exp(lam * (np.asarray(tau) - tau_prev)) * np.asarray(c_at_tau) / lam


def build_jump_schedule(rng, t: float, expiry: float, lam: float,
                        n_steps: int, max_jumps: int = 8) -> JumpSchedule:
    """Draw up to max_jumps arrivals in [t, T) and snap them to the grid."""
    dt = expiry / n_steps
    raw, nodes, times = [], [], []
    m_prev = int(math.ceil(t / dt - 1e-12))
    for _ in range(max_jumps):
        tau = draw_next_jump(rng, m_prev * dt, lam)
        m = max(m_prev + 1, int(math.ceil(tau / dt)))
        if m > n_steps - 1:
            break
        raw.append(tau)
        nodes.append(m)
        times.append(m * dt)
        m_prev = m
    return JumpSchedule(tuple(raw), tuple(nodes), tuple(times))


def _substream(seed: int, batch_index: int, purpose: int, salt: int = 0):
    key = ((seed & 0xFFFFFFFFFFFFFFFF) << 64) | (batch_index << 16) | (purpose << 4) | salt
    return np.random.Generator(np.random.Philox(key=key))


def _snap_chain(elapsed, dt: float, n_steps: int):
    """Snap raw inter-arrival waits to strictly increasing grid nodes.

    elapsed : (n, legs) raw exponential waits, each measured from the
        previous snapped node
    Returns (nodes, valid): per-leg clamped node indices and validity flags
    (a leg is valid when it and all earlier legs land before the last node).
    """
    n, legs = elapsed.shape
    nodes = np.empty((legs, n), dtype=np.int64)
    valid = np.empty((legs, n), dtype=bool)
    m_prev = np.zeros(n, dtype=np.int64)
    ok = np.ones(n, dtype=bool)
    for j in range(legs):
        raw = m_prev * dt + elapsed[:, j]
        m_j = np.maximum(m_prev + 1, np.ceil(raw / dt).astype(np.int64))
        ok = ok & (m_j <= n_steps - 1)
        m_prev = np.minimum(m_j, n_steps - 1)
        nodes[j] = m_prev
        valid[j] = ok
    return nodes, valid


def _snap_single(m_start, elapsed, dt: float, n_steps: int, parent_ok):
    raw = m_start * dt + elapsed
    m = np.maximum(m_start + 1, np.ceil(raw / dt).astype(np.int64))
    ok = parent_ok & (m <= n_steps - 1)
    return np.minimum(m, n_steps - 1), ok


def _bs_batch(params: BlackScholesParams, spec: OptionSpec, config: SimConfig,
              moll: MollifierConfig, batch_index: int, n: int, salt: int = 0):
    """Per-path contribution arrays {order: contributions} for one batch."""
    order = config.order
    lam, M = config.lam, config.n_steps
    dt = spec.expiry / M
    r, y = params.r, params.y
    seed = config.seed

    g_clock = _substream(seed, batch_index, _MAIN_CLOCK, salt)
    g_bm = _substream(seed, batch_index, _MAIN_BM, salt)

    waits = g_clock.standard_exponential((n, 4)) / lam
    z = g_bm.standard_normal((n, 4))
    nodes, valid = _snap_chain(waits, dt, M)

    legs = min(order, 4)
    s_states, x_args, c_rates, w_chain = [], [], [], []
    s_prev = np.full(n, spec.spot, dtype=float)
    m_prev = np.zeros(n, dtype=np.int64)
    for j in range(legs):
        s_j = bs_transition(params, s_prev, (nodes[j] - m_prev) * dt, z[:, j])
        t_j = nodes[j] * dt
        x_j = payoff(spec, s_j)[0] - bs_price(params, spec, t_j, s_j)
        s_states.append(s_j)
        x_args.append(x_j)
        c_rates.append(premium_rate(spec, r, y, s_j))
        w_chain.append(np.exp(lam * waits[:, j]) / lam)
        s_prev, m_prev = s_j, nodes[j]

    disc = [np.exp(-r * nodes[j] * dt) for j in range(legs)]
    out = {}
    c1 = np.where(valid[0], disc[0] * w_chain[0] * c_rates[0] * theta_step(x_args[0]), 0.0)
    out[1] = c1
    if order >= 2:
        head = w_chain[0] * c_rates[0] * delta_gauss(x_args[0], moll.h0)
        c2 = np.where(valid[1],
                      disc[1] * head * w_chain[1] * c_rates[1] * theta_step(x_args[1]), 0.0)
        out[2] = -c2

    if order >= 3:
        # offspring spawned at the first jump: independent copies of the
        # state, each run to its own next interaction
        f_theta, branch_info = [], []
        n_off = 3 if order >= 4 else 2
        for p in range(n_off):
            g_p = _substream(seed, batch_index, _OFFSPRING[p], salt)
            wait_b = g_p.standard_exponential(n) / lam
            mb, okb = _snap_single(nodes[0], wait_b, dt, M, valid[0])
            sb = bs_transition(params, s_states[0], (mb - nodes[0]) * dt,
                               g_p.standard_normal(n))
            xb = payoff(spec, sb)[0] - bs_price(params, spec, mb * dt, sb)
            fb = np.where(okb,
                          np.exp(-r * (mb - nodes[0]) * dt)
                          * (np.exp(lam * wait_b) / lam)
                          * premium_rate(spec, r, y, sb) * theta_step(xb), 0.0)
            f_theta.append(fb)
            branch_info.append((g_p, wait_b, mb, okb, sb, xb))

        chain3 = np.where(valid[2],
                          disc[2] * w_chain[0] * c_rates[0] * delta_gauss(x_args[0], moll.h0)
                          * w_chain[1] * c_rates[1] * delta_gauss(x_args[1], moll.h0)
                          * w_chain[2] * c_rates[2] * theta_step(x_args[2]), 0.0)
        branch3 = np.where(valid[0],
                           0.5 * disc[0] * w_chain[0] * c_rates[0]
                           * delta_prime_gauss(x_args[0], moll.h1)
                           * f_theta[0] * f_theta[1], 0.0)
        out[3] = chain3 + branch3

    if order >= 4:
        # extend the second offspring by one more jump: its delta-theta chain
        # estimates the order-2 value at the branch point
        g_p, wait_b, mb, okb, sb, xb = branch_info[1]
        wait_c = g_p.standard_exponential(n) / lam
        mc, okc = _snap_single(mb, wait_c, dt, M, okb)
        sc = bs_transition(params, sb, (mc - mb) * dt, g_p.standard_normal(n))
        xc = payoff(spec, sc)[0] - bs_price(params, spec, mc * dt, sc)
        f_chain = np.where(okc,
                           np.exp(-r * (mc - nodes[0]) * dt)
                           * (np.exp(lam * wait_b) / lam) * premium_rate(spec, r, y, sb)
                           * delta_gauss(xb, moll.h0)
                           * (np.exp(lam * wait_c) / lam) * premium_rate(spec, r, y, sc)
                           * theta_step(xc), 0.0)

        f_second = []
        for p in range(2):
            g_d = _substream(seed, batch_index, _SECOND_OFFSPRING[p], salt)
            wait_d = g_d.standard_exponential(n) / lam
            md, okd = _snap_single(nodes[1], wait_d, dt, M, valid[1])
            sd = bs_transition(params, s_states[1], (md - nodes[1]) * dt,
                               g_d.standard_normal(n))
            xd = payoff(spec, sd)[0] - bs_price(params, spec, md * dt, sd)
            f_second.append(np.where(okd,
                                     np.exp(-r * (md - nodes[1]) * dt)
                                     * (np.exp(lam * wait_d) / lam)
                                     * premium_rate(spec, r, y, sd) * theta_step(xd), 0.0))

        triple = np.where(valid[0],
                          (1.0 / 6.0) * disc[0] * w_chain[0] * c_rates[0]
                          * delta_second_gauss(x_args[0], moll.h2)
                          * f_theta[0] * f_theta[1] * f_theta[2], 0.0)
        mixed = np.where(valid[0],
                         disc[0] * w_chain[0] * c_rates[0]
                         * delta_prime_gauss(x_args[0], moll.h1)
                         * f_theta[0] * f_chain, 0.0)
        chain4 = np.where(valid[3],
                          disc[3] * w_chain[0] * c_rates[0] * delta_gauss(x_args[0], moll.h0)
                          * w_chain[1] * c_rates[1] * delta_gauss(x_args[1], moll.h0)
                          * w_chain[2] * c_rates[2] * delta_gauss(x_args[2], moll.h0)
                          * w_chain[3] * c_rates[3] * theta_step(x_args[3]), 0.0)
        late_branch = np.where(valid[1],
                               0.5 * disc[1] * w_chain[0] * c_rates[0]
                               * delta_gauss(x_args[0], moll.h0)
                               * w_chain[1] * c_rates[1]
                               * delta_prime_gauss(x_args[1], moll.h1)
                               * f_second[0] * f_second[1], 0.0)
        out[4] = -(triple + mixed + chain4 + late_branch)
    return out


def _sorted_sweep(params, dt, s, v, horizon, rng, record_steps=None):
    """Euler-evolve (s, v) in place for per-path step counts `horizon`.

    The caller must have sorted the paths by horizon descending, so the
    active set at relative step q is the contiguous slice [:k_q] and no
    fancy indexing is needed.  record_steps maps an absolute step index to
    (slot, idx) recording requests handled right after that step's update.
    """
    if len(horizon) == 0 or horizon[0] <= 0:
        return
    m_max = int(horizon[0])
    # active count at step q: paths with horizon >= q (horizon descending)
    counts = np.searchsorted(-horizon, -np.arange(1, m_max + 1), side="right")
    drift = (params.r - params.y) * dt
    xi_dt, theta, eta, rho = params.xi * dt, params.theta, params.eta, params.rho
    rho_c = math.sqrt(1.0 - rho * rho)
    n = len(s)
    z1_buf = np.empty(n)
    z2_buf = np.empty(n)
    v_plus = np.empty(n)
    sq_vdt = np.empty(n)
    scratch = np.empty(n)
    for q in range(1, m_max + 1):
        k = int(counts[q - 1])
        if k == 0:
            break
        z1, z2 = z1_buf[:k], z2_buf[:k]
        rng.standard_normal(out=z1)
        rng.standard_normal(out=z2)
        vp, sv, tmp = v_plus[:k], sq_vdt[:k], scratch[:k]
        np.maximum(v[:k], 0.0, out=vp)
        np.multiply(vp, dt, out=sv)
        np.sqrt(sv, out=sv)
        # variance first: dv = xi (theta - v+) dt + eta sqrt(v+ dt) (rho z1 + rho_c z2)
        np.multiply(z2, rho_c, out=z2)
        z2 += rho * z1
        z2 *= sv
        z2 *= eta
        v[:k] += z2
        np.subtract(theta, vp, out=tmp)
        tmp *= xi_dt
        v[:k] += tmp
        # spot: s *= exp(drift - v+/2 dt + sqrt(v+ dt) z1)
        z1 *= sv
        z1 += drift
        vp *= -0.5 * dt
        z1 += vp
        np.exp(z1, out=z1)
        s[:k] *= z1
        if record_steps is not None:
            for slot, idx in record_steps.get(q, ()):
                slot[0][idx] = s[idx]
                slot[1][idx] = v[idx]


def _heston_batch(params: HestonParams, spec: OptionSpec, config: SimConfig,
                  moll: MollifierConfig, batch_index: int, n: int, salt: int = 0):
    """Per-path contributions for a Heston batch (orders up to 3)."""
    order = config.order
    lam, M = config.lam, config.n_steps
    dt = spec.expiry / M
    r, y = params.r, params.y
    seed = config.seed

    g_clock = _substream(seed, batch_index, _MAIN_CLOCK, salt)
    g_bm = _substream(seed, batch_index, _MAIN_BM, salt)

    waits = g_clock.standard_exponential((n, 3)) / lam
    nodes, valid = _snap_chain(waits, dt, M)

    legs = min(order, 3)
    n_off = 2 if order >= 3 else 0
    off_wait, off_node, off_ok, off_g = [], [], [], []
    for p in range(n_off):
        g_p = _substream(seed, batch_index, _OFFSPRING[p], salt)
        off_g.append(g_p)
        wait_b = g_p.standard_exponential(n) / lam
        mb, okb = _snap_single(nodes[0], wait_b, dt, M, valid[0])
        off_wait.append(wait_b)
        off_node.append(mb)
        off_ok.append(okb)

    # paths evolve only while a later recording still needs them; sorting by
    # that horizon makes the active set a contiguous slice
    stop = np.zeros(n, dtype=np.int64)
    for j in range(legs):
        stop = np.where(valid[j], nodes[j], stop)
    perm = np.argsort(-stop, kind="stable")
    inv_perm = np.empty(n, dtype=np.int64)
    inv_perm[perm] = np.arange(n)

    p_nodes = nodes[:, perm]
    p_valid = valid[:, perm]
    s = np.full(n, spec.spot, dtype=float)
    v = np.full(n, params.v0, dtype=float)
    s_rec = np.zeros((legs, n))
    v_rec = np.zeros((legs, n))
    record_steps = {}
    for j in range(legs):
        idx_valid = np.flatnonzero(p_valid[j])
        for step, grp in _group_by_value(p_nodes[j], idx_valid):
            record_steps.setdefault(step, []).append(((s_rec[j], v_rec[j]), grp))
    _sorted_sweep(params, dt, s, v, stop[perm], g_bm, record_steps)

    # offspring: identical copies of the first-jump state, evolved by their
    # own streams in a birth-aligned second sweep
    s_off, v_off = [], []
    for p in range(n_off):
        steps_p = np.where(off_ok[p][perm], off_node[p][perm] - p_nodes[0], 0)
        perm_b = np.argsort(-steps_p, kind="stable")
        sb = s_rec[0][perm_b].copy()
        vb = v_rec[0][perm_b].copy()
        _sorted_sweep(params, dt, sb, vb, steps_p[perm_b], off_g[p])
        undo = np.empty(n, dtype=np.int64)
        undo[perm_b] = np.arange(n)
        s_off.append(sb[undo])
        v_off.append(vb[undo])

    # single grouped evaluation of the European value at every jump state
    eval_t, eval_s, eval_v, eval_slot = [], [], [], []
    slots = []
    for j in range(legs):
        slots.append((p_nodes[j], s_rec[j], v_rec[j], np.flatnonzero(p_valid[j])))
    for p in range(n_off):
        slots.append((off_node[p][perm], s_off[p], v_off[p],
                      np.flatnonzero(off_ok[p][perm])))
    v0_vals = [np.zeros(n) for _ in slots]
    for i, (node_arr, s_arr, v_arr, idx) in enumerate(slots):
        if idx.size:
            eval_t.append(node_arr[idx] * dt)
            eval_s.append(s_arr[idx])
            eval_v.append(v_arr[idx])
            eval_slot.append((i, idx))
    if eval_t:
        all_vals = heston_value(params, spec, np.concatenate(eval_t),
                                np.concatenate(eval_s), np.concatenate(eval_v))
        pos = 0
        for i, idx in eval_slot:
            v0_vals[i][idx] = all_vals[pos: pos + idx.size]
            pos += idx.size

    x_args, c_rates, w_chain, disc = [], [], [], []
    p_waits = waits[perm]
    for j in range(legs):
        x_args.append(payoff(spec, s_rec[j])[0] - v0_vals[j])
        c_rates.append(premium_rate(spec, r, y, s_rec[j]))
        w_chain.append(np.exp(lam * p_waits[:, j]) / lam)
        disc.append(np.exp(-r * p_nodes[j] * dt))
    valid = p_valid
    nodes = p_nodes

    out = {}
    out[1] = np.where(valid[0], disc[0] * w_chain[0] * c_rates[0] * theta_step(x_args[0]), 0.0)
    if order >= 2:
        out[2] = -np.where(valid[1],
                           disc[1] * w_chain[0] * c_rates[0] * delta_gauss(x_args[0], moll.h0)
                           * w_chain[1] * c_rates[1] * theta_step(x_args[1]), 0.0)
    if order >= 3:
        f_theta = []
        for p in range(n_off):
            po_node = off_node[p][perm]
            po_ok = off_ok[p][perm]
            po_wait = off_wait[p][perm]
            xb = payoff(spec, s_off[p])[0] - v0_vals[legs + p]
            f_theta.append(np.where(po_ok,
                                    np.exp(-r * (po_node - nodes[0]) * dt)
                                    * (np.exp(lam * po_wait) / lam)
                                    * premium_rate(spec, r, y, s_off[p])
                                    * theta_step(xb), 0.0))
        chain3 = np.where(valid[2],
                          disc[2] * w_chain[0] * c_rates[0] * delta_gauss(x_args[0], moll.h0)
                          * w_chain[1] * c_rates[1] * delta_gauss(x_args[1], moll.h0)
                          * w_chain[2] * c_rates[2] * theta_step(x_args[2]), 0.0)
        branch3 = np.where(valid[0],
                           0.5 * disc[0] * w_chain[0] * c_rates[0]
                           * delta_prime_gauss(x_args[0], moll.h1)
                           * f_theta[0] * f_theta[1], 0.0)
        out[3] = chain3 + branch3
    return {k: c[inv_perm] for k, c in out.items()}


def _group_by_value(values, idx):
    """Yield (value, sub-index array) groups of values[idx], idx preserved."""
    if idx.size == 0:
        return
    order = np.argsort(values[idx], kind="stable")
    idx = idx[order]
    vals = values[idx]
    starts = np.flatnonzero(np.r_[True, np.diff(vals) > 0])
    for lo, hi in zip(starts, np.r_[starts[1:], len(idx)]):
        yield int(vals[lo]), idx[lo:hi]


def _batch_contributions(model, spec, config, moll, batch_index, n, salt=0):
    if isinstance(model, HestonParams):
        return _heston_batch(model, spec, config, moll, batch_index, n, salt)
    return _bs_batch(model, spec, config, moll, batch_index, n, salt)


def _batch_moments(args):
    """Worker entry: reduce one batch to (sums, sumsq, cum_sumsq) rows."""
    model, spec, config, moll, batch_index, n, salt = args
    contrib = _batch_contributions(model, spec, config, moll, batch_index, n, salt)
    orders = sorted(contrib)
    sums = np.array([contrib[k].sum() for k in orders])
    sumsq = np.array([np.square(contrib[k]).sum() for k in orders])
    running = np.zeros(n)
    cum_sumsq = np.empty(len(orders))
    for i, k in enumerate(orders):
        running = running + contrib[k]
        cum_sumsq[i] = np.square(running).sum()
    return sums, sumsq, cum_sumsq


def _batch_layout(n_paths: int, batch_size: int):
    full, rem = divmod(n_paths, batch_size)
    sizes = [batch_size] * full + ([rem] if rem else [])
    return list(enumerate(sizes))


def _run_batches(model, spec, config, moll, salt):
    layout = _batch_layout(config.n_paths, config.batch_size)
    tasks = [(model, spec, config, moll, i, size, salt) for i, size in layout]
    k = config.order if not isinstance(model, HestonParams) else min(config.order, 3)
    sums = np.zeros(k)
    sumsq = np.zeros(k)
    cum_sumsq = np.zeros(k)
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_batch_moments, tasks, chunksize=1))
    else:
        results = [_batch_moments(t) for t in tasks]
    for s_i, sq_i, cq_i in results:  # fixed batch order keeps sums deterministic
        sums += s_i
        sumsq += sq_i
        cum_sumsq += cq_i
    return sums, sumsq, cum_sumsq


def _stderr(total, total_sq, n):
    if n < 2:
        return 0.0
    var = max(total_sq / n - (total / n) ** 2, 0.0) * n / (n - 1)
    return math.sqrt(var / n)


def price_american(model, spec: OptionSpec, config: SimConfig) -> ExpansionResult:
    """Expansion estimate of the American price at unit expansion weight.

    Order 0 is the analytic European price; orders >= 1 come from the
    particle estimators, all orders sharing one seeded path family (common
    random numbers) unless config.independent_orders is set.
    """
    if isinstance(model, HestonParams) and config.order > 3:
        raise ValueError("order 4 is only supported for the Black-Scholes model")
    pricer = EuropeanPricer(model, spec)
    base = pricer.price0()
    if config.order == 0:
        return ExpansionResult((base,), (0.0,), (base,), (0.0,), config.n_paths)

    moll = config.mollifier or MollifierConfig.for_strike(spec.strike)
    n = config.n_paths
    if config.independent_orders:
        means, errs, cum_vars = [], [], []
        for k in range(1, config.order + 1):
            cfg_k = replace(config, order=k)
            sums, sumsq, _ = _run_batches(model, spec, cfg_k, moll, salt=k)
            means.append(sums[-1] / n)
            errs.append(_stderr(sums[-1], sumsq[-1], n))
            cum_vars.append(errs[-1] ** 2)
        cum_errs = np.sqrt(np.cumsum(cum_vars))
    else:
        sums, sumsq, cum_sumsq = _run_batches(model, spec, config, moll, salt=0)
        means = list(sums / n)
        errs = [_stderr(sums[i], sumsq[i], n) for i in range(len(means))]
        cum_errs = [_stderr(sums[: i + 1].sum(), cum_sumsq[i], n) for i in range(len(means))]

    order_means = (base, *means)
    order_stderrs = (0.0, *errs)
    cumulative = tuple(np.cumsum(order_means))
    cumulative_stderrs = (0.0, *cum_errs)
    return ExpansionResult(order_means, order_stderrs, cumulative,
                           cumulative_stderrs, n)


def _single_order(model, spec, config: SimConfig, k: int):
    if config.order < k:
        raise ValueError(f"config.order must be >= {k}")
    result = price_american(model, spec, replace(config, order=k))
    return result.order_means[k], result.order_stderrs[k]


def estimate_order1(model, spec: OptionSpec, config: SimConfig):
    """Mean and standard error of the first-order premium term."""
    return _single_order(model, spec, config, 1)


def estimate_order2(model, spec: OptionSpec, config: SimConfig):
    """Mean and standard error of the (negative) second-order term."""
    return _single_order(model, spec, config, 2)


def estimate_order3(model, spec: OptionSpec, config: SimConfig):
    """Mean and standard error of the third-order term (chain plus branch)."""
    return _single_order(model, spec, config, 3)


def estimate_order4(model, spec: OptionSpec, config: SimConfig):
    """Mean and standard error of the fourth-order term (BS model only)."""
    if isinstance(model, HestonParams):
        raise ValueError("order 4 is only supported for the Black-Scholes model")
    return _single_order(model, spec, config, 4)
