"""Rayleigh block fading, SINR rates and the expected-SINR reuse test.

Under Rayleigh fading every received power ``z`` is exponential with mean
``mu = s ** -4``. Two expectations reduce to the exponential integral:

* ``E{SINR} / E{SNR}`` for one interferer is ``a e^a E1(a)`` with
  ``a = B sigma^2 / (P_k mu_k)``;
* ``E{log2(1 + c Z)}`` for ``Z ~ Exp(1)`` is ``e^{1/c} E1(1/c) / ln 2``.
"""
from __future__ import annotations

import math

import numpy as np

from ._jit import USE_NUMBA, njit
from .errors import ContractError

EULER_GAMMA = 0.57721566490153286061
_EPS = 1e-16
_FPMIN = 1e-300
_MAX_CF_ITER = 10_000


@njit
def _e1_series(x):
    # E1(x) = -gamma - ln x + sum_{k>=1} (-1)^{k+1} x^k / (k k!)
    total = 0.0
    term = 1.0
    k = 1
    while True:
        term *= -x / k
        contrib = -term / k
        total += contrib
        if abs(contrib) < _EPS * abs(total) or k > 200:
            break
        k += 1
    return -EULER_GAMMA - math.log(x) + total


@njit
def _e1_scaled_cf(x):
    # modified Lentz evaluation of e^x E1(x), valid for x > 1
    b = x + 1.0
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_CF_ITER):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h


@njit
def e1_kernel(x):
    if x <= 1.0:
        return _e1_series(x)
    return _e1_scaled_cf(x) * math.exp(-x)


@njit
def e1_scaled_kernel(x):
    """``e^x E1(x)``; finite for every ``x > 0``."""
    if x <= 1.0:
        return math.exp(x) * _e1_series(x)
    return _e1_scaled_cf(x)


def _e1_scaled_numpy(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x <= 1.0
    xs = x[small]
    if xs.size:
        k = np.arange(1, 40, dtype=float)
        logfact = np.cumsum(np.log(k))
        # (-1)^{k+1} x^k / (k k!) summed in a fixed number of terms
        mag = np.exp(np.log(xs)[:, None] * k - np.log(k) - logfact)
        sign = np.where(k % 2 == 1, 1.0, -1.0)
        series = (sign * mag).sum(axis=1)
        out[small] = np.exp(xs) * (-EULER_GAMMA - np.log(xs) + series)
    xl = x[~small]
    if xl.size:
        b = xl + 1.0
        c = np.full_like(xl, 1.0 / _FPMIN)
        d = 1.0 / b
        h = d.copy()
        active = np.ones(xl.shape, dtype=bool)
        for i in range(1, _MAX_CF_ITER):
            an = -float(i * i)
            b = b + 2.0
            d = 1.0 / (an * d + b)
            c = b + an / c
            delta = c * d
            # freeze each entry at the iteration where it converged, like the scalar loop
            h = np.where(active, h * delta, h)
            active &= np.abs(delta - 1.0) >= _EPS
            if not active.any():
                break
        out[~small] = h
    return out


@njit
def _e1_scaled_flat(flat):
    out = np.empty(flat.size)
    for n in range(flat.size):
        out[n] = e1_scaled_kernel(flat[n])
    return out


def _e1_scaled_loops(x):
    x = np.asarray(x, dtype=float)
    return _e1_scaled_flat(x.ravel()).reshape(x.shape)


e1_scaled_array = _e1_scaled_loops if USE_NUMBA else _e1_scaled_numpy


def exp_integral_e1(x: float) -> float:
    """Exponential integral ``E1(x) = int_x^inf e^-t / t dt`` for ``x > 0``."""
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"E1 is only defined here for x > 0, got {x}")
    return float(e1_kernel(x))


def exp_integral_e1_scaled(x: float) -> float:
    """``e^x E1(x)`` without overflow for large ``x``."""
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"E1 is only defined here for x > 0, got {x}")
    return float(e1_scaled_kernel(x))


# ---------------------------------------------------------------------------
# fading and instantaneous rates


def sample_fading(topology, n_channels: int, rng: np.random.Generator) -> np.ndarray:
    """Power gains ``z[user, rrh, channel]`` for one frame.

    Each entry is exponential with mean ``topology.mean_gains[user, rrh]``.
    """
    n_users, n_rrh = topology.mean_gains.shape
    z = rng.standard_exponential((n_users, n_rrh, n_channels))
    z *= topology.mean_gains[:, :, None]
    return z


@njit
def _sinr_rates_loops(channel_of_user, power, z, association, noise, tb):
    n = channel_of_user.shape[0]
    rates = np.zeros(n)
    for i in range(n):
        j = channel_of_user[i]
        if j < 0:
            continue
        r = association[i]
        interf = 0.0
        for k in range(n):
            if k != i and channel_of_user[k] == j:
                interf += power[k] * z[k, r, j]
        rates[i] = tb * math.log2(1.0 + power[i] * z[i, r, j] / (noise + interf))
    return rates


def _sinr_rates_numpy(channel_of_user, power, z, association, noise, tb):
    ch = np.asarray(channel_of_user)
    sched = ch >= 0
    rates = np.zeros(ch.shape[0])
    if not sched.any():
        return rates
    idx = np.flatnonzero(sched)
    cj = ch[idx]
    # rx[k, n]: power of user k received at the RRH of scheduled user idx[n] on its channel
    rx = power[:, None] * z[:, association[idx], cj]
    co = (ch[:, None] == cj[None, :])
    co[idx, np.arange(idx.size)] = False
    interf = (rx * co).sum(axis=0)
    signal = rx[idx, np.arange(idx.size)]
    rates[idx] = tb * np.log2(1.0 + signal / (noise + interf))
    return rates


sinr_rates = _sinr_rates_loops if USE_NUMBA else _sinr_rates_numpy


def realized_rates(schedule, fading: np.ndarray, topology, params) -> np.ndarray:
    """Rate of every user under ``schedule``; zero for unscheduled users."""
    return sinr_rates(
        schedule.channel_of_user,
        schedule.power,
        fading,
        topology.association,
        params.noise_power,
        params.frame_bandwidth,
    )


def instantaneous_rate(user: int, channel: int, schedule, fading, topology, params) -> float:
    """Rate in bits/frame of ``user`` on ``channel`` with every co-channel user interfering."""
    if schedule.channel_of_user[user] != channel:
        raise ContractError(f"user {user} is not scheduled on channel {channel}")
    r = topology.association[user]
    co = np.flatnonzero(schedule.channel_of_user == channel)
    co = co[co != user]
    interf = float(np.sum(schedule.power[co] * fading[co, r, channel]))
    sinr = schedule.power[user] * fading[user, r, channel] / (params.noise_power + interf)
    return params.frame_bandwidth * math.log2(1.0 + sinr)


# ---------------------------------------------------------------------------
# expectations under Rayleigh fading


def expected_sinr_gate(interferer_power: float, cross_gain: float, params) -> float:
    """``E{SINR} / E{SNR}`` when one interferer of mean received power
    ``interferer_power * cross_gain`` shares the channel."""
    if interferer_power <= 0 or cross_gain <= 0 or params.noise_power <= 0:
        raise ValueError("interferer power, cross gain and noise power must be positive")
    a = params.noise_power / (interferer_power * cross_gain)
    return a * exp_integral_e1_scaled(a)


def gate_matrix(topology, params) -> np.ndarray:
    """``G[k, i]``: SINR/SNR ratio at user ``i``'s RRH when ``k`` interferes."""
    cross = topology.mean_gains[:, topology.association]  # [k, i]
    a = params.noise_power / (topology.tx_power[:, None] * cross)
    return a * e1_scaled_array(a)


def compatibility_matrix(topology, params, gamma: float | None = None) -> np.ndarray:
    """Boolean ``C[i, j]``: users ``i`` and ``j`` may share a channel.

    True iff both directed gates reach ``gamma`` and the users are served by
    different RRHs. The diagonal is False.
    """
    if gamma is None:
        gamma = params.interference_threshold
    g = gate_matrix(topology, params)
    ok = (g >= gamma) & (g.T >= gamma)
    assoc = topology.association
    ok &= assoc[:, None] != assoc[None, :]
    np.fill_diagonal(ok, False)
    return ok


def pairwise_constraint_ok(i1: int, i2: int, gamma: float, topology, params) -> bool:
    """Both users keep at least ``gamma`` of their expected SNR when paired."""
    if i1 == i2:
        raise ContractError("pairwise constraint needs two distinct users")
    p = topology.tx_power
    mg = topology.mean_gains
    a1 = topology.association[i1]
    a2 = topology.association[i2]
    g_at_1 = expected_sinr_gate(p[i2], mg[i2, a1], params)
    g_at_2 = expected_sinr_gate(p[i1], mg[i1, a2], params)
    return bool(g_at_1 >= gamma and g_at_2 >= gamma)


def expected_rate_from_snr(mean_snr: float, tb: float = 1.0) -> float:
    """``tb * E{log2(1 + mean_snr * Z)}`` with ``Z ~ Exp(1)``."""
    if mean_snr <= 0:
        raise ValueError("mean SNR must be positive")
    x = 1.0 / mean_snr
    return tb * exp_integral_e1_scaled(x) / math.log(2.0)


def expected_snr_rate(user: int, topology, params, power: float | None = None) -> float:
    """Interference-free ergodic rate of ``user`` in bits/frame."""
    p = topology.tx_power[user] if power is None else power
    if p <= 0:
        raise ValueError("transmit power must be positive")
    mu = topology.mean_gains[user, topology.association[user]]
    return expected_rate_from_snr(p * mu / params.noise_power, params.frame_bandwidth)


def expected_snr_rates(topology, params) -> np.ndarray:
    own = topology.mean_gains[np.arange(topology.n_users), topology.association]
    c = topology.tx_power * own / params.noise_power
    return params.frame_bandwidth * e1_scaled_array(1.0 / c) / math.log(2.0)
