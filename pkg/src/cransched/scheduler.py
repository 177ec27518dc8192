"""Two-step interference-aware scheduler: user grouping, then channel matching.

Each frame the BBU pool

1. predicts every user's utility from its recent average rate,
2. greedily packs high-utility users into groups whose members are
   pairwise compatible (different RRHs and expected SINR loss within
   ``gamma``),
3. splits the largest groups while there are fewer groups than channels,
4. evaluates every (group, channel) pair on the current fading and assigns
   channels with a maximum-weight matcher.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._jit import USE_NUMBA, njit
from .channel import compatibility_matrix, expected_snr_rates
from .errors import ContractError
from .matching import MATCHERS, greedy_kernel, solve_max_kernel
from .traffic import _front_delay_sum


class RateHistory:
    """Sliding window of the last ``window`` rates of every user.

    With ``mode="achieved"`` every frame is recorded, unscheduled frames as
    0. With ``mode="scheduled"`` only frames in which the user transmitted
    enter its window.
    """

    def __init__(self, n_users: int, window: int, initial=None, mode: str = "achieved"):
        if mode not in ("achieved", "scheduled"):
            raise ValueError(f"unknown rate history mode {mode!r}")
        self.window = int(window)
        self.mode = mode
        self.values = np.zeros((n_users, self.window))
        self.pos = np.zeros(n_users, dtype=np.int64)
        self.count = np.zeros(n_users, dtype=np.int64)
        if initial is not None:
            self.values[:] = np.asarray(initial, dtype=float)[:, None]
            self.count[:] = self.window

    def push(self, rates: np.ndarray, scheduled: np.ndarray | None = None):
        if self.mode == "achieved" or scheduled is None:
            scheduled = np.ones(self.values.shape[0], dtype=np.bool_)
        _push_window(self.values, self.pos, self.count, np.asarray(rates, dtype=float), scheduled)

    def estimate(self) -> np.ndarray:
        """Mean of each user's window; 0 for an empty window."""
        return _window_mean(self.values, self.count)


@njit
def _push_window(values, pos, count, rates, mask):
    m = values.shape[1]
    for i in range(values.shape[0]):
        if mask[i]:
            values[i, pos[i]] = rates[i]
            pos[i] = (pos[i] + 1) % m
            if count[i] < m:
                count[i] += 1


@njit
def _window_mean(values, count):
    n, m = values.shape
    out = np.zeros(n)
    for i in range(n):
        if count[i] > 0:
            s = 0.0
            for a in range(m):
                s += values[i, a]
            out[i] = s / count[i]
    return out


def rate_estimate(history: RateHistory) -> np.ndarray:
    return history.estimate()


def utility_estimate(buffers, rate_estimates, frame: int, packet_size: float) -> np.ndarray:
    """Utility each user would collect if it achieved its estimated rate."""
    return buffers.utilities(rate_estimates, frame, packet_size)


# ---------------------------------------------------------------------------
# grouping


@dataclass(frozen=True)
class UserGroups:
    groups: tuple

    def __len__(self):
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)

    def __getitem__(self, k):
        return self.groups[k]

    def to_csr(self):
        members = np.fromiter((u for g in self.groups for u in g), dtype=np.int64)
        offsets = np.zeros(len(self.groups) + 1, dtype=np.int64)
        np.cumsum([len(g) for g in self.groups], out=offsets[1:])
        return members, offsets


@njit
def _group_loops(u_hat, compat):
    n = u_hat.shape[0]
    V = u_hat.copy()
    group = np.full(n, -1, dtype=np.int64)
    order = np.empty(n, dtype=np.int64)
    pos = 0
    k = 0
    while True:
        remaining = False
        for i in range(n):
            if V[i] >= 0:
                remaining = True
                break
        if not remaining:
            break
        Vs = V.copy()
        while True:
            best = -np.inf
            i = -1
            for j in range(n):
                if Vs[j] > best:
                    best = Vs[j]
                    i = j
            if best < 0:
                break
            group[i] = k
            order[pos] = i
            pos += 1
            V[i] = -1.0
            Vs[i] = -1.0
            for j in range(n):
                if not compat[i, j]:
                    Vs[j] = -1.0
        k += 1
    return order, group, k


def _group_numpy(u_hat, compat):
    V = np.array(u_hat, dtype=float)
    n = V.shape[0]
    group = np.full(n, -1, dtype=np.int64)
    order = []
    k = 0
    while V.max(initial=-1.0) >= 0:
        Vs = V.copy()
        while Vs.max() >= 0:
            i = int(np.argmax(Vs))
            group[i] = k
            order.append(i)
            V[i] = -1.0
            Vs[i] = -1.0
            Vs[~compat[i]] = -1.0
        k += 1
    return np.array(order, dtype=np.int64), group, k


group_kernel = _group_loops if USE_NUMBA else _group_numpy


def _groups_from_kernel(order, group, k) -> UserGroups:
    buckets = [[] for _ in range(k)]
    for u in order:
        buckets[group[u]].append(int(u))
    return UserGroups(tuple(tuple(b) for b in buckets))


def group_users(utility_estimates, topology, gamma: float, params, compat=None) -> UserGroups:
    """Partition users into co-channel groups, highest utility first.

    ``compat`` may be passed to reuse a precomputed compatibility matrix;
    it only depends on the drop and ``gamma``, not on the frame.
    """
    u_hat = np.asarray(utility_estimates, dtype=float)
    if np.any(u_hat < 0):
        raise ContractError("utility estimates must be non-negative")
    if compat is None:
        compat = compatibility_matrix(topology, params, gamma)
    return _groups_from_kernel(*group_kernel(u_hat, compat))


def split_groups(groups: UserGroups, utility_estimates, n_channels: int) -> UserGroups:
    """Halve the largest groups until there is one group per channel.

    The ``size // 2`` lowest-utility members of the largest group (first such
    group on ties) leave to form a new group appended at the end. Stops early
    when every group is a singleton.
    """
    u_hat = np.asarray(utility_estimates, dtype=float)
    out = [list(g) for g in groups]
    while len(out) < n_channels:
        sizes = [len(g) for g in out]
        big = int(np.argmax(sizes))
        if sizes[big] < 2:
            break
        g = out[big]
        # smallest utility first, higher user index first among equals
        ranked = sorted(g, key=lambda u: (u_hat[u], -u))
        leaving = set(ranked[: len(g) // 2])
        out[big] = [u for u in g if u not in leaving]
        out.append([u for u in g if u in leaving])
    return UserGroups(tuple(tuple(g) for g in out))


# ---------------------------------------------------------------------------
# utility matrix


@njit
def _utility_matrix_loops(members, offsets, n_channels, z, power, assoc, noise, tb,
                          run_frame, run_count, head, tail, lengths, packet_size, frame, target):
    n_groups = offsets.shape[0] - 1
    W = np.zeros((n_groups, n_channels))
    for g in range(n_groups):
        lo = offsets[g]
        hi = offsets[g + 1]
        for j in range(n_channels):
            total = 0.0
            for a in range(lo, hi):
                i = members[a]
                if lengths[i] == 0:
                    continue
                r = assoc[i]
                interf = 0.0
                for b in range(lo, hi):
                    k = members[b]
                    if k != i:
                        interf += power[k] * z[k, r, j]
                rate = tb * math.log2(1.0 + power[i] * z[i, r, j] / (noise + interf))
                mu = min(lengths[i], np.int64(np.floor(rate / packet_size)))
                if mu > 0:
                    total += _front_delay_sum(run_frame, run_count, head, tail, i, mu, frame) / target[i]
            W[g, j] = total
    return W


def _front_cumsum(buffers, user, k, frame):
    # cumulative delay of the first 0..k queued packets
    h, t = buffers.head[user], buffers.tail[user]
    delays = frame - buffers.run_frame[user, h:t] + 1
    expanded = np.repeat(delays, buffers.run_count[user, h:t])[:k]
    return np.concatenate([[0.0], np.cumsum(expanded, dtype=float)])


def _utility_matrix_numpy(groups, n_channels, z, power, assoc, buffers, params, frame):
    W = np.zeros((len(groups), n_channels))
    noise, tb, ip = params.noise_power, params.frame_bandwidth, params.packet_size
    for g, members in enumerate(groups):
        m = np.asarray(members)
        # rx[k, i, j]: power of member k received at member i's RRH on channel j
        rx = power[m][:, None, None] * z[m][:, assoc[m], :]
        signal = np.einsum("iij->ij", rx)
        interf = rx.sum(axis=0) - signal
        rates = tb * np.log2(1.0 + signal / (noise + interf))
        mu = np.minimum(buffers.lengths[m][:, None], np.floor(rates / ip).astype(np.int64))
        for a, i in enumerate(m):
            cum = _front_cumsum(buffers, i, int(mu[a].max()), frame)
            W[g] += cum[mu[a]] / buffers.target_delay[i]
    return W


def build_utility_matrix(groups: UserGroups, n_channels: int, fading, buffers, topology, params,
                         frame: int, power=None) -> np.ndarray:
    """``W[g, j]``: realised utility of group ``g`` if it alone occupies channel ``j``."""
    if power is None:
        power = topology.tx_power
    if not USE_NUMBA:
        return _utility_matrix_numpy(groups, n_channels, fading, power, topology.association,
                                     buffers, params, frame)
    members, offsets = groups.to_csr()
    return _utility_matrix_loops(
        members, offsets, n_channels, fading, power, topology.association,
        params.noise_power, params.frame_bandwidth,
        buffers.run_frame, buffers.run_count, buffers.head, buffers.tail, buffers.lengths,
        params.packet_size, frame, buffers.target_delay,
    )


@njit
def _split_arrays(grp, size, ng, u_hat, n_channels):
    # in-place version of split_groups on a (group, slot) member table
    while ng < n_channels:
        big = 0
        for g in range(1, ng):
            if size[g] > size[big]:
                big = g
        s = size[big]
        if s < 2:
            break
        leave = np.zeros(s, dtype=np.bool_)
        for _ in range(s // 2):
            pick = -1
            for a in range(s):
                if leave[a]:
                    continue
                if pick < 0:
                    pick = a
                    continue
                ua = u_hat[grp[big, a]]
                up = u_hat[grp[big, pick]]
                if ua < up or (ua == up and grp[big, a] > grp[big, pick]):
                    pick = a
            leave[pick] = True
        keep = 0
        moved = 0
        for a in range(s):
            u = grp[big, a]
            if leave[a]:
                grp[ng, moved] = u
                moved += 1
            else:
                grp[big, keep] = u
                keep += 1
        for a in range(keep, s):
            grp[big, a] = -1
        size[big] = keep
        size[ng] = moved
        ng += 1
    return ng


@njit
def fused_schedule_kernel(u_hat, compat, n_channels, z, power, assoc, noise, tb,
                          run_frame, run_count, head, tail, lengths, packet_size, frame,
                          target, greedy):
    """Grouping, splitting, utility matrix and matching in one call.

    Returns the channel of every user, the group holding every channel, the
    group member table and the utility matrix.
    """
    n = u_hat.shape[0]
    order, group, k = _group_loops(u_hat, compat)
    grp = np.full((max(n, n_channels), n), -1, dtype=np.int64)
    size = np.zeros(max(n, n_channels), dtype=np.int64)
    for a in range(n):
        u = order[a]
        g = group[u]
        grp[g, size[g]] = u
        size[g] += 1
    ng = _split_arrays(grp, size, k, u_hat, n_channels)
    members = np.empty(n, dtype=np.int64)
    offsets = np.zeros(ng + 1, dtype=np.int64)
    pos = 0
    for g in range(ng):
        for a in range(size[g]):
            members[pos] = grp[g, a]
            pos += 1
        offsets[g + 1] = pos
    W = _utility_matrix_loops(members, offsets, n_channels, z, power, assoc, noise, tb,
                              run_frame, run_count, head, tail, lengths, packet_size, frame,
                              target)
    if greedy:
        col_of_group = greedy_kernel(W)
    else:
        col_of_group = solve_max_kernel(W)
    ch = np.full(n, -1, dtype=np.int64)
    group_of_channel = np.full(n_channels, -1, dtype=np.int64)
    for g in range(ng):
        j = col_of_group[g]
        if j >= 0:
            group_of_channel[j] = g
            for a in range(offsets[g], offsets[g + 1]):
                ch[members[a]] = j
    return ch, group_of_channel, members, offsets, W


# ---------------------------------------------------------------------------
# schedules


@dataclass
class Schedule:
    """Channel occupancy of one frame.

    ``channel_of_user[i]`` is the channel of user ``i`` or ``-1``;
    ``power[i]`` its transmit power this frame.
    """

    channel_of_user: np.ndarray
    power: np.ndarray
    n_channels: int
    groups: UserGroups | None = None
    group_of_channel: np.ndarray | None = None
    utility_matrix: np.ndarray | None = field(default=None, repr=False)

    def users_on(self, channel: int) -> np.ndarray:
        return np.flatnonzero(self.channel_of_user == channel)

    @property
    def xi(self) -> np.ndarray:
        """User-by-channel indicator matrix."""
        n = self.channel_of_user.shape[0]
        out = np.zeros((n, self.n_channels), dtype=bool)
        idx = np.flatnonzero(self.channel_of_user >= 0)
        out[idx, self.channel_of_user[idx]] = True
        return out

    @property
    def eta(self) -> np.ndarray:
        """Group-by-channel indicator matrix (proposed scheduler only)."""
        out = np.zeros((len(self.groups), self.n_channels), dtype=bool)
        for j, g in enumerate(self.group_of_channel):
            if g >= 0:
                out[g, j] = True
        return out

    @property
    def n_scheduled(self) -> int:
        return int(np.count_nonzero(self.channel_of_user >= 0))


def check_schedule(schedule: Schedule, topology, compat=None):
    """Raise ``ContractError`` unless the schedule is structurally valid.

    Checks one channel per user (by construction of ``channel_of_user``),
    distinct RRHs per channel, compatibility of co-channel users when
    ``compat`` is given, and one channel per group.
    """
    ch = schedule.channel_of_user
    if np.any((ch < -1) | (ch >= schedule.n_channels)):
        raise ContractError("channel index out of range")
    for j in range(schedule.n_channels):
        users = schedule.users_on(j)
        cells = topology.association[users]
        if len(np.unique(cells)) != len(cells):
            raise ContractError(f"channel {j} carries two users of the same RRH")
        if compat is not None and len(users) > 1:
            sub = compat[np.ix_(users, users)]
            if not np.all(sub | np.eye(len(users), dtype=bool)):
                raise ContractError(f"channel {j} carries an incompatible pair")
    if schedule.group_of_channel is not None:
        gs = schedule.group_of_channel[schedule.group_of_channel >= 0]
        if len(np.unique(gs)) != len(gs):
            raise ContractError("a group holds more than one channel")
        for j, g in enumerate(schedule.group_of_channel):
            if g >= 0 and not set(schedule.users_on(j)) <= set(schedule.groups[g]):
                raise ContractError(f"channel {j} users are not a subset of group {g}")


def schedule_frame(buffers, history: RateHistory, fading, topology, params, frame: int,
                   compat=None, matcher: str = "hungarian", fused: bool | None = None) -> Schedule:
    """Run grouping and matching for one frame.

    ``fused`` selects the single-kernel path (default when numba is active);
    both paths produce identical schedules.
    """
    r_hat = history.estimate()
    u_hat = buffers.utilities(r_hat, frame, params.packet_size)
    if compat is None:
        compat = compatibility_matrix(topology, params)
    if fused is None:
        fused = USE_NUMBA
    if fused:
        ch, group_of_channel, members, offsets, W = fused_schedule_kernel(
            u_hat, compat, params.n_channels, fading, topology.tx_power, topology.association,
            params.noise_power, params.frame_bandwidth,
            buffers.run_frame, buffers.run_count, buffers.head, buffers.tail, buffers.lengths,
            params.packet_size, frame, buffers.target_delay, matcher == "greedy",
        )
        groups = _LazyGroups(members, offsets)
        return Schedule(ch, topology.tx_power, params.n_channels, groups, group_of_channel, W)
    groups = _groups_from_kernel(*group_kernel(u_hat, compat))
    groups = split_groups(groups, u_hat, params.n_channels)
    W = build_utility_matrix(groups, params.n_channels, fading, buffers, topology, params, frame)
    col_of_group = MATCHERS[matcher](W)
    ch = np.full(topology.n_users, -1, dtype=np.int64)
    group_of_channel = np.full(params.n_channels, -1, dtype=np.int64)
    for g, j in enumerate(col_of_group):
        if j >= 0:
            group_of_channel[j] = g
            ch[list(groups[g])] = j
    return Schedule(ch, topology.tx_power, params.n_channels, groups, group_of_channel, W)


class _LazyGroups:
    # UserGroups view over the fused kernel's CSR output, materialised on demand
    __slots__ = ("_members", "_offsets", "_groups")

    def __init__(self, members, offsets):
        self._members = members
        self._offsets = offsets
        self._groups = None

    def _materialise(self):
        if self._groups is None:
            m, o = self._members, self._offsets
            self._groups = UserGroups(tuple(tuple(int(u) for u in m[o[g]:o[g + 1]])
                                            for g in range(len(o) - 1)))
        return self._groups

    def __len__(self):
        return len(self._offsets) - 1

    def __iter__(self):
        return iter(self._materialise())

    def __getitem__(self, k):
        return self._materialise()[k]

    @property
    def groups(self):
        return self._materialise().groups


def initial_history(topology, params, mode: str = "achieved") -> RateHistory:
    """Window pre-filled with each user's interference-free ergodic rate."""
    return RateHistory(topology.n_users, params.estimator_window,
                       initial=expected_snr_rates(topology, params), mode=mode)
