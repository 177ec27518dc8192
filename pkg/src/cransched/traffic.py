"""Packet arrivals, FIFO buffers and convex delay costs.

A packet that arrived in frame ``f`` and is served in frame ``t`` has delay
``t - f + 1`` and costs ``delay / D`` where ``D`` is its owner's target
delay. Buffers are stored run-length encoded: every (user, arrival frame)
pair is one run of identical packets, so a queue never needs more runs
than there are frames.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._jit import njit
from .errors import ContractError


@dataclass(frozen=True)
class Packet:
    arrival_frame: int


def packet_cost(packet: Packet, current_frame: int, target_delay: float) -> float:
    if current_frame < packet.arrival_frame:
        raise ContractError("packet has not arrived yet")
    return (current_frame - packet.arrival_frame + 1) / target_delay


def transmittable_packets(queue_length: int, rate: float, packet_size: float) -> int:
    """``min(l, floor(r / I_p))``."""
    return int(min(queue_length, np.floor(rate / packet_size)))


@njit
def _transmittable(lengths, rates, packet_size):
    n = lengths.shape[0]
    mu = np.empty(n, dtype=np.int64)
    for i in range(n):
        k = np.int64(np.floor(rates[i] / packet_size))
        mu[i] = min(lengths[i], k)
    return mu


@njit
def _front_delay_sum(run_frame, run_count, head, tail, user, mu, frame):
    # sum of delays of the mu oldest packets of one user
    total = 0.0
    left = mu
    r = head[user]
    while left > 0 and r < tail[user]:
        take = min(left, run_count[user, r])
        total += take * (frame - run_frame[user, r] + 1)
        left -= take
        r += 1
    return total


@njit
def _utilities(run_frame, run_count, head, tail, lengths, rates, packet_size, frame, target):
    n = lengths.shape[0]
    out = np.zeros(n)
    for i in range(n):
        mu = min(lengths[i], np.int64(np.floor(rates[i] / packet_size)))
        if mu > 0:
            out[i] = _front_delay_sum(run_frame, run_count, head, tail, i, mu, frame) / target[i]
    return out


@njit
def _utility_table(run_frame, run_count, head, tail, lengths, rates, packet_size, frame, target):
    n, m = rates.shape
    out = np.zeros((n, m))
    for i in range(n):
        if lengths[i] == 0:
            continue
        for j in range(m):
            mu = min(lengths[i], np.int64(np.floor(rates[i, j] / packet_size)))
            if mu > 0:
                out[i, j] = _front_delay_sum(run_frame, run_count, head, tail, i, mu, frame) / target[i]
    return out


@njit
def _dequeue(run_frame, run_count, head, tail, lengths, user, mu, frame, out_delay, out_count):
    # pops mu packets; writes (delay, count) per touched run, returns the number of runs
    left = mu
    n_out = 0
    r = head[user]
    while left > 0:
        c = run_count[user, r]
        take = min(left, c)
        out_delay[n_out] = frame - run_frame[user, r] + 1
        out_count[n_out] = take
        n_out += 1
        left -= take
        if take == c:
            run_count[user, r] = 0
            r += 1
        else:
            run_count[user, r] = c - take
    head[user] = r
    lengths[user] -= mu
    return n_out


@njit
def _serve_all(run_frame, run_count, head, tail, lengths, mu, frame, target,
               delay_sum, n_late):
    # pops mu[i] packets from every user, accumulating delay totals and late counts
    for i in range(lengths.shape[0]):
        left = mu[i]
        r = head[i]
        while left > 0:
            c = run_count[i, r]
            take = min(left, c)
            d = frame - run_frame[i, r] + 1
            delay_sum[i] += take * d
            if d > target[i]:
                n_late[i] += take
            left -= take
            if take == c:
                run_count[i, r] = 0
                r += 1
            else:
                run_count[i, r] = c - take
        head[i] = r
        lengths[i] -= mu[i]


@njit
def _push_counts(run_frame, run_count, head, tail, lengths, arrived, counts, frame):
    # returns -1 on success, else the first user without room for a new run
    cap = run_frame.shape[1]
    n = counts.shape[0]
    for i in range(n):
        if counts[i] > 0 and tail[i] >= cap:
            if not (tail[i] > head[i] and run_frame[i, tail[i] - 1] == frame):
                return i
    for i in range(n):
        c = counts[i]
        if c <= 0:
            continue
        t = tail[i]
        if t > head[i] and run_frame[i, t - 1] == frame:
            run_count[i, t - 1] += c
        else:
            run_frame[i, t] = frame
            run_count[i, t] = c
            tail[i] = t + 1
        lengths[i] += c
        arrived[i] += c
    return -1


@njit
def _late_in_queue(run_frame, run_count, head, tail, frame, target):
    # queued packets whose delay at `frame` already exceeds the target,
    # with the sum of those delays
    n = head.shape[0]
    count = np.zeros(n, dtype=np.int64)
    delay = np.zeros(n)
    for i in range(n):
        for r in range(head[i], tail[i]):
            d = frame - run_frame[i, r] + 1
            if d > target[i]:
                count[i] += run_count[i, r]
                delay[i] += run_count[i, r] * d
            else:
                break
    return count, delay


class PacketBuffers:
    """FIFO packet queues for all users of one replication.

    Parameters
    ----------
    n_users : int
    target_delay : float or array_like
        Target delay ``D_i`` in frames, per user or shared.
    arrival_rate : array_like
        Mean offered load ``lambda_i`` in bits/frame.
    capacity : int
        Maximum number of distinct arrival frames held per user; one run per
        frame, so the simulation horizon is always enough.
    """

    def __init__(self, n_users, target_delay, arrival_rate=None, capacity=1024):
        self.n_users = int(n_users)
        self.target_delay = np.broadcast_to(
            np.asarray(target_delay, dtype=float), (self.n_users,)
        ).copy()
        if arrival_rate is None:
            arrival_rate = np.zeros(self.n_users)
        self.arrival_rate = np.asarray(arrival_rate, dtype=float).copy()
        self.capacity = int(capacity)
        self.run_frame = np.zeros((self.n_users, self.capacity), dtype=np.int64)
        self.run_count = np.zeros((self.n_users, self.capacity), dtype=np.int64)
        self.head = np.zeros(self.n_users, dtype=np.int64)
        self.tail = np.zeros(self.n_users, dtype=np.int64)
        self.lengths = np.zeros(self.n_users, dtype=np.int64)
        self.arrived = np.zeros(self.n_users, dtype=np.int64)
        self.departed = np.zeros(self.n_users, dtype=np.int64)

    # -- inspection -----------------------------------------------------------

    def queue_length(self, user: int) -> int:
        return int(self.lengths[user])

    def packets(self, user: int) -> list[Packet]:
        """Expanded FIFO contents of one queue, oldest first."""
        out = []
        for r in range(self.head[user], self.tail[user]):
            out.extend([Packet(int(self.run_frame[user, r]))] * int(self.run_count[user, r]))
        return out

    # -- mutation -------------------------------------------------------------

    def push(self, user: int, frame: int, count: int = 1):
        """Append ``count`` packets stamped ``frame`` to the back of a queue."""
        if count <= 0:
            return
        t = self.tail[user]
        if t > self.head[user] and self.run_frame[user, t - 1] > frame:
            raise ContractError("arrivals must be appended in frame order")
        if t > self.head[user] and self.run_frame[user, t - 1] == frame:
            self.run_count[user, t - 1] += count
        else:
            if t >= self.capacity:
                self._compact_or_grow(user)
                t = self.tail[user]
            self.run_frame[user, t] = frame
            self.run_count[user, t] = count
            self.tail[user] = t + 1
        self.lengths[user] += count
        self.arrived[user] += count

    def push_all(self, counts: np.ndarray, frame: int):
        """Append ``counts[i]`` packets stamped ``frame`` to every queue.

        ``frame`` must not precede any frame already queued.
        """
        counts = np.asarray(counts, dtype=np.int64)
        while True:
            full = _push_counts(self.run_frame, self.run_count, self.head, self.tail,
                                self.lengths, self.arrived, counts, frame)
            if full < 0:
                return
            self._compact_or_grow(int(full))

    def _compact_or_grow(self, user: int):
        h = self.head[user]
        if h > 0:
            n = self.tail[user] - h
            self.run_frame[user, :n] = self.run_frame[user, h:h + n]
            self.run_count[user, :n] = self.run_count[user, h:h + n]
            self.head[user] = 0
            self.tail[user] = n
            return
        grow = self.capacity
        self.run_frame = np.concatenate([self.run_frame, np.zeros((self.n_users, grow), np.int64)], 1)
        self.run_count = np.concatenate([self.run_count, np.zeros((self.n_users, grow), np.int64)], 1)
        self.capacity += grow

    def generate_arrivals(self, packet_size: float, frame: int, rng: np.random.Generator) -> np.ndarray:
        """Poisson packet counts with mean ``lambda_i / I_p``, stamped ``frame``."""
        counts = rng.poisson(self.arrival_rate / packet_size)
        self.push_all(counts, frame)
        return counts

    def dequeue(self, user: int, mu: int, frame: int) -> np.ndarray:
        """Remove the ``mu`` oldest packets of ``user``; return their delays."""
        if mu > self.lengths[user]:
            raise ContractError(f"cannot dequeue {mu} packets from a queue of {self.lengths[user]}")
        if mu <= 0:
            return np.zeros(0, dtype=np.int64)
        out_delay = np.empty(mu, dtype=np.int64)
        out_count = np.empty(mu, dtype=np.int64)
        n = _dequeue(self.run_frame, self.run_count, self.head, self.tail, self.lengths,
                     user, mu, frame, out_delay, out_count)
        self.departed[user] += mu
        return np.repeat(out_delay[:n], out_count[:n])

    def serve(self, mu: np.ndarray, frame: int):
        """Dequeue ``mu[i]`` packets from every user.

        Returns per-user delay totals and counts of packets later than target.
        """
        mu = np.asarray(mu, dtype=np.int64)
        if np.any(mu > self.lengths):
            raise ContractError("dequeue larger than queue")
        delay_sum = np.zeros(self.n_users)
        n_late = np.zeros(self.n_users, dtype=np.int64)
        _serve_all(self.run_frame, self.run_count, self.head, self.tail, self.lengths,
                   mu, frame, self.target_delay, delay_sum, n_late)
        self.departed += mu
        return delay_sum, n_late

    # -- utilities ------------------------------------------------------------

    def user_utility(self, user: int, rate: float, frame: int, packet_size: float) -> float:
        """Total cost of the packets ``user`` could send this frame at ``rate``."""
        mu = transmittable_packets(int(self.lengths[user]), rate, packet_size)
        if mu == 0:
            return 0.0
        s = _front_delay_sum(self.run_frame, self.run_count, self.head, self.tail, user, mu, frame)
        return s / self.target_delay[user]

    def utilities(self, rates: np.ndarray, frame: int, packet_size: float) -> np.ndarray:
        """``user_utility`` for every user at once."""
        return _utilities(self.run_frame, self.run_count, self.head, self.tail, self.lengths,
                          np.asarray(rates, dtype=float), packet_size, frame, self.target_delay)

    def utility_table(self, rates: np.ndarray, frame: int, packet_size: float) -> np.ndarray:
        """Utility of user ``i`` at rate ``rates[i, j]`` for every column ``j``."""
        return _utility_table(self.run_frame, self.run_count, self.head, self.tail, self.lengths,
                              np.asarray(rates, dtype=float), packet_size, frame, self.target_delay)

    def transmittable(self, rates: np.ndarray, packet_size: float) -> np.ndarray:
        return _transmittable(self.lengths, np.asarray(rates, dtype=float), packet_size)

    def late_in_queue(self, frame: int):
        """Per user: number of queued packets past target at ``frame`` and their total delay."""
        return _late_in_queue(self.run_frame, self.run_count, self.head, self.tail,
                              frame, self.target_delay)
