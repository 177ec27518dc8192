"""Soft frequency reuse baseline with per-cell scheduling.

Channel ``j`` is an edge channel of cell ``j mod n_cells`` and a center
channel of every other cell. Edge users transmit at full power on their
cell's edge band, center users at a reduced power on the center band. Each
cell matches its own users to its eligible channels without knowledge of
the other cells.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .matching import solve_max_kernel
from .scheduler import Schedule

CENTER, EDGE = "center", "edge"


@dataclass(frozen=True)
class SfrPlan:
    edge_band: tuple
    center_band: tuple
    edge_threshold: float = 2.0 / 3.0
    center_power_fraction: float = 0.7

    def __post_init__(self):
        if not 0.0 < self.center_power_fraction <= 1.0:
            raise ConfigError("center_power_fraction must lie in (0, 1]")


def sfr_band_plan(n_channels: int, n_cells: int, edge_threshold: float = 2.0 / 3.0,
                  center_power_fraction: float = 0.7) -> SfrPlan:
    if n_channels < n_cells:
        raise ConfigError(f"SFR needs at least one edge channel per cell ({n_channels} < {n_cells})")
    edge = tuple(tuple(j for j in range(n_channels) if j % n_cells == c) for c in range(n_cells))
    center = tuple(tuple(j for j in range(n_channels) if j % n_cells != c) for c in range(n_cells))
    return SfrPlan(edge, center, edge_threshold, center_power_fraction)


def classify_user(user: int, topology, edge_threshold: float, cell_radius: float) -> str:
    s = topology.own_distance[user]
    return EDGE if s > edge_threshold * cell_radius else CENTER


def _eligibility(topology, plan: SfrPlan, params):
    # eligible[i, j] and the power user i would use on channel j
    n, n_ch = topology.n_users, params.n_channels
    is_edge = topology.own_distance > plan.edge_threshold * params.cell_radius
    eligible = np.zeros((n, n_ch), dtype=bool)
    for i in range(n):
        c = topology.association[i]
        band = plan.edge_band[c] if is_edge[i] else plan.center_band[c]
        eligible[i, list(band)] = True
    scale = np.where(is_edge, 1.0, plan.center_power_fraction)
    power = topology.tx_power * scale
    return eligible, power


class SfrScheduler:
    """Per-cell SFR scheduling for one drop.

    ``rate_source="instantaneous"`` evaluates candidate channels on the
    current interference-free rate; ``"estimate"`` uses the user's rate
    history instead.
    """

    def __init__(self, topology, params, plan: SfrPlan | None = None,
                 rate_source: str = "instantaneous"):
        if rate_source not in ("instantaneous", "estimate"):
            raise ConfigError(f"unknown SFR rate source {rate_source!r}")
        self.topology = topology
        self.params = params
        self.plan = plan or sfr_band_plan(params.n_channels, params.n_cells)
        self.rate_source = rate_source
        self.eligible, self.power = _eligibility(topology, self.plan, params)
        self.cells = [topology.users_in_cell(c) for c in range(params.n_cells)]

    def utility_matrix(self, cell: int, fading, buffers, frame: int, history=None) -> np.ndarray:
        """Users of ``cell`` by channels; ineligible pairs are 0."""
        return self._utility_all(fading, buffers, frame, history)[self.cells[cell]]

    def _utility_all(self, fading, buffers, frame, history):
        p = self.params
        n = self.topology.n_users
        if self.rate_source == "estimate":
            rates = np.repeat(history.estimate()[:, None], p.n_channels, axis=1)
        else:
            z = fading[np.arange(n), self.topology.association, :]
            rates = p.frame_bandwidth * np.log2(1.0 + self.power[:, None] * z / p.noise_power)
        return buffers.utility_table(rates, frame, p.packet_size) * self.eligible

    def schedule_frame(self, buffers, fading, frame: int, history=None) -> Schedule:
        ch = np.full(self.topology.n_users, -1, dtype=np.int64)
        table = self._utility_all(fading, buffers, frame, history)
        for users in self.cells:
            if len(users) == 0:
                continue
            for a, j in enumerate(solve_max_kernel(table[users])):
                if j < 0:
                    continue
                u = users[a]
                if self.eligible[u, j]:
                    ch[u] = j
        return Schedule(ch, self.power, self.params.n_channels)


def sfr_schedule_frame(buffers, fading, topology, params, frame: int, plan=None,
                       history=None, rate_source="instantaneous") -> Schedule:
    return SfrScheduler(topology, params, plan, rate_source).schedule_frame(
        buffers, fading, frame, history)
