"""Network drops: RRH layout, user placement and nearest-RRH association."""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import ConfigError

MAX_PLACEMENT_ATTEMPTS = 10_000


@dataclass(frozen=True)
class SystemParams:
    """Physical and protocol constants of one simulated network.

    Defaults reproduce the three-cell desk scenario: RRHs at (-2, 0), (0, 2)
    and (2, 0), radius 2, five users per cell, five channels and a
    ``P_max / (B sigma^2)`` budget of 13 dB.
    """

    n_cells: int = 3
    cell_radius: float = 2.0
    rrh_positions: tuple = ((-2.0, 0.0), (0.0, 2.0), (2.0, 0.0))
    n_channels: int = 5
    users_per_cell: int = 5
    frame_duration: float = 1.0
    bandwidth: float = 1.0
    noise_density: float = 1.0
    max_power: float = 10.0 ** 1.3
    power_exponent: float = 0.0
    interference_threshold: float = 0.4
    packet_size: float = 0.1
    target_delay: float = 25.0
    estimator_window: int = 10
    arrival_intensity: float = 0.9
    min_user_rrh_distance: float = 0.1

    def __post_init__(self):
        # normalise nested lists coming from JSON into hashable tuples
        pos = tuple(tuple(float(c) for c in p) for p in self.rrh_positions)
        object.__setattr__(self, "rrh_positions", pos)
        self.validate()

    def validate(self):
        if self.n_cells < 1:
            raise ConfigError("n_cells must be >= 1")
        if self.n_channels < 1:
            raise ConfigError("n_channels must be >= 1")
        if self.users_per_cell < 1:
            raise ConfigError("users_per_cell must be >= 1")
        if not 0.0 <= self.interference_threshold <= 1.0:
            raise ConfigError(
                f"interference_threshold must lie in [0, 1], got {self.interference_threshold}"
            )
        if self.estimator_window < 1:
            raise ConfigError("estimator_window must be >= 1")
        if self.target_delay < 1:
            raise ConfigError("target_delay must be >= 1")
        if self.packet_size <= 0:
            raise ConfigError("packet_size must be > 0")
        if self.min_user_rrh_distance <= 0:
            raise ConfigError("min_user_rrh_distance must be > 0")
        if self.min_user_rrh_distance > self.cell_radius:
            raise ConfigError("min_user_rrh_distance exceeds cell_radius")
        if self.power_exponent < 0:
            raise ConfigError("power_exponent must be >= 0")
        if self.arrival_intensity < 0:
            raise ConfigError("arrival_intensity must be >= 0")
        for name in ("cell_radius", "frame_duration", "bandwidth", "noise_density", "max_power"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if len(self.rrh_positions) != self.n_cells:
            raise ConfigError(
                f"rrh_positions has {len(self.rrh_positions)} entries for {self.n_cells} cells"
            )
        if any(len(p) != 2 for p in self.rrh_positions):
            raise ConfigError("rrh_positions must be 2-D coordinates")
        if len(set(self.rrh_positions)) != self.n_cells:
            raise ConfigError("rrh_positions must be distinct")

    @property
    def n_users(self) -> int:
        return self.n_cells * self.users_per_cell

    @property
    def noise_power(self) -> float:
        """Noise power over one channel, ``B * sigma^2``."""
        return self.bandwidth * self.noise_density

    @property
    def frame_bandwidth(self) -> float:
        """``T * B``, the bits-per-frame scale of a log2 rate."""
        return self.frame_duration * self.bandwidth

    def with_updates(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class Topology:
    """User positions and the per-link quantities derived from them.

    ``distances[i, r]`` is the distance from user ``i`` to RRH ``r`` and
    ``mean_gains = distances ** -4``.
    """

    rrh_positions: np.ndarray
    user_positions: np.ndarray
    association: np.ndarray
    distances: np.ndarray
    mean_gains: np.ndarray
    tx_power: np.ndarray = field(default=None)

    @property
    def n_users(self) -> int:
        return len(self.association)

    @property
    def own_distance(self) -> np.ndarray:
        return self.distances[np.arange(self.n_users), self.association]

    def users_in_cell(self, cell: int) -> np.ndarray:
        return np.flatnonzero(self.association == cell)


def _distances(users: np.ndarray, rrhs: np.ndarray) -> np.ndarray:
    diff = users[:, None, :] - rrhs[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1))


def nearest_rrh(distances: np.ndarray) -> np.ndarray:
    # np.argmin returns the first minimum, i.e. the lowest RRH index on ties
    return np.argmin(distances, axis=1)


def build_topology(params: SystemParams, user_positions, tx_power=None) -> Topology:
    """Topology for explicitly given user positions (fixtures, replays)."""
    rrhs = np.asarray(params.rrh_positions, dtype=float)
    users = np.asarray(user_positions, dtype=float).reshape(-1, 2)
    dist = _distances(users, rrhs)
    topo = Topology(
        rrh_positions=rrhs,
        user_positions=users,
        association=nearest_rrh(dist),
        distances=dist,
        mean_gains=dist ** -4.0,
    )
    if tx_power is None:
        tx_power = compute_power(params, topo)
    return replace(topo, tx_power=np.asarray(tx_power, dtype=float))


def generate_drop(params: SystemParams, rng: np.random.Generator) -> Topology:
    """Place ``users_per_cell`` users uniformly in each cell's disk.

    Candidates are rejected until they are at least ``min_user_rrh_distance``
    from their own RRH and that RRH is their nearest one.

    Raises
    ------
    ConfigError
        If a user cannot be placed within ``MAX_PLACEMENT_ATTEMPTS`` draws.
    """
    rrhs = np.asarray(params.rrh_positions, dtype=float)
    R = params.cell_radius
    rmin = params.min_user_rrh_distance
    positions = []
    for cell in range(params.n_cells):
        for _ in range(params.users_per_cell):
            for _attempt in range(MAX_PLACEMENT_ATTEMPTS):
                # uniform on the annulus rmin <= s <= R
                s = np.sqrt(rng.uniform(rmin ** 2, R ** 2))
                phi = rng.uniform(0.0, 2.0 * np.pi)
                p = rrhs[cell] + s * np.array([np.cos(phi), np.sin(phi)])
                d = np.sqrt(((rrhs - p) ** 2).sum(axis=1))
                if np.argmin(d) == cell:
                    positions.append(p)
                    break
            else:
                raise ConfigError(
                    f"could not place a user in cell {cell} after {MAX_PLACEMENT_ATTEMPTS} attempts"
                )
    return build_topology(params, np.array(positions))


def compute_power(params: SystemParams, topology: Topology) -> np.ndarray:
    """``P_i = P_max * (s_i / R_cell) ** alpha`` with ``s_i`` the own-RRH distance."""
    ratio = topology.own_distance / params.cell_radius
    return params.max_power * ratio ** params.power_exponent
