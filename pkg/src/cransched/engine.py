"""Frame loop, replications and parameter sweeps."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .channel import (compatibility_matrix, expected_rate_from_snr, expected_snr_rates,
                      realized_rates)
from .errors import ConfigError
from .geometry import SystemParams, generate_drop
from .matching import MATCHERS
from .scheduler import check_schedule, initial_history, schedule_frame
from .sfr import SfrScheduler, sfr_band_plan
from .traffic import PacketBuffers

SCHEDULERS = ("proposed", "sfr")

SWEEP_ALIASES = {
    "gamma": "interference_threshold",
    "alpha": "power_exponent",
    "rho": "arrival_intensity",
    "m": "estimator_window",
    "channels": "n_channels",
}
SWEEPABLE = {"interference_threshold", "power_exponent", "arrival_intensity", "scheduler",
             "n_channels", "users_per_cell", "estimator_window", "target_delay", "matcher"}
INT_FIELDS = {"n_channels", "users_per_cell", "estimator_window", "n_cells"}


@dataclass(frozen=True)
class ExperimentConfig:
    params: SystemParams = field(default_factory=SystemParams)
    scheduler: str = "proposed"
    matcher: str = "hungarian"
    n_drops: int = 50
    n_frames: int = 5000
    warmup: int = 500
    master_seed: int = 0
    # "per_user": lambda_i = rho * E{rate_i}; "edge": lambda = rho * E{rate of an edge user at P_max}
    arrival_mode: str = "per_user"
    rate_history_mode: str = "achieved"
    sfr_rate_source: str = "instantaneous"
    sfr_edge_threshold: float = 2.0 / 3.0
    sfr_center_power: float = 0.7
    common_drops: bool = False
    debug: bool = False
    workers: int = 1
    sweep_param: str | None = None
    sweep_values: tuple | None = None
    output_dir: str = "results"

    def __post_init__(self):
        if self.scheduler not in SCHEDULERS:
            raise ConfigError(f"scheduler must be one of {SCHEDULERS}, got {self.scheduler!r}")
        if self.matcher not in MATCHERS:
            raise ConfigError(f"matcher must be one of {tuple(MATCHERS)}, got {self.matcher!r}")
        if self.arrival_mode not in ("per_user", "edge"):
            raise ConfigError(f"unknown arrival_mode {self.arrival_mode!r}")
        if self.rate_history_mode not in ("achieved", "scheduled"):
            raise ConfigError(f"unknown rate_history_mode {self.rate_history_mode!r}")
        if self.sfr_rate_source not in ("instantaneous", "estimate"):
            raise ConfigError(f"unknown sfr_rate_source {self.sfr_rate_source!r}")
        if self.n_drops < 1 or self.n_frames < 1 or self.warmup < 0 or self.workers < 1:
            raise ConfigError("n_drops, n_frames and workers must be >= 1 and warmup >= 0")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be non-negative")
        if self.sweep_values is not None:
            object.__setattr__(self, "sweep_values", tuple(self.sweep_values))

    # flat key/value view used by config files and the CLI
    def to_flat(self) -> dict:
        out = asdict(self.params)
        out["rrh_positions"] = [list(p) for p in self.params.rrh_positions]
        for f in fields(self):
            if f.name != "params":
                out[f.name] = getattr(self, f.name)
        if self.sweep_values is not None:
            out["sweep_values"] = list(self.sweep_values)
        return out

    @classmethod
    def from_flat(cls, values: dict) -> "ExperimentConfig":
        pnames = set(SystemParams.field_names())
        cnames = {f.name for f in fields(cls)} - {"params"}
        unknown = set(values) - pnames - cnames
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        try:
            params = SystemParams(**{k: v for k, v in values.items() if k in pnames})
            return cls(params=params, **{k: v for k, v in values.items() if k in cnames})
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def with_value(self, name: str, value) -> "ExperimentConfig":
        name = SWEEP_ALIASES.get(name, name)
        if name in INT_FIELDS:
            value = int(value)
        if name in SystemParams.field_names():
            return replace(self, params=self.params.with_updates(**{name: value}))
        return replace(self, **{name: value})


@dataclass
class FrameRecord:
    frame: int
    channel_of_user: np.ndarray
    rates: np.ndarray
    departed: np.ndarray
    delay_sum: np.ndarray
    n_late: np.ndarray
    arrivals: np.ndarray
    utility: float


@dataclass
class RunMetrics:
    delay_violation_probability: float
    throughput: float
    average_delay: float
    n_departed: int
    n_violations: int
    n_frames: int
    per_user_violation: np.ndarray = field(repr=False)
    per_user_throughput: np.ndarray = field(repr=False)
    per_user_delay: np.ndarray = field(repr=False)


def arrival_rates(config: ExperimentConfig, topology) -> np.ndarray:
    p = config.params
    if config.arrival_mode == "edge":
        edge_snr = p.max_power * p.cell_radius ** -4.0 / p.noise_power
        rate = expected_rate_from_snr(edge_snr, p.frame_bandwidth)
        return np.full(topology.n_users, p.arrival_intensity * rate)
    return p.arrival_intensity * expected_snr_rates(topology, p)


BLOCK = 256


class _Blocks:
    # pre-draws per-frame random arrays in blocks of BLOCK frames
    def __init__(self, draw):
        self._draw = draw
        self._buf = None
        self._k = BLOCK

    def next(self):
        if self._k == BLOCK:
            self._buf = self._draw(BLOCK)
            self._k = 0
        out = self._buf[self._k]
        self._k += 1
        return out


class SimState:
    """Everything one replication mutates, plus its random streams."""

    def __init__(self, config: ExperimentConfig, seed):
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        drop_ss, fading_ss, arrival_ss = ss.spawn(3)
        p = config.params
        self.config = config
        self.params = p
        self.topology = generate_drop(p, np.random.default_rng(drop_ss))
        self.fading_rng = np.random.default_rng(fading_ss)
        self.arrival_rng = np.random.default_rng(arrival_ss)
        total = config.warmup + config.n_frames
        self.buffers = PacketBuffers(self.topology.n_users, p.target_delay,
                                     arrival_rates(config, self.topology), capacity=total + 1)
        self.history = initial_history(self.topology, p, config.rate_history_mode)
        self.compat = compatibility_matrix(self.topology, p)
        self.sfr = None
        if config.scheduler == "sfr":
            plan = sfr_band_plan(p.n_channels, p.n_cells, config.sfr_edge_threshold,
                                 config.sfr_center_power)
            self.sfr = SfrScheduler(self.topology, p, plan, config.sfr_rate_source)
        n = self.topology.n_users
        mean_gains = self.topology.mean_gains[None, :, :, None]
        n_rrh = self.topology.mean_gains.shape[1]
        self.fading = _Blocks(lambda b: self.fading_rng.standard_exponential(
            (b, n, n_rrh, p.n_channels)) * mean_gains)
        lam = self.buffers.arrival_rate / p.packet_size
        self.arrivals = _Blocks(lambda b: self.arrival_rng.poisson(lam, size=(b, n)))
        self.frame = 0
        self.acc_departed = np.zeros(n, dtype=np.int64)
        self.acc_delay = np.zeros(n)
        self.acc_late = np.zeros(n, dtype=np.int64)

    def schedule(self, fading):
        if self.sfr is not None:
            return self.sfr.schedule_frame(self.buffers, fading, self.frame, self.history)
        return schedule_frame(self.buffers, self.history, fading, self.topology, self.params,
                              self.frame, self.compat, self.config.matcher)


def step_frame(state: SimState) -> FrameRecord:
    """Advance one frame: fade, schedule, transmit, record rates, admit arrivals."""
    p = state.params
    t = state.frame
    fading = state.fading.next()
    sched = state.schedule(fading)
    if state.config.debug:
        check_schedule(sched, state.topology, state.compat if state.sfr is None else None)
    rates = realized_rates(sched, fading, state.topology, p)
    buffers = state.buffers
    utility = float(buffers.utilities(rates, t, p.packet_size).sum())
    mu = buffers.transmittable(rates, p.packet_size)
    delay_sum, n_late = buffers.serve(mu, t)
    scheduled = sched.channel_of_user >= 0
    state.history.push(rates, scheduled)
    arrivals = state.arrivals.next()
    buffers.push_all(arrivals, t)
    if t >= state.config.warmup:
        state.acc_departed += mu
        state.acc_delay += delay_sum
        state.acc_late += n_late
    state.frame = t + 1
    return FrameRecord(t, sched.channel_of_user, rates, mu, delay_sum, n_late, arrivals, utility)


def finalize(state: SimState) -> RunMetrics:
    """Metrics over the measured frames.

    Violations and average delay are taken over the packets departed after
    warm-up plus those still queued at the horizon whose delay already
    exceeds the target, so starving queues are not under-reported.
    """
    last = state.frame - 1
    queued_late, queued_delay = state.buffers.late_in_queue(last)
    viol = state.acc_late + queued_late
    denom = state.acc_departed + queued_late
    delay = state.acc_delay + queued_delay
    n_meas = state.frame - state.config.warmup
    total = int(denom.sum())
    n_dep = int(state.acc_departed.sum())
    safe = np.maximum(denom, 1)
    return RunMetrics(
        delay_violation_probability=float(viol.sum() / total) if total else 0.0,
        throughput=state.params.packet_size * n_dep / n_meas,
        average_delay=float(delay.sum() / total) if total else math.nan,
        n_departed=n_dep,
        n_violations=int(viol.sum()),
        n_frames=n_meas,
        per_user_violation=np.where(denom > 0, viol / safe, 0.0),
        per_user_throughput=state.params.packet_size * state.acc_departed / n_meas,
        per_user_delay=np.where(denom > 0, delay / safe, np.nan),
    )


def run_replication(config: ExperimentConfig, seed) -> RunMetrics:
    """One drop simulated for ``warmup + n_frames`` frames."""
    state = SimState(config, seed)
    for _ in range(config.warmup + config.n_frames):
        step_frame(state)
    return finalize(state)


METRICS = ("delay_violation_probability", "throughput", "average_delay")


def replication_seed(master_seed: int, value_index: int, replication: int,
                     common_drops: bool = False) -> np.random.SeedSequence:
    key = (replication,) if common_drops else (value_index, replication)
    return np.random.SeedSequence(master_seed, spawn_key=key)


def aggregate(results: list[RunMetrics]) -> dict:
    """Mean and standard error across drops, reduced in replication order."""
    out = {}
    for name in METRICS:
        vals = np.array([getattr(r, name) for r in results], dtype=float)
        vals = vals[~np.isnan(vals)]
        n = vals.size
        out[name] = float(vals.mean()) if n else math.nan
        out[name + "_se"] = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    out["n_drops"] = len(results)
    return out


def _run_job(job):
    config, seed = job
    return run_replication(config, seed)


def run_experiment(config: ExperimentConfig, sweep_name: str, values, n_drops: int | None = None,
                   master_seed: int | None = None, workers: int | None = None,
                   progress=None) -> list[dict]:
    """Average ``n_drops`` replications at every sweep value.

    Returns one row per value with the sweep value, per-metric mean and
    standard error, ``n_drops`` and ``horizon``.
    """
    name = SWEEP_ALIASES.get(sweep_name, sweep_name)
    if name not in SWEEPABLE:
        raise ConfigError(f"cannot sweep {sweep_name!r}; choose from {sorted(SWEEPABLE)}")
    n_drops = config.n_drops if n_drops is None else n_drops
    master_seed = config.master_seed if master_seed is None else master_seed
    workers = config.workers if workers is None else workers
    configs = [config.with_value(name, v) for v in values]
    jobs = [(c, replication_seed(master_seed, vi, r, config.common_drops))
            for vi, c in enumerate(configs) for r in range(n_drops)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = []
        for k, job in enumerate(jobs):
            results.append(_run_job(job))
            if progress is not None:
                progress(k + 1, len(jobs))
    rows = []
    for vi, (v, c) in enumerate(zip(values, configs)):
        row = {"sweep_value": v}
        row.update(aggregate(results[vi * n_drops:(vi + 1) * n_drops]))
        row["horizon"] = c.n_frames
        rows.append(row)
    return rows
