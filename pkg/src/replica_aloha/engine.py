"""Slot-by-slot simulator for replicated multi-channel random access.

Each slot: new messages arrive (Poisson, rate load_per_channel * n_channels),
every backlogged message independently transmits with the controller's
probability, each transmitter places replicas on a uniformly chosen set of
distinct channels, channels with exactly one replica deliver it unless
erased, and delivered messages leave. Delay is counted inclusively: a message
delivered in its arrival slot has delay 1.

Randomness is split into four named streams (arrivals, transmit decisions,
channel choices, erasures) spawned from one seed, so the arrival process is
identical across controllers given the same seed. The Philox generator keeps
every stream counter-based and reproducible.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .estimator import SlotObservation
from .occupancy import PolicyTable
from .policies import Controller, ControlDecision, make_controller

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SystemConfig:
    """One simulation run: system, horizon, seed and controller choice."""

    n_channels: int
    load_per_channel: float
    erasure_prob: float
    horizon_slots: int
    warmup_slots: int | None = None
    seed: int = 0
    algorithm: str = "h1"
    k_max: int | None = None
    record_full_series: bool = False
    trace: bool = False

    def __post_init__(self) -> None:
        if self.n_channels < 1:
            raise ValueError("n_channels must be >= 1")
        if self.load_per_channel < 0.0:
            raise ValueError("load_per_channel must be >= 0")
        if not 0.0 <= self.erasure_prob < 1.0:
            raise ValueError("erasure_prob must lie in [0, 1)")
        if self.horizon_slots < 1:
            raise ValueError("horizon_slots must be >= 1")
        if self.warmup_slots is None:
            object.__setattr__(self, "warmup_slots", self.horizon_slots // 10)
        if not 0 <= self.warmup_slots < self.horizon_slots:
            raise ValueError("need 0 <= warmup_slots < horizon_slots")
        if self.k_max is not None and self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        limit = (1.0 - self.erasure_prob) * math.exp(-1.0)
        if self.load_per_channel >= limit:
            warnings.warn(
                f"load {self.load_per_channel} is at or beyond the stability "
                f"limit (1-gamma)/e = {limit:.4f}; backlog will grow",
                stacklevel=2,
            )


@dataclass(frozen=True)
class Device:
    uid: int
    arrival_slot: int


@dataclass(frozen=True)
class SlotResult:
    observation: SlotObservation
    departed: list[Device]
    backlog_after: int
    decision_used: ControlDecision


def choose_channel_subsets(
    rng: np.random.Generator, n_rows: int, n_channels: int, replicas: int
) -> np.ndarray:
    """(n_rows, replicas) channel indices, each row a uniform distinct set.

    Small replica counts use rejection sampling of with-replacement draws
    (cheap, rarely rejects); dense ones take the replicas smallest of M iid
    uniforms, which is a uniform subset as well.
    """
    m, k = n_channels, replicas
    if not 1 <= k <= m:
        raise ValueError("replicas must lie in [1, n_channels]")
    if k == 1:
        return rng.integers(0, m, size=(n_rows, 1))
    if k == m:
        return np.tile(np.arange(m), (n_rows, 1))
    if k * (k - 1) > m:
        u = rng.random((n_rows, m))
        return np.argpartition(u, k, axis=1)[:, :k]
    out = rng.integers(0, m, size=(n_rows, k))
    while True:
        srt = np.sort(out, axis=1)
        bad = (srt[:, 1:] == srt[:, :-1]).any(axis=1)
        if not bad.any():
            return out
        out[bad] = rng.integers(0, m, size=(int(bad.sum()), k))


class Engine:
    """Holds the backlog and resolves one slot at a time.

    Use step(decision) when the decision does not depend on this slot's
    arrivals; controllers that see the true contender count instead call
    inject_arrivals() first and resolve(decision) after deciding.
    """

    def __init__(self, config: SystemConfig):
        self.config = config
        streams = np.random.SeedSequence(config.seed).spawn(4)
        self._arrival_rng = np.random.Generator(np.random.Philox(streams[0]))
        self._decision_rng = np.random.Generator(np.random.Philox(streams[1]))
        self._channel_rng = np.random.Generator(np.random.Philox(streams[2]))
        self._erasure_rng = np.random.Generator(np.random.Philox(streams[3]))
        self._lam_total = config.load_per_channel * config.n_channels
        self._uids = np.empty(0, dtype=np.int64)
        self._arrivals = np.empty(0, dtype=np.int64)
        self._next_uid = 0
        self._slot = 0
        self._arrived_this_slot = False

    @property
    def slot(self) -> int:
        return self._slot

    @property
    def backlog(self) -> int:
        return len(self._uids)

    def inject_arrivals(self) -> int:
        """Open the next slot: draw this slot's arrivals; returns the
        contender count (they transmit in this same slot)."""
        if self._arrived_this_slot:
            raise RuntimeError("slot already opened; resolve it first")
        self._slot += 1
        self._arrived_this_slot = True
        n_new = int(self._arrival_rng.poisson(self._lam_total))
        if n_new:
            uids = np.arange(self._next_uid, self._next_uid + n_new, dtype=np.int64)
            self._next_uid += n_new
            self._uids = np.concatenate([self._uids, uids])
            self._arrivals = np.concatenate(
                [self._arrivals, np.full(n_new, self._slot, dtype=np.int64)]
            )
        return len(self._uids)

    def resolve(self, decision: ControlDecision) -> SlotResult:
        """Resolve the open slot under the given decision."""
        if not self._arrived_this_slot:
            raise RuntimeError("open the slot with inject_arrivals() first")
        self._arrived_this_slot = False
        cfg = self.config
        m = cfg.n_channels
        k = min(decision.replicas, m)
        if cfg.k_max is not None:
            k = min(k, cfg.k_max)
        used = ControlDecision(decision.transmit_prob, k)
        n = len(self._uids)

        departed: list[Device] = []
        idle, singles, collided, n_success = m, 0, 0, 0
        if n:
            tx = self._decision_rng.random(n) < used.transmit_prob
            tx_idx = np.nonzero(tx)[0]
            n_tx = len(tx_idx)
            if n_tx:
                chosen = choose_channel_subsets(self._channel_rng, n_tx, m, k)
                counts = np.bincount(chosen.ravel(), minlength=m)
                idle = int((counts == 0).sum())
                singles = int((counts == 1).sum())
                collided = m - idle - singles
                alone = counts[chosen] == 1
                if cfg.erasure_prob > 0.0:
                    delivered = alone & (
                        self._erasure_rng.random(chosen.shape) >= cfg.erasure_prob
                    )
                else:
                    delivered = alone
                winners = tx_idx[delivered.any(axis=1)]
                n_success = len(winners)
                if n_success:
                    departed = [
                        Device(int(u), int(a))
                        for u, a in zip(
                            self._uids[winners], self._arrivals[winners]
                        )
                    ]
                    keep = np.ones(n, dtype=bool)
                    keep[winners] = False
                    self._uids = self._uids[keep]
                    self._arrivals = self._arrivals[keep]

        obs = SlotObservation(idle, singles, collided, n_success)
        result = SlotResult(obs, departed, len(self._uids), used)
        if cfg.trace:
            log.debug(
                "slot %d: i=%d s=%d c=%d served=%d backlog=%d",
                self._slot, idle, singles, collided, n_success, len(self._uids),
            )
        return result

    def step(self, decision: ControlDecision) -> SlotResult:
        """Arrivals plus resolution in one call."""
        self.inject_arrivals()
        return self.resolve(decision)


@dataclass
class RunMetrics:
    """Post-warmup summary of one simulation run."""

    config: SystemConfig
    mean_backlog_per_channel: float
    ci95_backlog: float
    mean_delay_slots: float
    throughput_per_channel: float
    mean_replicas: float
    n_departed: int
    degenerate_slots: int
    backlog_series: np.ndarray = field(repr=False)


def _batch_means_ci95(series: np.ndarray) -> float:
    """Half-width of a 95% CI for the series mean via batch means."""
    n = len(series)
    n_batches = min(64, max(8, n // 256))
    if n < 2 * n_batches:
        return float("nan")
    usable = (n // n_batches) * n_batches
    batches = series[:usable].reshape(n_batches, -1).mean(axis=1)
    t = stats.t.ppf(0.975, n_batches - 1)
    return float(t * batches.std(ddof=1) / math.sqrt(n_batches))


def run(
    config: SystemConfig,
    controller: Controller | None = None,
    table: PolicyTable | None = None,
) -> RunMetrics:
    """Simulate one full horizon and summarize the post-warmup window."""
    if controller is None:
        controller = make_controller(
            config.algorithm,
            config.n_channels,
            config.erasure_prob,
            config.load_per_channel,
            table=table,
        )
    if controller.n_channels != config.n_channels:
        raise ValueError(
            f"controller is for M={controller.n_channels}, "
            f"config has M={config.n_channels}"
        )
    engine = Engine(config)
    warmup = config.warmup_slots
    series = np.empty(
        config.horizon_slots if config.record_full_series
        else config.horizon_slots - warmup,
        dtype=np.int64,
    )
    replicas_sum = 0
    delay_sum = 0
    n_departed = 0
    pos = 0
    for t in range(1, config.horizon_slots + 1):
        true_n = engine.inject_arrivals()
        decision = controller.decide(true_n)
        result = engine.resolve(decision)
        controller.observe(result.observation)
        measured = t > warmup
        if measured:
            replicas_sum += result.decision_used.replicas
            for dev in result.departed:
                delay_sum += t - dev.arrival_slot + 1
            n_departed += len(result.departed)
        if measured or config.record_full_series:
            series[pos] = result.backlog_after
            pos += 1
    measured_slots = config.horizon_slots - warmup
    measured_series = series[-measured_slots:]
    m = config.n_channels
    return RunMetrics(
        config=config,
        mean_backlog_per_channel=float(measured_series.mean()) / m,
        ci95_backlog=_batch_means_ci95(measured_series / m),
        mean_delay_slots=(delay_sum / n_departed) if n_departed else float("nan"),
        throughput_per_channel=n_departed / (measured_slots * m),
        mean_replicas=replicas_sum / measured_slots,
        n_departed=n_departed,
        degenerate_slots=controller.degenerate_slots,
        backlog_series=series,
    )


@dataclass
class ReplicatedMetrics:
    """Aggregate over independent replications (seeds base, base+1, ...)."""

    runs: list[RunMetrics]
    mean_backlog_per_channel: float
    ci95_backlog: float
    mean_delay_slots: float
    throughput_per_channel: float
    mean_replicas: float


def _t_ci95(values: np.ndarray) -> float:
    if len(values) < 2:
        return float("nan")
    t = stats.t.ppf(0.975, len(values) - 1)
    return float(t * values.std(ddof=1) / math.sqrt(len(values)))


def run_replicated(
    config: SystemConfig,
    n_replications: int,
    table: PolicyTable | None = None,
) -> ReplicatedMetrics:
    """Independent replications with seeds config.seed + r; the CI is the
    Student-t 95% half-width over per-run means (NaN when n = 1)."""
    if n_replications < 1:
        raise ValueError("n_replications must be >= 1")
    runs = [
        run(replace(config, seed=config.seed + r), table=table)
        for r in range(n_replications)
    ]
    backlogs = np.array([r.mean_backlog_per_channel for r in runs])
    delays = np.array([r.mean_delay_slots for r in runs])
    return ReplicatedMetrics(
        runs=runs,
        mean_backlog_per_channel=float(backlogs.mean()),
        ci95_backlog=_t_ci95(backlogs),
        mean_delay_slots=float(np.nanmean(delays)) if not np.isnan(delays).all()
        else float("nan"),
        throughput_per_channel=float(
            np.mean([r.throughput_per_channel for r in runs])
        ),
        mean_replicas=float(np.mean([r.mean_replicas for r in runs])),
    )
