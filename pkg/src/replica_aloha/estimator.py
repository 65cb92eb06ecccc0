"""Backlog estimation from per-slot ternary channel feedback.

After every slot the receiver learns, for each channel, whether it was idle,
carried exactly one replica (before erasure), or collided. Under a Poisson
approximation of the per-channel replica load mu = N*K/M, the idle/single/
collision counts (i, s, c) have a likelihood proportional to

    g(mu) = mu^s * exp(-mu*M) * (exp(mu) - 1 - mu)^c,

whose maximizer mu* is found by bisecting the sign change of d(log g)/dmu.
The device-count estimate then inverts mu = N*K/M, rescales by the transmit
probability that generated the observation, adds the expected new arrivals,
and removes the messages known to have left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

MU_BRACKET_LO = 1e-9
MU_BRACKET_HI = 64.0
MU_TOL = 1e-10


class DegenerateObservationError(RuntimeError):
    """The likelihood has no interior maximizer (every channel collided)."""


@dataclass(frozen=True)
class SlotObservation:
    """Per-slot channel feedback: idle/single/collision counts plus the
    number of delivered messages. Singles are counted before erasure, so
    successes never exceed singles."""

    idle: int
    singles: int
    collisions: int
    successes: int

    def __post_init__(self) -> None:
        for field in ("idle", "singles", "collisions", "successes"):
            if getattr(self, field) < 0:
                raise ValueError(f"{field} must be >= 0")
        if self.successes > self.singles:
            raise ValueError("successes cannot exceed singles")

    @property
    def n_channels(self) -> int:
        return self.idle + self.singles + self.collisions


@dataclass(frozen=True)
class EstimatorInputs:
    """Everything the backlog update needs about the slot just observed."""

    observation: SlotObservation
    prev_transmit_prob: float
    prev_replicas: int
    n_channels: int
    load_per_channel: float

    def __post_init__(self) -> None:
        if not 0.0 < self.prev_transmit_prob <= 1.0:
            raise ValueError("prev_transmit_prob must lie in (0, 1]")
        if self.prev_replicas < 1:
            raise ValueError("prev_replicas must be >= 1")
        if self.load_per_channel < 0.0:
            raise ValueError("load_per_channel must be >= 0")
        if self.observation.n_channels != self.n_channels:
            raise ValueError("observation does not cover n_channels channels")


def _log_excess(mu: float) -> float:
    """log(exp(mu) - 1 - mu), series-protected near zero."""
    if mu < 1e-4:
        return math.log(0.5 * mu * mu * (1.0 + mu / 3.0 + mu * mu / 12.0))
    return math.log(math.expm1(mu) - mu)


def _dlog_g(mu: float, s: int, c: int, m: int) -> float:
    em1 = math.expm1(mu)
    if mu < 1e-4:
        excess = 0.5 * mu * mu * (1.0 + mu / 3.0 + mu * mu / 12.0)
    else:
        excess = em1 - mu
    return s / mu - m + c * em1 / excess


def log_pseudo_likelihood(
    observation: SlotObservation,
    candidate_n: int,
    replicas: int,
    n_channels: int,
) -> float:
    """log g at the per-channel intensity implied by candidate_n devices."""
    if candidate_n < 1:
        raise ValueError("candidate_n must be >= 1")
    mu = candidate_n * replicas / n_channels
    return (
        observation.singles * math.log(mu)
        - mu * n_channels
        + observation.collisions * _log_excess(mu)
    )


def pseudo_likelihood(
    observation: SlotObservation,
    candidate_n: int,
    replicas: int,
    n_channels: int,
) -> float:
    return math.exp(
        log_pseudo_likelihood(observation, candidate_n, replicas, n_channels)
    )


def solve_mu(observation: SlotObservation, n_channels: int | None = None) -> float:
    """Per-channel intensity maximizing the observation likelihood.

    Bisects the derivative sign change, starting from [1e-9, 1] and doubling
    the upper end. If the derivative is still positive at mu = 64 the
    likelihood has no interior maximum (this happens exactly when every
    channel collided) and the observation is declared degenerate.
    """
    m = observation.n_channels
    if n_channels is not None and n_channels != m:
        raise ValueError("n_channels disagrees with the observation")
    s, c = observation.singles, observation.collisions
    if c < 1:
        raise ValueError("solve_mu needs at least one collided channel")
    if c >= m:
        # With every channel collided the derivative c*(e^mu - 1)/(e^mu -
        # 1 - mu) - M stays positive for all mu, so the likelihood climbs
        # forever; there is nothing to bisect.
        raise DegenerateObservationError(
            f"all {m} channels collided; likelihood has no interior maximum"
        )
    lo, hi = MU_BRACKET_LO, 1.0
    while _dlog_g(hi, s, c, m) > 0.0:
        lo = hi
        hi *= 2.0
        if hi > MU_BRACKET_HI:
            raise DegenerateObservationError(
                f"likelihood still increasing at mu = {MU_BRACKET_HI}"
                f" (i={observation.idle}, s={s}, c={c})"
            )
    while hi - lo > MU_TOL:
        mid = 0.5 * (lo + hi)
        if _dlog_g(mid, s, c, m) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def estimate_active_count(
    observation: SlotObservation, prev_transmit_prob: float, prev_replicas: int
) -> float:
    """ML estimate of how many devices transmitted in the observed slot,
    rescaled by the transmit probability to count all active devices.

    Raises DegenerateObservationError when every channel collided.
    """
    m = observation.n_channels
    if observation.collisions > 0:
        mu = solve_mu(observation)
        transmitted = mu * m / prev_replicas
    else:
        transmitted = observation.singles / prev_replicas
    return transmitted / prev_transmit_prob


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def estimate_backlog(inputs: EstimatorInputs) -> int:
    """Device-count estimate for the next slot: the active-count estimate
    plus the expected arrivals, minus the messages that just left. Clamped
    to at least one device. Degenerate observations propagate as
    DegenerateObservationError for the caller to handle."""
    active = estimate_active_count(
        inputs.observation, inputs.prev_transmit_prob, inputs.prev_replicas
    )
    expected_arrivals = inputs.load_per_channel * inputs.n_channels
    estimate = (
        _round_half_up(active + expected_arrivals) - inputs.observation.successes
    )
    return max(1, estimate)
