"""Per-slot access controllers: transmit probability and replica count.

Two controllers are genie-aided (they see the true contender count each
slot) and serve as performance references:

  h1  throttle only: p = min(1, M/N), one replica.
  hk  throttle when crowded, replicate when sparse: for N <= M transmit
      always with the success-maximizing replica count from a policy table.

Three are implementable (they see only the previous slot's channel
feedback):

  a1      drive an auxiliary pseudo-backlog Z with the idle/single/collision
          counts and throttle against it, one replica.
  ak      plug the feedback-based backlog estimate into the hk rule.
  ak_mod  like ak while the estimate is below M, but throttle against the
          a1 pseudo-backlog (updated every slot) once it is not.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

from .estimator import (
    DegenerateObservationError,
    EstimatorInputs,
    SlotObservation,
    estimate_backlog,
)
from .occupancy import PolicyTable, TableMismatchError

log = logging.getLogger(__name__)

CONTROLLER_NAMES = ("h1", "hk", "a1", "ak", "ak_mod")

# Drift coefficients must satisfy c*(e-2) + a + b = 0 so the pseudo-backlog
# is driftless at the operating point; this is the checked tolerance.
A1_CONSTRAINT_TOL = 1e-12


@dataclass(frozen=True)
class ControlDecision:
    transmit_prob: float
    replicas: int

    def __post_init__(self) -> None:
        if not 0.0 < self.transmit_prob <= 1.0:
            raise ValueError("transmit_prob must lie in (0, 1]")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")


@dataclass(frozen=True)
class A1State:
    """Auxiliary pseudo-backlog and its drift coefficients.

    z moves by coeff_a per idle channel, coeff_b per singly-occupied channel
    and coeff_c per collided channel, floored at 1. Stability requires
    coeff_a < 0 < coeff_b, coeff_c with c*(e-2) + a + b = 0.
    """

    z: float = 1.0
    coeff_a: float = -(0.5 + (math.e - 2.0))
    coeff_b: float = 0.5
    coeff_c: float = 1.0

    def __post_init__(self) -> None:
        if self.z < 1.0:
            raise ValueError("z must be >= 1")
        if not (self.coeff_a < 0.0 < self.coeff_b and self.coeff_c > 0.0):
            raise ValueError("need coeff_a < 0 and coeff_b, coeff_c > 0")
        drift = self.coeff_c * (math.e - 2.0) + self.coeff_a + self.coeff_b
        if abs(drift) > A1_CONSTRAINT_TOL:
            raise ValueError(f"coefficient constraint violated by {drift!r}")


def h1_decide(true_n: int, n_channels: int) -> ControlDecision:
    """Genie throttle, single replica."""
    if true_n <= n_channels:
        return ControlDecision(1.0, 1)
    return ControlDecision(n_channels / true_n, 1)


def hk_decide(true_n: int, n_channels: int, table: PolicyTable) -> ControlDecision:
    """Genie throttle when crowded, table replication when sparse."""
    if table.n_channels != n_channels:
        raise TableMismatchError(
            f"table built for M={table.n_channels}, system has M={n_channels}"
        )
    if true_n > n_channels:
        return ControlDecision(n_channels / true_n, 1)
    return ControlDecision(1.0, table.replicas_for(max(1, true_n)))


def a1_update(state: A1State, observation: SlotObservation) -> A1State:
    """Advance the pseudo-backlog by the observed channel outcome counts."""
    z = (
        state.z
        + state.coeff_a * observation.idle
        + state.coeff_b * observation.singles
        + state.coeff_c * observation.collisions
    )
    return replace(state, z=max(1.0, z))


def a1_decide(state: A1State, n_channels: int) -> ControlDecision:
    return ControlDecision(min(1.0, n_channels / state.z), 1)


def ak_decide(estimate: int, n_channels: int, table: PolicyTable) -> ControlDecision:
    """hk rule driven by the feedback-based estimate."""
    if table.n_channels != n_channels:
        raise TableMismatchError(
            f"table built for M={table.n_channels}, system has M={n_channels}"
        )
    p = min(1.0, n_channels / estimate)
    return ControlDecision(p, table.replicas_for(estimate))


def ak_modified_decide(
    estimate: int, a1_state: A1State, n_channels: int, table: PolicyTable
) -> ControlDecision:
    """Replicate in the sparse regime, throttle against the pseudo-backlog
    otherwise."""
    if estimate < n_channels:
        return ControlDecision(1.0, table.replicas_for(estimate))
    return a1_decide(a1_state, n_channels)


class Controller:
    """Per-slot decision maker; subclasses override decide/observe."""

    name = "base"
    needs_true_count = False

    def __init__(self, n_channels: int):
        self.n_channels = n_channels
        self.degenerate_slots = 0
        self._last = ControlDecision(1.0, 1)

    @property
    def last_decision(self) -> ControlDecision:
        return self._last

    def decide(self, true_n: int) -> ControlDecision:
        raise NotImplementedError

    def observe(self, observation: SlotObservation) -> None:
        """Feedback hook, called once after every slot."""


class H1Controller(Controller):
    name = "h1"
    needs_true_count = True

    def decide(self, true_n: int) -> ControlDecision:
        self._last = h1_decide(true_n, self.n_channels)
        return self._last


class HKController(Controller):
    name = "hk"
    needs_true_count = True

    def __init__(self, n_channels: int, erasure_prob: float, table: PolicyTable):
        super().__init__(n_channels)
        if not table.matches(n_channels, erasure_prob):
            raise TableMismatchError(
                f"table is for (M={table.n_channels}, gamma={table.erasure_prob}),"
                f" controller needs (M={n_channels}, gamma={erasure_prob})"
            )
        self.table = table

    def decide(self, true_n: int) -> ControlDecision:
        self._last = hk_decide(true_n, self.n_channels, self.table)
        return self._last


class A1Controller(Controller):
    name = "a1"

    def __init__(self, n_channels: int, state: A1State | None = None):
        super().__init__(n_channels)
        self.state = state if state is not None else A1State()

    def decide(self, true_n: int) -> ControlDecision:
        self._last = a1_decide(self.state, self.n_channels)
        return self._last

    def observe(self, observation: SlotObservation) -> None:
        self.state = a1_update(self.state, observation)


class _EstimatingController(Controller):
    """Shared estimate bookkeeping for the feedback-driven replicating
    controllers."""

    def __init__(
        self,
        n_channels: int,
        erasure_prob: float,
        load_per_channel: float,
        table: PolicyTable,
        initial_estimate: int = 1,
    ):
        super().__init__(n_channels)
        if not table.matches(n_channels, erasure_prob):
            raise TableMismatchError(
                f"table is for (M={table.n_channels}, gamma={table.erasure_prob}),"
                f" controller needs (M={n_channels}, gamma={erasure_prob})"
            )
        if initial_estimate < 1:
            raise ValueError("initial_estimate must be >= 1")
        self.table = table
        self.load_per_channel = load_per_channel
        self.estimate = initial_estimate

    def observe(self, observation: SlotObservation) -> None:
        try:
            self.estimate = estimate_backlog(
                EstimatorInputs(
                    observation=observation,
                    prev_transmit_prob=self._last.transmit_prob,
                    prev_replicas=self._last.replicas,
                    n_channels=self.n_channels,
                    load_per_channel=self.load_per_channel,
                )
            )
        except DegenerateObservationError:
            # Every channel collided, so the slot only witnesses that the
            # backlog is large. Reusing the stale estimate can deadlock
            # (K = M for a tiny estimate keeps producing all-collision
            # slots), so grow it instead until the throttled regime kicks in.
            self.degenerate_slots += 1
            self.estimate = max(self.n_channels + 1, 2 * self.estimate)
            log.debug(
                "degenerate observation (all %d channels collided); "
                "estimate pushed to %d",
                self.n_channels,
                self.estimate,
            )


class AKController(_EstimatingController):
    name = "ak"

    def decide(self, true_n: int) -> ControlDecision:
        self._last = ak_decide(self.estimate, self.n_channels, self.table)
        return self._last


class ModifiedAKController(_EstimatingController):
    name = "ak_mod"

    def __init__(
        self,
        n_channels: int,
        erasure_prob: float,
        load_per_channel: float,
        table: PolicyTable,
        initial_estimate: int = 1,
        state: A1State | None = None,
    ):
        super().__init__(
            n_channels, erasure_prob, load_per_channel, table, initial_estimate
        )
        self.state = state if state is not None else A1State()

    def decide(self, true_n: int) -> ControlDecision:
        self._last = ak_modified_decide(
            self.estimate, self.state, self.n_channels, self.table
        )
        return self._last

    def observe(self, observation: SlotObservation) -> None:
        super().observe(observation)
        # The pseudo-backlog keeps integrating feedback even while the
        # replicating branch is active, so the throttle is warm on entry.
        self.state = a1_update(self.state, observation)


def make_controller(
    name: str,
    n_channels: int,
    erasure_prob: float,
    load_per_channel: float,
    table: PolicyTable | None = None,
    initial_estimate: int = 1,
) -> Controller:
    """Build a controller by its config name, constructing a policy table
    on the fly if one is needed and not supplied."""
    if name not in CONTROLLER_NAMES:
        raise ValueError(
            f"unknown controller {name!r}, expected one of {CONTROLLER_NAMES}"
        )
    if name == "h1":
        return H1Controller(n_channels)
    if name == "a1":
        return A1Controller(n_channels)
    if table is None:
        from .occupancy import build_policy_table

        table = build_policy_table(n_channels, erasure_prob)
    if name == "hk":
        return HKController(n_channels, erasure_prob, table)
    if name == "ak":
        return AKController(
            n_channels, erasure_prob, load_per_channel, table, initial_estimate
        )
    return ModifiedAKController(
        n_channels, erasure_prob, load_per_channel, table, initial_estimate
    )
