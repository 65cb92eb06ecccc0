"""Exact per-slot occupancy combinatorics for replicated multi-channel access.

A slot offers ``n_channels`` parallel channels. Every active device transmits
replicas of its message on ``replicas`` distinct channels chosen uniformly at
random. A channel carrying exactly one replica delivers it unless an erasure
(probability ``erasure_prob``, independent per replica) kills it; a channel
carrying two or more replicas delivers nothing. A tagged device succeeds when
at least one of its replicas is alone on its channel and survives erasure.

The empty-channel distribution seen by the tagged device is an
inclusion-exclusion sum whose terms alternate in sign and can cancel badly,
so it is evaluated in log domain with sign bookkeeping and exact compensated
summation (math.fsum). Success tables for whole ranges of device counts are
built instead with an occupied-count recursion whose terms are all
non-negative: one sweep over device counts per candidate replica number.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

# Raw probabilities may land epsilon outside [0, 1]; anything further out
# than this is treated as catastrophic cancellation, not rounding.
CLAMP_BUDGET = 1e-6

# Strict-improvement margin for the replica search: a larger K must beat the
# incumbent by more than this to displace it, so ties go to the smallest K.
TIE_EPS = 1e-12

TABLE_FORMAT_VERSION = 1

# For K above this, the table sweep stops once the per-channel replica
# intensity N*K/M exceeds MU_CAP: success is already negligible there, so
# such K can never win the argmax. Small K are always swept in full.
K_SCAN_FLOOR = 16
MU_CAP = 8.0


class NumericalInstabilityError(ArithmeticError):
    """A probability landed too far outside [0, 1] to be rounding error."""


class TableMismatchError(ValueError):
    """A stored policy table does not match the requested system."""


def _log_comb(n: int, k: int) -> float:
    if k < 0 or k > n:
        return -math.inf
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _clamp01(value: float, what: str) -> float:
    if 0.0 <= value <= 1.0:
        return value
    if -CLAMP_BUDGET <= value < 0.0:
        return 0.0
    if 1.0 < value <= 1.0 + CLAMP_BUDGET:
        return 1.0
    raise NumericalInstabilityError(f"{what} evaluated to {value!r}")


def _signed_log_sum(log_terms: list[float], signs: list[int]) -> float:
    """Sum of sign_i * exp(log_term_i), scaled to dodge overflow."""
    peak = max(log_terms)
    if peak == -math.inf:
        return 0.0
    scaled = math.fsum(
        s * math.exp(t - peak) for t, s in zip(log_terms, signs)
    )
    return scaled * math.exp(peak)


@dataclass(frozen=True)
class SuccessParams:
    """System seen by one tagged transmitting device.

    n_devices counts every active transmitter, the tagged one included.
    """

    n_devices: int
    n_channels: int
    erasure_prob: float
    replicas: int

    def __post_init__(self) -> None:
        if self.n_devices < 1:
            raise ValueError("n_devices must be >= 1")
        if self.n_channels < 1:
            raise ValueError("n_channels must be >= 1")
        if not 0.0 <= self.erasure_prob < 1.0:
            raise ValueError("erasure_prob must lie in [0, 1)")
        if not 1 <= self.replicas <= self.n_channels:
            raise ValueError("replicas must lie in [1, n_channels]")


def prob_all_occupied(m: int, devices: int, replicas: int) -> float:
    """Probability that `devices` replica placements leave no channel of an
    m-channel pool idle.

    Each device occupies `replicas` distinct channels of the pool uniformly
    at random. Inclusion-exclusion over the set of idle channels.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    if devices == 0:
        return 1.0 if m == 0 else 0.0
    if replicas > m:
        raise ValueError("replicas cannot exceed the pool size")
    if m > replicas * devices:
        return 0.0
    log_denom = _log_comb(m, replicas)
    logs, signs = [], []
    for v in range(m - replicas + 1):
        logs.append(
            _log_comb(m, v)
            + devices * (_log_comb(m - v, replicas) - log_denom)
        )
        signs.append(-1 if v % 2 else 1)
    return _clamp01(_signed_log_sum(logs, signs), "prob_all_occupied")


def _prob_exactly_n_empty_raw(n: int, params: SuccessParams) -> float:
    m = params.n_channels
    k = params.replicas
    d = params.n_devices - 1
    if n < 0 or n > m:
        return 0.0
    if d == 0:
        return 1.0 if n == m else 0.0
    if n > m - k or n < m - k * d:
        return 0.0
    log_denom = _log_comb(m, k)
    log_front = _log_comb(m, n)
    logs, signs = [], []
    for v in range(m - n - k + 1):
        logs.append(
            log_front
            + _log_comb(m - n, v)
            + d * (_log_comb(m - n - v, k) - log_denom)
        )
        signs.append(-1 if v % 2 else 1)
    return _signed_log_sum(logs, signs)


def prob_exactly_n_empty(n: int, params: SuccessParams) -> float:
    """Probability that exactly n channels carry no replica from the
    params.n_devices - 1 devices other than the tagged one."""
    return _clamp01(_prob_exactly_n_empty_raw(n, params), "prob_exactly_n_empty")


def prob_lost_given_empty(
    n: int,
    n_channels: int,
    replicas: int,
    erasure_prob: float,
    placement: str = "subset",
) -> float:
    """Probability the tagged device loses all replicas given the other
    devices left exactly n channels idle.

    A replica on an idle channel survives with probability 1 - erasure_prob;
    a replica on an occupied channel is always lost. With the default
    ``placement="subset"`` the tagged replicas land on distinct channels, so
    the number hitting idle channels is hypergeometric. ``"binomial"``
    pretends the replicas land independently (with replacement); it is kept
    because the closed-form write-up of the loss uses it, but it is only an
    approximation.
    """
    m, k, g = n_channels, replicas, erasure_prob
    if not 0 <= n <= m:
        raise ValueError("n must lie in [0, n_channels]")
    if placement == "subset":
        log_denom = _log_comb(m, k)
        total = math.fsum(
            math.exp(_log_comb(n, a) + _log_comb(m - n, k - a) - log_denom)
            * g**a
            for a in range(max(0, k - (m - n)), min(k, n) + 1)
        )
    elif placement == "binomial":
        total = math.fsum(
            math.comb(k, kf)
            * g ** (k - kf)
            * ((m - n) / m) ** kf
            * (n / m) ** (k - kf)
            for kf in range(max(0, k - n), k + 1)
        )
    else:
        raise ValueError(f"unknown placement model {placement!r}")
    return _clamp01(total, "prob_lost_given_empty")


def prob_success(params: SuccessParams, placement: str = "subset") -> float:
    """Probability the tagged device delivers at least one replica."""
    m, k = params.n_channels, params.replicas
    n_others = params.n_devices - 1
    if n_others == 0:
        return 1.0 - params.erasure_prob**k
    lo = max(0, m - k * n_others)
    hi = m - k
    loss = math.fsum(
        _prob_exactly_n_empty_raw(n, params)
        * prob_lost_given_empty(n, m, k, params.erasure_prob, placement)
        for n in range(lo, hi + 1)
    )
    return _clamp01(1.0 - loss, "prob_success")


def optimal_replicas(
    n_devices: int,
    n_channels: int,
    erasure_prob: float,
    placement: str = "subset",
) -> int:
    """Replica count maximizing the tagged success probability, ties to the
    smallest count. Scans every K in [1, n_channels]."""
    best_k, best_ps = 1, -1.0
    for k in range(1, n_channels + 1):
        ps = prob_success(
            SuccessParams(n_devices, n_channels, erasure_prob, k), placement
        )
        if ps > best_ps + TIE_EPS:
            best_k, best_ps = k, ps
    return best_k


# ---------------------------------------------------------------------------
# Batched table construction.
#
# For a fixed replica count K, the number of channels occupied by d devices
# follows a recursion over d: a new device overlaps o of the j occupied
# channels with probability C(j,o) C(M-j,K-o) / C(M,K) and pushes the count
# to j + K - o. All terms are non-negative, so the sweep is stable, and one
# sweep yields the tagged success probability for every device count at once.
# ---------------------------------------------------------------------------


def _log_comb_table(m: int) -> np.ndarray:
    """t[n, k] = log C(n, k) for 0 <= n, k <= m, -inf where k > n."""
    n = np.arange(m + 1)
    lg = gammaln(n + 1)
    diff = np.clip(n[:, None] - n[None, :], 0, None)
    out = lg[:, None] - lg[None, :] - lg[diff]
    return np.where(n[None, :] > n[:, None], -np.inf, out)


def _loss_given_occupied(
    m: int, k: int, gamma: float, log_comb: np.ndarray
) -> np.ndarray:
    """w[j] = P(tagged loses every replica | j channels already occupied)."""
    j = np.arange(m + 1)
    a = np.arange(k + 1)
    # replicas landing on idle channels: a of k, hypergeometric in (m-j, j)
    log_p = (
        log_comb[m - j[:, None], a[None, :]]
        + log_comb[j[:, None], k - a[None, :]]
        - log_comb[m, k]
    )
    if gamma > 0.0:
        log_gamma_pow = a[None, :] * math.log(gamma)
    else:
        log_gamma_pow = np.where(a[None, :] == 0, 0.0, -np.inf)
    terms = np.exp(log_p + log_gamma_pow)
    return terms.sum(axis=1)


def _overlap_kernel(m: int, k: int, log_comb: np.ndarray) -> np.ndarray:
    """h[o, j] = P(new device overlaps o occupied channels | j occupied)."""
    j = np.arange(m + 1)
    o = np.arange(k + 1)
    log_p = (
        log_comb[j[None, :], o[:, None]]
        + log_comb[m - j[None, :], k - o[:, None]]
        - log_comb[m, k]
    )
    return np.exp(log_p)


def _success_profile(
    m: int, gamma: float, k: int, max_devices: int, log_comb: np.ndarray
) -> np.ndarray:
    """prob_success for n_devices = 1..max_devices at replica count k."""
    w = _loss_given_occupied(m, k, gamma, log_comb)
    h = _overlap_kernel(m, k, log_comb)
    q = np.zeros(m + 1)
    q[0] = 1.0
    out = np.empty(max_devices)
    for d in range(max_devices):
        out[d] = 1.0 - float(q @ w)
        if d + 1 < max_devices:
            nxt = np.zeros_like(q)
            for o in range(k + 1):
                shift = k - o
                seg = q * h[o]
                if shift == 0:
                    nxt += seg
                else:
                    nxt[shift:] += seg[: m + 1 - shift]
            q = nxt
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class PolicyTable:
    """Precomputed success-maximizing replica counts for one system.

    Maps every device count N in [1, n_max] to the replica count K that
    maximizes the tagged success probability (ties to the smallest K) and
    keeps that probability for audit. Lookups beyond n_max fall back to a
    single replica, which is the optimum in the crowded regime.
    """

    n_channels: int
    erasure_prob: float
    n_max: int
    replicas: dict[int, int]
    success: dict[int, float]

    def replicas_for(self, n_devices: int) -> int:
        if n_devices < 1:
            raise ValueError("n_devices must be >= 1")
        if n_devices > self.n_max:
            return 1
        return self.replicas[n_devices]

    def matches(self, n_channels: int, erasure_prob: float) -> bool:
        return (
            self.n_channels == n_channels
            and self.erasure_prob == erasure_prob
        )

    def to_dict(self) -> dict:
        return {
            "version": TABLE_FORMAT_VERSION,
            "M": self.n_channels,
            "gamma": self.erasure_prob,
            "n_max": self.n_max,
            "entries": [
                {"N": n, "K": self.replicas[n], "p_s": self.success[n]}
                for n in range(1, self.n_max + 1)
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "PolicyTable":
        version = payload.get("version")
        if version != TABLE_FORMAT_VERSION:
            raise TableMismatchError(
                f"table format version {version!r} != {TABLE_FORMAT_VERSION}"
            )
        entries = payload["entries"]
        replicas = {int(e["N"]): int(e["K"]) for e in entries}
        success = {int(e["N"]): float(e["p_s"]) for e in entries}
        n_max = int(payload["n_max"])
        if sorted(replicas) != list(range(1, n_max + 1)):
            raise TableMismatchError("table entries do not cover 1..n_max")
        return cls(
            n_channels=int(payload["M"]),
            erasure_prob=float(payload["gamma"]),
            n_max=n_max,
            replicas=replicas,
            success=success,
        )


def build_policy_table(
    n_channels: int,
    erasure_prob: float,
    n_max: int | None = None,
) -> PolicyTable:
    """Tabulate the best replica count for every device count up to n_max
    (default 4 * n_channels)."""
    m = n_channels
    if m < 1:
        raise ValueError("n_channels must be >= 1")
    if not 0.0 <= erasure_prob < 1.0:
        raise ValueError("erasure_prob must lie in [0, 1)")
    if n_max is None:
        n_max = 4 * m
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    log_comb = _log_comb_table(m)
    best_ps = np.full(n_max + 1, -1.0)
    best_k = np.ones(n_max + 1, dtype=int)
    for k in range(1, m + 1):
        if k <= K_SCAN_FLOOR:
            limit = n_max
        else:
            limit = min(n_max, math.ceil(MU_CAP * m / k))
        ps = _success_profile(m, erasure_prob, k, limit, log_comb)
        for n in range(1, limit + 1):
            if ps[n - 1] > best_ps[n] + TIE_EPS:
                best_ps[n] = ps[n - 1]
                best_k[n] = k
    return PolicyTable(
        n_channels=m,
        erasure_prob=erasure_prob,
        n_max=n_max,
        replicas={n: int(best_k[n]) for n in range(1, n_max + 1)},
        success={n: float(best_ps[n]) for n in range(1, n_max + 1)},
    )


def save_policy_table(table: PolicyTable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(table.to_dict(), fh, indent=2)
        fh.write("\n")


def load_policy_table(path) -> PolicyTable:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return PolicyTable.from_dict(payload)
