"""Large-system limits: stationary backlog intensity lower bounds.

As the channel count grows with the per-channel arrival rate held at
``lam``, the per-slot dynamics concentrate and the stationary number of
active devices per channel approaches a deterministic intensity eta. For the
single-replica genie controller eta solves eta * exp(-eta) = lam / (1 -
gamma), i.e. eta = -W0(-lam / (1 - gamma)) with W0 the principal Lambert
branch. With K replicas per message the delivered fraction of an
eta-intensity slot is 1 - (1 - (1-gamma) exp(-K eta))^K and the stationary
intensity is the smallest fixed point of lam = eta * P_success(eta, K).

The reported figure of merit is eta_star = eta - lam: the mean backlog per
channel carried over from previous slots, which any finite system can only
exceed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

INV_E = math.exp(-1.0)

# Halley iteration for W0: residual |w e^w - x| <= W_RESIDUAL_TOL * max(1,|x|)
W_RESIDUAL_TOL = 1e-12
_W_STEP_TOL = 1e-14

ETA_TOL = 1e-12
DEFAULT_K_MAX = 32


class UnstableLoadError(ValueError):
    """The offered load is outside the controller's stability region."""


@dataclass(frozen=True)
class AsymptoteResult:
    """Limiting backlog intensity: eta_star = total_intensity - load."""

    eta_star: float
    k_star: int
    total_intensity: float


def lambert_w0(x: float) -> float:
    """Principal Lambert W branch: w with w * exp(w) = x, for x >= -1/e.

    Halley iterations from a piecewise initial guess (series near the branch
    point, log-based for large arguments).
    """
    if math.isnan(x):
        raise ValueError("lambert_w0 needs a real argument")
    if x < -INV_E - 1e-15:
        raise ValueError(f"lambert_w0 defined on [-1/e, inf), got {x!r}")
    if x <= -INV_E:
        return -1.0
    if x == 0.0:
        return 0.0
    if x < -0.25:
        # branch-point expansion in p = sqrt(2 (e x + 1))
        p = math.sqrt(2.0 * (math.e * x + 1.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p**3
    elif x < math.e:
        w = x / (1.0 + x)
    else:
        lx = math.log(x)
        w = lx - math.log(lx)
    for _ in range(60):
        ew = math.exp(w)
        f = w * ew - x
        denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0)
        step = f / denom
        w -= step
        if abs(step) <= _W_STEP_TOL * max(1.0, abs(w)):
            break
    if abs(w * math.exp(w) - x) > W_RESIDUAL_TOL * max(1.0, abs(x)):
        raise ArithmeticError(f"lambert_w0 failed to converge at x={x!r}")
    return w


def h1_limit(load_per_channel: float, erasure_prob: float) -> AsymptoteResult:
    """Limiting backlog intensity of the single-replica genie throttle.

    Only defined strictly inside the stability region
    load < (1 - erasure_prob) / e.
    """
    lam, gamma = load_per_channel, erasure_prob
    if lam < 0.0:
        raise ValueError("load_per_channel must be >= 0")
    if not 0.0 <= gamma < 1.0:
        raise ValueError("erasure_prob must lie in [0, 1)")
    if lam >= (1.0 - gamma) * INV_E:
        raise UnstableLoadError(
            f"load {lam} is not below the stability limit "
            f"{(1.0 - gamma) * INV_E:.6f}"
        )
    eta = -lambert_w0(-lam / (1.0 - gamma))
    return AsymptoteResult(eta_star=eta - lam, k_star=1, total_intensity=eta)


def _delivered_rate(eta: float, replicas: int, erasure_prob: float) -> float:
    """eta * P(success) at intensity eta with the given replica count."""
    miss = 1.0 - (1.0 - erasure_prob) * math.exp(-replicas * eta)
    return eta * (1.0 - miss**replicas)


def hk_fixed_point(
    load_per_channel: float, erasure_prob: float, replicas: int
) -> float:
    """Smallest intensity eta with eta * P_success(eta, replicas) = load.

    Raises UnstableLoadError when the delivered-rate curve never reaches the
    load for this replica count.
    """
    lam, gamma, k = load_per_channel, erasure_prob, replicas
    if k < 1:
        raise ValueError("replicas must be >= 1")
    if lam < 0.0:
        raise ValueError("load_per_channel must be >= 0")
    if not 0.0 <= gamma < 1.0:
        raise ValueError("erasure_prob must lie in [0, 1)")
    if lam == 0.0:
        return 0.0

    def excess(eta: float) -> float:
        return _delivered_rate(eta, k, gamma) - lam

    # The delivered rate is unimodal in eta; locate its peak by golden
    # section, then bisect on [lam, peak] where the first crossing lives
    # (for eta < lam the rate is below eta < lam already).
    lo, hi = lam, max(4.0, 50.0 / k, 2.0 * lam)
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = _delivered_rate(c, k, gamma), _delivered_rate(d, k, gamma)
    while b - a > 1e-12 * max(1.0, b):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = _delivered_rate(c, k, gamma)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = _delivered_rate(d, k, gamma)
    peak = 0.5 * (a + b)
    if excess(peak) < 0.0:
        raise UnstableLoadError(
            f"load {lam} exceeds the delivered-rate peak for K={k}"
        )
    lo, hi = lam, peak
    if excess(lo) >= 0.0:
        return lo
    while hi - lo > ETA_TOL:
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def hk_limit(
    load_per_channel: float,
    erasure_prob: float,
    k_max: int = DEFAULT_K_MAX,
    selection: str = "min",
) -> AsymptoteResult:
    """Best limiting intensity over replica counts 1..k_max.

    selection="min" (default) keeps the replica count whose fixed point is
    smallest, which is the one a backlog-minimizing system would run.
    selection="literal_max" keeps the largest fixed point among feasible
    replica counts instead; it is retained for comparison because the
    original optimality statement reads that way, and is never below the
    default.
    """
    if selection not in ("min", "literal_max"):
        raise ValueError(f"unknown selection {selection!r}")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    lam = load_per_channel
    best_eta, best_k = None, None
    for k in range(1, k_max + 1):
        try:
            eta = hk_fixed_point(lam, erasure_prob, k)
        except UnstableLoadError:
            continue
        if best_eta is None:
            best_eta, best_k = eta, k
        elif selection == "min" and eta < best_eta - ETA_TOL:
            best_eta, best_k = eta, k
        elif selection == "literal_max" and eta > best_eta + ETA_TOL:
            best_eta, best_k = eta, k
    if best_eta is None:
        raise UnstableLoadError(
            f"no replica count in [1, {k_max}] can carry load {lam} "
            f"at erasure_prob {erasure_prob}"
        )
    return AsymptoteResult(
        eta_star=best_eta - lam, k_star=best_k, total_intensity=best_eta
    )
