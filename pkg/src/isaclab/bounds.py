"""Eigenvalue-pairing MSE lower bounds, water-filling, and bound-achieving precoders.

All bound functions take descending eigenvalue vectors rather than matrices, so
the pairing between waveform and target spectra is explicit in the signature.
The ``c`` keyword threads the same paper/physical normalization constant used
by the analytic MSE (1 in paper mode, frame length in physical mode).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .hermitian import eigh_desc

__all__ = [
    "WaterfillResult",
    "lower_bound_full",
    "lower_bound_rank_def",
    "water_fill",
    "aligned_precoder",
    "asymptotic_floor",
]


def _check_desc_positive(v: np.ndarray, name: str, strictly_positive: bool):
    if np.any(np.diff(v) > 1e-12 * max(1.0, float(np.abs(v).max(initial=0.0)))):
        raise ValueError(f"{name} must be sorted in descending order")
    if strictly_positive and np.any(v <= 0):
        raise ValueError(f"{name} must be strictly positive")
    if not strictly_positive and np.any(v < 0):
        raise ValueError(f"{name} must be non-negative")


def lower_bound_full(
    sig_p: np.ndarray,
    sig_gt: np.ndarray,
    delta_s2: float,
    n_rx: int,
    c: float = 1.0,
) -> float:
    """Full-rank MSE lower bound: N_R * sum_i (c/delta^2 sig_p[i] + 1/sig_gt[i])^{-1}.

    Tight exactly when the waveform covariance shares the target covariance's
    (descending-ordered) eigenvectors.
    """
    sig_p = np.asarray(sig_p, dtype=float)
    sig_gt = np.asarray(sig_gt, dtype=float)
    if sig_p.shape != sig_gt.shape:
        raise DimensionError(
            f"eigenvalue vectors must have equal length, got {sig_p.size} and {sig_gt.size}"
        )
    _check_desc_positive(sig_p, "sig_p", strictly_positive=False)
    _check_desc_positive(sig_gt, "sig_gt", strictly_positive=True)
    return n_rx * float(np.sum(1.0 / (c / delta_s2 * sig_p + 1.0 / sig_gt)))


def lower_bound_rank_def(
    sig_p_topk: np.ndarray,
    sig_gt: np.ndarray,
    delta_s2: float,
    n_rx: int,
    c: float = 1.0,
) -> float:
    """Rank-deficient bound: top-K paired terms plus the unserved target tail.

    N_R * [ sum_{k<=K} (c/delta^2 sig_p[k] + 1/sig_gt[k])^{-1} + sum_{i>K} sig_gt[i] ].
    """
    sig_p_topk = np.asarray(sig_p_topk, dtype=float)
    sig_gt = np.asarray(sig_gt, dtype=float)
    k = sig_p_topk.size
    if k >= sig_gt.size:
        raise DimensionError(
            f"need K < N_T for the rank-deficient bound, got K={k}, N_T={sig_gt.size}"
        )
    _check_desc_positive(sig_p_topk, "sig_p_topk", strictly_positive=False)
    _check_desc_positive(sig_gt, "sig_gt", strictly_positive=True)
    head = np.sum(1.0 / (c / delta_s2 * sig_p_topk + 1.0 / sig_gt[:k]))
    tail = np.sum(sig_gt[k:])
    return n_rx * float(head + tail)


@dataclass(frozen=True)
class WaterfillResult:
    """Optimal power split across target eigendirections.

    ``allocations`` are in watts, ordered like the target spectrum;
    ``water_level`` is the 1/sqrt(lambda) term of the closed form, with lambda
    the multiplier of the total-power constraint.
    """

    allocations: np.ndarray
    water_level: float
    active_count: int


def water_fill(sig_gt: np.ndarray, delta_s: float, p_total: float) -> WaterfillResult:
    """Water-filling over the target spectrum for the trace-inverse objective.

    Allocation i is [w - delta^2 / sig_gt[i]]^+ with the level w bracketed by
    monotone bisection and then snapped to the exact closed form on the
    identified active set, so the budget is met to machine precision.
    """
    sig_gt = np.asarray(sig_gt, dtype=float)
    _check_desc_positive(sig_gt, "sig_gt", strictly_positive=True)
    if p_total <= 0:
        raise ValueError("p_total must be positive")
    if delta_s <= 0:
        raise ValueError("delta_s must be positive")
    floors = delta_s**2 / sig_gt  # ascending since sig_gt is descending
    lo = float(floors.min())
    hi = lo + p_total
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        total = np.sum(np.clip(mid - floors, 0.0, None))
        if total > p_total:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * max(hi, 1e-300):
            break
    active = 0.5 * (lo + hi) > floors
    # exact level on the active set
    level = (p_total + floors[active].sum()) / active.sum()
    alloc = np.where(active, np.clip(level - floors, 0.0, None), 0.0)
    return WaterfillResult(
        allocations=alloc,
        water_level=float(level / delta_s),
        active_count=int(active.sum()),
    )


def aligned_precoder(r_gt, allocations: np.ndarray, rank: int):
    """Precoder whose covariance shares the target covariance's eigenbasis.

    Columns are the ``rank`` leading eigenvectors of R_gT scaled by the square
    roots of the corresponding allocations, so the analytic MSE of the result
    meets the matching lower bound by construction.
    """
    from .design import Precoder

    allocations = np.asarray(allocations, dtype=float)
    if allocations.size < rank:
        raise ValueError(f"need at least {rank} allocations, got {allocations.size}")
    if np.any(allocations < 0):
        raise ValueError("allocations must be non-negative")
    ed = eigh_desc(r_gt)
    cols = ed.eigenvectors[:, :rank] * np.sqrt(allocations[:rank])
    return Precoder(p_comm=cols, p_aug=None)


def asymptotic_floor(sig_gt: np.ndarray, rank: int, n_rx: int = 1) -> float:
    """Unlimited-power MSE floor: N_R times the unserved target eigenvalue tail."""
    sig_gt = np.asarray(sig_gt, dtype=float)
    if not (0 <= rank <= sig_gt.size):
        raise ValueError(f"rank must be in [0, {sig_gt.size}], got {rank}")
    return n_rx * float(np.sum(sig_gt[rank:]))
