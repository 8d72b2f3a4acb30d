"""Estimate quality metrics and estimate-to-truth matching.

Squared-error and beamforming metrics are per user per trial; aggregation
averages over users within a trial first, then over trials.  Matching pairs
estimated locations with true ones so that label permutation is not scored
as estimation error.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import PolarLocation


def nmse(a_true: np.ndarray, a_hat: np.ndarray) -> float:
    """Normalized squared error ||a_true - a_hat||**2 / ||a_true||**2."""
    a_true = np.asarray(a_true)
    a_hat = np.asarray(a_hat)
    if a_true.shape != a_hat.shape:
        raise ValueError("vectors must share a shape")
    denom = np.linalg.norm(a_true) ** 2
    if denom == 0:
        raise ValueError("true vector is zero")
    return float(np.linalg.norm(a_true - a_hat) ** 2 / denom)


def beamforming_gain(a_true: np.ndarray, a_hat: np.ndarray) -> float:
    """Squared normalized inner product between estimate-based beamformer and truth.

    Equals 1 when a_hat is any nonzero complex multiple of a_true, 0 when
    orthogonal; invariant to the scale of either argument.
    """
    nt = np.linalg.norm(a_true)
    nh = np.linalg.norm(a_hat)
    if nt == 0 or nh == 0:
        raise ValueError("vectors must be nonzero")
    return float(abs(np.vdot(a_hat / nh, np.asarray(a_true) / nt)) ** 2)


def _direction(p: PolarLocation) -> np.ndarray:
    ce = math.cos(p.elevation)
    return np.array(
        [ce * math.sin(p.azimuth), math.sin(p.elevation), ce * math.cos(p.azimuth)]
    )


def location_cost(a: PolarLocation, b: PolarLocation, d_scale: float) -> float:
    """Angle between direction vectors plus distance gap normalized by d_scale."""
    cosang = float(np.clip(np.dot(_direction(a), _direction(b)), -1.0, 1.0))
    return math.acos(cosang) + abs(a.distance - b.distance) / d_scale


def match_estimates(
    true_locs: Sequence[PolarLocation],
    est_locs: Sequence[PolarLocation],
    d_scale: float,
) -> list[Optional[int]]:
    """Minimum-total-cost assignment of estimates to true locations.

    Returns ``perm`` with ``perm[i]`` the estimate index assigned to true
    location i, or None when there are fewer estimates than truths.
    """
    if not true_locs:
        return []
    if not est_locs:
        return [None] * len(true_locs)
    cost = np.array(
        [[location_cost(t, e, d_scale) for e in est_locs] for t in true_locs]
    )
    rows, cols = linear_sum_assignment(cost)
    perm: list[Optional[int]] = [None] * len(true_locs)
    for r, c in zip(rows, cols):
        perm[r] = int(c)
    return perm


@dataclass(frozen=True)
class TrialRecord:
    """Per-(method, SNR, trial, user) evaluation row.

    Location errors are NaN for methods that do not estimate locations;
    ``peaks_found`` counts the angular peaks recovered in that trial (always
    the user count for the non-parametric baselines).
    """

    method: str
    snr_db: float
    trial: int
    ue: int
    nmse: float
    bf_gain: float
    az_err_rad: float
    el_err_rad: float
    dist_err_m: float
    peaks_found: int


@dataclass(frozen=True)
class AggregateRecord:
    method: str
    snr_db: float
    mean_nmse: float
    median_nmse: float
    mean_bf_gain: float
    trials_ok: int
    trials_failed: int


@dataclass(frozen=True)
class MetricReport:
    """All per-trial rows plus their per-(method, SNR) aggregates."""

    records: tuple[TrialRecord, ...]
    aggregates: tuple[AggregateRecord, ...]


def trial_failed(rows: Sequence[TrialRecord], k_ues: int) -> bool:
    """A trial fails when any user went unscored or fewer peaks than users were found."""
    if len(rows) < k_ues:
        return True
    return any(math.isnan(r.nmse) or r.peaks_found < k_ues for r in rows)


def aggregate(
    records: Sequence[TrialRecord],
    methods: Sequence[str],
    snr_db_list: Sequence[float],
    k_ues: int,
) -> tuple[AggregateRecord, ...]:
    """Fold trial records into per-(method, SNR) summaries.

    Failed trials are counted and excluded; surviving trials contribute their
    user-averaged NMSE and beamforming gain, summarized by mean and median
    over trials.
    """
    out = []
    for method in methods:
        for snr in snr_db_list:
            by_trial: dict[int, list[TrialRecord]] = {}
            for r in records:
                if r.method == method and r.snr_db == snr:
                    by_trial.setdefault(r.trial, []).append(r)
            nmses, gains = [], []
            failed = 0
            for trial in sorted(by_trial):
                rows = by_trial[trial]
                if trial_failed(rows, k_ues):
                    failed += 1
                    continue
                nmses.append(float(np.mean([r.nmse for r in rows])))
                gains.append(float(np.mean([r.bf_gain for r in rows])))
            out.append(
                AggregateRecord(
                    method=method,
                    snr_db=snr,
                    mean_nmse=float(np.mean(nmses)) if nmses else math.nan,
                    median_nmse=float(np.median(nmses)) if nmses else math.nan,
                    mean_bf_gain=float(np.mean(gains)) if gains else math.nan,
                    trials_ok=len(nmses),
                    trials_failed=failed,
                )
            )
    return tuple(out)
