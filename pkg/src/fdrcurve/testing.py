"""P-values, curve-normalized p-values and the Benjamini-Hochberg step-up rule.

Hypotheses are one-sided, ``H_{i,theta}: theta_i >= theta``, so small
statistics are evidence against them and the p-value at location ``theta``
is ``F_i(X_i - theta)``.

The normalized p-value of hypothesis ``i`` for a step curve is the largest
ratio ``F_i(X_i - theta_j) / q_j`` over its jump points.  The region left of
the first jump, where the curve equals 1, is not part of the maximum: over
that region the ratio climbs towards 1 as ``theta -> -inf`` for every
hypothesis, which would flatten every normalized p-value to at least 1.
Restricting to jump points makes the one-jump curve ``(0, q)`` reproduce
standard BH at level ``q`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .distributions import DomainError, FamilyBatch, LocationFamily
from .fdr_curve import DegenerateCurveError, TargetCurve, curve_from_constraints, write_csv


@dataclass(frozen=True)
class HypothesisSet:
    """Observed statistics with a shared family or one family per hypothesis."""

    statistics: np.ndarray
    families: Union[LocationFamily, tuple]
    ids: tuple = ()

    def __post_init__(self):
        stats = np.asarray(self.statistics, dtype=float).ravel()
        if stats.size < 1:
            raise DomainError("a hypothesis set needs at least one statistic")
        object.__setattr__(self, "statistics", stats)
        if not isinstance(self.families, LocationFamily):
            fams = tuple(self.families)
            if len(fams) != stats.size:
                raise DomainError(f"{len(fams)} families for {stats.size} statistics")
            object.__setattr__(self, "families", fams)
        if self.ids and len(self.ids) != stats.size:
            raise DomainError("ids must match the statistics in length")

    @property
    def m(self) -> int:
        return int(self.statistics.size)

    def batch(self) -> FamilyBatch:
        return FamilyBatch(self.families, self.m)


@dataclass(frozen=True)
class RejectionResult:
    """Outcome of a step-up run.

    ``selected`` holds 0-based indices in increasing order; ``cutoff_rank``
    equals ``len(selected)``.
    """

    selected: np.ndarray
    normalized_pvalues: np.ndarray
    cutoff_rank: int

    @property
    def m(self) -> int:
        return int(self.normalized_pvalues.size)

    @property
    def mask(self) -> np.ndarray:
        out = np.zeros(self.m, dtype=bool)
        out[self.selected] = True
        return out

    def summary(self) -> dict:
        return {"m": self.m, "rejections": int(self.selected.size), "cutoff_rank": int(self.cutoff_rank)}

    def write_report(self, path, statistics, ids=None) -> None:
        """CSV ``index,x,normalized_pvalue,selected`` (plus ``id`` when given)."""
        idx = np.arange(self.m)
        header = ["index", "x", "normalized_pvalue", "selected"]
        cols = [idx, statistics, self.normalized_pvalues, self.mask]
        if ids:
            header.insert(1, "id")
            cols.insert(1, [str(i) for i in ids])
        write_csv(path, header, cols)


def p_value(x, family: LocationFamily, theta):
    return family.cdf(np.asarray(x, dtype=float) - theta)


def _curve(curve) -> TargetCurve:
    curve = curve if isinstance(curve, TargetCurve) else curve_from_constraints(curve)
    if curve.is_degenerate:
        raise DegenerateCurveError("the curve needs at least one level below 1")
    return curve


def normalized_p_values(data: HypothesisSet, curve) -> np.ndarray:
    """``max_j F_i(X_i - theta_j) / q_j`` for every hypothesis (may exceed 1)."""
    curve = _curve(curve)
    return normalize_statistics(data.statistics, data.batch(), curve)


def normalize_statistics(stats: np.ndarray, batch: FamilyBatch, curve: TargetCurve) -> np.ndarray:
    """Normalized p-values for statistics of shape ``(..., m)``."""
    out = None
    for t, q in zip(curve.thetas, curve.levels):
        r = batch.cdf(stats - t) / q
        out = r if out is None else np.maximum(out, r)
    return out


def _step_up_count(sorted_p: np.ndarray, q: float) -> np.ndarray:
    """Largest ``i`` with ``P_(i) <= i q / m`` along the last axis (0 if none)."""
    m = sorted_p.shape[-1]
    ranks = np.arange(1, m + 1)
    ok = sorted_p <= ranks * q / m
    last = m - np.argmax(ok[..., ::-1], axis=-1)
    return np.where(ok.any(axis=-1), last, 0)


def bh_standard(pvalues: Sequence[float], q: float) -> RejectionResult:
    """Step-up BH at level ``q``; ties at the cutoff are rejected."""
    p = np.asarray(pvalues, dtype=float).ravel()
    if p.size == 0:
        raise DomainError("bh_standard needs at least one p-value")
    if np.any(np.isnan(p)):
        raise DomainError("p-values must not be NaN")
    if not (0 < q <= 1):
        raise DomainError(f"q must lie in (0, 1], got {q!r}")
    sorted_p = np.sort(p)
    k = int(_step_up_count(sorted_p, q))
    if k == 0:
        selected = np.empty(0, dtype=int)
    else:
        selected = np.flatnonzero(p <= sorted_p[k - 1])
    return RejectionResult(selected, p, k)


def bh_standard_batch(pvalues: np.ndarray, q: float) -> np.ndarray:
    """Rejection masks of BH for each row of a ``(n, m)`` array."""
    p = np.asarray(pvalues, dtype=float)
    sorted_p = np.sort(p, axis=-1)
    k = _step_up_count(sorted_p, q)
    cutoff = np.take_along_axis(sorted_p, np.maximum(k - 1, 0)[..., None], axis=-1)
    return (p <= cutoff) & (k[..., None] > 0)


def bh_generalized(data: HypothesisSet, curve) -> RejectionResult:
    """BH at level 1 applied to the curve-normalized p-values."""
    return bh_standard(normalized_p_values(data, curve), 1.0)


def fdp_curve(selected, true_thetas, grid) -> np.ndarray:
    """``#{i in S : theta_i >= theta} / max(1, |S|)`` at every grid point."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise DomainError("the grid must not be empty")
    sel = np.asarray(selected, dtype=int).ravel()
    chosen = np.sort(np.asarray(true_thetas, dtype=float)[sel])
    false = chosen.size - np.searchsorted(chosen, grid, side="left")
    return false / max(1, chosen.size)


def fdp_curve_batch(masks: np.ndarray, true_thetas, grid) -> np.ndarray:
    """FDP curves for each row of a ``(n, m)`` boolean rejection array; shape ``(n, len(grid))``."""
    masks = np.asarray(masks, dtype=bool)
    null = np.asarray(true_thetas, dtype=float)[None, :] >= np.asarray(grid, dtype=float)[:, None]
    false = masks.astype(float) @ null.T.astype(float)
    return false / np.maximum(1, masks.sum(axis=1))[:, None]


__all__ = [
    "HypothesisSet",
    "RejectionResult",
    "p_value",
    "normalized_p_values",
    "normalize_statistics",
    "bh_standard",
    "bh_standard_batch",
    "bh_generalized",
    "fdp_curve",
    "fdp_curve_batch",
]
