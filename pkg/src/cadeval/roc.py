"""Breast-level ROC curve, trapezoidal AUC and percentile-bootstrap intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .bootstrap import BootstrapConfig, bootstrap, percentile_interval
from .errors import DegenerateInputError, InputError

# Pointwise ROC band is read on fpr = 0.00, 0.01, ..., 1.00.
DEFAULT_FPR_GRID = tuple(round(i / 100, 2) for i in range(101))


@dataclass(frozen=True)
class RocCurve:
    """Operating points from the strictest threshold down to the loosest.

    The first point is ``(0, 0)`` with threshold ``inf``; each following
    point corresponds to one distinct score, with tied cases switching
    class together. The last point is ``(1, 1)``.
    """

    thresholds: tuple[float, ...]
    fpr: tuple[float, ...]
    tpr: tuple[float, ...]
    auc: float
    n_pos: int
    n_neg: int

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr, self.tpr))


@dataclass(frozen=True)
class RocBand:
    fpr: tuple[float, ...]
    tpr: tuple[float, ...]
    lo: tuple[float, ...]
    hi: tuple[float, ...]


@dataclass(frozen=True)
class AucBootstrap:
    auc: float
    lo: float
    hi: float
    replicates: int
    seed: int
    interval: float
    degenerate_redraws: int
    band: RocBand | None = None


def as_arrays(cases: Iterable) -> tuple[np.ndarray, np.ndarray]:
    """Split ``(score, label)`` pairs into validated score and label arrays."""
    cases = list(cases)
    if not cases:
        raise DegenerateInputError("no cases given")
    scores = np.array([float(s) for s, _ in cases], dtype=np.float64)
    raw = [l for _, l in cases]
    if any(l not in (0, 1) or isinstance(l, float) and not l.is_integer() for l in raw):
        raise InputError("labels must be 0 or 1")
    labels = np.array(raw, dtype=np.int64)
    if not np.all(np.isfinite(scores)):
        raise InputError("scores must be finite")
    missing = [name for name, v in (("positive", 1), ("negative", 0)) if not np.any(labels == v)]
    if missing:
        raise DegenerateInputError(f"ROC needs both classes; no {missing[0]} cases present")
    return scores, labels


def _groups(scores: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ascending sort order, distinct scores and the start index of each tie group."""
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    return order, s[starts], starts


def roc_curve(cases: Iterable) -> RocCurve:
    """ROC curve of ``(score, label)`` pairs with exact trapezoidal AUC.

    Raises:
        DegenerateInputError: if either class is absent.
    """
    scores, labels = as_arrays(cases)
    order, distinct, starts = _groups(scores)
    pos = np.add.reduceat(labels[order], starts)[::-1]
    neg = np.add.reduceat(1 - labels[order], starts)[::-1]
    tp = np.r_[0, np.cumsum(pos)]
    fp = np.r_[0, np.cumsum(neg)]
    n_pos, n_neg = int(tp[-1]), int(fp[-1])
    # integer trapezoid numerator, doubled; one rounding at the end
    twice_area = int(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])))
    return RocCurve(
        thresholds=(math.inf, *distinct[::-1].tolist()),
        fpr=tuple((fp / n_neg).tolist()),
        tpr=tuple((tp / n_pos).tolist()),
        auc=twice_area / (2 * n_pos * n_neg),
        n_pos=n_pos,
        n_neg=n_neg,
    )


def _weighted_group_counts(counts, labels, order, starts):
    """Per-replicate positive/negative weight in each ascending tie group."""
    c = counts[:, order]
    lab = labels[order]
    pos = np.add.reduceat(c * lab, starts, axis=1)
    neg = np.add.reduceat(c * (1 - lab), starts, axis=1)
    return pos, neg


def _weighted_auc(pos: np.ndarray, neg: np.ndarray) -> np.ndarray:
    below = np.cumsum(neg, axis=1) - neg
    twice = np.sum(pos * (2 * below + neg), axis=1)
    return twice / (2.0 * pos.sum(axis=1) * neg.sum(axis=1))


def read_tpr(fpr: np.ndarray, tpr: np.ndarray, grid: Sequence[float]) -> np.ndarray:
    """Read ROC curves (one per row) at fixed fpr values.

    Curves are linearly interpolated between consecutive points; on a
    vertical segment the highest tpr is taken.
    """
    fpr = np.atleast_2d(fpr)
    tpr = np.atleast_2d(tpr)
    rows = np.arange(fpr.shape[0])
    last = fpr.shape[1] - 1
    out = np.empty((fpr.shape[0], len(grid)))
    for j, x in enumerate(grid):
        k = np.sum(fpr <= x, axis=1) - 1
        k = np.clip(k, 0, last)
        nxt = np.minimum(k + 1, last)
        f0, f1 = fpr[rows, k], fpr[rows, nxt]
        t0, t1 = tpr[rows, k], tpr[rows, nxt]
        step = f1 - f0
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(step > 0, (x - f0) / np.where(step > 0, step, 1.0), 0.0)
        out[:, j] = t0 + np.clip(frac, 0.0, 1.0) * (t1 - t0)
    return out


def _weighted_roc_points(pos: np.ndarray, neg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # strictest threshold first, with the (0, 0) origin prepended
    zeros = np.zeros((pos.shape[0], 1))
    tp = np.concatenate([zeros, np.cumsum(pos[:, ::-1], axis=1)], axis=1)
    fp = np.concatenate([zeros, np.cumsum(neg[:, ::-1], axis=1)], axis=1)
    return fp / fp[:, -1:], tp / tp[:, -1:]


def auc_bootstrap(
    cases: Iterable,
    cfg: BootstrapConfig = BootstrapConfig(),
    fpr_grid: Sequence[float] | None = None,
    n_jobs: int = 1,
) -> AucBootstrap:
    """AUC with a percentile-bootstrap interval over resampled cases.

    Each replicate resamples the ``(score, label)`` list with replacement.
    Replicates that lose a class are redrawn so exactly ``cfg.replicates``
    AUC values enter the percentiles; the number of redraws is reported.

    Args:
        cases: ``(score, label)`` pairs, one per breast.
        cfg: Replicates, interval width and seed.
        fpr_grid: If given, also compute a pointwise tpr band on this grid.
        n_jobs: Worker threads; the result does not depend on it.
    """
    scores, labels = as_arrays(cases)
    full = roc_curve(zip(scores.tolist(), labels.tolist()))
    order, _, starts = _groups(scores)

    def valid(counts):
        w_pos = counts @ labels
        return (w_pos > 0) & (w_pos < counts.shape[1])

    def statistic(counts):
        pos, neg = _weighted_group_counts(counts, labels, order, starts)
        auc = _weighted_auc(pos, neg)
        if fpr_grid is None:
            return auc[:, None]
        f, t = _weighted_roc_points(pos, neg)
        return np.concatenate([auc[:, None], read_tpr(f, t, fpr_grid)], axis=1)

    values, redraws = bootstrap(len(scores), cfg, statistic, valid, n_jobs)
    lo, hi = percentile_interval(values, cfg)
    band = None
    if fpr_grid is not None:
        tpr = read_tpr(np.array(full.fpr), np.array(full.tpr), fpr_grid)[0]
        band = RocBand(
            fpr=tuple(float(x) for x in fpr_grid),
            tpr=tuple(tpr.tolist()),
            lo=tuple(lo[1:].tolist()),
            hi=tuple(hi[1:].tolist()),
        )
    return AucBootstrap(
        auc=full.auc,
        lo=float(lo[0]),
        hi=float(hi[0]),
        replicates=cfg.replicates,
        seed=cfg.seed,
        interval=cfg.interval,
        degenerate_redraws=redraws,
        band=band,
    )
