"""Frame-level average precision and ROC AUC.

AP is the step-wise sum over distinct score thresholds of
``(recall_t - recall_prev) * precision_t``; tied scores form one threshold.
The sum is accumulated in exact rationals (up to ``EXACT_THRESHOLDS``
thresholds) so the result is the correctly rounded value.  AUC is the
Mann-Whitney statistic with tied pairs counted as 1/2.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy.stats import rankdata

__all__ = ["average_precision", "roc_auc", "broadcast_to_frames"]

# above this many distinct scores AP falls back to compensated float summation
EXACT_THRESHOLDS = 20000


def _check(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(np.int64)
    if s.shape != y.shape:
        raise ValueError(f"{s.size} scores vs {y.size} labels")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    return s, y


def average_precision(scores, labels) -> float:
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    # last index of each block of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp_t = tp[ends]
    gain = np.diff(np.r_[0, tp_t])
    hit = gain > 0
    g, t, c = gain[hit].tolist(), tp_t[hit].tolist(), (ends[hit] + 1).tolist()
    if len(ends) <= EXACT_THRESHOLDS:
        return float(sum((Fraction(a * b, n) for a, b, n in zip(g, t, c)), Fraction(0)) / n_pos)
    return math.fsum(a * b / n for a, b, n in zip(g, t, c)) / n_pos


def roc_auc(scores, labels) -> float:
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(s)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def broadcast_to_frames(snippet_scores, n_frames: int, frames_per_snippet: int = 16) -> np.ndarray:
    """Repeat each snippet score over its window and cut to ``n_frames``."""
    s = np.asarray(snippet_scores, dtype=np.float64).ravel()
    if n_frames > s.size * frames_per_snippet:
        raise ValueError(f"{n_frames} frames exceed {s.size} snippets of {frames_per_snippet}")
    return np.repeat(s, frames_per_snippet)[:n_frames]
