"""Text-evaluation utilities: overlap scores, loss binarization, ranking.

Counting is exact: LCS and AUROC are computed with integer arithmetic
and divided once at the end, so results match brute-force pair counting
bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateVarianceError,
    NonFiniteError,
    ShapeMismatchError,
    SingleClassError,
    TooFewSamplesError,
)


def lcs_length(a, b) -> int:
    """Length of the longest common subsequence of two token sequences."""
    a, b = tuple(a), tuple(b)
    if not a or not b:
        return 0
    if len(b) > len(a):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, reference) -> float:
    """F-measure 2*LCS / (|candidate| + |reference|); 0.0 if either is empty."""
    candidate, reference = tuple(candidate), tuple(reference)
    if not candidate or not reference:
        return 0.0
    return 2.0 * lcs_length(candidate, reference) / (len(candidate) + len(reference))


def binarize_loss(candidate, reference, threshold: float = 0.3) -> int:
    """1 when the overlap score strictly exceeds threshold, else 0.

    The comparison is strict, so a score exactly equal to the threshold
    maps to 0.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold!r}")
    return 1 if rouge_l(candidate, reference) > threshold else 0


def lexical_similarity(generations) -> float:
    """Mean pairwise overlap score over unordered generation pairs."""
    gens = [tuple(g) for g in generations]
    if len(gens) < 2:
        raise TooFewSamplesError("lexical similarity needs at least 2 generations")
    total = 0.0
    count = 0
    for i in range(len(gens)):
        for j in range(i + 1, len(gens)):
            total += rouge_l(gens[i], gens[j])
            count += 1
    return total / count


def auroc(scores, labels) -> float:
    """Probability a positive outranks a negative, ties counted half.

    Computed from integer pair counts (2U = 2*wins + ties) on one sort,
    so the result is exactly what brute-force pair enumeration gives.
    Raises SingleClassError when labels are all 0 or all 1.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or labels.shape != scores.shape:
        raise ShapeMismatchError(
            f"scores and labels must be equal-length 1-D, got {scores.shape} "
            f"and {labels.shape}"
        )
    if scores.size == 0:
        raise SingleClassError("empty score list")
    if not np.isfinite(scores).all():
        raise NonFiniteError("scores must be finite")
    as_float = np.asarray(labels, dtype=np.float64)
    if not np.isin(as_float, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    labels = as_float.astype(np.int64)
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError(
            f"need both classes, got {n_pos} positive / {n_neg} negative"
        )
    order = np.argsort(scores, kind="stable")
    s_sorted = scores[order]
    l_sorted = labels[order]
    # Tie groups over the ascending sort; negatives strictly below each
    # group are full wins, negatives inside the group are half wins.
    _, starts = np.unique(s_sorted, return_index=True)
    bounds = np.append(starts, len(s_sorted))
    pos_per = np.add.reduceat(l_sorted, starts)
    count_per = np.diff(bounds)
    neg_per = count_per - pos_per
    neg_below = np.concatenate(([0], np.cumsum(neg_per)[:-1]))
    two_u = int(np.sum(pos_per * (2 * neg_below + neg_per)))
    return two_u / (2 * n_pos * n_neg)


def pearson(x, y) -> float:
    """Sample Pearson correlation of two equal-length sequences."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.shape != x.shape:
        raise ShapeMismatchError(
            f"inputs must be equal-length 1-D, got {x.shape} and {y.shape}"
        )
    if x.size < 2:
        raise TooFewSamplesError("pearson needs at least 2 observations")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise NonFiniteError("pearson inputs must be finite")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.einsum("i,i->", dx, dx))
    syy = float(np.einsum("i,i->", dy, dy))
    if sxx <= 0.0 or syy <= 0.0:
        raise DegenerateVarianceError("pearson undefined for a constant sequence")
    sxy = float(np.einsum("i,i->", dx, dy))
    # With equal spreads use the common value: sqrt(s*s) can land 1 ulp
    # away from s, and x-vs-x must give exactly 1.0.
    denom = sxx if sxx == syy else math.sqrt(sxx * syy)
    return sxy / denom


@dataclass(frozen=True)
class EvalRecord:
    """One evaluated instance: generations plus optional scores."""

    instance_id: str
    generations: tuple
    uncertainty: float | None = None
    loss: float | None = None
    target: object = None
