"""Classification metrics and statistical reporting.

AUROC uses the rank (Mann-Whitney) formulation with ties counted as half a
win, so it equals the exhaustive pair-count definition exactly. AUPR is
non-interpolated average precision with ties broken by stable input order.
Macro variants are unweighted means over one-vs-rest columns. Confidence
intervals are mean +/- 1.96 standard errors; group comparisons use
two-sided t-tests (Welch for unpaired samples).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import stdtr

from .errors import ConfigurationError, UndefinedMetricError


def _binary_inputs(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or labels.shape != scores.shape:
        raise ConfigurationError(
            f"binary metric expects matching 1-D arrays, got {scores.shape} "
            f"and {labels.shape}"
        )
    if not np.all((labels == 0) | (labels == 1)):
        raise ConfigurationError("binary labels must be 0/1")
    return scores, labels.astype(np.int64)


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks in ascending score order, ties sharing their mean rank."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def binary_auroc(scores, labels) -> float:
    """P(random positive outscores random negative), ties counted half."""
    scores, labels = _binary_inputs(scores, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC undefined: only one class present")
    ranks = _average_ranks(scores)
    rank_sum = ranks[labels == 1].sum()
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def binary_aupr(scores, labels) -> float:
    """Non-interpolated average precision, descending scores, stable ties."""
    scores, labels = _binary_inputs(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        raise UndefinedMetricError("AUPR undefined: only one class present")
    order = np.argsort(-scores, kind="mergesort")
    sorted_labels = labels[order]
    cum_pos = np.cumsum(sorted_labels)
    ranks = np.arange(1, len(labels) + 1)
    precision_at_rank = cum_pos / ranks
    return float(precision_at_rank[sorted_labels == 1].mean())


def _one_vs_rest_columns(scores, labels):
    """Yield (column scores, 0/1 column labels) for macro averaging.

    scores: [n, C]; labels: either integer class ids [n] or a binary
    indicator matrix [n, C].
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 2:
        raise ConfigurationError("macro metric expects an n x C score matrix")
    n, c = scores.shape
    if labels.ndim == 1:
        if labels.shape[0] != n:
            raise ConfigurationError("labels length does not match scores")
        onehot = np.zeros((n, c), dtype=np.int64)
        valid = (labels >= 0) & (labels < c)
        if not valid.all():
            raise ConfigurationError("class ids outside [0, C)")
        onehot[np.arange(n), labels.astype(np.int64)] = 1
        labels = onehot
    elif labels.shape != scores.shape:
        raise ConfigurationError("label matrix shape does not match scores")
    for col in range(c):
        yield scores[:, col], labels[:, col]


def auroc(scores, labels, mode: str = "binary") -> float:
    """AUROC; ``mode='macro'`` averages one-vs-rest columns unweighted."""
    if mode == "binary":
        return binary_auroc(scores, labels)
    if mode == "macro":
        values = [binary_auroc(s, l) for s, l in _one_vs_rest_columns(scores, labels)]
        return float(np.mean(values))
    raise ConfigurationError(f"unknown AUROC mode {mode!r}")


def aupr(scores, labels, mode: str = "binary") -> float:
    """Average precision; ``mode='macro'`` averages one-vs-rest columns."""
    if mode == "binary":
        return binary_aupr(scores, labels)
    if mode == "macro":
        values = [binary_aupr(s, l) for s, l in _one_vs_rest_columns(scores, labels)]
        return float(np.mean(values))
    raise ConfigurationError(f"unknown AUPR mode {mode!r}")


def confidence_interval(values) -> tuple[float, float, float]:
    """(mean, ci_low, ci_high) with a 1.96 x standard-error half width.

    The standard error uses the n-1 sample standard deviation.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or len(values) < 2:
        raise ConfigurationError("confidence interval needs >= 2 values")
    mean = float(values.mean())
    se = float(values.std(ddof=1)) / math.sqrt(len(values))
    return mean, mean - 1.96 * se, mean + 1.96 * se


def two_sided_t_test(a, b, paired: bool = False) -> float:
    """Two-sided p-value comparing two samples; Welch variant when unpaired.

    Degenerate zero-variance cases follow a documented convention: equal
    means give p = 1.0, unequal means give p = 0.0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or len(a) < 2 or len(b) < 2:
        raise ConfigurationError("t-test needs 1-D samples with >= 2 values each")
    if paired:
        if len(a) != len(b):
            raise ConfigurationError("paired t-test needs equal-length samples")
        diff = a - b
        sd = diff.std(ddof=1)
        if sd == 0.0:
            return 1.0 if diff.mean() == 0.0 else 0.0
        t_stat = diff.mean() / (sd / math.sqrt(len(diff)))
        df = len(diff) - 1
    else:
        va, vb = a.var(ddof=1), b.var(ddof=1)
        if va == 0.0 and vb == 0.0:
            return 1.0 if a.mean() == b.mean() else 0.0
        na, nb = len(a), len(b)
        se_sq = va / na + vb / nb
        t_stat = (a.mean() - b.mean()) / math.sqrt(se_sq)
        df = se_sq**2 / (
            (va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1)
        )
    # stdtr is the Student t CDF; two-sided tail doubles the upper tail.
    return float(2.0 * (1.0 - stdtr(df, abs(t_stat))))
