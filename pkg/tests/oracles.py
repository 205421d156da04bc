"""Independent brute-force oracles used by the metric and acceptance tests.

These deliberately avoid the library's vectorized code paths: AUROC counts
score pairs one by one, average precision walks the ranking, retrieval sorts
candidates per query in plain Python, and gradients come from central
finite differences of the loss value alone.
"""

from __future__ import annotations

import numpy as np
import torch


def auroc_pair_count(scores, labels) -> float:
    """Exhaustive O(P*N) pair count with ties worth half a win."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def ap_rank_walk(scores, labels) -> float:
    """Average precision by walking the descending-score ranking.

    Ties keep the stable input order, matching the implementation contract.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits = 0
    precisions = []
    for rank, idx in enumerate(order, start=1):
        if labels[idx] == 1:
            hits += 1
            precisions.append(hits / rank)
    return float(np.mean(precisions))


def recall_full_sort(
    query_ids, query_mat, target_ids, target_mat, truth, k_list,
    exclude_self=False,
):
    """Recall@K via a per-query full sort in plain Python."""
    out = {}
    n_hit = {k: 0 for k in k_list}
    for qid, q in zip(query_ids, np.asarray(query_mat, dtype=np.float64)):
        entries = []
        for tid, t in zip(target_ids, np.asarray(target_mat, dtype=np.float64)):
            if exclude_self and tid == qid:
                continue
            entries.append((-float(q @ t), tid))
        entries.sort()
        ranked = [tid for _, tid in entries]
        for k in k_list:
            if any(tid in truth[qid] for tid in ranked[:k]):
                n_hit[k] += 1
    for k in k_list:
        out[k] = n_hit[k] / len(query_ids)
    return out


def finite_difference_grad(fn, tensor: torch.Tensor, h: float = 1e-3) -> torch.Tensor:
    """Central finite differences of a scalar function, coordinate by coordinate."""
    flat = tensor.detach().clone().reshape(-1)
    grad = torch.zeros_like(flat)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + h
        f_plus = float(fn(flat.reshape(tensor.shape)))
        flat[i] = orig - h
        f_minus = float(fn(flat.reshape(tensor.shape)))
        flat[i] = orig
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad.reshape(tensor.shape)


def relative_error(a: torch.Tensor, b: torch.Tensor) -> float:
    denom = max(float(a.norm()), float(b.norm()), 1e-12)
    return float((a - b).norm()) / denom
