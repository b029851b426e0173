"""Recommendation probability and top-K ranking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import InvalidArgumentError, NumericError
from .model import Theta, as_columns, log_joint_integral


@dataclass(frozen=True)
class RecommendationList:
    """Ranked candidate pairs with scores, truncated at K; scores are
    non-increasing and ties break on lexicographic pair order."""

    items: Tuple  # ((pair, score), ...)
    K: int

    def pairs(self):
        return [pair for pair, _ in self.items]

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)


def rec_probability(record, theta: Theta) -> float:
    """Probability that the candidate should be recommended, via the ratio of
    the two classes' joint integrals, in log space."""
    li0 = float(log_joint_integral(record.V, record.C, record.S, record.N, theta.rates(0)))
    li1 = float(log_joint_integral(record.V, record.C, record.S, record.N, theta.rates(1)))
    if not np.isfinite(li0) and not np.isfinite(li1):
        raise NumericError(f"both class integrals vanished for record {record}")
    return float(1.0 / (1.0 + np.exp(li0 - li1)))


def rec_probabilities(records, theta: Theta) -> np.ndarray:
    """Vectorized scores for a candidate batch."""
    cols = as_columns(records)
    li0 = log_joint_integral(cols.V, cols.C, cols.S, cols.N, theta.rates(0))
    li1 = log_joint_integral(cols.V, cols.C, cols.S, cols.N, theta.rates(1))
    bad = ~(np.isfinite(li0) | np.isfinite(li1))
    if bad.any():
        raise NumericError(f"both class integrals vanished at record {int(np.argmax(bad))}")
    return 1.0 / (1.0 + np.exp(li0 - li1))


def rank_candidates(pairs: Sequence[tuple], scores: Sequence[float], K: int) -> RecommendationList:
    """Top-K by score, deterministic: score descending then pair ascending."""
    if K < 1:
        raise InvalidArgumentError(f"K must be >= 1, got {K}")
    order = sorted(range(len(pairs)), key=lambda i: (-scores[i], pairs[i]))
    top = order[: min(K, len(order))]
    return RecommendationList(items=tuple((pairs[i], float(scores[i])) for i in top), K=K)


def recommend_topk(candidates, theta: Theta, K: int) -> RecommendationList:
    """Score every candidate record and keep the top K."""
    if K < 1:
        raise InvalidArgumentError(f"K must be >= 1, got {K}")
    records = list(candidates)
    if not records:
        return RecommendationList(items=(), K=K)
    scores = rec_probabilities(records, theta)
    pairs = [r.pair for r in records]
    return rank_candidates(pairs, scores, K)
