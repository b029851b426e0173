"""Structural and nodal proximity scores.

The walk-based index counts walks (not simple paths) via repeated sparse
adjacency application from the source row, truncated at k_max; the profile
similarity is intersection-over-union on term sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NotFoundError
from .graph import GraphSnapshot


@dataclass(frozen=True)
class KatzConfig:
    beta: float = 0.05
    k_max: int = 4

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise InvalidArgumentError(f"beta must be in (0,1), got {self.beta}")
        if self.k_max < 2:
            raise InvalidArgumentError(f"k_max must be >= 2, got {self.k_max}")


class ProfileStore:
    """Per-user sets of encoded integer term ids; sets may be empty."""

    def __init__(self, terms: dict):
        self._terms = {int(u): frozenset(int(t) for t in ts) for u, ts in terms.items()}

    def terms(self, user: int) -> frozenset:
        try:
            return self._terms[user]
        except KeyError:
            raise NotFoundError(f"user {user} has no profile") from None

    def __contains__(self, user: int) -> bool:
        return user in self._terms

    def users(self):
        return sorted(self._terms)

    def __len__(self):
        return len(self._terms)


def walk_counts_from(view: GraphSnapshot, j: int, k_max: int) -> np.ndarray:
    """Walk counts of length 1..k_max from j to every user; shape (k_max, n).

    Float64 accumulation is exact for counts below 2**53.
    """
    n = view.n
    src = view.index_of(j)
    counts = np.zeros((k_max, n), dtype=np.float64)
    vec = np.zeros(n, dtype=np.float64)
    vec[src] = 1.0
    for k in range(k_max):
        nxt = np.zeros(n, dtype=np.float64)
        nz = np.nonzero(vec)[0]
        for i in nz:
            nxt[view.neighbor_indices(i)] += vec[i]
        counts[k] = nxt
        vec = nxt
    return counts


def katz(view: GraphSnapshot, j: int, h: int, cfg: KatzConfig) -> float:
    """Sum over k of beta^k times the number of length-k walks between j and h."""
    if j == h:
        raise InvalidArgumentError("katz requires two distinct users")
    counts = walk_counts_from(view, j, cfg.k_max)
    tgt = view.index_of(h)
    total = 0.0
    for k in range(cfg.k_max):
        total += cfg.beta ** (k + 1) * counts[k, tgt]
    return total


def katz_scores_batch(view: GraphSnapshot, pairs, cfg: KatzConfig) -> np.ndarray:
    """Walk scores for many pairs at once: sources are grouped and walk
    counts propagated through the sparse adjacency in dense chunks."""
    adjacency = view.adjacency_csr()
    pairs = list(pairs)
    by_source: dict = {}
    for i, (j, h) in enumerate(pairs):
        by_source.setdefault(view.index_of(j), []).append((i, view.index_of(h)))
    sources = sorted(by_source)
    n = view.n
    out = np.zeros(len(pairs), dtype=np.float64)
    chunk = 256
    for lo in range(0, len(sources), chunk):
        batch = sources[lo:lo + chunk]
        vec = np.zeros((n, len(batch)), dtype=np.float64)
        for col, s in enumerate(batch):
            vec[s, col] = 1.0
        acc = np.zeros_like(vec)
        cur = vec
        w = 1.0
        for _ in range(cfg.k_max):
            cur = adjacency @ cur
            w *= cfg.beta
            acc += w * cur
        for col, s in enumerate(batch):
            for i, tgt in by_source[s]:
                out[i] = acc[tgt, col]
    return out


def jaccard(profiles: ProfileStore, j: int, h: int) -> float:
    """Intersection over union of the two term sets; 0 when both are empty."""
    rj, rh = profiles.terms(j), profiles.terms(h)
    union = len(rj | rh)
    if union == 0:
        return 0.0
    return len(rj & rh) / union


def common_neighbors(view: GraphSnapshot, j: int, h: int) -> int:
    if j == h:
        raise InvalidArgumentError("common_neighbors requires two distinct users")
    a = view.neighbor_indices(view.index_of(j))
    b = view.neighbor_indices(view.index_of(h))
    return int(np.intersect1d(a, b, assume_unique=True).size)


def adamic_adar(view: GraphSnapshot, j: int, h: int) -> float:
    """Common neighbors weighted by 1/ln(degree); natural log.

    Every common neighbor is adjacent to both endpoints, so its degree is
    at least 2 and the log is positive.
    """
    if j == h:
        raise InvalidArgumentError("adamic_adar requires two distinct users")
    a = view.neighbor_indices(view.index_of(j))
    b = view.neighbor_indices(view.index_of(h))
    shared = np.intersect1d(a, b, assume_unique=True)
    total = 0.0
    for z in shared:
        deg = len(view.neighbor_indices(int(z)))
        total += 1.0 / math.log(deg)
    return total
