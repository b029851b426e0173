"""Labeled training records from two consecutive snapshots.

Features come from the earlier snapshot, establishment outcomes from the
later one; the label marks the records that land in the realized top-K by
utility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

from .errors import EmptySetError, InvalidArgumentError
from .features import (
    CostConfig,
    CostModel,
    FeatureRecord,
    ValueConfig,
    floor_feature,
    link_cost,
    link_values_batch,
    utility,
)
from .graph import TemporalGraph, snapshot, two_hop_candidates
from .proximity import KatzConfig, ProfileStore, jaccard, katz_scores_batch


@dataclass(frozen=True)
class LabelingConfig:
    k_fraction: float = 0.005  # K as a fraction of the candidate count

    def __post_init__(self):
        if not (0.0 < self.k_fraction <= 1.0):
            raise InvalidArgumentError(f"k_fraction must be in (0,1], got {self.k_fraction}")

    def k_for(self, n_candidates: int) -> int:
        return min(n_candidates, max(1, math.ceil(self.k_fraction * n_candidates)))


def candidate_features(
    graph: TemporalGraph,
    profiles: ProfileStore,
    month: int,
    value_cfg: ValueConfig,
    cost_cfg: CostConfig,
    katz_cfg: KatzConfig,
    value_cache: Optional[CostModel] = None,
) -> List[FeatureRecord]:
    """Unlabeled feature records for every two-hop candidate at `month`,
    in lexicographic pair order."""
    view = snapshot(graph, month)
    cands = two_hop_candidates(view)
    if not cands:
        return []
    if value_cache is None:
        value_cache = CostModel(graph, value_cfg)
    values = link_values_batch(view, cands, value_cfg)
    costs = value_cache.costs_batch(cands, month, cost_cfg.rho)
    katz_scores = katz_scores_batch(view, cands, katz_cfg)
    records = []
    for (j, h), V_raw, C_raw, S_raw in zip(cands, values, costs, katz_scores):
        records.append(FeatureRecord(
            V=floor_feature(V_raw),
            C=floor_feature(C_raw),
            S=floor_feature(S_raw),
            N=floor_feature(jaccard(profiles, j, h)),
            pair=(j, h),
        ))
    return records


def build_training(
    graph: TemporalGraph,
    profiles: ProfileStore,
    t: int,
    value_cfg: ValueConfig,
    cost_cfg: CostConfig,
    katz_cfg: KatzConfig,
    label_cfg: LabelingConfig,
    value_cache: Optional[CostModel] = None,
    features: Optional[List[FeatureRecord]] = None,
) -> List[FeatureRecord]:
    """Records for candidates at snapshot t-1 with outcomes read at t.

    The label is 1 exactly for the ceil(k_fraction * count) records ranking
    highest by realized utility (ties: utility descending, then pair
    ascending). Returned in lexicographic pair order.
    """
    if t < 2:
        raise InvalidArgumentError(f"training month must be >= 2, got {t}")
    if features is None:
        features = candidate_features(
            graph, profiles, t - 1, value_cfg, cost_cfg, katz_cfg, value_cache=value_cache
        )
    if not features:
        raise EmptySetError(f"no two-hop candidates at month {t - 1}")
    outcome_view = snapshot(graph, t)
    utilities = []
    established = []
    for rec in features:
        j, h = rec.pair
        est = 1 if outcome_view.has_edge(j, h) else 0
        established.append(est)
        utilities.append(utility(rec.V, rec.C, est))
    K = label_cfg.k_for(len(features))
    order = sorted(range(len(features)), key=lambda i: (-utilities[i], features[i].pair))
    positive = set(order[:K])
    labeled = [
        FeatureRecord(V=r.V, C=r.C, S=r.S, N=r.N, label=1 if i in positive else 0, pair=r.pair)
        for i, r in enumerate(features)
    ]
    return labeled
