"""Ground-truth utility ranking, the ranking metrics, and the month-by-month
experiment driver comparing the learned model against the baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .baselines import nb_fit, nb_probabilities, PROXIMITY_SCORERS
from .errors import EmptySetError, InvalidArgumentError
from .em import EmConfig, fit
from .features import CostConfig, CostModel, ValueConfig, utility
from .graph import TemporalGraph, snapshot
from .infer import rank_candidates, rec_probabilities
from .model import as_columns
from .proximity import KatzConfig, ProfileStore, adamic_adar, common_neighbors, jaccard
from .training import LabelingConfig, build_training, candidate_features

ALL_METHODS = ("ours", "nb", "cn", "aa", "katz", "jaccard")


@dataclass(frozen=True)
class EvalConfig:
    k_fraction: float = 0.005
    rho: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.k_fraction <= 1.0):
            raise InvalidArgumentError(f"k_fraction must be in (0,1], got {self.k_fraction}")
        if self.rho <= 0:
            raise InvalidArgumentError(f"rho must be positive, got {self.rho}")


@dataclass(frozen=True)
class MetricsRow:
    method: str
    month: str  # prediction month as str; summary rows use "mean"/"std"
    precision: float
    avg_utility: float


def true_topk(pairs: Sequence[tuple], utilities: Sequence[float], K: int) -> set:
    """The K pairs with the highest realized utilities; deterministic ties."""
    order = sorted(range(len(pairs)), key=lambda i: (-utilities[i], pairs[i]))
    return {pairs[i] for i in order[: min(K, len(order))]}


def precision_at_k(recommended: set, truth: set, K: int) -> float:
    if K < 1:
        raise InvalidArgumentError("K must be >= 1")
    return len(set(recommended) & set(truth)) / K


def average_utility(recommended: Sequence[tuple], utilities: Dict[tuple, float]) -> float:
    """Mean realized utility over the recommended pairs; empty input is an
    error rather than zero so a broken method cannot masquerade as neutral."""
    recommended = list(recommended)
    if not recommended:
        raise EmptySetError("average utility of an empty recommendation is undefined")
    return float(np.mean([utilities[p] for p in recommended]))


def _method_scores(
    method: str,
    view,
    profiles,
    records,
    train_records,
    katz_cfg: KatzConfig,
    em_cfg: EmConfig,
    extra_methods: Optional[dict] = None,
):
    """Scores for the candidate records under one method (higher is better)."""
    if extra_methods and method in extra_methods:
        return np.asarray(extra_methods[method](view, profiles, records), dtype=np.float64)
    if method == "ours":
        theta = fit(train_records, em_cfg).theta
        return rec_probabilities(records, theta)
    if method == "nb":
        model = nb_fit(train_records)
        return nb_probabilities(records, model)
    pairs = [r.pair for r in records]
    if method == "cn":
        return np.array([common_neighbors(view, j, h) for j, h in pairs], dtype=np.float64)
    if method == "aa":
        return np.array([adamic_adar(view, j, h) for j, h in pairs], dtype=np.float64)
    if method == "katz":
        # the candidate records already carry the walk score as S
        return as_columns(records).S.copy()
    if method == "jaccard":
        return np.array([jaccard(profiles, j, h) for j, h in pairs], dtype=np.float64)
    raise InvalidArgumentError(f"unknown method {method!r}")


def run_experiment(
    graph: TemporalGraph,
    profiles: ProfileStore,
    months: Sequence[int],
    methods: Sequence[str],
    eval_cfg: EvalConfig,
    value_cfg: ValueConfig = ValueConfig(),
    katz_cfg: KatzConfig = KatzConfig(),
    em_cfg: EmConfig = EmConfig(),
    extra_methods: Optional[dict] = None,
) -> List[MetricsRow]:
    """For each current month t: train on the (t-1, t) transition, recommend
    among month-t candidates, and score against month-(t+1) outcomes.

    Emits one row per (method, prediction month) and mean/std summary rows
    per method; the std is the population standard deviation over months.
    """
    months = sorted(set(int(t) for t in months))
    max_month = graph.max_month()
    for t in months:
        if t < 2:
            raise InvalidArgumentError(f"current month must be >= 2, got {t}")
        if t + 1 > max_month:
            raise InvalidArgumentError(
                f"prediction month {t + 1} exceeds the data horizon {max_month}"
            )
    if not months:
        raise InvalidArgumentError("at least one current month is required")
    methods = [m.lower() for m in methods]
    for m in methods:
        if m not in ALL_METHODS and not (extra_methods and m in extra_methods):
            raise InvalidArgumentError(f"unknown method {m!r}")

    cost_cfg = CostConfig(rho=eval_cfg.rho)
    label_cfg = LabelingConfig(k_fraction=eval_cfg.k_fraction)
    value_cache = CostModel(graph, value_cfg)
    feature_cache: Dict[int, list] = {}

    def features_at(month: int):
        if month not in feature_cache:
            feature_cache[month] = candidate_features(
                graph, profiles, month, value_cfg, cost_cfg, katz_cfg, value_cache=value_cache
            )
        return feature_cache[month]

    per_method: Dict[str, List[MetricsRow]] = {m: [] for m in methods}
    for t in months:
        train_records = build_training(
            graph, profiles, t, value_cfg, cost_cfg, katz_cfg, label_cfg,
            features=features_at(t - 1),
        )
        records = features_at(t)
        if not records:
            raise EmptySetError(f"no candidates at month {t}")
        pairs = [r.pair for r in records]
        view = snapshot(graph, t)
        outcome_view = snapshot(graph, t + 1)
        utilities = {}
        for rec in records:
            est = 1 if outcome_view.has_edge(*rec.pair) else 0
            utilities[rec.pair] = utility(rec.V, rec.C, est)
        K = label_cfg.k_for(len(records))
        truth = true_topk(pairs, [utilities[p] for p in pairs], K)
        for method in methods:
            scores = _method_scores(
                method, view, profiles, records, train_records, katz_cfg, em_cfg, extra_methods
            )
            rec_list = rank_candidates(pairs, scores, K)
            chosen = rec_list.pairs()
            per_method[method].append(
                MetricsRow(
                    method=method,
                    month=str(t + 1),
                    precision=precision_at_k(set(chosen), truth, K),
                    avg_utility=average_utility(chosen, utilities),
                )
            )

    rows: List[MetricsRow] = []
    for method in methods:
        rows.extend(per_method[method])
    for method in methods:
        precs = np.array([r.precision for r in per_method[method]])
        utils = np.array([r.avg_utility for r in per_method[method]])
        rows.append(MetricsRow(method, "mean", float(precs.mean()), float(utils.mean())))
        rows.append(MetricsRow(method, "std", float(precs.std()), float(utils.std())))
    return rows
