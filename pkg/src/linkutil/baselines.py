"""Comparison rankers: neighborhood/walk/profile scores and a naive Bayes
model over the four observed features with exponential class-conditionals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateClassError, InvalidArgumentError
from .graph import GraphSnapshot
from .infer import RecommendationList, rank_candidates
from .model import as_columns
from .proximity import KatzConfig, ProfileStore, adamic_adar, common_neighbors, jaccard, katz

PROXIMITY_SCORERS = ("cn", "aa", "katz", "jaccard")


@dataclass(frozen=True)
class NaiveBayesModel:
    p0: float
    p1: float
    lamV0: float
    lamV1: float
    lamC0: float
    lamC1: float
    lamS0: float
    lamS1: float
    lamN0: float
    lamN1: float

    def rates(self, r: int):
        s = str(int(r))
        return (
            getattr(self, "lamV" + s),
            getattr(self, "lamC" + s),
            getattr(self, "lamS" + s),
            getattr(self, "lamN" + s),
        )


def rank_by_proximity(
    view: GraphSnapshot,
    profiles: ProfileStore,
    candidates,
    scorer: str,
    K: int,
    katz_cfg: KatzConfig = KatzConfig(),
) -> RecommendationList:
    """Top-K candidates under one of the proximity scores; ties break on
    lexicographic pair order, as everywhere else."""
    scorer = scorer.lower()
    if scorer not in PROXIMITY_SCORERS:
        raise InvalidArgumentError(f"unknown scorer {scorer!r}; expected one of {PROXIMITY_SCORERS}")
    pairs = list(candidates)
    if scorer == "cn":
        scores = [float(common_neighbors(view, j, h)) for j, h in pairs]
    elif scorer == "aa":
        scores = [adamic_adar(view, j, h) for j, h in pairs]
    elif scorer == "katz":
        scores = [katz(view, j, h, katz_cfg) for j, h in pairs]
    else:
        scores = [jaccard(profiles, j, h) for j, h in pairs]
    return rank_candidates(pairs, scores, K)


def nb_fit(records) -> NaiveBayesModel:
    """Class frequencies for the priors and inverse class means for each
    feature's exponential rate."""
    cols = as_columns(records)
    if np.any(cols.R < 0):
        raise InvalidArgumentError("all records must carry a label")
    mask1 = cols.R == 1
    mask0 = cols.R == 0
    if not mask0.any() or not mask1.any():
        raise DegenerateClassError("naive Bayes needs both classes present")
    p1 = float(mask1.mean())
    values = dict(p0=1.0 - p1, p1=p1)
    for r, mask in ((0, mask0), (1, mask1)):
        for name, col in (("V", cols.V), ("C", cols.C), ("S", cols.S), ("N", cols.N)):
            values[f"lam{name}{r}"] = float(1.0 / col[mask].mean())
    return NaiveBayesModel(**values)


def nb_log_joint(record, model: NaiveBayesModel, r: int) -> float:
    lamV, lamC, lamS, lamN = model.rates(r)
    prior = model.p1 if r == 1 else model.p0
    return (
        np.log(prior)
        + np.log(lamV) - lamV * record.V
        + np.log(lamC) - lamC * record.C
        + np.log(lamS) - lamS * record.S
        + np.log(lamN) - lamN * record.N
    )


def nb_probability(record, model: NaiveBayesModel) -> float:
    """Posterior for the positive class, computed from the log-joint gap."""
    g0 = nb_log_joint(record, model, 0)
    g1 = nb_log_joint(record, model, 1)
    return float(1.0 / (1.0 + np.exp(g0 - g1)))


def nb_probabilities(records, model: NaiveBayesModel) -> np.ndarray:
    cols = as_columns(records)
    g = {}
    for r in (0, 1):
        lamV, lamC, lamS, lamN = model.rates(r)
        prior = model.p1 if r == 1 else model.p0
        g[r] = (
            np.log(prior)
            + np.log(lamV) - lamV * cols.V
            + np.log(lamC) - lamC * cols.C
            + np.log(lamS) - lamS * cols.S
            + np.log(lamN) - lamN * cols.N
        )
    return 1.0 / (1.0 + np.exp(g[0] - g[1]))
