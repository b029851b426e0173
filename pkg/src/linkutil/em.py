"""Closed-form EM for the latent-factor network: moment initialization,
expectation cache, closed-form maximization, log-likelihood, restarts.

The maximization step applies the closed forms coordinate by coordinate
(the surrogate objective's Hessian is diagonal). The post-switch latent
rate's printed update reduces to the identity, so that coordinate stays at
its initialization value throughout a run; see the mstep docstring.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import (
    DegenerateClassError,
    InitializationError,
    InvalidArgumentError,
    LearningError,
    NumericError,
)
from .model import Columns, Theta, as_columns, gamma_moments, log_joint_integral


@dataclass(frozen=True)
class EmConfig:
    epsilon: float = 1e-6  # convergence threshold on |delta log-likelihood|
    max_iter: int = 500
    restarts: int = 3
    init_sample_fraction: float = 1.0 / 3.0
    seed: int = 0
    init_retries: int = 100

    def __post_init__(self):
        if self.epsilon <= 0:
            raise InvalidArgumentError("epsilon must be positive")
        if self.restarts < 1:
            raise InvalidArgumentError("restarts must be >= 1")
        if not (0.0 < self.init_sample_fraction <= 1.0):
            raise InvalidArgumentError("init_sample_fraction must be in (0, 1]")


@dataclass(frozen=True)
class EStepCache:
    """Per-record quantities under the previous estimate."""

    I: np.ndarray  # 1 where S > N
    Y: np.ndarray
    y: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    G3: np.ndarray  # 0 where the (N, S) piece is empty
    G4: np.ndarray  # 0 where the (S, N) piece is empty


@dataclass
class FitResult:
    theta: Theta
    trace: List[float]  # log-likelihood after init and each iteration, best restart
    restart: int
    all_traces: List[List[float]] = field(default_factory=list)


def _class_masks(R: np.ndarray):
    if np.any(R < 0):
        raise InvalidArgumentError("all records must carry a label")
    return R == 0, R == 1


def init_theta(records, cfg: EmConfig, rng: np.random.Generator) -> Theta:
    """Moment estimates on a uniform subsample: class frequencies for the
    priors, inverse class means for each observed feature's rate, the same
    estimate for both regimes of a proximity rate, and the latent rates set
    so the latent mean is the average of the two proximity means."""
    cols = as_columns(records)
    M = len(cols.V)
    if M == 0:
        raise InvalidArgumentError("cannot initialize from zero records")
    m = max(2, int(round(cfg.init_sample_fraction * M)))
    m = min(m, M)
    for _ in range(cfg.init_retries):
        idx = rng.choice(M, size=m, replace=False)
        R = cols.R[idx]
        if (R == 0).any() and (R == 1).any():
            break
    else:
        raise InitializationError(
            f"no two-class subsample after {cfg.init_retries} draws"
        )
    sub = Columns(cols.V[idx], cols.C[idx], cols.S[idx], cols.N[idx], R)
    values = {}
    p1 = float((sub.R == 1).mean())
    values["p1"] = p1
    values["p0"] = 1.0 - p1
    for r in (0, 1):
        mask = sub.R == r
        count = mask.sum()
        mv, mc = sub.V[mask].mean(), sub.C[mask].mean()
        ms, mn = sub.S[mask].mean(), sub.N[mask].mean()
        values[f"lamV{r}"] = 1.0 / mv
        values[f"lamC{r}"] = 1.0 / mc
        values[f"lamS{r}"] = values[f"lamSp{r}"] = 1.0 / ms
        values[f"lamN{r}"] = values[f"lamNp{r}"] = 1.0 / mn
        values[f"lamL{r}"] = values[f"lamLp{r}"] = 2.0 / (ms + mn)
    return Theta(**values).validate()


def estep(records, theta_k: Theta) -> EStepCache:
    """Closed-form per-piece conditional means of the latent factor under the
    previous estimate, evaluated with each record's own class rates."""
    cols = as_columns(records)
    _class_masks(cols.R)
    S, N = cols.S, cols.N
    G1 = np.empty_like(S)
    G2 = np.empty_like(S)
    G3 = np.empty_like(S)
    G4 = np.empty_like(S)
    for r in (0, 1):
        mask = cols.R == r
        if not mask.any():
            continue
        g1, g2, g3, g4 = gamma_moments(S[mask], N[mask], theta_k.rates(r))
        G1[mask], G2[mask], G3[mask], G4[mask] = g1, g2, g3, g4
    for name, arr in (("G1", G1), ("G2", G2), ("G3", G3), ("G4", G4)):
        bad = ~np.isfinite(arr)
        if bad.any():
            raise NumericError(f"{name} non-finite at record {int(np.argmax(bad))}")
    return EStepCache(
        I=(S > N).astype(np.int64),
        Y=np.maximum(S, N),
        y=np.minimum(S, N),
        G1=G1, G2=G2, G3=G3, G4=G4,
    )


def mstep(records, cache: EStepCache) -> Theta:
    """One maximization step: the closed-form coordinate updates.

    Both mid pieces vanish for records with equal proximity features; their
    contributions (numerator counts and moment terms) are dropped, which is
    the limit of the closed forms as the interval width goes to zero.

    The post-switch latent rate's printed closed form telescopes to the
    previous value (its numerator over a sum of reciprocals), so lamLp
    carries the previous estimate forward unchanged.
    """
    cols = as_columns(records)
    mask0, mask1 = _class_masks(cols.R)
    M = len(cols.V)
    if not mask0.any() or not mask1.any():
        raise DegenerateClassError("both classes must be present for the closed forms")
    values = {}
    p1 = float(mask1.mean())
    values["p1"] = p1
    values["p0"] = 1.0 - p1
    mid3 = (cols.S > cols.N).astype(np.float64)  # (N, S) piece present
    mid4 = (cols.N > cols.S).astype(np.float64)  # (S, N) piece present
    for r, mask in ((0, mask0), (1, mask1)):
        V, C, S, N = cols.V[mask], cols.C[mask], cols.S[mask], cols.N[mask]
        G1, G2, G3, G4 = cache.G1[mask], cache.G2[mask], cache.G3[mask], cache.G4[mask]
        m3, m4 = mid3[mask], mid4[mask]
        count = float(mask.sum())
        upd = {
            f"lamV{r}": count / V.sum(),
            f"lamC{r}": count / C.sum(),
            f"lamS{r}": (1.0 + m4).sum() / (S + G2 + G3 * m3 + S * m4).sum(),
            f"lamSp{r}": (1.0 + m3).sum() / ((S - G2) + (S - G3) * m3).sum(),
            f"lamN{r}": (1.0 + m3).sum() / (N + G2 + N * m3 + G4 * m4).sum(),
            f"lamNp{r}": (1.0 + m4).sum() / ((N - G2) + (N - G4) * m4).sum(),
            f"lamL{r}": (1.0 + m3 + m4).sum()
            / ((S + N) + G2 + (G3 + N) * m3 + (G4 + S) * m4).sum(),
            # telescopes to the previous lamLp: G1 - Y = 1/lamLp_prev
            f"lamLp{r}": count / (G1 - (S + N) + cache.I[mask] * N + (1 - cache.I[mask]) * S).sum(),
        }
        for name, val in upd.items():
            if not np.isfinite(val) or val <= 0.0:
                raise DegenerateClassError(f"update for {name} degenerate: {val}")
        values.update(upd)
    return Theta(**values).validate()


def loglik(records, theta: Theta) -> float:
    """Sum of log joint integrals, each record evaluated at its own label."""
    cols = as_columns(records)
    mask0, mask1 = _class_masks(cols.R)
    total = 0.0
    for r, mask in ((0, mask0), (1, mask1)):
        if not mask.any():
            continue
        li = log_joint_integral(cols.V[mask], cols.C[mask], cols.S[mask], cols.N[mask], theta.rates(r))
        bad = ~np.isfinite(li)
        if bad.any():
            record_idx = int(np.flatnonzero(mask)[np.argmax(bad)])
            raise NumericError(f"log-likelihood non-finite at record {record_idx}")
        total += float(li.sum())
    return total


def _run_once(cols: Columns, cfg: EmConfig, rng: np.random.Generator):
    theta = init_theta(cols, cfg, rng)
    H = loglik(cols, theta)
    trace = [H]
    for _ in range(cfg.max_iter):
        cache = estep(cols, theta)
        theta = mstep(cols, cache)
        H_new = loglik(cols, theta)
        trace.append(H_new)
        if abs(H_new - H) <= cfg.epsilon:
            break
        H = H_new
    return theta, trace


def fit(records, cfg: EmConfig) -> FitResult:
    """Initialize-iterate-converge, repeated over restarts; keeps the restart
    with the largest final log-likelihood (ties: lowest restart index)."""
    cols = as_columns(records)
    if len(cols.V) == 0:
        raise InvalidArgumentError("fit requires a non-empty record set")
    _class_masks(cols.R)
    if not (cols.R == 0).any() or not (cols.R == 1).any():
        raise DegenerateClassError("fit requires both classes present")
    best = None
    failures = []
    traces = []
    for restart in range(cfg.restarts):
        rng = np.random.Generator(np.random.Philox(key=cfg.seed).jumped(restart))
        try:
            theta, trace = _run_once(cols, cfg, rng)
        except (DegenerateClassError, InitializationError, NumericError) as exc:
            failures.append(f"restart {restart}: {exc}")
            traces.append([])
            continue
        traces.append(trace)
        if best is None or trace[-1] > best[2]:
            best = (restart, theta, trace[-1], trace)
    if best is None:
        raise LearningError("all restarts failed: " + "; ".join(failures))
    restart, theta, _, trace = best
    return FitResult(theta=theta, trace=trace, restart=restart, all_traces=traces)
