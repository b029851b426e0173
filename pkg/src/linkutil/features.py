"""Link value, link cost, and utility.

A user's network impact is the decay-weighted count of their 1..X-degree
neighbors; a link's value is the change in total user value caused by
adding that link. The generic path re-runs truncated BFS for the users
whose neighborhoods can change; at locality 2 the delta reduces to a
closed form over reach-2 sets, which the batch helpers use.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError
from .graph import GraphSnapshot, TemporalGraph, _bfs_counts, snapshot

FEATURE_FLOOR = 1e-9  # keeps every feature on the strictly positive support


@dataclass(frozen=True)
class ValueConfig:
    alpha: float = 0.5
    locality: int = 4  # X: farthest neighborhood ring that counts
    unit_impact: float = 1.0  # default m_j
    intrinsic: float = 0.0  # default intrinsic value
    m_overrides: dict = field(default_factory=dict)
    intrinsic_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise InvalidArgumentError(f"alpha must be in (0,1), got {self.alpha}")
        if self.locality < 1:
            raise InvalidArgumentError(f"locality must be >= 1, got {self.locality}")
        if self.unit_impact <= 0:
            raise InvalidArgumentError("unit_impact must be positive")

    def m_of(self, view, user: int) -> float:
        if user in self.m_overrides:
            return float(self.m_overrides[user])
        return view.user_m(user, self.unit_impact)

    def intrinsic_of(self, view, user: int) -> float:
        if user in self.intrinsic_overrides:
            return float(self.intrinsic_overrides[user])
        return view.user_intrinsic(user, self.intrinsic)

    def uniform_m(self, graph_or_view) -> Optional[float]:
        """The shared per-unit impact when no user deviates from it, else None."""
        if self.m_overrides:
            return None
        user_m = getattr(graph_or_view, "user_m", None)
        if isinstance(user_m, dict) and user_m:
            return None
        if hasattr(graph_or_view, "_graph") and graph_or_view._graph.user_m:
            return None
        return self.unit_impact


@dataclass(frozen=True)
class CostConfig:
    rho: float = 1.0  # robustness multiplier on the cost estimate

    def __post_init__(self):
        if self.rho <= 0:
            raise InvalidArgumentError(f"rho must be positive, got {self.rho}")


@dataclass(frozen=True)
class FeatureRecord:
    """One candidate link's features; the training/inference unit.

    V, C, S, N are strictly positive after flooring; the label, when
    present, is 0 or 1. Synthetic records may carry no pair.
    """

    V: float
    C: float
    S: float
    N: float
    label: Optional[int] = None
    pair: Optional[tuple] = None

    def __post_init__(self):
        for name in ("V", "C", "S", "N"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                raise InvalidArgumentError(f"feature {name} must be positive and finite, got {val}")
        if self.label is not None and self.label not in (0, 1):
            raise InvalidArgumentError(f"label must be 0 or 1, got {self.label}")


def floor_feature(x: float) -> float:
    return max(float(x), FEATURE_FLOOR)


def _impact_from_counts(counts, alpha: float) -> float:
    total = 0.0
    w = 1.0
    for c in counts:
        w *= alpha
        total += w * c
    return total


def network_impact(view: GraphSnapshot, user: int, cfg: ValueConfig) -> float:
    """Decay-weighted neighborhood size: sum over x of alpha^x |N_x|."""
    idx = view.index_of(user)
    counts = _bfs_counts(view, idx, cfg.locality)
    return _impact_from_counts(counts, cfg.alpha)


def user_value(view: GraphSnapshot, user: int, cfg: ValueConfig) -> float:
    return cfg.intrinsic_of(view, user) + cfg.m_of(view, user) * network_impact(view, user, cfg)


def total_value(view: GraphSnapshot, cfg: ValueConfig) -> float:
    """Sum of user values over the snapshot, in user-index order."""
    total = 0.0
    for uid in view.ids:
        total += user_value(view, int(uid), cfg)
    return total


def _ball_indices(view, start: int, radius: int, extra_edge) -> set:
    """Indices within `radius` hops of start in the augmented graph."""
    if radius < 0:
        return set()
    dist = {start: 0}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        d = dist[cur]
        if d >= radius:
            continue
        nbrs = list(view.neighbor_indices(cur))
        a, b = extra_edge
        if cur == a:
            nbrs.append(b)
        elif cur == b:
            nbrs.append(a)
        for nb in nbrs:
            nb = int(nb)
            if nb not in dist:
                dist[nb] = d + 1
                queue.append(nb)
    return set(dist)


def link_value(view, pair: tuple, cfg: ValueConfig) -> float:
    """Change in total value from adding the candidate edge.

    Intrinsic values cancel in the difference, so only impact deltas of
    users within X hops of either endpoint (in the augmented graph) are
    re-evaluated.
    """
    j, h = pair
    if j == h:
        raise InvalidArgumentError("link endpoints must differ")
    ij, ih = view.index_of(j), view.index_of(h)
    if view.has_edge(j, h):
        raise InvalidArgumentError(f"pair ({j},{h}) is already linked")
    extra = (ij, ih)
    X = cfg.locality
    affected = _ball_indices(view, ij, X - 1, extra) | _ball_indices(view, ih, X - 1, extra)
    affected.add(ij)
    affected.add(ih)
    delta = 0.0
    for idx in sorted(affected):
        uid = int(view.ids[idx])
        before = _impact_from_counts(_bfs_counts(view, idx, X), cfg.alpha)
        after = _impact_from_counts(_bfs_counts(view, idx, X, extra_edge=extra), cfg.alpha)
        delta += cfg.m_of(view, uid) * (after - before)
    return delta


def link_values_batch(view: GraphSnapshot, pairs: Sequence[tuple], cfg: ValueConfig) -> np.ndarray:
    """Values for a batch of non-adjacent pairs on one snapshot.

    At locality 2 with uniform per-unit impact the delta is closed-form:
    the endpoints move to distance 1, and each endpoint gains the other's
    neighbors that were previously outside its reach-2 set. The counts are
    gathered in two grouped passes over a reach-2 bitmap. Other localities
    fall back to the per-pair BFS path.
    """
    m = cfg.uniform_m(view)
    if cfg.locality != 2 or m is None:
        return np.array([link_value(view, p, cfg) for p in pairs], dtype=np.float64)
    alpha = cfg.alpha
    n_pairs = len(pairs)
    ij = np.fromiter((view.index_of(j) for j, _ in pairs), dtype=np.int64, count=n_pairs)
    ih = np.fromiter((view.index_of(h) for _, h in pairs), dtype=np.int64, count=n_pairs)
    r2 = view.reach2_csr()
    r2_indptr, r2_indices = r2.indptr, r2.indices
    mask = np.zeros(view.n, dtype=bool)

    def overlap_counts(anchor, other):
        """Per pair: |Gamma(other) /\\ reach2(anchor)|, grouped by anchor."""
        counts = np.empty(n_pairs, dtype=np.int64)
        within = np.empty(n_pairs, dtype=bool)
        order = np.argsort(anchor, kind="stable")
        pos = 0
        while pos < len(order):
            a = anchor[order[pos]]
            end = pos
            while end < len(order) and anchor[order[end]] == a:
                end += 1
            row = r2_indices[r2_indptr[a]:r2_indptr[a + 1]]
            mask[row] = True
            for k in range(pos, end):
                i = order[k]
                adj = view.neighbor_indices(other[i])
                counts[i] = int(mask[adj].sum())
                within[i] = mask[other[i]]
            mask[row] = False
            pos = end
        return counts, within

    ov_j, within2 = overlap_counts(ij, ih)
    ov_h, _ = overlap_counts(ih, ij)
    deg = np.diff(view._indptr)
    c_j = deg[ih] - ov_j
    c_h = deg[ij] - ov_h
    pair_term = alpha - alpha * alpha * within2
    return m * (2.0 * pair_term + 2.0 * alpha * alpha * (c_j + c_h))


# ---------------------------------------------------------------------------
# historical link values and cost estimation

class _AugmentedView:
    """A snapshot extended with isolated newcomer nodes (no edges)."""

    def __init__(self, base: GraphSnapshot, extra_ids: Sequence[int]):
        self._base = base
        self.ids = np.concatenate([base.ids, np.array(sorted(extra_ids), dtype=np.int64)])
        self._extra_index = {int(uid): base.n + k for k, uid in enumerate(sorted(extra_ids))}
        self.n = base.n + len(extra_ids)
        self._empty = np.empty(0, dtype=np.int64)

    def index_of(self, user: int) -> int:
        if user in self._extra_index:
            return self._extra_index[user]
        return self._base.index_of(user)

    def neighbor_indices(self, idx: int):
        if idx >= self._base.n:
            return self._empty
        return self._base.neighbor_indices(idx)

    def has_edge(self, u: int, v: int) -> bool:
        if u in self._extra_index or v in self._extra_index:
            return False
        return self._base.has_edge(u, v)

    def user_m(self, user: int, default: float) -> float:
        return self._base.user_m(user, default)

    def user_intrinsic(self, user: int, default: float) -> float:
        return self._base.user_intrinsic(user, default)


def established_link_value(graph: TemporalGraph, edge: tuple, cfg: ValueConfig,
                           base_view: Optional[GraphSnapshot] = None) -> float:
    """Value of a historical link against the network just before its
    establishment month.

    Endpoints not yet registered at that point are treated as isolated
    newcomers; first-month links connect two isolated users, so each
    endpoint simply gains one direct neighbor.
    """
    u, v, est = edge
    if est <= 1:
        dummy = snapshot(graph, est)
        return (cfg.m_of(dummy, u) + cfg.m_of(dummy, v)) * cfg.alpha
    view = base_view if base_view is not None else snapshot(graph, est - 1)
    missing = [x for x in (u, v) if not view.has_user(x)]
    if not missing:
        return link_value(view, (u, v), cfg)
    if len(missing) == 2:
        return (cfg.m_of(view, u) + cfg.m_of(view, v)) * cfg.alpha
    return link_value(_AugmentedView(view, missing), (u, v), cfg)


class CostModel:
    """Precomputed historical link values with incident-edge lookup.

    Edge values are evaluated in one batch per establishment month
    (closed form at locality 2), cached, and shared by every candidate.
    """

    def __init__(self, graph: TemporalGraph, value_cfg: ValueConfig):
        self.graph = graph
        self.value_cfg = value_cfg
        self._values: dict = {}
        self._incident: dict = {}
        self._months_done: set = set()
        self._by_month: dict = {}
        for idx, (u, v, est) in enumerate(graph.edges):
            self._by_month.setdefault(est, []).append((u, v, est))
            self._incident.setdefault(u, []).append((est, (u, v)))
            self._incident.setdefault(v, []).append((est, (u, v)))
        for lst in self._incident.values():
            lst.sort()
        self._snapshots: dict = {}

    def _snapshot(self, month: int) -> GraphSnapshot:
        if month not in self._snapshots:
            self._snapshots[month] = snapshot(self.graph, month)
        return self._snapshots[month]

    def _ensure_month(self, est: int) -> None:
        if est in self._months_done:
            return
        edges = self._by_month.get(est, [])
        cfg = self.value_cfg
        if est <= 1:
            dummy = self._snapshot(est) if edges else None
            for u, v, _ in edges:
                self._values[(u, v)] = (cfg.m_of(dummy, u) + cfg.m_of(dummy, v)) * cfg.alpha
            self._months_done.add(est)
            return
        base = self._snapshot(est - 1)
        m = cfg.uniform_m(base)
        both_present = []
        for u, v, _ in edges:
            pu, pv = base.has_user(u), base.has_user(v)
            if pu and pv:
                both_present.append((u, v))
            elif not pu and not pv:
                self._values[(u, v)] = (cfg.m_of(base, u) + cfg.m_of(base, v)) * cfg.alpha
            else:
                old, new = (u, v) if pu else (v, u)
                if cfg.locality == 2 and m is not None:
                    deg = base.degree(old)
                    self._values[(u, v)] = m * (2.0 * cfg.alpha + 2.0 * cfg.alpha ** 2 * deg)
                else:
                    self._values[(u, v)] = link_value(_AugmentedView(base, [new]), (u, v), cfg)
        if both_present:
            vals = link_values_batch(base, both_present, cfg)
            for pair, val in zip(both_present, vals):
                self._values[pair] = float(val)
        self._months_done.add(est)

    def edge_value(self, edge: tuple) -> float:
        u, v, est = edge
        key = (u, v) if u < v else (v, u)
        if key not in self._values:
            self._ensure_month(est)
        return self._values[key]

    def incident_values(self, user: int, month: int) -> List[float]:
        out = []
        for est, pair in self._incident.get(user, []):
            if est > month:
                break
            out.append(self.edge_value((pair[0], pair[1], est)))
        return out

    def global_mean(self, month: int) -> float:
        values = []
        for est in sorted(self._by_month):
            if est > month:
                break
            self._ensure_month(est)
            values.extend(self._values[(u, v)] for u, v, _ in self._by_month[est])
        if not values:
            raise ConfigurationError(
                f"no links established by month {month}; cost fallback undefined"
            )
        return float(np.mean(values))

    def costs_batch(self, pairs: Sequence[tuple], month: int, rho: float) -> np.ndarray:
        """Vectorized cost estimates for many pairs at one month."""
        for est in self._by_month:
            if est <= month:
                self._ensure_month(est)
        sums: dict = {}
        counts: dict = {}
        for user, lst in self._incident.items():
            total = 0.0
            cnt = 0
            for est, pair in lst:
                if est > month:
                    break
                total += self._values[pair if pair[0] < pair[1] else (pair[1], pair[0])]
                cnt += 1
            sums[user] = total
            counts[user] = cnt
        out = np.empty(len(pairs), dtype=np.float64)
        fallback = None
        for i, (j, h) in enumerate(pairs):
            cnt = counts.get(j, 0) + counts.get(h, 0)
            if cnt > 0:
                out[i] = (sums.get(j, 0.0) + sums.get(h, 0.0)) / cnt
            else:
                if fallback is None:
                    fallback = self.global_mean(month)
                out[i] = fallback
        return rho * out


def link_cost(
    graph: TemporalGraph,
    pair: tuple,
    month: int,
    cfg: CostConfig,
    value_cfg: ValueConfig,
    cache: Optional[CostModel] = None,
) -> float:
    """rho times the mean value of links already established by either
    endpoint, falling back to the global mean established-link value."""
    if cache is None:
        cache = CostModel(graph, value_cfg)
    j, h = pair
    values = cache.incident_values(j, month) + cache.incident_values(h, month)
    if values:
        return cfg.rho * float(np.mean(values))
    return cfg.rho * cache.global_mean(month)


def utility(V: float, C: float, established: int) -> float:
    """Realized value if the link was established, negative cost otherwise."""
    ind = 1 if established else 0
    return ind * V - (1 - ind) * C
