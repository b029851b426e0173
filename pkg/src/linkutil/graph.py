"""Temporal undirected graph storage, month snapshots, and neighborhoods.

User ids are externally supplied integers; snapshots map them to dense
internal indices and keep sorted neighbor lists so iteration order (and
therefore every downstream ranking) is reproducible.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrityError, InvalidArgumentError, NotFoundError


@dataclass(frozen=True)
class TemporalGraph:
    """Users with registration months and undirected edges with establishment months.

    Invariants enforced at construction: no self-loops, no duplicate
    undirected edge, every endpoint registered, and an edge is never
    older than either endpoint's registration.
    """

    users: tuple  # ((user_id, reg_month), ...) sorted by user_id
    edges: tuple  # ((u, v, est_month), ...) with u < v, sorted
    user_m: dict = field(default_factory=dict)  # optional per-user unit impact
    user_intrinsic: dict = field(default_factory=dict)  # optional intrinsic value

    @staticmethod
    def build(users, edges, user_m=None, user_intrinsic=None) -> "TemporalGraph":
        reg = {}
        for uid, month in users:
            uid, month = int(uid), int(month)
            if month < 1:
                raise InvalidArgumentError(f"user {uid}: reg_month must be >= 1, got {month}")
            if uid in reg:
                raise IntegrityError(f"duplicate user id {uid}")
            reg[uid] = month
        seen = set()
        norm_edges = []
        for u, v, month in edges:
            u, v, month = int(u), int(v), int(month)
            if u == v:
                raise IntegrityError(f"self-loop on user {u}")
            if u not in reg or v not in reg:
                missing = u if u not in reg else v
                raise IntegrityError(f"edge ({u},{v}) references unknown user {missing}")
            a, b = (u, v) if u < v else (v, u)
            if (a, b) in seen:
                raise IntegrityError(f"duplicate edge ({a},{b})")
            if month < reg[a] or month < reg[b]:
                raise IntegrityError(
                    f"edge ({a},{b}) established at month {month} before a registration"
                )
            seen.add((a, b))
            norm_edges.append((a, b, month))
        norm_edges.sort()
        users_sorted = tuple(sorted(reg.items()))
        return TemporalGraph(
            users=users_sorted,
            edges=tuple(norm_edges),
            user_m=dict(user_m or {}),
            user_intrinsic=dict(user_intrinsic or {}),
        )

    @property
    def n_users(self) -> int:
        return len(self.users)

    def max_month(self) -> int:
        months = [m for _, m in self.users] + [m for _, _, m in self.edges]
        return max(months) if months else 0


class GraphSnapshot:
    """Immutable view of the graph at a given month.

    Stores a CSR-style adjacency over the users registered by `month`;
    neighbor lists are sorted. All queries are read-only.
    """

    def __init__(self, graph: TemporalGraph, month: int):
        if month < 1:
            raise InvalidArgumentError(f"snapshot month must be >= 1, got {month}")
        self.month = month
        self.ids = np.array([uid for uid, reg in graph.users if reg <= month], dtype=np.int64)
        self._index = {int(uid): i for i, uid in enumerate(self.ids)}
        n = len(self.ids)
        pairs = [(u, v) for u, v, m in graph.edges if m <= month]
        deg = np.zeros(n, dtype=np.int64)
        for u, v in pairs:
            deg[self._index[u]] += 1
            deg[self._index[v]] += 1
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(deg, out=indptr[1:])
        indices = np.zeros(indptr[-1], dtype=np.int64)
        cursor = indptr[:-1].copy()
        for u, v in pairs:
            iu, iv = self._index[u], self._index[v]
            indices[cursor[iu]] = iv
            cursor[iu] += 1
            indices[cursor[iv]] = iu
            cursor[iv] += 1
        for i in range(n):
            indices[indptr[i]:indptr[i + 1]].sort()
        self._indptr = indptr
        self._indices = indices
        self._graph = graph

    @property
    def n(self) -> int:
        return len(self.ids)

    def has_user(self, user: int) -> bool:
        return user in self._index

    def index_of(self, user: int) -> int:
        try:
            return self._index[user]
        except KeyError:
            raise NotFoundError(f"user {user} not present at month {self.month}") from None

    def neighbor_indices(self, idx: int) -> np.ndarray:
        return self._indices[self._indptr[idx]:self._indptr[idx + 1]]

    def neighbors(self, user: int) -> list:
        return [int(self.ids[i]) for i in self.neighbor_indices(self.index_of(user))]

    def degree(self, user: int) -> int:
        idx = self.index_of(user)
        return int(self._indptr[idx + 1] - self._indptr[idx])

    def has_edge(self, u: int, v: int) -> bool:
        if u not in self._index or v not in self._index:
            return False
        iu, iv = self._index[u], self._index[v]
        row = self.neighbor_indices(iu)
        pos = np.searchsorted(row, iv)
        return pos < len(row) and row[pos] == iv

    def n_edges(self) -> int:
        return int(self._indptr[-1]) // 2

    def user_m(self, user: int, default: float) -> float:
        return float(self._graph.user_m.get(user, default))

    def user_intrinsic(self, user: int, default: float) -> float:
        return float(self._graph.user_intrinsic.get(user, default))

    def adjacency_csr(self):
        """Boolean adjacency as scipy CSR over internal indices (cached)."""
        if not hasattr(self, "_csr"):
            from scipy.sparse import csr_matrix

            data = np.ones(len(self._indices), dtype=np.float64)
            self._csr = csr_matrix(
                (data, self._indices.copy(), self._indptr.copy()), shape=(self.n, self.n)
            )
        return self._csr

    def reach2_csr(self):
        """Indicator of distance <= 2 (including self) as scipy CSR (cached)."""
        if not hasattr(self, "_reach2"):
            from scipy.sparse import csr_matrix, eye

            a = self.adjacency_csr()
            r = ((a @ a) + a + eye(self.n, format="csr")) > 0
            self._reach2 = r.tocsr()
        return self._reach2


@dataclass(frozen=True)
class NeighborhoodCounts:
    """|N_x| for x = 1..X: number of users at shortest distance exactly x."""

    counts: tuple

    def __getitem__(self, x: int) -> int:
        return self.counts[x - 1]

    @property
    def X(self) -> int:
        return len(self.counts)

    def total(self) -> int:
        return sum(self.counts)


def snapshot(graph: TemporalGraph, month: int) -> GraphSnapshot:
    """View of users/edges present by `month` (month >= 1)."""
    return GraphSnapshot(graph, month)


def _bfs_counts(view: GraphSnapshot, start_idx: int, X: int, extra_edge=None) -> np.ndarray:
    """Per-distance counts from a truncated BFS; extra_edge optionally adds one
    undirected (index, index) edge without copying the snapshot."""
    dist = np.full(view.n, -1, dtype=np.int64)
    dist[start_idx] = 0
    queue = deque([start_idx])
    counts = np.zeros(X, dtype=np.int64)
    while queue:
        cur = queue.popleft()
        d = dist[cur]
        if d >= X:
            continue
        nxt = view.neighbor_indices(cur)
        for nb in nxt:
            if dist[nb] < 0:
                dist[nb] = d + 1
                counts[d] += 1
                queue.append(nb)
        if extra_edge is not None:
            a, b = extra_edge
            other = b if cur == a else (a if cur == b else None)
            if other is not None and dist[other] < 0:
                dist[other] = d + 1
                counts[d] += 1
                queue.append(other)
    return counts


def neighborhood_counts(view: GraphSnapshot, user: int, X: int) -> NeighborhoodCounts:
    """Counts of users at shortest-path distance exactly 1..X from `user`."""
    if X < 1:
        raise InvalidArgumentError(f"X must be >= 1, got {X}")
    idx = view.index_of(user)
    return NeighborhoodCounts(tuple(int(c) for c in _bfs_counts(view, idx, X)))


def two_hop_candidates(view: GraphSnapshot) -> list:
    """All non-adjacent pairs at shortest distance exactly 2, as (j, h) with
    j < h, in lexicographic order."""
    if view.n == 0 or view._indptr[-1] == 0:
        return []
    a = view.adjacency_csr()
    paths2 = (a @ a).tocoo()
    row, col = paths2.row.astype(np.int64), paths2.col.astype(np.int64)
    keep = row < col
    row, col = row[keep], col[keep]
    # drop already-adjacent pairs via linearized edge keys
    acoo = a.tocoo()
    edge_keys = acoo.row.astype(np.int64) * view.n + acoo.col.astype(np.int64)
    adjacent = np.isin(row * view.n + col, edge_keys)
    row, col = row[~adjacent], col[~adjacent]
    uid_row = view.ids[row]
    uid_col = view.ids[col]
    lo = np.minimum(uid_row, uid_col)
    hi = np.maximum(uid_row, uid_col)
    order = np.lexsort((hi, lo))
    return [(int(lo[i]), int(hi[i])) for i in order]
