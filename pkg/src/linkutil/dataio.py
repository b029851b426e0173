"""File formats, synthetic temporal-network generation, and samplers.

All files are headered UTF-8 CSV with LF line endings; writers emit
deterministic ordering and write atomically (temp file + rename).
"""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidArgumentError, IntegrityError, ParseError, SamplerError
from .features import FEATURE_FLOOR, FeatureRecord
from .graph import TemporalGraph
from .model import Theta, ClassRates
from .proximity import ProfileStore


# ---------------------------------------------------------------------------
# atomic write helper

def atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# graph / profile files

def load_graph(edges_path: str, users_path: str) -> TemporalGraph:
    users = []
    user_m = {}
    user_intrinsic = {}
    with open(users_path, encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or header[:2] != ["user", "reg_month"]:
            raise ParseError("expected header starting 'user,reg_month'", path=users_path, line=1)
        has_m = "m" in header
        has_int = "intrinsic" in header
        m_idx = header.index("m") if has_m else None
        i_idx = header.index("intrinsic") if has_int else None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                uid = int(row[0])
                reg = int(row[1])
            except (ValueError, IndexError):
                raise ParseError(f"bad user row {row!r}", path=users_path, line=lineno) from None
            users.append((uid, reg))
            try:
                if has_m and m_idx < len(row) and row[m_idx] != "":
                    user_m[uid] = float(row[m_idx])
                if has_int and i_idx < len(row) and row[i_idx] != "":
                    user_intrinsic[uid] = float(row[i_idx])
            except ValueError:
                raise ParseError(f"bad numeric field in {row!r}", path=users_path, line=lineno) from None
    edges = []
    with open(edges_path, encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["u", "v", "month"]:
            raise ParseError("expected header 'u,v,month'", path=edges_path, line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                edges.append((int(row[0]), int(row[1]), int(row[2])))
            except (ValueError, IndexError):
                raise ParseError(f"bad edge row {row!r}", path=edges_path, line=lineno) from None
    return TemporalGraph.build(users, edges, user_m=user_m, user_intrinsic=user_intrinsic)


def save_graph(graph: TemporalGraph, edges_path: str, users_path: str) -> None:
    users_buf = io.StringIO()
    writer = csv.writer(users_buf, lineterminator="\n")
    writer.writerow(["user", "reg_month", "m", "intrinsic"])
    for uid, reg in graph.users:
        writer.writerow([
            uid, reg,
            _fmt(graph.user_m.get(uid, 1.0)),
            _fmt(graph.user_intrinsic.get(uid, 0.0)),
        ])
    atomic_write(users_path, users_buf.getvalue())
    edges_buf = io.StringIO()
    writer = csv.writer(edges_buf, lineterminator="\n")
    writer.writerow(["u", "v", "month"])
    for u, v, month in sorted(graph.edges, key=lambda e: (e[0], e[1], e[2])):
        writer.writerow([u, v, month])
    atomic_write(edges_path, edges_buf.getvalue())


def load_profiles(path: str) -> ProfileStore:
    terms = {}
    with open(path, encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["user", "terms"]:
            raise ParseError("expected header 'user,terms'", path=path, line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                uid = int(row[0])
                raw = row[1] if len(row) > 1 else ""
                ids = [int(t) for t in raw.split(";") if t != ""]
            except ValueError:
                raise ParseError(f"bad profile row {row!r}", path=path, line=lineno) from None
            if uid in terms:
                raise IntegrityError(f"duplicate profile for user {uid}")
            terms[uid] = ids
    return ProfileStore(terms)


def save_profiles(profiles: ProfileStore, path: str) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["user", "terms"])
    for uid in profiles.users():
        writer.writerow([uid, ";".join(str(t) for t in sorted(profiles.terms(uid)))])
    atomic_write(path, buf.getvalue())


def validate_profile_coverage(graph: TemporalGraph, profiles: ProfileStore) -> None:
    missing = [uid for uid, _ in graph.users if uid not in profiles]
    if missing:
        raise IntegrityError(f"{len(missing)} users lack profiles (first: {missing[0]})")


# ---------------------------------------------------------------------------
# feature-record files

RECORD_HEADER = ["j", "h", "V", "C", "S", "N", "R"]


def save_records(records: Sequence[FeatureRecord], path: str) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RECORD_HEADER)
    for rec in records:
        j, h = rec.pair if rec.pair is not None else ("", "")
        writer.writerow([
            j, h, _fmt(rec.V), _fmt(rec.C), _fmt(rec.S), _fmt(rec.N),
            "" if rec.label is None else rec.label,
        ])
    atomic_write(path, buf.getvalue())


def load_records(path: str) -> List[FeatureRecord]:
    out = []
    with open(path, encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != RECORD_HEADER:
            raise ParseError(f"expected header {','.join(RECORD_HEADER)!r}", path=path, line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                pair = (int(row[0]), int(row[1])) if row[0] != "" else None
                V, C, S, N = (float(x) for x in row[2:6])
                label = None if len(row) < 7 or row[6] == "" else int(row[6])
            except (ValueError, IndexError):
                raise ParseError(f"bad record row {row!r}", path=path, line=lineno) from None
            try:
                out.append(FeatureRecord(V=V, C=C, S=S, N=N, label=label, pair=pair))
            except InvalidArgumentError as exc:
                raise ParseError(str(exc), path=path, line=lineno) from None
    return out


def save_recommendations(items, path: str) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["j", "h", "probability"])
    for pair, score in items:
        writer.writerow([pair[0], pair[1], _fmt(score)])
    atomic_write(path, buf.getvalue())


def save_metrics(rows, path: str) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "month", "precision", "avg_utility"])
    for row in rows:
        writer.writerow([row.method, row.month, _fmt(row.precision), _fmt(row.avg_utility)])
    atomic_write(path, buf.getvalue())


def save_theta(theta: Theta, path: str) -> None:
    atomic_write(path, theta.to_text())


def load_theta(path: str) -> Theta:
    with open(path, encoding="utf-8") as handle:
        return Theta.from_text(handle.read(), path=path)


# ---------------------------------------------------------------------------
# synthetic temporal network

@dataclass(frozen=True)
class SynthConfig:
    months: int = 12
    users_per_month: int = 100
    arrival_links: int = 2  # links wired per arriving user
    closure_fraction: float = 0.04  # monthly fraction of two-hop pairs that close
    attachment_exponent: float = 1.5  # sharpness of the reachable-mass signal
    homophily_weight: float = 6.0  # log-scale boost per unit profile similarity
    closure_noise: float = 0.3  # Gumbel temperature on the closure propensity
    vocab_size: int = 40
    terms_per_user: int = 5
    seed: int = 0
    max_closures_per_month: int = 4000
    max_degree: int = 40  # arrival-wiring cap keeping hubs from saturating
    closure_budget: int = 4  # closures a single user accepts per month

    def __post_init__(self):
        if self.months < 1 or self.users_per_month < 1:
            raise InvalidArgumentError("months and users_per_month must be positive")
        if self.homophily_weight < 0:
            raise InvalidArgumentError("homophily_weight must be >= 0")
        if self.closure_noise < 0:
            raise InvalidArgumentError("closure_noise must be >= 0")
        if self.vocab_size < 1 or self.terms_per_user < 1:
            raise InvalidArgumentError("vocabulary settings must be positive")
        if self.terms_per_user > self.vocab_size:
            raise InvalidArgumentError("terms_per_user cannot exceed vocab_size")


def _two_hop_pairs(existing, adj):
    """Sorted non-adjacent pairs at distance two, via a sparse walk product."""
    from scipy.sparse import csr_matrix

    ids = sorted(existing)
    index = {u: i for i, u in enumerate(ids)}
    rows, cols = [], []
    for u in ids:
        iu = index[u]
        for v in adj[u]:
            rows.append(iu)
            cols.append(index[v])
    n = len(ids)
    if not rows:
        return []
    a = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    paths2 = (a @ a).tocoo()
    r, c = paths2.row.astype(np.int64), paths2.col.astype(np.int64)
    keep = r < c
    r, c = r[keep], c[keep]
    edge_keys = np.array(rows, dtype=np.int64) * n + np.array(cols, dtype=np.int64)
    adjacent = np.isin(r * n + c, edge_keys)
    r, c = r[~adjacent], c[~adjacent]
    out = [(ids[i], ids[k]) for i, k in zip(r.tolist(), c.tolist())]
    out.sort()
    return out


def gen_network(cfg: SynthConfig, rng: np.random.Generator) -> Tuple[TemporalGraph, ProfileStore]:
    """Monthly arrivals with preferential attachment plus homophily, and
    monthly triangle closures among two-hop pairs so both the walk-based and
    the profile-based proximity carry real signal.

    A closure's propensity is multiplicative in the common-neighbor count
    and in profile similarity (exponential in the homophily weight), so the
    two cues interact rather than adding up: the establishment signal lives
    in their joint behavior.
    """
    users: List[tuple] = []
    edges: List[tuple] = []
    terms: dict = {}
    adj: dict = {}
    degree: dict = {}

    def add_edge(u, v, month):
        a, b = (u, v) if u < v else (v, u)
        edges.append((a, b, month))
        adj[a].add(b)
        adj[b].add(a)
        degree[a] += 1
        degree[b] += 1

    def similarity(u, v):
        union = len(terms[u] | terms[v])
        return len(terms[u] & terms[v]) / union if union else 0.0

    next_id = 0
    for month in range(1, cfg.months + 1):
        arrivals = []
        for _ in range(cfg.users_per_month):
            uid = next_id
            next_id += 1
            users.append((uid, month))
            terms[uid] = frozenset(
                int(t) for t in rng.choice(cfg.vocab_size, size=cfg.terms_per_user, replace=False)
            )
            adj[uid] = set()
            degree[uid] = 0
            arrivals.append(uid)
        existing = [uid for uid, _ in users]
        for uid in arrivals:
            others = [v for v in existing if v != uid and v not in adj[uid] and degree[v] < cfg.max_degree]
            if not others:
                continue
            weights = np.array(
                [
                    (1.0 + degree[v])
                    * np.exp(cfg.homophily_weight * similarity(uid, v))
                    for v in others
                ],
                dtype=np.float64,
            )
            weights /= weights.sum()
            k = min(cfg.arrival_links, len(others))
            chosen = rng.choice(len(others), size=k, replace=False, p=weights)
            for c in chosen:
                add_edge(uid, others[int(c)], month)
        # triangle closures among current two-hop pairs
        two_hop = _two_hop_pairs(existing, adj)
        if two_hop:
            n_close = min(
                cfg.max_closures_per_month,
                max(1, int(round(cfg.closure_fraction * len(two_hop)))),
                len(two_hop),
            )
            # propensity grows with the mass of users a closure newly brings
            # within reach (degree sum net of overlap: the preferential-
            # attachment drive) and with profile similarity; Gumbel noise at
            # the configured temperature makes the monthly closures the noisy
            # top of that score
            log_score = np.array(
                [
                    cfg.attachment_exponent
                    * np.log(float(max(degree[u] + degree[v] - 2 * len(adj[u] & adj[v]), 1)))
                    + cfg.homophily_weight * similarity(u, v)
                    for u, v in two_hop
                ],
                dtype=np.float64,
            )
            if cfg.closure_noise > 0:
                log_score = log_score + cfg.closure_noise * rng.gumbel(size=len(two_hop))
            budget = {uid: cfg.closure_budget for uid in existing}
            taken = 0
            picked = []
            for c in np.argsort(-log_score, kind="stable"):
                if taken >= n_close:
                    break
                u, v = two_hop[int(c)]
                if budget[u] > 0 and budget[v] > 0:
                    budget[u] -= 1
                    budget[v] -= 1
                    picked.append((u, v))
                    taken += 1
            for u, v in sorted(picked):
                add_edge(u, v, month)
    graph = TemporalGraph.build(users, edges)
    return graph, ProfileStore(terms)


# ---------------------------------------------------------------------------
# samplers

def sample_freund(lx: float, ly: float, lxp: float, lyp: float, rng: np.random.Generator,
                  size: Optional[int] = None):
    """Draws from the two-regime bivariate exponential: the first failure
    arrives at rate lx+ly; the survivor continues at its switched rate."""
    for name, val in (("lx", lx), ("ly", ly), ("lxp", lxp), ("lyp", lyp)):
        if not (val > 0) or not math.isfinite(val):
            raise InvalidArgumentError(f"rate {name} must be positive, got {val}")
    n = 1 if size is None else int(size)
    first = rng.exponential(1.0 / (lx + ly), size=n)
    x_first = rng.random(n) < lx / (lx + ly)
    extra_y = rng.exponential(1.0 / lyp, size=n)
    extra_x = rng.exponential(1.0 / lxp, size=n)
    x = np.where(x_first, first, first + extra_x)
    y = np.where(x_first, first + extra_y, first)
    if size is None:
        return float(x[0]), float(y[0])
    return x, y


def _log_g(S, N, L, r: ClassRates):
    """Log of the unnormalized (S, N, L) joint for one class: the two pairwise
    coupling densities over the shared latent, divided by the latent marginal."""
    a = np.where(
        S < L,
        np.log(r.lamS) + np.log(r.lamLp) - r.lamLp * L - (r.lamS + r.lamL - r.lamLp) * S,
        np.log(r.lamL) + np.log(r.lamSp) - r.lamSp * S - (r.lamS + r.lamL - r.lamSp) * L,
    )
    b = np.where(
        N < L,
        np.log(r.lamN) + np.log(r.lamLp) - r.lamLp * L - (r.lamN + r.lamL - r.lamLp) * N,
        np.log(r.lamL) + np.log(r.lamNp) - r.lamNp * N - (r.lamN + r.lamL - r.lamNp) * L,
    )
    y = np.minimum(S, N)
    c = np.where(L < y, np.log(r.lamL) - r.lamL * L, np.log(r.lamLp) - r.lamLp * L)
    return a + b - c


def _log_bound(r: ClassRates, box: float, qs: float, qn: float, ql: float) -> float:
    """Exact sup over the box of log(target/proposal): the log-ratio is affine
    on each ordering region, so the max sits at a box corner; only branches
    consistent with a corner's ordering are admissible there."""
    eps = 1e-12
    best = -np.inf
    for s in (eps, box):
        for n in (eps, box):
            for l in (eps, box):
                y = min(s, n)
                sa = []
                if s <= l:
                    sa.append(np.log(r.lamS) + np.log(r.lamLp) - r.lamLp * l - (r.lamS + r.lamL - r.lamLp) * s)
                if s >= l:
                    sa.append(np.log(r.lamL) + np.log(r.lamSp) - r.lamSp * s - (r.lamS + r.lamL - r.lamSp) * l)
                sb = []
                if n <= l:
                    sb.append(np.log(r.lamN) + np.log(r.lamLp) - r.lamLp * l - (r.lamN + r.lamL - r.lamLp) * n)
                if n >= l:
                    sb.append(np.log(r.lamL) + np.log(r.lamNp) - r.lamNp * n - (r.lamN + r.lamL - r.lamNp) * l)
                sc = []
                if l <= y:
                    sc.append(np.log(r.lamL) - r.lamL * l)
                if l >= y:
                    sc.append(np.log(r.lamLp) - r.lamLp * l)
                lq = (np.log(qs) - qs * s) + (np.log(qn) - qn * n) + (np.log(ql) - ql * l)
                for va in sa:
                    for vb in sb:
                        for vc in sc:
                            best = max(best, va + vb - vc - lq)
    return best


ACCEPTANCE_FLOOR = 1e-5


def sample_proximity_pair(r: ClassRates, m: int, rng: np.random.Generator):
    """Rejection sampling of m (S, N) pairs from the unnormalized joint on a
    truncated box, using an independent-exponential proposal with an exact
    corner-derived acceptance bound. The latent coordinate is discarded."""
    rates = np.array([r.lamS, r.lamSp, r.lamN, r.lamNp, r.lamL, r.lamLp])
    box = 40.0 / rates.min()
    qs = 0.5 * min(r.lamS, r.lamSp)
    qn = 0.5 * min(r.lamN, r.lamNp)
    ql = 0.5 * min(r.lamL, r.lamLp)
    bound = _log_bound(r, box, qs, qn, ql)
    S_out = np.empty(m)
    N_out = np.empty(m)
    got = 0
    proposed = 0
    accepted = 0
    while got < m:
        chunk = max(4 * (m - got), 2048)
        s = rng.exponential(1.0 / qs, size=chunk)
        n = rng.exponential(1.0 / qn, size=chunk)
        l = rng.exponential(1.0 / ql, size=chunk)
        inside = (s < box) & (n < box) & (l < box)
        log_ratio = _log_g(s, n, l, r) - (
            (np.log(qs) - qs * s) + (np.log(qn) - qn * n) + (np.log(ql) - ql * l)
        )
        accept = inside & (np.log(rng.random(chunk)) < log_ratio - bound)
        idx = np.nonzero(accept)[0][: m - got]
        take = len(idx)
        S_out[got:got + take] = s[idx]
        N_out[got:got + take] = n[idx]
        got += take
        proposed += chunk
        accepted += int(accept.sum())
        if proposed > 200_000 and accepted / proposed < ACCEPTANCE_FLOOR:
            raise SamplerError(
                f"acceptance rate {accepted / proposed:.2e} below {ACCEPTANCE_FLOOR}; "
                "widen the proposal envelope"
            )
    return S_out, N_out


def sample_record(theta: Theta, rng: np.random.Generator,
                  size: Optional[int] = None):
    """Labeled records drawn from the model: Bernoulli class, exponential
    observed features, and proximity pair from the unnormalized joint."""
    theta.validate()
    n = 1 if size is None else int(size)
    R = (rng.random(n) < theta.p1).astype(np.int64)
    V = np.empty(n)
    C = np.empty(n)
    S = np.empty(n)
    N = np.empty(n)
    for r in (0, 1):
        mask = R == r
        m = int(mask.sum())
        if m == 0:
            continue
        rates = theta.rates(r)
        V[mask] = rng.exponential(1.0 / rates.lamV, size=m)
        C[mask] = rng.exponential(1.0 / rates.lamC, size=m)
        S[mask], N[mask] = sample_proximity_pair(rates, m, rng)
    records = [
        FeatureRecord(
            V=max(float(V[i]), FEATURE_FLOOR),
            C=max(float(C[i]), FEATURE_FLOOR),
            S=max(float(S[i]), FEATURE_FLOOR),
            N=max(float(N[i]), FEATURE_FLOOR),
            label=int(R[i]),
        )
        for i in range(n)
    ]
    if size is None:
        return records[0]
    return records
