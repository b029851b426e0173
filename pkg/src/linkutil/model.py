"""Parameter vector and the piecewise-exponential numeric kernels.

The latent-factor network couples each of the two proximity features to the
latent linkage factor through a two-regime (Freund-style) bivariate
exponential; conditioning on an observed record splits the latent axis into
up to four intervals, each carrying a truncated exponential. Everything
here is evaluated in log space with the two helpers `mean_offset` and
`log_em1_over`, which stay accurate when a combined rate crosses zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError, NumericError, ParseError

THETA_NAMES = (
    "p0", "p1",
    "lamV0", "lamV1", "lamC0", "lamC1",
    "lamS0", "lamS1", "lamSp0", "lamSp1",
    "lamN0", "lamN1", "lamNp0", "lamNp1",
    "lamL0", "lamL1", "lamLp0", "lamLp1",
)


class ClassRates(NamedTuple):
    p: float
    lamV: float
    lamC: float
    lamS: float
    lamSp: float
    lamN: float
    lamNp: float
    lamL: float
    lamLp: float


@dataclass(frozen=True)
class Theta:
    """The 18 parameters: class priors plus eight exponential rates per class."""

    p0: float
    p1: float
    lamV0: float
    lamV1: float
    lamC0: float
    lamC1: float
    lamS0: float
    lamS1: float
    lamSp0: float
    lamSp1: float
    lamN0: float
    lamN1: float
    lamNp0: float
    lamNp1: float
    lamL0: float
    lamL1: float
    lamLp0: float
    lamLp1: float

    def validate(self) -> "Theta":
        if not (0.0 < self.p0 < 1.0 and 0.0 < self.p1 < 1.0):
            raise InvalidArgumentError(f"class priors must lie in (0,1): p0={self.p0}, p1={self.p1}")
        if abs(self.p0 + self.p1 - 1.0) > 1e-12:
            raise InvalidArgumentError(f"priors must sum to 1, got {self.p0 + self.p1}")
        for name in THETA_NAMES[2:]:
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0.0:
                raise InvalidArgumentError(f"rate {name} must be positive and finite, got {val}")
        return self

    def rates(self, r: int) -> ClassRates:
        s = str(int(r))
        return ClassRates(
            p=getattr(self, "p" + s),
            lamV=getattr(self, "lamV" + s),
            lamC=getattr(self, "lamC" + s),
            lamS=getattr(self, "lamS" + s),
            lamSp=getattr(self, "lamSp" + s),
            lamN=getattr(self, "lamN" + s),
            lamNp=getattr(self, "lamNp" + s),
            lamL=getattr(self, "lamL" + s),
            lamLp=getattr(self, "lamLp" + s),
        )

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in THETA_NAMES], dtype=np.float64)

    @staticmethod
    def from_array(values: Sequence[float]) -> "Theta":
        return Theta(**{n: float(v) for n, v in zip(THETA_NAMES, values)})

    def to_text(self) -> str:
        lines = [f"{n}\t{getattr(self, n):.17g}" for n in THETA_NAMES]
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str, path=None) -> "Theta":
        values = {}
        for i, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError("expected 'name<TAB>value'", path=path, line=i)
            name, raw = parts
            if name not in THETA_NAMES:
                raise ParseError(f"unknown parameter {name!r}", path=path, line=i)
            try:
                values[name] = float(raw)
            except ValueError:
                raise ParseError(f"bad decimal {raw!r}", path=path, line=i) from None
        missing = [n for n in THETA_NAMES if n not in values]
        if missing:
            raise ParseError(f"missing parameters: {', '.join(missing)}", path=path, line=0)
        return Theta(**values).validate()


# ---------------------------------------------------------------------------
# numeric helpers

def mean_offset(u):
    """1/u - 1/expm1(u), the mean of a unit-interval truncated exponential
    with rate u; lies in (0,1) for all real u and equals 1/2 at u = 0."""
    u = np.asarray(u, dtype=np.float64)
    out = np.empty_like(u)
    small = np.abs(u) < 1e-5
    out[small] = 0.5 - u[small] / 12.0 + u[small] ** 3 / 720.0
    big = ~small
    ub = np.clip(u[big], -700.0, 700.0)
    out[big] = 1.0 / u[big] - 1.0 / np.expm1(ub)
    # beyond the exp range the truncated mean saturates
    out[u > 700.0] = 1.0 / u[u > 700.0]
    out[u < -700.0] = 1.0 + 1.0 / u[u < -700.0]
    return out


def log_em1_over(u):
    """log[(1 - exp(-u))/u], finite for all real u (the bracket is positive)."""
    u = np.asarray(u, dtype=np.float64)
    out = np.empty_like(u)
    small = np.abs(u) < 1e-5
    out[small] = -u[small] / 2.0 + u[small] ** 2 / 24.0
    pos = u >= 1e-5
    up = u[pos]
    out[pos] = np.where(
        up > 36.0, -np.log(up), np.log1p(-np.exp(-np.minimum(up, 700.0))) - np.log(up)
    )
    neg = u <= -1e-5
    un = -u[neg]
    out[neg] = np.where(
        un > 36.0, un - np.log(un), np.log(np.expm1(np.minimum(un, 700.0))) - np.log(un)
    )
    return out


DEGENERATE_RATE_EPS = 1e-10  # below this, combined rates use their analytic limits


class Columns(NamedTuple):
    """Dense columns for a record batch; R is -1 where unlabeled."""

    V: np.ndarray
    C: np.ndarray
    S: np.ndarray
    N: np.ndarray
    R: np.ndarray


def as_columns(records) -> Columns:
    if isinstance(records, Columns):
        return records
    V = np.array([r.V for r in records], dtype=np.float64)
    C = np.array([r.C for r in records], dtype=np.float64)
    S = np.array([r.S for r in records], dtype=np.float64)
    N = np.array([r.N for r in records], dtype=np.float64)
    R = np.array([-1 if r.label is None else int(r.label) for r in records], dtype=np.int64)
    return Columns(V, C, S, N, R)


def combined_rates(rates: ClassRates):
    """The three interval rates governing the latent axis given (S, N)."""
    c2 = rates.lamS - rates.lamSp + rates.lamN - rates.lamNp + rates.lamL
    c3 = rates.lamS + rates.lamL - rates.lamSp
    c4 = rates.lamN + rates.lamL - rates.lamNp
    return c2, c3, c4


def log_piece_integrals(S, N, rates: ClassRates) -> np.ndarray:
    """Log integrals of the unnormalized latent density over its four pieces.

    Columns: tail (Y, inf); base (0, y); mid (N, S) when S > N; mid (S, N)
    when N > S. Empty pieces get -inf. Excludes the V/C/prior factor.
    """
    S = np.asarray(S, dtype=np.float64)
    N = np.asarray(N, dtype=np.float64)
    Y = np.maximum(S, N)
    y = np.minimum(S, N)
    c2, c3, c4 = combined_rates(rates)
    b1 = (
        np.log(rates.lamS) + np.log(rates.lamN)
        - (rates.lamS + rates.lamL - rates.lamLp) * S
        - (rates.lamN + rates.lamL - rates.lamLp) * N
        - rates.lamLp * Y
    )
    b2 = (
        np.log(rates.lamSp) + np.log(rates.lamL) + np.log(rates.lamNp)
        - rates.lamSp * S - rates.lamNp * N
        + np.log(y) + log_em1_over(c2 * y)
    )
    d = S - N
    pos = d > 0
    neg = d < 0
    ad = np.abs(d)
    safe = np.where(ad > 0, ad, 1.0)
    b3 = np.where(
        pos,
        np.log(rates.lamL) + np.log(rates.lamSp) + np.log(rates.lamN)
        - rates.lamSp * S - (rates.lamN + rates.lamL - rates.lamLp) * N
        - c3 * N + np.log(safe) + log_em1_over(c3 * ad),
        -np.inf,
    )
    b4 = np.where(
        neg,
        np.log(rates.lamL) + np.log(rates.lamNp) + np.log(rates.lamS)
        - rates.lamNp * N - (rates.lamS + rates.lamL - rates.lamLp) * S
        - c4 * S + np.log(safe) + log_em1_over(c4 * ad),
        -np.inf,
    )
    return np.stack([np.broadcast_to(b1, S.shape), b2, b3, b4], axis=-1)


def log_gamma_factor(V, C, rates: ClassRates) -> np.ndarray:
    """Log of the prior-and-observed-feature factor multiplying every piece."""
    return (
        np.log(rates.p) + np.log(rates.lamV) + np.log(rates.lamC)
        - rates.lamV * np.asarray(V, dtype=np.float64)
        - rates.lamC * np.asarray(C, dtype=np.float64)
    )


def log_joint_integral(V, C, S, N, rates: ClassRates) -> np.ndarray:
    """Log of the record's joint integral over the latent axis for one class."""
    lb = log_piece_integrals(S, N, rates)
    mx = np.max(lb, axis=-1)
    total = np.log(np.sum(np.exp(lb - mx[..., None]), axis=-1)) + mx
    return log_gamma_factor(V, C, rates) + total


def piece_log_terms(V, C, S, N, rates: ClassRates) -> np.ndarray:
    """The four closed-form piece terms (tail, base, mids) in log space,
    including the shared factor; -inf marks absent pieces."""
    return log_gamma_factor(V, C, rates)[..., None] + log_piece_integrals(S, N, rates)


def gamma_moments(S, N, rates: ClassRates):
    """Per-piece conditional means of the latent factor (the closed forms).

    Returns (G1, G2, G3, G4); the mid-piece entries are 0 where the piece
    interval is empty.
    """
    S = np.asarray(S, dtype=np.float64)
    N = np.asarray(N, dtype=np.float64)
    Y = np.maximum(S, N)
    y = np.minimum(S, N)
    c2, c3, c4 = combined_rates(rates)
    G1 = Y + 1.0 / rates.lamLp
    G2 = y * mean_offset(c2 * y)
    d = S - N
    ad = np.abs(d)
    G3 = np.where(d > 0, N + ad * mean_offset(c3 * ad), 0.0)
    G4 = np.where(d < 0, S + ad * mean_offset(c4 * ad), 0.0)
    return G1, G2, G3, G4


class PosteriorDensity:
    """The conditional density of the latent factor given one record.

    A mixture of up to four truncated exponentials: the piece weights come
    from the closed-form piece integrals, so the density integrates to one.
    """

    def __init__(self, record, theta: Theta):
        r = int(record.label) if record.label is not None else 0
        rates = theta.rates(r)
        S, N = float(record.S), float(record.N)
        self.Y, self.y = max(S, N), min(S, N)
        c2, c3, c4 = combined_rates(rates)
        lb = log_piece_integrals(S, N, rates)
        mx = np.max(lb)
        w = np.exp(lb - mx)
        self.weights = w / w.sum()
        self.lamLp = rates.lamLp
        mid_rate = c3 if S > N else c4
        # (interval, rate) per piece; tail rate is lamLp
        self.pieces = [
            ((self.Y, np.inf), rates.lamLp),
            ((0.0, self.y), c2),
            ((N, S) if S > N else (0.0, 0.0), c3),
            ((S, N) if N > S else (0.0, 0.0), c4),
        ]
        self._record = record

    def pdf(self, L):
        L = np.asarray(L, dtype=np.float64)
        out = np.zeros_like(L)
        for k, ((lo, hi), rate) in enumerate(self.pieces):
            wk = self.weights[k]
            if wk == 0.0 or hi <= lo:
                continue
            if np.isinf(hi):
                mask = L > lo
                val = np.where(mask, self.lamLp * np.exp(-self.lamLp * (L - lo)), 0.0)
            else:
                mask = (L > lo) & (L <= hi)
                width = hi - lo
                u = rate * width
                logz = -rate * (L - lo) - np.log(width) - log_em1_over(u)
                val = np.where(mask, np.exp(logz), 0.0)
            out = out + wk * val
        if not np.all(np.isfinite(out)):
            raise NumericError(f"posterior density non-finite for record {self._record}")
        return out

    def piece_boundaries(self):
        return (self.y, self.Y)
