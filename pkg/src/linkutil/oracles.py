"""Quadrature oracles for the piecewise-exponential closed forms.

These integrate the pointwise-constructed latent density directly (no reuse
of the closed-form helpers), so they provide an independent numeric path for
the piece integrals, the per-piece latent means, the joint integrals, and
the posterior normalization. Not used by the estimation hot path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy.integrate import quad

from .model import ClassRates, Theta

TAIL_MULTIPLE = 40.0  # tail truncated at Y + 40/lamLp; remaining mass < 1e-17


def latent_logpdf_point(L: float, S: float, N: float, r: ClassRates) -> float:
    """Log of the unnormalized latent density at one point, built from the
    raw two-regime pairwise densities and the latent marginal."""
    if L <= 0.0:
        return -math.inf
    if S < L:
        a = math.log(r.lamS) + math.log(r.lamLp) - r.lamLp * L - (r.lamS + r.lamL - r.lamLp) * S
    else:
        a = math.log(r.lamL) + math.log(r.lamSp) - r.lamSp * S - (r.lamS + r.lamL - r.lamSp) * L
    if N < L:
        b = math.log(r.lamN) + math.log(r.lamLp) - r.lamLp * L - (r.lamN + r.lamL - r.lamLp) * N
    else:
        b = math.log(r.lamL) + math.log(r.lamNp) - r.lamNp * N - (r.lamN + r.lamL - r.lamNp) * L
    y = min(S, N)
    if L < y:
        c = math.log(r.lamL) - r.lamL * L
    else:
        c = math.log(r.lamLp) - r.lamLp * L
    return a + b - c


def piece_intervals(S: float, N: float, r: ClassRates) -> List[Tuple[float, float]]:
    """The four latent intervals in closed-form order: tail, base, the two
    mids (empty intervals are (0, 0))."""
    Y, y = max(S, N), min(S, N)
    hi = Y + TAIL_MULTIPLE / r.lamLp
    return [
        (Y, hi),
        (0.0, y),
        (N, S) if S > N else (0.0, 0.0),
        (S, N) if N > S else (0.0, 0.0),
    ]


def _quad_log(S, N, r, lo, hi, moment=0):
    """log integral of the unnormalized density (times L^moment) over (lo, hi),
    with an interior shift for overflow safety."""
    if hi <= lo:
        return -math.inf
    probes = [lo + 1e-12, 0.5 * (lo + hi), hi - 1e-12 if math.isfinite(hi) else lo + 1.0]
    shift = max(latent_logpdf_point(p, S, N, r) for p in probes)
    if not math.isfinite(shift):
        shift = 0.0

    def integrand(L):
        return math.exp(latent_logpdf_point(L, S, N, r) - shift) * (L ** moment)

    val, _ = quad(integrand, lo, hi, limit=500)
    if val <= 0.0:
        return -math.inf
    return math.log(val) + shift


def piece_log_masses(S: float, N: float, r: ClassRates) -> np.ndarray:
    """Quadrature log integrals over the four pieces (no gamma factor)."""
    return np.array([
        _quad_log(S, N, r, lo, hi) for lo, hi in piece_intervals(S, N, r)
    ])


def piece_means(S: float, N: float, r: ClassRates) -> np.ndarray:
    """Quadrature conditional means of L per piece; 0 for empty pieces."""
    out = np.zeros(4)
    for k, (lo, hi) in enumerate(piece_intervals(S, N, r)):
        if hi <= lo:
            continue
        lm0 = _quad_log(S, N, r, lo, hi)
        lm1 = _quad_log(S, N, r, lo, hi, moment=1)
        out[k] = math.exp(lm1 - lm0)
    return out


def log_joint_integral_quad(record, theta: Theta, label: int) -> float:
    """Quadrature version of the record's log joint integral for one class."""
    r = theta.rates(label)
    masses = piece_log_masses(record.S, record.N, r)
    finite = masses[np.isfinite(masses)]
    mx = finite.max()
    total = math.log(np.exp(finite - mx).sum()) + mx
    gamma = (
        math.log(r.p) + math.log(r.lamV) + math.log(r.lamC)
        - r.lamV * record.V - r.lamC * record.C
    )
    return gamma + total


def posterior_normalization(record, theta: Theta) -> float:
    """Integral over (0, inf) of the shipped posterior density, by quadrature
    on the closed-form piece boundaries."""
    from .model import PosteriorDensity

    dens = PosteriorDensity(record, theta)
    y, Y = dens.piece_boundaries()
    hi = Y + TAIL_MULTIPLE / dens.lamLp
    total = 0.0
    for lo, up in ((0.0, y), (y, Y), (Y, hi)):
        if up <= lo:
            continue
        val, _ = quad(lambda L: float(dens.pdf(L)), lo, up, limit=500)
        total += val
    return total


def rec_probability_quad(record, theta: Theta) -> float:
    li0 = log_joint_integral_quad(record, theta, 0)
    li1 = log_joint_integral_quad(record, theta, 1)
    return 1.0 / (1.0 + math.exp(li0 - li1))


# ---------------------------------------------------------------------------
# surrogate-objective assembly for maximization-step checks

RATE_COORDS = ("lamS", "lamSp", "lamN", "lamNp", "lamL", "lamLp")


@dataclass(frozen=True)
class CoordinateObjective:
    """One coordinate's slice of the surrogate objective: a*ln(x) - b*x."""

    a: float
    b: float

    def value(self, x: float) -> float:
        return self.a * math.log(x) - self.b * x

    def second_derivative(self, x: float) -> float:
        return -self.a / (x * x)

    def argmax(self):
        """Interior maximizer, or None when the slice increases without bound."""
        if self.b <= 0.0:
            return None
        return self.a / self.b


def coordinate_objectives(records, theta_k: Theta, label: int) -> dict:
    """(a, b) coefficients per rate coordinate for one class, assembled by
    quadrature from the per-piece normalized latent weights.

    The expectation-step weights normalize each latent piece on its own
    interval, so piece presence contributes unit mass; the coefficients
    follow the surrogate integrands term by term.
    """
    coeffs = {k: [0.0, 0.0] for k in RATE_COORDS}
    r = theta_k.rates(label)
    for rec in records:
        if int(rec.label) != label:
            continue
        S, N = rec.S, rec.N
        means = piece_means(S, N, r)
        g1, g2, g3, g4 = means
        present = [hi > lo for lo, hi in piece_intervals(S, N, r)]
        m1 = 1.0 if present[0] else 0.0
        m2 = 1.0 if present[1] else 0.0
        m3 = 1.0 if present[2] else 0.0
        m4 = 1.0 if present[3] else 0.0
        coeffs["lamS"][0] += m1 + m4
        coeffs["lamS"][1] += S * m1 + g2 * m2 + g3 * m3 + S * m4
        coeffs["lamSp"][0] += m2 + m3
        coeffs["lamSp"][1] += (S - g2) * m2 + (S - g3) * m3
        coeffs["lamN"][0] += m1 + m3
        coeffs["lamN"][1] += N * m1 + g2 * m2 + N * m3 + g4 * m4
        coeffs["lamNp"][0] += m2 + m4
        coeffs["lamNp"][1] += (N - g2) * m2 + (N - g4) * m4
        coeffs["lamL"][0] += m2 + m3 + m4
        coeffs["lamL"][1] += (S + N) * m1 + g2 * m2 + (g3 + N) * m3 + (g4 + S) * m4
        coeffs["lamLp"][0] += m1
        coeffs["lamLp"][1] += (g1 - S - N) * m1 - N * m3 - S * m4
    return {k: CoordinateObjective(a=v[0], b=v[1]) for k, v in coeffs.items()}


def golden_section_max(obj: CoordinateObjective, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Golden-section search for the maximizer of obj on [lo, hi]."""
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = math.log(lo), math.log(hi)
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = obj.value(math.exp(c)), obj.value(math.exp(d))
    while (b - a) > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = obj.value(math.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = obj.value(math.exp(d))
    return math.exp(0.5 * (a + b))
