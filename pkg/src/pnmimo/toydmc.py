"""Two-branch phase-noise toy channel, solved exactly.

The output is Y = (e^{j phi_1} + e^{j phi_2}) X / 2 with X in {+1, -1} and
each phase uniform on {-pi/2, 0, pi/2}. In the synchronous channel both
branches share one phase; otherwise the phases are independent. Outputs are
kept as exact rational coordinates so identical points aggregate without a
float tolerance.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

from .config import Mode

# e^{j phi} for phi in {-pi/2, 0, pi/2}: (re, im)
_ROTATIONS = ((0, -1), (1, 0), (0, 1))
_THIRD = Fraction(1, 3)


@dataclass(frozen=True, order=True)
class Point:
    re: Fraction
    im: Fraction

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __str__(self):
        return f"{self.re}{'+' if self.im >= 0 else '-'}{abs(self.im)}j"


def _as_prob(p) -> Fraction:
    q = Fraction(p) if not isinstance(p, float) else Fraction(p).limit_denominator(10**15)
    if not 0 <= q <= 1:
        raise ValueError(f"input prior p must lie in [0, 1], got {p}")
    return q


def _phase_pairs(mode: Mode):
    if Mode(mode) is Mode.SYNC:
        return [((r, r), _THIRD) for r in _ROTATIONS]
    return [((r1, r2), _THIRD * _THIRD) for r1, r2 in product(_ROTATIONS, repeat=2)]


def transition(mode) -> dict[int, dict[Point, Fraction]]:
    """Pr{Y = y | X = x} for x in {+1, -1}."""
    out = {}
    for x in (1, -1):
        row = defaultdict(Fraction)
        for ((a, b), (c, d)), w in _phase_pairs(mode):
            row[Point(Fraction(x * (a + c), 2), Fraction(x * (b + d), 2))] += w
        out[x] = dict(row)
    return out


def output_distribution(p, mode) -> dict[Point, Fraction]:
    """Exact output p.m.f. for Pr{X = +1} = p; zero-mass points are dropped."""
    q = _as_prob(p)
    pmf = defaultdict(Fraction)
    for x, px in ((1, q), (-1, 1 - q)):
        for y, w in transition(mode)[x].items():
            pmf[y] += px * w
    return {y: v for y, v in sorted(pmf.items()) if v}


def _entropy(masses) -> float:
    return -sum(float(m) * math.log2(float(m)) for m in masses if m)


def binary_entropy(p: float) -> float:
    return _entropy((p, 1 - p))


def mutual_information(p, mode) -> float:
    """I(X;Y) = H(Y) - H(Y|X) from the enumerated distributions."""
    q = _as_prob(p)
    rows = transition(mode)
    h_cond = float(q) * _entropy(rows[1].values()) + float(1 - q) * _entropy(rows[-1].values())
    return _entropy(output_distribution(q, mode).values()) - h_cond


def closed_form_information(p: float, mode) -> float:
    """(1/3) H2(p) synchronous, (5/9) H2(p) otherwise."""
    scale = 1 / 3 if Mode(mode) is Mode.SYNC else 5 / 9
    return scale * binary_entropy(p)


def capacity(mode, tol: float = 1e-10) -> tuple[float, float]:
    """Ternary search over p; the objective is concave in p. Returns (C, p*)."""
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        m1 = lo + (hi - lo) / 3
        m2 = hi - (hi - lo) / 3
        if mutual_information(m1, mode) < mutual_information(m2, mode):
            lo = m1
        else:
            hi = m2
    p = 0.5 * (lo + hi)
    return mutual_information(p, mode), p
