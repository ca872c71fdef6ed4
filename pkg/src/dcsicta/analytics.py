"""Expected collision-resolution lengths S_k and throughput k/S_k.

S_k is the mean number of transmitted rounds needed to resolve a collision of
k messages (the collision round itself included).  With fair binary splitting

    S_k = 2^(1-k) / (1 - 2^(1-k)) * sum_{i<k} C(k, i) S_i,   S_0 = S_1 = 1.

The optimized variant, where two colliding senders recover each other's
message and only the smaller one is resent, pins S_2 = 2 and feeds that value
into every larger k.  All arithmetic is exact; floats appear only in output.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb

from .sicta import OPTIMIZED, STANDARD, VARIANTS

MST_K = 64
MST_SPREAD_FROM = 48


def _check_variant(variant: str) -> None:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


@lru_cache(maxsize=None)
def _table(variant: str, k_max: int) -> tuple[Fraction, ...]:
    S = [Fraction(1), Fraction(1)]
    for k in range(2, k_max + 1):
        if variant == OPTIMIZED and k == 2:
            S.append(Fraction(2))
            continue
        a = Fraction(1, 2 ** (k - 1))
        S.append(a / (1 - a) * sum(comb(k, i) * S[i] for i in range(k)))
    return tuple(S)


def expected_rounds(k: int, variant: str = STANDARD) -> Fraction:
    _check_variant(variant)
    if k < 0:
        raise ValueError("k must be >= 0")
    # grow in blocks so repeated calls reuse one cached table
    size = max(MST_K, -(-k // MST_K) * MST_K)
    return _table(variant, size)[k]


def expected_rounds_symmetric(k: int, variant: str = STANDARD) -> Fraction:
    """S_k from the unreduced split recursion sum_i C(k,i) 2^-k (S_i + S_{k-i}).

    S_k shows up on both sides (i = 0 and i = k); it is solved for directly.
    Independent of the closed form in `expected_rounds`, used to cross-check it.
    """
    _check_variant(variant)
    S = {0: Fraction(1), 1: Fraction(1)}
    for n in range(2, k + 1):
        if variant == OPTIMIZED and n == 2:
            S[2] = Fraction(2)
            continue
        w = Fraction(1, 2 ** n)
        rest = sum(comb(n, i) * w * (S[i] + S[n - i]) for i in range(1, n))
        # the i = 0 and i = n terms each contribute w * (S_0 + S_n)
        S[n] = (rest + 2 * w * S[0]) / (1 - 2 * w)
    return S[k]


@dataclass(frozen=True)
class ThroughputRow:
    k: int
    S: Fraction

    @property
    def rounds(self) -> float:
        return float(self.S)

    @property
    def throughput(self) -> float:
        return float(Fraction(self.k) / self.S)


@dataclass(frozen=True)
class ThroughputTable:
    variant: str
    rows: tuple

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "S_k_num", "S_k_den", "throughput"])
        for r in self.rows:
            w.writerow([r.k, r.S.numerator, r.S.denominator, repr(r.throughput)])
        return buf.getvalue()

    def row(self, k: int) -> ThroughputRow:
        return self.rows[k - 1]


def throughput_curve(k_max: int, variant: str = STANDARD) -> ThroughputTable:
    _check_variant(variant)
    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    return ThroughputTable(variant, tuple(
        ThroughputRow(k, expected_rounds(k, variant)) for k in range(1, k_max + 1)))


def mst_estimate(variant: str = STANDARD, k_max: int = MST_K) -> float:
    """Tail value k/S_k at k = k_max."""
    return throughput_curve(k_max, variant).row(k_max).throughput


def mst_spread(variant: str = STANDARD, k_max: int = MST_K) -> float:
    """Max minus min of k/S_k over k = 48..k_max, reported as the error bar."""
    lo = min(MST_SPREAD_FROM, k_max)
    vals = [r.throughput for r in throughput_curve(k_max, variant).rows[lo - 1:]]
    return max(vals) - min(vals)
