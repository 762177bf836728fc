"""Well-ordering of the positive rationals and first-rational-in-interval search.

Reduced fractions p/q are ordered by (p+q, p) lexicographically, which
well-orders Q+* with finitely many elements before any given one.  The first
fraction of an open interval under this order is also the unique fraction of
the interval minimizing both numerator and denominator (the common ancestor in
the Stern-Brocot tree), so it can be found by exact mediant descent instead of
scanning the enumeration.  Tests cross-check the descent against the scan.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Iterator, List, Tuple, Union

Rational = Union[int, Fraction]


@dataclass(frozen=True, order=False)
class RationalIndex:
    """Reduced positive fraction p/q, ordered by (p+q, p)."""

    p: int
    q: int

    def __post_init__(self):
        if self.p < 1 or self.q < 1:
            raise ValueError("numerator and denominator must be positive")
        if gcd(self.p, self.q) != 1:
            raise ValueError(f"{self.p}/{self.q} is not reduced")

    @property
    def order_key(self) -> Tuple[int, int]:
        return (self.p + self.q, self.p)

    def as_fraction(self) -> Fraction:
        return Fraction(self.p, self.q)

    def __lt__(self, other: "RationalIndex") -> bool:
        return self.order_key < other.order_key

    def __le__(self, other: "RationalIndex") -> bool:
        return self.order_key <= other.order_key

    def __str__(self) -> str:
        return f"{self.p}/{self.q}"

    @classmethod
    def parse(cls, text: str) -> "RationalIndex":
        p, _, q = text.partition("/")
        return cls(int(p), int(q or "1"))


def iter_fractions() -> Iterator[RationalIndex]:
    """All reduced positive fractions in (p+q, p) order."""
    s = 2
    while True:
        for p in range(1, s):
            q = s - p
            if gcd(p, q) == 1:
                yield RationalIndex(p, q)
        s += 1


def enumerate_fractions(limit: int) -> List[RationalIndex]:
    """First `limit` fractions of the enumeration."""
    if limit < 1:
        raise ValueError("limit must be >= 1")
    out: List[RationalIndex] = []
    for r in iter_fractions():
        out.append(r)
        if len(out) == limit:
            return out
    raise AssertionError("unreachable")


def _simplest_in_open(an: int, ad: int, bn: int, bd: int) -> Tuple[int, int]:
    """Simplest fraction strictly inside (an/ad, bn/bd); bd == 0 means +inf.

    Mediant descent via continued fractions; the result is reduced and is the
    Stern-Brocot ancestor of the interval, hence minimal in (p+q, p) order.
    """
    ia = an // ad
    # smallest integer > a; admissible if strictly below b
    if bd == 0 or (ia + 1) * bd < bn:
        return ia + 1, 1
    # both endpoints in [ia, ia+1]; x = ia + 1/y with y in (1/(b-ia), 1/(a-ia))
    fa_n, fa_d = an - ia * ad, ad          # a - ia, may be 0
    fb_n, fb_d = bn - ia * bd, bd          # b - ia, in (0, 1]
    yn, yd = _simplest_in_open(fb_d, fb_n, fa_d, fa_n)  # 1/(a-ia) = inf when fa_n == 0
    return ia * yn + yd, yn


def first_in_interval(a: Rational, b: Rational) -> RationalIndex:
    """Order-minimal reduced fraction strictly inside (a, b), 0 <= a < b."""
    a = Fraction(a)
    b = Fraction(b)
    if a < 0 or a >= b:
        raise ValueError(f"need 0 <= a < b, got ({a}, {b})")
    p, q = _simplest_in_open(a.numerator, a.denominator, b.numerator, b.denominator)
    return RationalIndex(p, q)


def first_in_interval_scan(a: Rational, b: Rational) -> RationalIndex:
    """Reference implementation: scan the enumeration until a fraction lands in (a, b).

    Kept as an independent oracle for first_in_interval; the sum is bounded by
    (ceil(b)+1) * (ceil(1/(b-a))+2), so the scan always terminates.
    """
    a = Fraction(a)
    b = Fraction(b)
    if a < 0 or a >= b:
        raise ValueError(f"need 0 <= a < b, got ({a}, {b})")
    bound = (int(-(-b // 1)) + 1) * (int(-(-1 // (b - a))) + 2) + 2
    for r in iter_fractions():
        if r.p + r.q > bound:
            raise AssertionError("termination bound exceeded")
        if a < r.as_fraction() < b:
            return r
    raise AssertionError("unreachable")
