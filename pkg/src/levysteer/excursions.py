"""Excursion decomposition, rational numbering, and the sign-family action.

An excursion of a nonnegative path is a maximal open grid interval on which
the path is strictly positive; it is named by the first positive rational
(in (p+q, p) order) strictly inside its time interval.  A sign family maps
rationals to {-1,+1}; acting on a path multiplies each excursion by the sign
at its number, which never moves a zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np

from ._rng import sign_from
from .core_path import LatticePath, PathKind
from .rationals import RationalIndex, first_in_interval

Rational = Union[int, Fraction]
_INF = float("inf")


@lru_cache(maxsize=1 << 18)
def _number_interval(dt_n: int, dt_d: int, gi: int, di: int) -> RationalIndex:
    dt = Fraction(dt_n, dt_d)
    return first_in_interval(gi * dt, di * dt)


@dataclass(frozen=True)
class Excursion:
    """One excursion: grid indices (gi, di), number, height in space steps."""

    gi: int
    di: int
    number: RationalIndex
    height_units: int
    dt: Fraction
    complete: bool = True

    @property
    def g(self) -> Fraction:
        return self.gi * self.dt

    @property
    def d(self) -> Fraction:
        return self.di * self.dt

    @property
    def length(self) -> Fraction:
        return (self.di - self.gi) * self.dt

    @property
    def height(self) -> float:
        return self.height_units * math.sqrt(float(self.dt))


def _positivity_runs(units: np.ndarray) -> list:
    """Maximal runs of nonzero coordinates as (gi, di, complete) index triples.

    gi is the zero preceding the run, di the zero following it; the final run
    is incomplete (di = last index) when the path ends away from zero.
    """
    n = units.size
    nz = units != 0
    if not nz.any():
        return []
    starts = np.flatnonzero(nz & ~np.concatenate(([False], nz[:-1])))
    ends = np.flatnonzero(nz & ~np.concatenate((nz[1:], [False])))
    runs = []
    for s, e in zip(starts, ends):
        gi = int(s) - 1
        if e == n - 1:
            runs.append((gi, n - 1, False))
        else:
            runs.append((gi, int(e) + 1, True))
    return runs


def decompose(r: LatticePath, t: Optional[Rational] = None) -> Tuple[Excursion, ...]:
    """Excursions of a nonnegative path, in time order, with their numbers.

    Zero-dwell stretches belong to no excursion.  An excursion cut by the
    horizon is numbered by the open interval (g, horizon) and flagged
    incomplete; its height and length use the truncated data.  With a time
    bound t, only excursions starting strictly before t are returned.
    """
    if np.any(r.units < 0):
        raise ValueError("decompose acts on nonnegative paths")
    kt = r.index_of(t) if t is not None else None
    units = r.units
    out = []
    for gi, di, complete in _positivity_runs(units):
        if kt is not None and gi >= kt:
            break
        num = _number_interval(r.dt.numerator, r.dt.denominator, gi, di)
        h = int(units[gi : di + 1].max())
        out.append(Excursion(gi, di, num, h, r.dt, complete))
    return tuple(out)


def _abs_path(w: LatticePath) -> LatticePath:
    if not np.any(w.units < 0):
        return w if w.kind is not PathKind.SIGNED else w.with_units(w.units, PathKind.FREE)
    return w.with_units(np.abs(w.units), PathKind.FREE)


class SignFamily:
    """Map Q+* -> {-1,+1}: finite overrides, an optional all-plus prefix below
    ``cut``, pseudorandom signs from (seed, p, q) elsewhere.

    Evaluation order: override if present, else +1 when the rational is <= cut,
    else the seeded pseudorandom sign.  Immutable and replayable.
    """

    __slots__ = ("seed", "overrides", "cut")

    def __init__(
        self,
        seed: int = 0,
        overrides: Optional[Mapping[RationalIndex, int]] = None,
        cut: Union[Rational, float, None] = None,
    ):
        object.__setattr__(self, "seed", int(seed))
        ov: Dict[RationalIndex, int] = {}
        for q, s in (overrides or {}).items():
            if s not in (-1, 1):
                raise ValueError("signs are -1 or +1")
            ov[q] = int(s)
        object.__setattr__(self, "overrides", ov)
        if cut is not None and cut != _INF:
            cut = Fraction(cut)
            if cut < 0:
                raise ValueError("cut must be >= 0")
        object.__setattr__(self, "cut", cut)

    def __setattr__(self, name, value):
        raise AttributeError("SignFamily is immutable")

    @classmethod
    def all_plus(cls) -> "SignFamily":
        return cls(0, None, _INF)

    @classmethod
    def random(cls, seed: int) -> "SignFamily":
        return cls(seed)

    def sign_of(self, q: RationalIndex) -> int:
        s = self.overrides.get(q)
        if s is not None:
            return s
        if self.cut is not None and q.as_fraction() <= self.cut:
            return 1
        return sign_from(self.seed, q.p, q.q)

    def with_overrides(self, overrides: Mapping[RationalIndex, int]) -> "SignFamily":
        merged = dict(self.overrides)
        merged.update(overrides)
        return SignFamily(self.seed, merged, self.cut)

    def __repr__(self) -> str:
        ov = {str(k): v for k, v in sorted(self.overrides.items(), key=lambda kv: kv[0].order_key)}
        return f"SignFamily(seed={self.seed}, overrides={ov}, cut={self.cut})"


def hybrid(cut: Union[Rational, float], e: SignFamily) -> SignFamily:
    """Family equal to +1 on rationals <= cut and to e beyond."""
    if cut == _INF:
        return SignFamily.all_plus()
    cut = Fraction(cut)
    if cut < 0:
        raise ValueError("cut must be >= 0")
    overrides = {q: s for q, s in e.overrides.items() if q.as_fraction() > cut}
    if e.cut == _INF:
        new_cut: Union[Fraction, float] = _INF
    elif e.cut is None:
        new_cut = cut
    else:
        new_cut = max(cut, Fraction(e.cut))
    if new_cut == 0:
        new_cut = None
    return SignFamily(e.seed, overrides, new_cut)


def apply_signs(e: SignFamily, w: LatticePath) -> LatticePath:
    """Multiply each excursion of w by the sign at its number (numbers of |w|).

    Zero dwells stay zero and |result| = |input| pointwise, so the zero set is
    preserved exactly.  The result is SIGNED when its steps are all +-dx, else
    FREE (nonnegative inputs with zero dwells produce dwells in the output).
    """
    factors = np.ones(w.units.size, dtype=np.int64)
    for exc in decompose(_abs_path(w)):
        if e.sign_of(exc.number) == -1:
            factors[exc.gi : exc.di + 1] = -1
    units = w.units * factors
    signed = units.size > 1 and bool(np.all(np.abs(np.diff(units)) == 1))
    return w.with_units(units, PathKind.SIGNED if signed else PathKind.FREE)


def extract_signs(w: LatticePath) -> Dict[RationalIndex, int]:
    """Per-excursion signs of a signed path, keyed by the numbers of |w|.

    apply_signs with these overrides maps |w| back to w exactly.
    """
    out: Dict[RationalIndex, int] = {}
    for exc in decompose(_abs_path(w)):
        # interior is nonzero by construction; the sign is constant there
        out[exc.number] = 1 if w.units[exc.gi + 1] > 0 else -1
    return out
