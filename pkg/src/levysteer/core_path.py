"""Exact lattice paths on a uniform time grid and elementary path functionals.

A path is a sequence of integer lattice coordinates; the value at grid index k
is ``units[k] * dx`` with ``dx = sqrt(dt)``.  Keeping integer coordinates makes
zeros, minima, excursions and sign actions exact, with no floating-point drift.
Grid times are exact rationals ``k * dt`` (dt itself must be rational).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from ._rng import stable_hash64

Rational = Union[int, Fraction]


class PathKind(str, Enum):
    SIGNED = "signed"        # scaled simple random walk: steps are exactly +-dx
    REFLECTED = "reflected"  # nonnegative, steps in {-dx, 0, +dx}
    FREE = "free"            # anything anchored at 0 on the lattice


def _as_dt(dt: Rational) -> Fraction:
    dt = Fraction(dt)
    if dt <= 0:
        raise ValueError("dt must be a positive rational")
    return dt


def _exact_sqrt(n: int) -> Optional[int]:
    r = math.isqrt(n)
    return r if r * r == n else None


def exact_dx(dt: Fraction) -> Optional[Fraction]:
    """sqrt(dt) as an exact rational when dt is a perfect square, else None."""
    rn = _exact_sqrt(dt.numerator)
    rd = _exact_sqrt(dt.denominator)
    if rn is None or rd is None:
        return None
    return Fraction(rn, rd)


class LatticePath:
    """Immutable lattice path.  ``units`` are integer space-step coordinates."""

    __slots__ = ("dt", "units", "kind", "_digest")

    def __init__(self, dt: Rational, units: Union[Sequence[int], np.ndarray], kind: PathKind = PathKind.FREE):
        dt = _as_dt(dt)
        arr = np.asarray(units, dtype=np.int64)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("units must be a nonempty 1-d integer sequence")
        if arr[0] != 0:
            raise ValueError("paths start at 0")
        kind = PathKind(kind)
        if arr.size > 1:
            steps = np.diff(arr)
            if kind is PathKind.SIGNED:
                if not np.all(np.abs(steps) == 1):
                    raise ValueError("signed paths move exactly one space step per time step")
            elif kind is PathKind.REFLECTED:
                # Zero steps can occur away from 0 for chain iterates (sign-flipped
                # dwells); only nonnegativity and the one-step bound are structural.
                if np.any(arr < 0):
                    raise ValueError("reflected paths are nonnegative")
                if not np.all(np.abs(steps) <= 1):
                    raise ValueError("reflected paths move at most one space step per time step")
        arr.setflags(write=False)
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "units", arr)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "_digest", None)

    def __setattr__(self, name, value):
        raise AttributeError("LatticePath is immutable")

    # -- geometry ----------------------------------------------------------

    @property
    def n_steps(self) -> int:
        return self.units.size - 1

    @property
    def dx(self) -> float:
        return math.sqrt(float(self.dt))

    @property
    def dx_exact(self) -> Optional[Fraction]:
        return exact_dx(self.dt)

    @property
    def horizon(self) -> Fraction:
        return self.n_steps * self.dt

    @property
    def values(self) -> np.ndarray:
        return self.units * self.dx

    def times(self) -> np.ndarray:
        return np.arange(self.units.size) * float(self.dt)

    def index_of(self, t: Rational) -> int:
        """Exact grid index of a grid time; raises if t is off-grid."""
        ratio = Fraction(t) / self.dt
        if ratio.denominator != 1:
            raise ValueError(f"{t} is not a grid time for dt={self.dt}")
        k = int(ratio)
        if not 0 <= k <= self.n_steps:
            raise ValueError(f"time {t} outside the horizon {self.horizon}")
        return k

    def time_at(self, k: int) -> Fraction:
        return k * self.dt

    def value_at(self, t: Rational) -> float:
        return float(self.units[self.index_of(t)]) * self.dx

    def slice_from(self, k: int, kind: Optional[PathKind] = None) -> "LatticePath":
        """Subpath restarted at grid index k (value there must be 0)."""
        if self.units[k] != 0:
            raise ValueError("can only restart a path at a zero")
        return LatticePath(self.dt, self.units[k:].copy(), kind or self.kind)

    def with_units(self, units: np.ndarray, kind: PathKind) -> "LatticePath":
        return LatticePath(self.dt, units, kind)

    # -- identity ----------------------------------------------------------

    def digest(self) -> int:
        """Stable 64-bit hash of (dt, kind, integer coordinates)."""
        d = object.__getattribute__(self, "_digest")
        if d is None:
            header = f"{self.dt.numerator}/{self.dt.denominator}:{self.kind.value}:".encode()
            d = stable_hash64(header + self.units.tobytes())
            object.__setattr__(self, "_digest", d)
        return d

    def __eq__(self, other) -> bool:
        if not isinstance(other, LatticePath):
            return NotImplemented
        return self.dt == other.dt and self.kind == other.kind and np.array_equal(self.units, other.units)

    def __hash__(self) -> int:
        return self.digest()

    def __repr__(self) -> str:
        n = self.units.size
        head = ",".join(str(int(u)) for u in self.units[: min(n, 8)])
        tail = ",..." if n > 8 else ""
        return f"LatticePath(dt={self.dt}, kind={self.kind.value}, units=[{head}{tail}], steps={self.n_steps})"

    # -- CSV interface -----------------------------------------------------

    def to_csv(self) -> str:
        """CSV with header ``t,value``; 12 significant digits."""
        dtf = float(self.dt)
        dx = self.dx
        lines = ["t,value"]
        for k, u in enumerate(self.units):
            lines.append(f"{k * dtf:.12g},{int(u) * dx:.12g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, dt: Rational, kind: PathKind = PathKind.FREE) -> "LatticePath":
        """Parse the CSV format, verifying the lattice invariants on load."""
        dt = _as_dt(dt)
        dx = math.sqrt(float(dt))
        rows = [ln for ln in text.strip().splitlines() if ln]
        if not rows or rows[0].strip().lower() != "t,value":
            raise ValueError("expected header line 't,value'")
        units = []
        for k, ln in enumerate(rows[1:]):
            t_s, v_s = ln.split(",")
            t, v = float(t_s), float(v_s)
            if abs(t - k * float(dt)) > float(dt) * 1e-6:
                raise ValueError(f"row {k}: time {t} is not the grid time {k * float(dt)}")
            u = round(v / dx)
            if abs(v - u * dx) > dx * 1e-6:
                raise ValueError(f"row {k}: value {v} is not a lattice multiple of dx={dx}")
            units.append(u)
        return cls(dt, units, kind)


@dataclass(frozen=True, eq=False)
class ZeroSet:
    """Grid zeros of a path: sorted indices, exact times ``k * dt``."""

    indices: np.ndarray
    dt: Fraction

    def __post_init__(self):
        self.indices.setflags(write=False)

    @property
    def times(self) -> tuple:
        return tuple(int(k) * self.dt for k in self.indices)

    def __len__(self) -> int:
        return self.indices.size

    def __contains__(self, t) -> bool:
        ratio = Fraction(t) / self.dt
        return ratio.denominator == 1 and int(ratio) in self.indices


# -- constructors and functionals -------------------------------------------


def sample_srw(steps: int, dt: Rational, seed: int) -> LatticePath:
    """Scaled simple random walk: iid +-dx increments from the seeded generator."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    rng = np.random.default_rng(seed)
    incs = rng.integers(0, 2, size=steps, dtype=np.int64) * 2 - 1
    units = np.concatenate(([0], np.cumsum(incs)))
    return LatticePath(dt, units, PathKind.SIGNED)


def running_min(w: LatticePath) -> LatticePath:
    return w.with_units(np.minimum.accumulate(w.units), PathKind.FREE)


def running_max(w: LatticePath) -> LatticePath:
    return w.with_units(np.maximum.accumulate(w.units), PathKind.FREE)


def reflect(w: LatticePath) -> LatticePath:
    """w - running_min(w); the nonnegative reflection of a walk."""
    units = w.units - np.minimum.accumulate(w.units)
    return w.with_units(units, PathKind.REFLECTED)


def _grid_index(w: LatticePath, t: Rational, name: str) -> int:
    try:
        return w.index_of(t)
    except ValueError as exc:
        raise ValueError(f"{name}: {exc}") from None


def amplitude_units(w: LatticePath, i: int, j: int) -> int:
    """max - min of the coordinates on grid indices [i, j]."""
    if i > j:
        raise ValueError("need i <= j")
    seg = w.units[i : j + 1]
    return int(seg.max() - seg.min())


def amplitude(w: LatticePath, a: Rational, b: Rational) -> float:
    """max - min of the path values on grid times [a, b]."""
    i, j = _grid_index(w, a, "amplitude"), _grid_index(w, b, "amplitude")
    if i > j:
        raise ValueError("amplitude: need a <= b")
    return amplitude_units(w, i, j) * w.dx


def _units_threshold(h: Rational, dt: Fraction) -> int:
    """Smallest integer c >= 1 with c * sqrt(dt) >= h (h > 0), exactly."""
    h = Fraction(h)
    if h <= 0:
        raise ValueError("h must be positive")
    ratio = h * h / dt  # need c*c >= ratio
    c = math.isqrt(ratio.numerator // ratio.denominator)
    while c * c * ratio.denominator < ratio.numerator:
        c += 1
    return max(c, 1)


def oscillation_count(w: LatticePath, t: Rational, h: Rational) -> int:
    """Number of completed amplitude-h oscillations by grid time t.

    T_0 = 0 and T_{n+1} is the first grid time with amplitude >= h since T_n;
    the count is the largest n with T_n <= t.  Exact on the lattice: the
    amplitude comparison is done in integer coordinates.
    """
    kt = _grid_index(w, t, "oscillation_count")
    c = _units_threshold(h, w.dt)
    units = w.units
    count = 0
    lo = hi = units[0]
    for k in range(1, kt + 1):
        u = units[k]
        if u < lo:
            lo = u
        elif u > hi:
            hi = u
        if hi - lo >= c:
            count += 1
            lo = hi = u
    return count


def zero_set(w: LatticePath, t: Optional[Rational] = None) -> ZeroSet:
    """Exact grid zeros up to time t (horizon if omitted); always contains 0."""
    idx = np.flatnonzero(w.units == 0)
    if t is not None:
        kt = _grid_index(w, t, "zero_set")
        idx = idx[idx <= kt]
    return ZeroSet(idx, w.dt)
