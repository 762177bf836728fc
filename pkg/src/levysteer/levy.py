"""Forward transform (discrete Tanaka), inverse sign step, and restart operators.

The forward transform of a walk w is the walk with increments
``sgn*(w_{k-1}) * (w_k - w_{k-1})`` where ``sgn*(x) = 1 if x > 0 else -1``.
With this sign convention the lattice identities

    |w_n| = hat_w_n + L_n,   L_n = max_{k<=n}(-hat_w_k),   |w| = hat_w - min(hat_w)

hold exactly (L is the discrete local time at 0, returned explicitly).

The inverse step F(e, r) = reflect(e . r) undoes the transform one sign choice
at a time; F_a acts like F but only after the first zero at or after time a,
preserving the path before it exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ._rng import derive_seed
from .core_path import LatticePath, PathKind, reflect
from .excursions import SignFamily, apply_signs, decompose
from .rationals import RationalIndex

Rational = Union[int, Fraction]


def levy_transform(w: LatticePath) -> Tuple[LatticePath, LatticePath]:
    """Forward transform and its local time, both exact on the lattice.

    Returns (hat_w, L) with L_n = |w_n| - hat_w_n, nondecreasing, growing only
    off steps leaving 0.
    """
    units = w.units
    incs = np.diff(units)
    signs = np.where(units[:-1] > 0, 1, -1).astype(np.int64)
    hat = np.concatenate(([0], np.cumsum(signs * incs)))
    local = np.abs(units) - hat
    signed = hat.size > 1 and bool(np.all(np.abs(np.diff(hat)) == 1))
    return (
        w.with_units(hat, PathKind.SIGNED if signed else PathKind.FREE),
        w.with_units(local, PathKind.FREE),
    )


def inverse_step(e: SignFamily, r: LatticePath) -> LatticePath:
    """F(e, r) = (e . r) - running_min(e . r), exactly."""
    return reflect(apply_signs(e, r))


def first_zero_after(r: LatticePath, a: Rational) -> Optional[Fraction]:
    """Smallest grid zero at time >= a, or None when the horizon is exhausted."""
    a = Fraction(a)
    if a < 0:
        raise ValueError("a must be >= 0")
    start = -((-a) // r.dt)  # ceil(a / dt)
    k0 = int(start)
    if k0 > r.n_steps:
        return None
    zeros = np.flatnonzero(r.units[k0:] == 0)
    if zeros.size == 0:
        return None
    return (k0 + int(zeros[0])) * r.dt


def _restart_index(r: LatticePath, a: Rational) -> Optional[int]:
    da = first_zero_after(r, a)
    return None if da is None else r.index_of(da)


def inverse_step_after(a: Rational, e: SignFamily, r: LatticePath) -> LatticePath:
    """F after a: identity up to the first zero D_a >= a, then F.

    Signs are evaluated at the original excursion numbers (all numbers before
    D_a are forced +1, matching the hybrid family with cut D_a), so the output
    coincides with r on [0, D_a] and D_a itself is preserved.  When no zero
    exists at or after a the operation is the identity (documented convention).
    """
    ka = _restart_index(r, a)
    if ka is None:
        return r
    factors = np.ones(r.units.size, dtype=np.int64)
    for exc in decompose(r):
        if exc.gi < ka:
            continue  # number <= D_a, forced +1
        if e.sign_of(exc.number) == -1:
            factors[exc.gi : exc.di + 1] = -1
    signed = r.units * factors
    out = r.units.copy()
    tail = signed[ka:]
    out[ka:] = tail - np.minimum.accumulate(tail)
    return r.with_units(out, PathKind.REFLECTED)


def shift_after(a: Rational, r: LatticePath) -> LatticePath:
    """Path restarted at D_a: t -> r(D_a + t).  Errors when D_a is infinite."""
    ka = _restart_index(r, a)
    if ka is None:
        raise ValueError(f"no zero after {a} within the horizon {r.horizon}")
    return r.slice_from(ka)


@dataclass(frozen=True)
class ChainState:
    """One chain state: step index, current reflected path, applied families."""

    step: int
    r: LatticePath
    history: Tuple[Tuple[SignFamily, int], ...] = ()

    @property
    def digest(self) -> int:
        return self.r.digest()


def run_chain(
    r0: LatticePath,
    n: int,
    seed: int,
    overrides_per_step: Optional[Sequence[Optional[Dict[RationalIndex, int]]]] = None,
    restarts: Optional[Sequence[Optional[Rational]]] = None,
) -> List[ChainState]:
    """Iterate the inverse step n times with per-step seeded sign families.

    Step k uses the family with seed derived from (seed, k) plus the optional
    overrides; with a restart time a_k the step is F after a_k.  Fully
    deterministic given the arguments.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if r0.kind is not PathKind.REFLECTED:
        raise ValueError("chains run on reflected paths")
    states = [ChainState(0, r0)]
    r = r0
    hist: Tuple[Tuple[SignFamily, int], ...] = ()
    for k in range(1, n + 1):
        ov = overrides_per_step[k - 1] if overrides_per_step else None
        fam = SignFamily(derive_seed(seed, k), ov)
        a = restarts[k - 1] if restarts else None
        r = inverse_step(fam, r) if a is None else inverse_step_after(a, fam, r)
        hist = hist + ((fam, r.digest()),)
        states.append(ChainState(k, r, hist))
    return states
