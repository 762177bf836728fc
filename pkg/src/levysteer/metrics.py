"""Zero-aware path pseudometrics and neighborhood membership.

Two ingredients: the sup distance ``d_cu`` on [0, t], and the zero-control
pseudometric ``d_cz`` defined as the infimum of the deltas for which every
zero of one function before t - delta lies within delta of a zero of the
other, both ways.  For a single zero z the inclusion at level delta fails
exactly when ``delta <= min(t - z, dist(z, other zeros))``, so

    d_cz(f, g, t) = max over zeros z of both sides of min(t - z, dist(z, Z(other)))

and the equivalence ``d_cz < delta  <=>  both inclusions hold at delta`` is
exact.  Zero sets here are finite unions of rational points and closed
intervals (lattice paths contribute points, piecewise-affine targets may
contribute intervals), so the maximum is over a finite candidate set and is
computed in exact rational arithmetic.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .core_path import LatticePath, PathKind, exact_dx

Rational = Union[int, Fraction]
# zero component: closed interval [lo, hi]; hi None means unbounded
ZeroComponent = Tuple[Fraction, Optional[Fraction]]


class PiecewiseAffineTarget:
    """Continuous piecewise-affine function on [0, inf), rational breakpoints.

    Defined by breakpoints (t_i, v_i) with t_0 = 0, v_0 = 0; constant equal to
    the last value beyond the last breakpoint.  Zero sets are exact unions of
    rational points and closed intervals.
    """

    __slots__ = ("breakpoints", "nonneg")

    def __init__(self, breakpoints: Sequence[Tuple[Rational, Rational]], nonneg: bool = False):
        pts = [(Fraction(t), Fraction(v)) for t, v in breakpoints]
        if not pts:
            raise ValueError("need at least one breakpoint")
        if pts[0][0] != 0:
            pts = [(Fraction(0), Fraction(0))] + pts
        if pts[0][1] != 0:
            raise ValueError("target must vanish at 0")
        for (t0, _), (t1, _) in zip(pts, pts[1:]):
            if t1 <= t0:
                raise ValueError("breakpoint times must be strictly increasing")
        if nonneg and any(v < 0 for _, v in pts):
            raise ValueError("nonnegative target has a negative breakpoint value")
        object.__setattr__(self, "breakpoints", tuple(pts))
        object.__setattr__(self, "nonneg", bool(nonneg))

    def __setattr__(self, name, value):
        raise AttributeError("PiecewiseAffineTarget is immutable")

    def __eq__(self, other):
        if not isinstance(other, PiecewiseAffineTarget):
            return NotImplemented
        return self.breakpoints == other.breakpoints

    def __hash__(self):
        return hash(self.breakpoints)

    def __repr__(self):
        pts = ", ".join(f"({t},{v})" for t, v in self.breakpoints)
        return f"PiecewiseAffineTarget([{pts}])"

    @property
    def end_time(self) -> Fraction:
        return self.breakpoints[-1][0]

    @property
    def end_value(self) -> Fraction:
        return self.breakpoints[-1][1]

    def eval_exact(self, t: Rational) -> Fraction:
        t = Fraction(t)
        if t < 0:
            raise ValueError("t must be >= 0")
        pts = self.breakpoints
        if t >= pts[-1][0]:
            return pts[-1][1]
        # rightmost breakpoint with time <= t
        lo, hi = 0, len(pts) - 1
        while lo + 1 < hi:
            mid = (lo + hi) // 2
            if pts[mid][0] <= t:
                lo = mid
            else:
                hi = mid
        (t0, v0), (t1, v1) = pts[lo], pts[lo + 1]
        if t == t0:
            return v0
        return v0 + (v1 - v0) * (t - t0) / (t1 - t0)

    def eval_grid(self, dt: Rational, n_steps: int) -> np.ndarray:
        """Float values at grid times 0, dt, ..., n_steps*dt."""
        ts = np.arange(n_steps + 1) * float(Fraction(dt))
        xs = [float(t) for t, _ in self.breakpoints]
        ys = [float(v) for _, v in self.breakpoints]
        return np.interp(ts, xs, ys)

    def sign_at(self, t: Rational) -> int:
        v = self.eval_exact(t)
        return 0 if v == 0 else (1 if v > 0 else -1)

    def max_abs_slope(self) -> Fraction:
        out = Fraction(0)
        for (t0, v0), (t1, v1) in zip(self.breakpoints, self.breakpoints[1:]):
            out = max(out, abs((v1 - v0) / (t1 - t0)))
        return out

    def sup_abs(self, a: Rational, b: Rational) -> Fraction:
        """max |f| over [a, b], exact."""
        a, b = Fraction(a), Fraction(b)
        if a > b:
            raise ValueError("need a <= b")
        cands = [a, b] + [t for t, _ in self.breakpoints if a < t < b]
        return max(abs(self.eval_exact(t)) for t in cands)

    def osc(self, delta: Rational, a: Rational, b: Rational) -> Fraction:
        """sup |f(s1) - f(s2)| over s1, s2 in [a, b] with |s1 - s2| <= delta.

        Piecewise-affine, so window extrema sit at breakpoints or at window
        edges anchored on breakpoints; the candidate set below is exhaustive.
        """
        a, b, delta = Fraction(a), Fraction(b), Fraction(delta)
        if delta <= 0:
            return Fraction(0)
        anchors = {a, b}
        for t, _ in self.breakpoints:
            for s in (t, t - delta):
                if a <= s and s + delta <= b:
                    anchors.add(s)
        if b - delta >= a:
            anchors.add(b - delta)
        best = Fraction(0)
        for s in anchors:
            w0, w1 = s, min(s + delta, b)
            if w0 < a or w0 > b:
                continue
            pts = [w0, w1] + [t for t, _ in self.breakpoints if w0 < t < w1]
            vals = [self.eval_exact(p) for p in pts]
            best = max(best, max(vals) - min(vals))
        return best

    def zero_components(self) -> List[ZeroComponent]:
        """Zero set as maximal closed intervals (points are degenerate)."""
        comps: List[ZeroComponent] = []

        def push(lo: Fraction, hi: Optional[Fraction]):
            if comps and comps[-1][1] is not None and comps[-1][1] >= lo:
                prev_lo, prev_hi = comps[-1]
                comps[-1] = (prev_lo, hi if hi is None or prev_hi is None else max(prev_hi, hi))
            else:
                comps.append((lo, hi))

        pts = self.breakpoints
        for (t0, v0), (t1, v1) in zip(pts, pts[1:]):
            if v0 == 0 and v1 == 0:
                push(t0, t1)
            elif v0 == 0:
                push(t0, t0)
            elif v1 == 0:
                pass  # right endpoint handled by the next segment or the tail
            elif (v0 < 0) != (v1 < 0):
                z = t0 + (t1 - t0) * (-v0) / (v1 - v0)
                push(z, z)
        last_t, last_v = pts[-1]
        if last_v == 0:
            push(last_t, None)
        return comps

    def abs_target(self) -> "PiecewiseAffineTarget":
        """|f| as a piecewise-affine target (crossings become breakpoints)."""
        pts: List[Tuple[Fraction, Fraction]] = []
        bp = self.breakpoints
        for (t0, v0), (t1, v1) in zip(bp, bp[1:]):
            pts.append((t0, abs(v0)))
            if v0 != 0 and v1 != 0 and (v0 < 0) != (v1 < 0):
                z = t0 + (t1 - t0) * (-v0) / (v1 - v0)
                pts.append((z, Fraction(0)))
        pts.append((bp[-1][0], abs(bp[-1][1])))
        return PiecewiseAffineTarget(pts, nonneg=True)

    def to_lattice_path(self, dt: Rational, steps: int, kind: PathKind = PathKind.FREE) -> LatticePath:
        """Excursion-faithful lattice snap: walks toward the rounded target but
        is exactly 0 where the target vanishes and never 0 strictly inside a
        target excursion, so the zero sets agree to within a grid step."""
        dt = Fraction(dt)
        dx = math.sqrt(float(dt))
        units = [0]
        for k in range(1, steps + 1):
            v = self.eval_exact(k * dt)
            if v == 0:
                goal = 0
            else:
                mag = max(1, round(abs(float(v)) / dx))
                goal = mag if v > 0 else -mag
            cur = units[-1]
            units.append(cur + (0 if goal == cur else (1 if goal > cur else -1)))
        return LatticePath(dt, units, kind)

    def to_json(self) -> dict:
        return {"breakpoints": [[str(t), str(v)] for t, v in self.breakpoints]}

    @classmethod
    def from_json(cls, obj: dict, nonneg: bool = False) -> "PiecewiseAffineTarget":
        pts = [(Fraction(t), Fraction(v)) for t, v in obj["breakpoints"]]
        return cls(pts, nonneg=nonneg)


def snap_target(breakpoints: Sequence[Tuple[Rational, Rational]], nonneg: bool = False) -> PiecewiseAffineTarget:
    """Validate a piecewise-affine spec into an exact target (f(0) = 0 enforced)."""
    return PiecewiseAffineTarget(breakpoints, nonneg=nonneg)


# -- zero structures ---------------------------------------------------------


PathOrTarget = Union[LatticePath, PiecewiseAffineTarget]


def _zero_components_of(obj: PathOrTarget) -> List[ZeroComponent]:
    if isinstance(obj, PiecewiseAffineTarget):
        return obj.zero_components()
    dt = obj.dt
    return [(int(k) * dt, int(k) * dt) for k in np.flatnonzero(obj.units == 0)]


def _dist_to_components(z: Fraction, comps: List[ZeroComponent], los: List[Fraction]) -> Fraction:
    """Exact distance from z to a sorted union of closed intervals."""
    i = bisect_right(los, z)
    best: Optional[Fraction] = None
    for j in (i - 1, i):
        if 0 <= j < len(comps):
            lo, hi = comps[j]
            if hi is None:
                d = max(Fraction(0), lo - z)
            elif z < lo:
                d = lo - z
            elif z > hi:
                d = z - hi
            else:
                d = Fraction(0)
            best = d if best is None else min(best, d)
    if best is None:
        raise ValueError("empty zero set")
    return best


def _one_sided_crit(zf: List[ZeroComponent], zg: List[ZeroComponent], t: Fraction) -> Fraction:
    """max over z in Zf (clipped to [0, t]) of min(t - z, dist(z, Zg)).

    The maximand is piecewise linear in z with slopes in {-1, 0, +1};
    candidates are component endpoints of both sides, gap midpoints of Zg,
    and crossings of t - z with the rising branches of dist(., Zg).
    """
    glos = [lo for lo, _ in zg]
    best = Fraction(0)

    def consider(z: Fraction):
        nonlocal best
        val = min(t - z, _dist_to_components(z, zg, glos))
        if val > best:
            best = val

    # candidate z values inside a clipped component [lo, hi]; point components
    # (the lattice-path case) need no interior candidates
    for lo, hi in zf:
        if lo > t:
            continue
        hi_c = t if hi is None or hi > t else hi
        consider(lo)
        if hi_c != lo:
            consider(hi_c)
        if hi_c > lo:
            for j, (glo, ghi) in enumerate(zg):
                # gap midpoint between component j and j+1
                if ghi is not None and j + 1 < len(zg):
                    mid = (ghi + zg[j + 1][0]) / 2
                    if lo < mid < hi_c:
                        consider(mid)
                # crossing of t - z with the branch z - ghi (rising after component j)
                if ghi is not None:
                    cross = (t + ghi) / 2
                    if lo < cross < hi_c and cross > ghi:
                        consider(cross)
    return best


def d_cz(f: PathOrTarget, g: PathOrTarget, t: Rational) -> Fraction:
    """Exact zero-control pseudometric at horizon t.

    Satisfies: d_cz(f, g, t) < delta iff every zero of f before t - delta is
    within delta of a zero of g and conversely (the defining inclusions).
    """
    t = Fraction(t)
    if t <= 0:
        raise ValueError("t must be positive")
    zf = _zero_components_of(f)
    zg = _zero_components_of(g)
    if not zf or not zg:
        raise ValueError("zero sets always contain 0; empty set is a bug")
    return max(_one_sided_crit(zf, zg, t), _one_sided_crit(zg, zf, t))


# -- sup distance ------------------------------------------------------------


def _check_horizon(w: LatticePath, t: Fraction, name: str):
    if t > w.horizon:
        raise ValueError(f"{name}: horizon {w.horizon} is shorter than t={t}")


def d_cu(f: PathOrTarget, g: PathOrTarget, t: Rational) -> float:
    """Sup distance over the grid points (targets evaluated at grid points) of [0, t]."""
    t = Fraction(t)
    if t < 0:
        raise ValueError("t must be >= 0")
    if isinstance(f, PiecewiseAffineTarget) and isinstance(g, PiecewiseAffineTarget):
        cands = [Fraction(0), t] + [s for s, _ in f.breakpoints + g.breakpoints if 0 < s < t]
        return float(max(abs(f.eval_exact(s) - g.eval_exact(s)) for s in cands))
    if isinstance(f, LatticePath) and isinstance(g, LatticePath):
        if f.dt != g.dt:
            raise ValueError("paths live on different grids")
        _check_horizon(f, t, "d_cu")
        _check_horizon(g, t, "d_cu")
        kt = f.index_of(t)
        return float(np.abs(f.units[: kt + 1] - g.units[: kt + 1]).max(initial=0)) * f.dx
    if isinstance(f, PiecewiseAffineTarget):
        return d_cu(g, f, t)
    _check_horizon(f, t, "d_cu")
    kt = f.index_of(t)
    vals = g.eval_grid(f.dt, kt)
    return float(np.abs(f.units[: kt + 1] * f.dx - vals).max())


def d_cu_exact(f: LatticePath, g: PathOrTarget, t: Rational) -> Optional[Fraction]:
    """Exact sup distance when the space step is rational, else None."""
    dxf = exact_dx(f.dt)
    if dxf is None:
        return None
    t = Fraction(t)
    kt = f.index_of(t)
    if isinstance(g, LatticePath):
        if g.dt != f.dt:
            raise ValueError("paths live on different grids")
        return int(np.abs(f.units[: kt + 1] - g.units[: kt + 1]).max(initial=0)) * dxf
    best = Fraction(0)
    for k in range(kt + 1):
        diff = abs(int(f.units[k]) * dxf - g.eval_exact(k * f.dt))
        if diff > best:
            best = diff
    return best


# -- membership --------------------------------------------------------------


@dataclass(frozen=True)
class CuczBall:
    """Neighborhood V_t(center, rho, delta): sup radius rho, zero-control radius delta."""

    center: PathOrTarget
    t: Fraction
    rho: Fraction
    delta: Fraction

    def __post_init__(self):
        object.__setattr__(self, "t", Fraction(self.t))
        object.__setattr__(self, "rho", Fraction(self.rho))
        object.__setattr__(self, "delta", Fraction(self.delta))
        if self.t <= 0 or self.rho <= 0 or self.delta <= 0:
            raise ValueError("t, rho, delta must be positive")

    def to_json(self) -> dict:
        if isinstance(self.center, PiecewiseAffineTarget):
            center = self.center.to_json()
        else:
            center = {"path_digest": self.center.digest()}
        return {
            "t": str(self.t),
            "rho": str(self.rho),
            "delta": str(self.delta),
            "center": center,
        }


def in_ball(g: PathOrTarget, ball: CuczBall) -> bool:
    """Strict membership: d_cu < rho and d_cz < delta.

    The zero-control comparison is exact; the sup comparison is exact whenever
    the space step is rational (perfect-square dt), float otherwise.
    """
    if isinstance(g, LatticePath):
        exact = d_cu_exact(g, ball.center, ball.t)
    elif isinstance(ball.center, LatticePath):
        exact = d_cu_exact(ball.center, g, ball.t)
    else:
        exact = None
    if exact is not None:
        cu_ok = exact < ball.rho
    else:
        cu_ok = d_cu(g, ball.center, ball.t) < float(ball.rho)
    return cu_ok and d_cz(g, ball.center, ball.t) < ball.delta


def has_zero_in(w: LatticePath, lo: Rational, hi: Rational) -> bool:
    """Exact: does the path vanish at a grid time strictly inside (lo, hi)?"""
    lo, hi = Fraction(lo), Fraction(hi)
    k_lo = int(-((-lo) // w.dt))  # ceil
    if k_lo * w.dt == lo:
        k_lo += 1
    k_hi = int(hi // w.dt)
    if k_hi * w.dt == hi:
        k_hi -= 1
    k_hi = min(k_hi, w.n_steps)
    if k_lo > k_hi:
        return False
    return bool(np.any(w.units[k_lo : k_hi + 1] == 0))


def in_bridge_ball(
    r: LatticePath,
    center: PathOrTarget,
    a: Rational,
    b: Rational,
    rho: Rational,
    delta: Rational,
) -> bool:
    """Bridge neighborhood U_{a,b}: zeros forced near both ends, sup control on [a, b].

    Requires a zero in (a, a+delta) and in (b-delta, b), and
    sup over grid times of [a, b] of |r - center| < rho.
    """
    a, b, rho, delta = Fraction(a), Fraction(b), Fraction(rho), Fraction(delta)
    if not (has_zero_in(r, a, a + delta) and has_zero_in(r, b - delta, b)):
        return False
    ka, kb = r.index_of(a) if a % r.dt == 0 else int(a // r.dt) + 1, int(b // r.dt)
    dxf = exact_dx(r.dt)
    if isinstance(center, PiecewiseAffineTarget) and dxf is not None:
        worst = max(
            abs(int(r.units[k]) * dxf - center.eval_exact(k * r.dt)) for k in range(ka, kb + 1)
        )
        return worst < rho
    if isinstance(center, LatticePath):
        seg = np.abs(r.units[ka : kb + 1] - center.units[ka : kb + 1]).max(initial=0)
        if dxf is not None:
            return int(seg) * dxf < rho
        return float(seg) * r.dx < float(rho)
    vals = center.eval_grid(r.dt, kb)
    worst_f = float(np.abs(r.units[ka : kb + 1] * r.dx - vals[ka:]).max())
    return worst_f < float(rho)


# -- constructive density (piecewise-affine approximation of a path) ---------


def pa_approximation(r: LatticePath, t: Rational, rho: Rational, delta: Rational) -> PiecewiseAffineTarget:
    """Piecewise-affine target inside V_t(r, rho, delta), built constructively.

    Subdivides [0, t] finer than the path's rho-oscillation scale, anchors the
    subdivision at a delta-cover of the zeros, and interpolates the (rational)
    path values.  Realizes the density of rational piecewise-affine functions
    for the joint sup/zero-control topology.
    """
    t, rho, delta = Fraction(t), Fraction(rho), Fraction(delta)
    dxf = exact_dx(r.dt)
    kt = r.index_of(t)
    # window of w grid steps has amplitude <= w*dx < rho
    w = int(Fraction(rho) / Fraction(dxf) ) - 1 if dxf else int(float(rho) / r.dx) - 1
    w = max(1, min(w, int(delta // r.dt) - 1 if delta // r.dt >= 2 else 1, int((t // r.dt))))
    zeros = [int(k) for k in np.flatnonzero(r.units[: kt + 1] == 0)]
    anchors = sorted(set(zeros + [0, kt]))
    grid: List[int] = []
    prev = 0
    for z in anchors:
        while z - prev > w:
            prev += w
            grid.append(prev)
        grid.append(z)
        prev = z
    ks = sorted(set(grid))
    if dxf is not None:
        pts = [(k * r.dt, int(r.units[k]) * dxf) for k in ks]
    else:
        pts = [(k * r.dt, Fraction(float(r.units[k]) * r.dx).limit_denominator(10**9)) for k in ks]
    return PiecewiseAffineTarget(pts, nonneg=not np.any(r.units[: kt + 1] < 0))
