"""Exact simulation toolkit for the Levy transformation of random-walk paths.

Everything is computed on a uniform time grid with space step sqrt(dt), so
zeros, excursions, minima and sign actions are exact integer arithmetic.
Statistical statements about Brownian motion become Donsker-limit tests.
"""

from .core_path import (
    LatticePath,
    PathKind,
    ZeroSet,
    amplitude,
    oscillation_count,
    reflect,
    running_max,
    running_min,
    sample_srw,
    zero_set,
)
from .rationals import RationalIndex, enumerate_fractions, first_in_interval
from .excursions import Excursion, SignFamily, apply_signs, decompose, extract_signs, hybrid
from .levy import (
    ChainState,
    first_zero_after,
    inverse_step,
    inverse_step_after,
    levy_transform,
    run_chain,
    shift_after,
)
from .metrics import CuczBall, PiecewiseAffineTarget, d_cu, d_cz, in_ball, in_bridge_ball, snap_target

__all__ = [
    "LatticePath",
    "PathKind",
    "ZeroSet",
    "sample_srw",
    "running_min",
    "running_max",
    "reflect",
    "amplitude",
    "oscillation_count",
    "zero_set",
    "RationalIndex",
    "enumerate_fractions",
    "first_in_interval",
    "Excursion",
    "SignFamily",
    "decompose",
    "apply_signs",
    "extract_signs",
    "hybrid",
    "levy_transform",
    "inverse_step",
    "first_zero_after",
    "inverse_step_after",
    "shift_after",
    "run_chain",
    "ChainState",
    "PiecewiseAffineTarget",
    "snap_target",
    "CuczBall",
    "d_cu",
    "d_cz",
    "in_ball",
    "in_bridge_ball",
]
