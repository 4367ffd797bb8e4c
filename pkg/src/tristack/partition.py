"""Insider best response and the sign partition of the leader's domain.

The insider's utility is linear in its own action, so its best response is
bang-bang: the sign of the slope ``f2(x, theta)`` picks the top or bottom of
the action range, and at a zero of the slope every action ties.  The leader's
interval is therefore split at the zeros of ``f2`` into closed sub-intervals
on which the best response is constant.  Zeros are located by a sign scan on
a uniform grid followed by bisection; each bracket is either collapsed to a
point (resolved mode) or kept as an explicit uncertainty gap whose width is
the control knob of the approximate solve mode.
"""

from __future__ import annotations

import dataclasses
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DomainError, GameValidationError
from .game import GameDefinition, _as_theta

#: relative slope tolerance: |f2| below this times the grid scale counts as zero
REL_TOL_ZERO = 1e-10

DEFAULT_GRID_M = 1024
DEFAULT_ZERO_WIDTH = 1e-8
DEFAULT_MAX_ZEROS = 64


@dataclasses.dataclass(frozen=True)
class BRResult:
    """Insider best response: a single endpoint or the whole action range."""

    kind: str  # 'point_max' | 'point_min' | 'interval'
    lo: float
    hi: float
    f2_value: float

    @property
    def is_interval(self) -> bool:
        return self.kind == "interval"

    @property
    def y(self) -> float:
        """Representative action (the chosen endpoint; undefined for ties)."""
        if self.is_interval:
            raise DomainError("tied best response has no single representative action")
        return self.lo


def br_insider(game: GameDefinition, x: float, theta, tol_zero: float = 0.0) -> BRResult:
    """Best response of the insider at leader action ``x`` under signal ``theta``.

    Positive slope selects the top of the action range, negative the bottom;
    ``|f2| <= tol_zero`` reports the full range (every action is optimal).
    """
    f2 = float(game.insider_slope(float(x), _as_theta(theta)))
    y_lo, y_hi = game.y_min, game.y_max
    if abs(f2) <= tol_zero:
        return BRResult(kind="interval", lo=y_lo, hi=y_hi, f2_value=f2)
    if f2 > 0.0:
        return BRResult(kind="point_max", lo=y_hi, hi=y_hi, f2_value=f2)
    return BRResult(kind="point_min", lo=y_lo, hi=y_lo, f2_value=f2)


@dataclasses.dataclass(frozen=True)
class SignInterval:
    """Closed sub-interval of the leader domain with constant slope sign."""

    lo: float
    hi: float
    sign: str  # 'positive' | 'negative'

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclasses.dataclass(frozen=True)
class PartitionResult:
    """Sign partition of the leader domain for one signal value.

    ``zeros`` holds either resolved zero locations (floats) or bracketing
    gaps ``(a, b)`` with ``b - a <= zero_width``, in increasing order;
    ``intervals`` covers the rest of the domain.  ``gap_width`` is the widest
    bracket kept (0.0 when all zeros are resolved to points).
    """

    theta: np.ndarray
    zeros: Tuple[Union[float, Tuple[float, float]], ...]
    intervals: Tuple[SignInterval, ...]
    gap_width: float

    @property
    def resolved_zeros(self) -> Tuple[float, ...]:
        return tuple(z for z in self.zeros if not isinstance(z, tuple))

    @property
    def gaps(self) -> Tuple[Tuple[float, float], ...]:
        return tuple(z for z in self.zeros if isinstance(z, tuple))


def _bisect_sign_change(f, lo: float, hi: float, f_lo: float, width: float) -> Tuple[float, float]:
    """Shrink a sign-change bracket to the requested width."""
    for _ in range(256):
        if hi - lo <= width:
            break
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0.0:
            half = 0.49 * width
            return mid - half, mid + half
        if (f_lo > 0) != (f_mid > 0):
            hi = mid
        else:
            lo, f_lo = mid, f_mid
    return lo, hi


def _refine_tangential(f, lo: float, hi: float) -> Tuple[float, float]:
    """Golden-section minimisation of |f| over a grid cell pair."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = abs(f(c)), abs(f(d))
    for _ in range(120):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = abs(f(c))
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = abs(f(d))
        if b - a < 1e-14 * max(1.0, abs(a)):
            break
    x = 0.5 * (a + b)
    return x, abs(f(x))


def partition_leader_domain(
    game: GameDefinition,
    theta,
    grid_m: int = DEFAULT_GRID_M,
    zero_width: float = DEFAULT_ZERO_WIDTH,
    *,
    keep_gaps: bool = False,
    max_zeros: int = DEFAULT_MAX_ZEROS,
) -> PartitionResult:
    """Split the leader domain at the zeros of the insider slope.

    A uniform scan of ``grid_m + 1`` points locates sign changes, each
    bisected to ``zero_width``.  With ``keep_gaps`` the brackets are reported
    as uncertainty gaps; otherwise each collapses to its midpoint.  Grid
    points where the slope vanishes without changing sign trigger a local
    search for the touch point, which is always resolved to a point.  Zeros
    on the domain boundary become interval endpoints rather than entries of
    ``zeros``.

    Raises:
        DomainError: on invalid grid/width arguments, or when more sign
            changes than ``max_zeros`` are found (the finite-zeros premise
            fails at this resolution).
        GameValidationError: when the slope is identically zero on the grid.
    """
    if grid_m < 2:
        raise DomainError(f"grid_m must be at least 2, got {grid_m}")
    if zero_width <= 0.0:
        raise DomainError(f"zero_width must be positive, got {zero_width}")
    theta_vec = _as_theta(theta)
    a, b = game.x_min, game.x_max

    def f(x: float) -> float:
        return float(game.insider_slope(float(x), theta_vec))

    xs = np.linspace(a, b, grid_m + 1)
    vals = np.array([f(x) for x in xs])
    scale = float(np.max(np.abs(vals)))
    if scale == 0.0:
        raise GameValidationError("insider slope vanishes on the whole grid; the sign partition is undefined")
    tol_zero = REL_TOL_ZERO * scale

    zeros: List[Union[float, Tuple[float, float]]] = []
    max_gap = 0.0
    sign_changes = 0
    near_zero = np.abs(vals) <= tol_zero
    for i in range(grid_m):
        f_lo, f_hi = vals[i], vals[i + 1]
        if near_zero[i] or near_zero[i + 1]:
            continue  # handled by the tangential pass (or a boundary zero)
        if (f_lo > 0) != (f_hi > 0):
            sign_changes += 1
            if sign_changes > max_zeros:
                raise DomainError(
                    f"more than {max_zeros} sign changes of the insider slope found; "
                    "raise the zero budget or check the slope definition"
                )
            g_lo, g_hi = _bisect_sign_change(f, float(xs[i]), float(xs[i + 1]), float(f_lo), zero_width)
            if keep_gaps:
                zeros.append((g_lo, g_hi))
                max_gap = max(max_gap, g_hi - g_lo)
            else:
                zeros.append(0.5 * (g_lo + g_hi))

    # touch points: |f2| at grid level ~ 0 with equal signs on both sides
    for i in np.nonzero(near_zero)[0]:
        x_i = float(xs[i])
        if i == 0 or i == grid_m:
            continue  # boundary zeros are interval endpoints by convention
        left, right = vals[i - 1], vals[i + 1]
        if abs(left) <= tol_zero or abs(right) <= tol_zero:
            continue
        if (left > 0) != (right > 0):
            # genuine sign change sitting on the grid point itself
            sign_changes += 1
            if sign_changes > max_zeros:
                raise DomainError(
                    f"more than {max_zeros} sign changes of the insider slope found; "
                    "raise the zero budget or check the slope definition"
                )
            g_lo, g_hi = _bisect_sign_change(f, float(xs[i - 1]), float(xs[i + 1]), float(left), zero_width)
            if keep_gaps:
                zeros.append((g_lo, g_hi))
                max_gap = max(max_gap, g_hi - g_lo)
            else:
                zeros.append(0.5 * (g_lo + g_hi))
            continue
        x_touch, residual = _refine_tangential(f, float(xs[i - 1]), float(xs[i + 1]))
        if residual <= tol_zero:
            zeros.append(x_touch)

    zeros.sort(key=lambda z: z[0] if isinstance(z, tuple) else z)

    # assemble the covering intervals between consecutive zero features
    cuts: List[Tuple[float, float]] = []
    cursor = a
    for z in zeros:
        z_lo, z_hi = z if isinstance(z, tuple) else (z, z)
        if z_lo > cursor + 1e-15 * max(1.0, abs(cursor)):
            cuts.append((cursor, z_lo))
        cursor = max(cursor, z_hi)
    if cursor < b - 1e-15 * max(1.0, abs(b)):
        cuts.append((cursor, b))

    intervals = []
    for lo, hi in cuts:
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        intervals.append(SignInterval(lo=lo, hi=hi, sign="positive" if f_mid > 0 else "negative"))

    return PartitionResult(
        theta=theta_vec,
        zeros=tuple(zeros),
        intervals=tuple(intervals),
        gap_width=max_gap,
    )


def partition_with_gaps(game: GameDefinition, theta, gaps: Sequence[Sequence[float]]) -> PartitionResult:
    """Partition built from caller-supplied bracketing gaps.

    Used when the uncertainty brackets come from outside (e.g. a configured
    experiment); each gap must contain a sign change of the slope and the
    gaps must be disjoint and interior to the leader domain.
    """
    theta_vec = _as_theta(theta)
    a, b = game.x_min, game.x_max

    def f(x: float) -> float:
        return float(game.insider_slope(float(x), theta_vec))

    norm = []
    for g in gaps:
        lo, hi = float(g[0]), float(g[1])
        if not (a <= lo < hi <= b):
            raise DomainError(f"gap [{lo}, {hi}] is not an interior sub-interval of [{a}, {b}]")
        if (f(lo) > 0) == (f(hi) > 0):
            raise DomainError(f"gap [{lo}, {hi}] does not bracket a sign change of the insider slope")
        norm.append((lo, hi))
    norm.sort()
    for (l1, h1), (l2, h2) in zip(norm, norm[1:]):
        if h1 > l2:
            raise DomainError("gaps overlap")

    cuts: List[Tuple[float, float]] = []
    cursor = a
    for lo, hi in norm:
        if lo > cursor:
            cuts.append((cursor, lo))
        cursor = hi
    if cursor < b:
        cuts.append((cursor, b))

    intervals = tuple(
        SignInterval(lo=lo, hi=hi, sign="positive" if f(0.5 * (lo + hi)) > 0 else "negative")
        for lo, hi in cuts
    )
    return PartitionResult(
        theta=theta_vec,
        zeros=tuple(norm),
        intervals=intervals,
        gap_width=max((hi - lo for lo, hi in norm), default=0.0),
    )


def halve_gap(game: GameDefinition, theta, gap: Sequence[float]) -> Tuple[float, float]:
    """Halve a bracketing gap, keeping the half that still brackets the zero."""
    theta_vec = _as_theta(theta)
    lo, hi = float(gap[0]), float(gap[1])
    mid = 0.5 * (lo + hi)
    f_lo = float(game.insider_slope(lo, theta_vec))
    f_mid = float(game.insider_slope(mid, theta_vec))
    if f_mid == 0.0:
        quarter = 0.25 * (hi - lo)
        return mid - 0.5 * quarter, mid + 0.5 * quarter
    if (f_lo > 0) != (f_mid > 0):
        return lo, mid
    return mid, hi
