"""Brute-force grid reference solvers, independent of the gradient machinery.

Everything here works by exhaustive evaluation on grids: the attacker game by
best-response sweeps over per-coordinate grids, the leader problem by scanning
an x-grid (branching on the insider slope sign pointwise), and the
simultaneous-move equilibria by scoring every grid profile's best unilateral
improvement.  No step sizes, contraction constants, or sensitivities are
involved, so agreement with the gradient solvers is a genuine cross-check.
"""

from __future__ import annotations

import dataclasses
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import DomainError, OracleBudgetError, OracleCycleError
from .game import GameDefinition, _as_theta
from .solver import EquilibriumResult

#: zeros of the insider slope are declared at this fraction of its grid scale
_REL_TOL_ZERO = 1e-10

#: refinement windows extend this many grid spacings around the incumbent
_REFINE_SPACINGS = 5.0

_MAX_SWEEPS = 10_000


@dataclasses.dataclass(frozen=True)
class OracleGrid:
    """Grid densities and refinement budget for the reference solvers."""

    nx: int = 201
    ny: int = 201
    nz: int = 201
    refine_rounds: int = 3
    budget: int = 100_000_000

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            if getattr(self, name) < 2:
                raise DomainError(f"{name} must be at least 2")
        if self.refine_rounds < 0:
            raise DomainError("refine_rounds must be nonnegative")
        if self.budget < 1:
            raise DomainError("budget must be positive")


class _Meter:
    """Counts utility evaluations against the grid budget."""

    def __init__(self, budget: int):
        self.budget = int(budget)
        self.used = 0

    def charge(self, n: int) -> None:
        self.used += int(n)
        if self.used > self.budget:
            raise OracleBudgetError(
                f"oracle evaluation budget exhausted ({self.used} > {self.budget})"
            )


def _grid_nash(game: GameDefinition, x: float, y: float, theta_vec: np.ndarray,
               grids: List[np.ndarray], meter: _Meter,
               start: Optional[np.ndarray] = None) -> np.ndarray:
    """Best-response sweeps over per-coordinate grids until a fixed profile.

    Players update in index order; each update is an argmax over the player's
    own grid with ties broken toward the smallest index.  A revisited profile
    that is not a fixed point is a best-response cycle and is reported as
    such.
    """
    n = game.n_attackers
    if start is None:
        idx = [g.size // 2 for g in grids]
    else:
        idx = [int(np.argmin(np.abs(g - start[i]))) for i, g in enumerate(grids)]
    z = np.array([grids[i][idx[i]] for i in range(n)], dtype=float)

    seen = {tuple(idx): 0}
    history = [tuple(idx)]
    for sweep in range(1, _MAX_SWEEPS + 1):
        changed = False
        for i in range(n):
            g = grids[i]
            batch = np.tile(z, (g.size, 1))
            batch[:, i] = g
            meter.charge(g.size)
            vals = np.asarray(game.attacker_utility(i, x, y, batch, theta_vec), dtype=float)
            j = int(np.argmax(vals))
            if j != idx[i]:
                idx[i] = j
                z[i] = g[j]
                changed = True
        if not changed:
            return z
        key = tuple(idx)
        if key in seen:
            cycle = history[seen[key]:] + [key]
            raise OracleCycleError(
                f"best-response iteration cycled after {sweep} sweeps", cycle=cycle
            )
        seen[key] = len(history)
        history.append(key)
    raise OracleCycleError(
        f"best-response iteration did not settle within {_MAX_SWEEPS} sweeps",
        cycle=history[-10:],
    )


def oracle_nash(game: GameDefinition, x: float, y: float, theta,
                grid: Optional[OracleGrid] = None, *,
                z0: Optional[np.ndarray] = None,
                _meter: Optional[_Meter] = None) -> np.ndarray:
    """Reference attacker equilibrium by refined grid best response.

    Runs best-response sweeps on each player's grid, then repeats on grids
    zoomed to a few spacings around the incumbent, ``refine_rounds`` times.
    """
    grid = grid or OracleGrid()
    meter = _meter if _meter is not None else _Meter(grid.budget)
    theta_vec = _as_theta(theta)
    x, y = float(x), float(y)
    lo, hi = game.z_box.lo, game.z_box.hi
    grids = [np.linspace(lo[i], hi[i], grid.nz) for i in range(game.n_attackers)]
    z = _grid_nash(game, x, y, theta_vec, grids, meter, start=z0)
    for _ in range(grid.refine_rounds):
        new_grids = []
        for i in range(game.n_attackers):
            spacing = (grids[i][-1] - grids[i][0]) / (grids[i].size - 1)
            a = max(lo[i], z[i] - _REFINE_SPACINGS * spacing)
            b = min(hi[i], z[i] + _REFINE_SPACINGS * spacing)
            if b <= a:
                a, b = lo[i], hi[i]
            new_grids.append(np.linspace(a, b, grid.nz))
        grids = new_grids
        z = _grid_nash(game, x, y, theta_vec, grids, meter, start=z)
    return z


def _leader_value_at(game: GameDefinition, x: float, theta_vec: np.ndarray,
                     mode: str, tol_zero: float, grid: OracleGrid,
                     meter: _Meter, z_warm: Optional[np.ndarray]):
    """Leader value at one x: branch utility, or a y-grid inner extremum when
    the insider slope is (numerically) zero.  Returns (value, y, z)."""
    f2 = float(game.insider_slope(x, theta_vec))
    if abs(f2) > tol_zero:
        y = game.y_max if f2 > 0 else game.y_min
        z = oracle_nash(game, x, y, theta_vec, grid, z0=z_warm, _meter=meter)
        meter.charge(1)
        return float(game.leader_utility(x, y, z)), y, z
    pick_max = mode == "strong"
    best = None
    z = z_warm
    for yv in np.linspace(game.y_min, game.y_max, grid.ny):
        z = oracle_nash(game, x, float(yv), theta_vec, grid, z0=z, _meter=meter)
        meter.charge(1)
        val = float(game.leader_utility(x, float(yv), z))
        if best is None or (val > best[0] if pick_max else val < best[0]):
            best = (val, float(yv), z)
    return best


def oracle_dse(game: GameDefinition, mode: str = "weak",
               grid: Optional[OracleGrid] = None) -> EquilibriumResult:
    """Reference deception equilibrium by exhaustive x-grid scan per signal.

    For each admissible signal value the leader grid is scanned (insider on
    the sign branch, attackers from the grid oracle; tie points take a y-grid
    inner extremum), then the window around the best point is rescanned at
    finer resolution.  Signals are compared by their best values with ties
    broken toward the earlier list entry.
    """
    if mode not in ("weak", "strong"):
        raise DomainError(f"mode must be 'weak' or 'strong', got {mode!r}")
    grid = grid or OracleGrid()
    meter = _Meter(grid.budget)

    best_rec = None
    per_theta = []
    for theta_vec in game.theta_set:
        xs_full = np.linspace(game.x_min, game.x_max, grid.nx)
        slopes = np.asarray([game.insider_slope(float(xv), theta_vec) for xv in xs_full])
        scale = float(np.max(np.abs(slopes)))
        if scale <= 0.0:
            raise DomainError("insider slope vanishes identically on the oracle grid")
        tol_zero = _REL_TOL_ZERO * scale

        xs = xs_full
        best = None  # (value, x, y, z)
        round_values: List[float] = []
        for _round in range(grid.refine_rounds + 1):
            z = best[3] if best else None
            round_best = None
            for xv in xs:
                val, yv, z = _leader_value_at(game, float(xv), theta_vec, mode,
                                              tol_zero, grid, meter, z)
                if round_best is None or val > round_best[0]:
                    round_best = (val, float(xv), yv, z)
            if best is None or round_best[0] > best[0]:
                best = round_best
            round_values.append(best[0])
            spacing = (xs[-1] - xs[0]) / (xs.size - 1)
            a = max(game.x_min, best[1] - _REFINE_SPACINGS * spacing)
            b = min(game.x_max, best[1] + _REFINE_SPACINGS * spacing)
            if b <= a:
                break
            xs = np.linspace(a, b, grid.nx)
        per_theta.append({
            "theta": theta_vec, "value": best[0], "x": best[1], "y": best[2],
            "z": tuple(float(v) for v in best[3]),
            "kind": "grid", "flags": (), "round_values": tuple(round_values),
        })
        if best_rec is None or best[0] > best_rec[0]:
            best_rec = (best[0], best[1], best[2], best[3], theta_vec)

    return EquilibriumResult(
        kind="WDSE" if mode == "weak" else "SDSE",
        x_star=best_rec[1],
        y_star=best_rec[2],
        z_star=np.asarray(best_rec[3], dtype=float),
        theta_star=best_rec[4],
        utility=best_rec[0],
        trace=(),
        flags=("oracle",),
        per_theta=tuple(per_theta),
    )


def _deviation_score(game: GameDefinition, x: float, y: float, z: np.ndarray,
                     theta_vec: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                     grids: List[np.ndarray], meter: _Meter) -> float:
    """Largest unilateral grid-deviation improvement at (x, y, z)."""
    # leader deviations in x
    meter.charge(xs.size + 1)
    u0 = float(game.leader_utility(x, y, z))
    u_dev = max(float(game.leader_utility(float(xv), y, z)) for xv in xs)
    score = u_dev - u0
    # insider deviations in y (utility is affine in y)
    f2 = float(game.insider_slope(x, theta_vec))
    meter.charge(ys.size)
    score = max(score, float(np.max(f2 * ys) - f2 * y))
    # each attacker's deviations on its own grid
    for i in range(game.n_attackers):
        g = grids[i]
        batch = np.tile(z, (g.size, 1))
        batch[:, i] = g
        meter.charge(g.size + 1)
        vals = np.asarray(game.attacker_utility(i, x, y, batch, theta_vec), dtype=float)
        base = float(game.attacker_utility(i, x, y, z.reshape(1, -1), theta_vec)[0])
        score = max(score, float(np.max(vals)) - base)
    return score


def oracle_hne(game: GameDefinition, theta,
               grid: Optional[OracleGrid] = None) -> List[Tuple[float, float, np.ndarray]]:
    """Reference simultaneous-move equilibria by deviation scoring on a grid.

    Every x-grid point is paired with the insider's branch response (both
    endpoints at a slope tie) and the attacker grid equilibrium; profiles
    whose best unilateral grid improvement is below a small threshold are
    kept, refined on a zoomed x-grid, and deduplicated.  Returns (x, y, z)
    triples sorted by x then y.
    """
    grid = grid or OracleGrid()
    meter = _Meter(grid.budget)
    theta_vec = _as_theta(theta)
    xs_full = np.linspace(game.x_min, game.x_max, grid.nx)
    ys = np.linspace(game.y_min, game.y_max, grid.ny)
    lo, hi = game.z_box.lo, game.z_box.hi
    zgrids = [np.linspace(lo[i], hi[i], grid.nz) for i in range(game.n_attackers)]
    slopes = np.asarray([game.insider_slope(float(xv), theta_vec) for xv in xs_full])
    scale = float(np.max(np.abs(slopes)))
    if scale <= 0.0:
        raise DomainError("insider slope vanishes identically on the oracle grid")
    tol_zero = _REL_TOL_ZERO * scale
    keep_tol = 1e-3

    def candidates_on(xs: np.ndarray, z_warm: Optional[np.ndarray]):
        found = []
        z = z_warm
        for xv in xs:
            f2 = float(game.insider_slope(float(xv), theta_vec))
            if abs(f2) > tol_zero:
                y_opts = (game.y_max,) if f2 > 0 else (game.y_min,)
            else:
                y_opts = (game.y_min, game.y_max)
            for yv in y_opts:
                z = oracle_nash(game, float(xv), float(yv), theta_vec, grid, z0=z, _meter=meter)
                score = _deviation_score(game, float(xv), float(yv), z, theta_vec,
                                         xs_full, ys, zgrids, meter)
                if score <= keep_tol:
                    found.append((score, float(xv), float(yv), z.copy()))
        return found

    found = candidates_on(xs_full, None)
    spacing = (xs_full[-1] - xs_full[0]) / (xs_full.size - 1)
    refined = []
    for score, xv, yv, z in found:
        best = (score, xv, yv, z)
        a0, b0 = xv - _REFINE_SPACINGS * spacing, xv + _REFINE_SPACINGS * spacing
        width = b0 - a0
        for r in range(grid.refine_rounds):
            a = max(game.x_min, best[1] - 0.5 * width)
            b = min(game.x_max, best[1] + 0.5 * width)
            if b <= a:
                break
            local = candidates_on(np.linspace(a, b, grid.nx), best[3])
            for cand in local:
                if cand[0] < best[0]:
                    best = cand
            width *= 2.0 * _REFINE_SPACINGS / (grid.nx - 1)
        refined.append(best)

    refined.sort(key=lambda t: (t[1], t[2]))
    out: List[Tuple[float, float, np.ndarray]] = []
    for score, xv, yv, z in refined:
        dup = False
        for xo, yo, zo in out:
            if abs(xv - xo) <= 1e-4 and abs(yv - yo) <= 1e-4 and np.all(np.abs(z - zo) <= 1e-4):
                dup = True
                break
        if not dup:
            out.append((xv, yv, z))
    return out
