"""Top-level equilibrium solver: hypergradient ascent per sign interval.

For each admissible signal value the leader domain is partitioned at the
insider slope's zeros; on every sign interval the insider action is a fixed
endpoint of its range and the leader runs projected gradient ascent using the
hypergradient (the direct utility gradient corrected by the attackers'
sensitivity).  Zero points, where the insider ties across its whole range,
are evaluated separately under the pessimistic (weak) or optimistic (strong)
tie-break.  The best candidate per signal value, then across the signal set,
is returned.

After the ascent schedule finishes, the incumbent is refined by golden-section
search on the same interval; those evaluations are ordinary solver iterations
and are appended to the trace (step size column 0, no hypergradient), so the
trace's utility column settles to the refined value.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DomainError
from .game import GameDefinition, _as_theta
from .nash import default_contraction, solve_nash
from .partition import (
    PartitionResult,
    SignInterval,
    partition_leader_domain,
    partition_with_gaps,
)
from .sensitivity import SensitivityState, _polish_fixed_point, inner_loop

_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

#: x-grid density used for the conservative value of an uncertainty gap
_GAP_X_SAMPLES = 33


@dataclasses.dataclass(frozen=True)
class SolverConfig:
    """Knobs of the equilibrium solve.

    The ascent uses step size ``alpha0 / k**p`` and inner tolerance
    ``sigma_c / (k**r + 1)``; admissibility requires ``p`` in (0.5, 1] and
    ``p + r > 1`` so the step/tolerance products are summable.  ``epsilon``
    greater than zero switches to the approximate mode in which slope zeros
    are kept as bracketing gaps instead of being resolved.

    ``x_inits`` holds per-interval start positions as fractions in [0, 1] of
    the interval.  The trailing block of fields parameterises the
    simultaneous-move solve and the consistency check (see the hne module).
    """

    mode: str = "weak"
    alpha0: float = 1.0
    p: float = 0.6
    sigma_c: float = 1.0
    r: float = 1.1
    max_outer: int = 500
    x_tol: float = 1e-7
    x_tol_window: int = 50
    x_inits: Optional[Tuple[float, ...]] = None
    zero_width: float = 1e-8
    y_grid: int = 256
    epsilon: float = 0.0
    grid_m: int = 1024
    max_zeros: int = 64
    boundary_tol: float = 1e-9
    inner_cap: int = 1_000_000
    polish_iters: int = 130
    gaps: Optional[Tuple[Tuple[float, float], ...]] = None
    # simultaneous-move solve / consistency knobs
    rho: float = 0.5
    max_br_rounds: int = 10_000
    t1_tol: float = 1e-6
    diff_tol: float = 1e-4
    nbhd_fraction: float = 1e-3
    n_nbhd_samples: int = 32
    fd_step: float = 1e-6
    hne_match_tol: float = 1e-4
    hne_multistart: int = 8
    dev_grid: float = 0.01
    dev_tol: float = 1e-6
    #: insider-unaware baseline: freeze the insider at this value instead of
    #: its best response (None = model the insider normally)
    y_frozen: Optional[float] = None

    def __post_init__(self):
        if self.mode not in ("weak", "strong"):
            raise DomainError(f"mode must be 'weak' or 'strong', got {self.mode!r}")
        if not (0.5 < self.p <= 1.0):
            raise DomainError(f"step exponent p must lie in (0.5, 1], got {self.p}")
        if self.p + self.r <= 1.0:
            raise DomainError(
                f"p + r must exceed 1 for summable step/tolerance products, got {self.p + self.r}"
            )
        if self.alpha0 <= 0 or self.sigma_c <= 0:
            raise DomainError("alpha0 and sigma_c must be positive")
        if self.max_outer < 1:
            raise DomainError("max_outer must be at least 1")
        if self.x_tol <= 0 or self.x_tol_window < 1:
            raise DomainError("x_tol must be positive and the window at least 1")
        if self.y_grid < 2:
            raise DomainError("y_grid must be at least 2")
        if self.epsilon < 0:
            raise DomainError("epsilon must be nonnegative")
        if self.zero_width <= 0:
            raise DomainError("zero_width must be positive")
        if self.polish_iters < 0:
            raise DomainError("polish_iters must be nonnegative")
        if self.x_inits is not None:
            for f in self.x_inits:
                if not (0.0 <= f <= 1.0):
                    raise DomainError("x_inits entries are interval fractions in [0, 1]")
        if not (0.0 < self.rho <= 1.0):
            raise DomainError("damping rho must lie in (0, 1]")


@dataclasses.dataclass(frozen=True)
class TracePoint:
    """One solver iteration: the iterate and its diagnostics."""

    k: int
    x: float
    y: float
    z: Tuple[float, ...]
    s: Tuple[float, ...]
    hypergradient: float
    utility: float
    sigma: float
    alpha: float


@dataclasses.dataclass(frozen=True)
class EquilibriumResult:
    """Solution record: the strategy tuple, its true-signal utility, the trace
    of the winning ascent, and reportable flags."""

    kind: str
    x_star: float
    y_star: float
    z_star: np.ndarray
    theta_star: np.ndarray
    utility: float
    trace: Tuple[TracePoint, ...]
    flags: Tuple[str, ...]
    per_theta: Optional[Tuple[Dict, ...]] = None


def hypergradient(game: GameDefinition, x: float, y: float, z: np.ndarray, s: np.ndarray) -> float:
    """Total derivative of the leader utility along the lower-level response.

    ``s`` is the sensitivity of the Nash point to ``x``; the result is
    ``dU/dx + s' @ dU/dz`` evaluated under the true signal.
    """
    g1 = float(game.grad_x_leader(float(x), float(y), np.asarray(z, dtype=float)))
    g3 = np.asarray(game.grad_z_leader(float(x), float(y), np.asarray(z, dtype=float)), dtype=float).reshape(-1)
    return g1 + float(np.asarray(s, dtype=float).reshape(-1) @ g3)


def _nash_exact(game: GameDefinition, x: float, y: float, theta_vec: np.ndarray,
                z0: Optional[np.ndarray], gamma: float) -> np.ndarray:
    """Nash point to machine precision: coarse fixed-point pass, then polish."""
    span = float(np.max(game.z_box.span)) or 1.0
    z, _ = solve_nash(game, x, y, theta_vec, z0=z0, sigma=1e-6 * span, gamma=gamma)
    z_star, ok = _polish_fixed_point(game, x, y, theta_vec, gamma, z)
    if ok:
        return z_star
    z, _ = solve_nash(game, x, y, theta_vec, z0=z, sigma=1e-13 * span, gamma=gamma)
    return z


@dataclasses.dataclass(frozen=True)
class AscentResult:
    """Outcome of one interval ascent (best iterate over schedule + polish)."""

    x: float
    y: float
    z: np.ndarray
    s: np.ndarray
    utility: float
    trace: Tuple[TracePoint, ...]
    flags: Tuple[str, ...]
    converged: bool


def ascend_interval(
    game: GameDefinition,
    theta,
    interval: SignInterval,
    config: SolverConfig,
    *,
    x0: Optional[float] = None,
    z0: Optional[np.ndarray] = None,
) -> AscentResult:
    """Projected hypergradient ascent of the leader utility on one interval.

    The insider action is pinned by the interval's sign tag.  Each step runs
    the warm-started inner loop at the scheduled tolerance, takes a projected
    step along the hypergradient, and records a trace point.  Convergence is
    declared after ``x_tol_window`` consecutive steps of size ``x_tol`` or
    less; afterwards (or at the step cap) a golden-section refinement around
    the incumbent appends its evaluations to the trace and the best point
    seen anywhere is returned.
    """
    theta_vec = _as_theta(theta)
    contraction = default_contraction(game)
    gamma, eta = contraction.gamma, contraction.eta
    if config.y_frozen is not None:
        y = float(np.clip(config.y_frozen, game.y_min, game.y_max))
    else:
        y = game.y_max if interval.sign == "positive" else game.y_min
    lo, hi = interval.lo, interval.hi
    x = float(np.clip(interval.midpoint if x0 is None else float(x0), lo, hi))
    z = game.z_box.midpoint() if z0 is None else np.asarray(z0, dtype=float).reshape(-1)
    s = np.zeros((game.n_attackers, 1))
    state = SensitivityState()
    trace: List[TracePoint] = []
    best_u, best_x = -math.inf, x
    consecutive = 0
    converged = False
    sigma = config.sigma_c / 2.0

    for k in range(1, config.max_outer + 1):
        alpha = config.alpha0 / k ** config.p
        sigma = config.sigma_c / (k ** config.r + 1.0)
        _, z, s = inner_loop(
            game, x, y, z, s, sigma, gamma, eta, theta_vec,
            state=state, boundary_tol=config.boundary_tol, max_iter=config.inner_cap,
        )
        hg = hypergradient(game, x, y, z, s)
        util = float(game.leader_utility(x, y, z))
        trace.append(TracePoint(k=k, x=x, y=y, z=tuple(float(v) for v in z),
                                s=tuple(float(v) for v in s.ravel()),
                                hypergradient=hg, utility=util, sigma=sigma, alpha=alpha))
        if util > best_u:
            best_u, best_x = util, x
        x_new = float(np.clip(x + alpha * hg, lo, hi))
        if abs(x_new - x) <= config.x_tol:
            consecutive += 1
        else:
            consecutive = 0
        x = x_new
        if consecutive >= config.x_tol_window:
            converged = True
            break

    k_next = trace[-1].k + 1 if trace else 1

    def probe(xp: float) -> float:
        nonlocal z, s, k_next, best_u, best_x
        _, z, s = inner_loop(
            game, xp, y, z, s, sigma, gamma, eta, theta_vec,
            state=state, boundary_tol=config.boundary_tol, max_iter=config.inner_cap,
        )
        util = float(game.leader_utility(xp, y, z))
        trace.append(TracePoint(k=k_next, x=xp, y=y, z=tuple(float(v) for v in z),
                                s=tuple(float(v) for v in s.ravel()),
                                hypergradient=math.nan, utility=util, sigma=sigma, alpha=0.0))
        k_next += 1
        if util > best_u:
            best_u, best_x = util, xp
        return util

    if config.polish_iters > 0 and hi > lo:
        xs = [pt.x for pt in trace]
        recent = [abs(b - a) for a, b in zip(xs[-26:-1], xs[-25:])]
        w = max(10.0 * max(recent, default=0.0), 100.0 * config.x_tol, 1e-4 * (hi - lo))
        a = max(lo, best_x - w)
        b = min(hi, best_x + w)
        budget = config.polish_iters
        c = b - _INV_GOLDEN * (b - a)
        d = a + _INV_GOLDEN * (b - a)
        fc = probe(c)
        budget -= 1
        fd = probe(d) if budget > 0 else fc
        budget -= 1
        while budget > 0:
            if b - a < 1e-15 * max(1.0, abs(b)):
                probe(0.5 * (a + b))
                budget -= 1
                continue
            if fc >= fd:
                b, d, fd = d, c, fc
                c = b - _INV_GOLDEN * (b - a)
                fc = probe(c)
            else:
                a, c, fc = c, d, fd
                d = a + _INV_GOLDEN * (b - a)
                fd = probe(d)
            budget -= 1

    # pin the returned tuple to the best x seen
    _, z_fin, s_fin = inner_loop(
        game, best_x, y, z, s, sigma, gamma, eta, theta_vec,
        state=state, boundary_tol=config.boundary_tol, max_iter=config.inner_cap,
    )
    u_fin = float(game.leader_utility(best_x, y, z_fin))
    flags: List[str] = []
    if not converged:
        flags.append("max_outer_reached")
    if "sensitivity_slice_violation" in state.flags:
        flags.append("sensitivity_slice_violation")
    return AscentResult(x=best_x, y=y, z=z_fin, s=s_fin, utility=u_fin,
                        trace=tuple(trace), flags=tuple(flags), converged=converged)


def _golden_extremum(f, a: float, b: float, n_evals: int, maximize: bool):
    """Golden-section search returning the best (x, f(x)) pair seen."""
    sign = 1.0 if maximize else -1.0
    c = b - _INV_GOLDEN * (b - a)
    d = a + _INV_GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    best = (c, fc) if sign * fc >= sign * fd else (d, fd)
    for _ in range(max(0, n_evals - 2)):
        if sign * fc >= sign * fd:
            b, d, fd = d, c, fc
            c = b - _INV_GOLDEN * (b - a)
            fc = f(c)
            if sign * fc > sign * best[1]:
                best = (c, fc)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_GOLDEN * (b - a)
            fd = f(d)
            if sign * fd > sign * best[1]:
                best = (d, fd)
        if b - a < 1e-14 * max(1.0, abs(b)):
            break
    return best


def _inner_value_over_y(game, x, theta_vec, mode, y_grid, gamma, z_warm):
    """Extremum over the insider's whole range of the leader's true utility.

    Evaluates U(x, y, z*(x, y)) on a y-grid, then refines the best cell by
    golden section; every evaluation re-solves the lower Nash game
    (warm-started).  Returns (value, y, z).
    """
    maximize = mode == "strong"
    ys = np.linspace(game.y_min, game.y_max, y_grid + 1)
    z = z_warm
    vals = np.empty(ys.size)
    zs: List[np.ndarray] = []
    for j, yv in enumerate(ys):
        z = _nash_exact(game, x, float(yv), theta_vec, z, gamma)
        zs.append(z)
        vals[j] = float(game.leader_utility(x, float(yv), z))
    j_best = int(np.argmax(vals)) if maximize else int(np.argmin(vals))
    best_val, best_y, best_z = float(vals[j_best]), float(ys[j_best]), zs[j_best]

    a = float(ys[max(0, j_best - 1)])
    b = float(ys[min(ys.size - 1, j_best + 1)])
    if b > a:
        z_ref = [zs[max(0, j_best - 1)]]

        def f(yv: float) -> float:
            z_ref[0] = _nash_exact(game, x, float(yv), theta_vec, z_ref[0], gamma)
            return float(game.leader_utility(x, float(yv), z_ref[0]))

        y_ref, v_ref = _golden_extremum(f, a, b, 64, maximize)
        if (v_ref > best_val) if maximize else (v_ref < best_val):
            best_val, best_y = float(v_ref), float(y_ref)
            best_z = _nash_exact(game, x, best_y, theta_vec, z_ref[0], gamma)
    return best_val, best_y, best_z


def _zero_point_eval(game, x_z, theta_vec, mode, y_grid, gamma):
    """Value and achieving point of a zero location or an uncertainty gap.

    A scalar location is the tie point itself.  For a gap the weak mode takes
    the most pessimistic inner value over an x-grid on the gap (a lower bound
    on the value at the unknown zero inside), the strong mode the most
    optimistic.  Returns (value, x, y, z).
    """
    if isinstance(x_z, (tuple, list, np.ndarray)):
        lo, hi = float(x_z[0]), float(x_z[1])
        pick_max = mode == "strong"
        best = None
        z = None
        for xv in np.linspace(lo, hi, _GAP_X_SAMPLES):
            val, yv, z = _inner_value_over_y(game, float(xv), theta_vec, mode, y_grid, gamma, z)
            if best is None or (val > best[0] if pick_max else val < best[0]):
                best = (val, float(xv), yv, z)
        return best
    x = float(x_z)
    val, yv, z = _inner_value_over_y(game, x, theta_vec, mode, y_grid, gamma, None)
    return val, x, yv, z


def zero_point_utility(game: GameDefinition, x_z, theta, mode: str = "weak", y_grid: int = 256) -> float:
    """Leader value at a slope zero (or gap) under the requested tie-break.

    Weak mode is the infimum of the true-signal leader utility over the
    insider's tied responses (attackers re-equilibrated per response); strong
    mode is the supremum.
    """
    if mode not in ("weak", "strong"):
        raise DomainError(f"mode must be 'weak' or 'strong', got {mode!r}")
    gamma = default_contraction(game).gamma
    val, _, _, _ = _zero_point_eval(game, x_z, _as_theta(theta), mode, y_grid, gamma)
    return val


def solve_dse(game: GameDefinition, config: SolverConfig) -> EquilibriumResult:
    """Best deception strategy over the admissible signal set.

    Per signal value: partition the leader domain, ascend every sign interval
    from the configured starts, evaluate every zero point (or gap) under the
    configured tie-break, and keep the best candidate; then maximize across
    the signal set, breaking ties by list order.  With ``epsilon > 0`` the
    zeros stay bracketed and the result carries the gap provenance flag when
    a gap value wins.
    """
    if not game.theta_set:
        raise DomainError("the admissible signal set is empty")
    gamma = default_contraction(game).gamma
    eps_mode = config.epsilon > 0.0
    kind = "eps_WDSE" if eps_mode else ("WDSE" if config.mode == "weak" else "SDSE")
    fractions = config.x_inits if config.x_inits is not None else (0.0, 0.5, 1.0)
    span = game.x_max - game.x_min

    per_theta: List[Dict] = []
    best_rec: Optional[Dict] = None
    for theta_vec in game.theta_set:
        if eps_mode:
            if config.gaps is not None:
                part = partition_with_gaps(game, theta_vec, config.gaps)
            else:
                part = partition_leader_domain(
                    game, theta_vec, config.grid_m,
                    max(config.zero_width, 0.5 * config.epsilon),
                    keep_gaps=True, max_zeros=config.max_zeros,
                )
        else:
            part = partition_leader_domain(
                game, theta_vec, config.grid_m, config.zero_width,
                keep_gaps=False, max_zeros=config.max_zeros,
            )

        candidates: List[Dict] = []
        for interval in part.intervals:
            best_asc: Optional[AscentResult] = None
            for frac in fractions:
                x0 = interval.lo + float(frac) * interval.width
                asc = ascend_interval(game, theta_vec, interval, config, x0=x0)
                if best_asc is None or asc.utility > best_asc.utility:
                    best_asc = asc
            candidates.append({
                "kind": "interval", "x": best_asc.x, "y": best_asc.y, "z": best_asc.z,
                "value": best_asc.utility, "trace": best_asc.trace, "flags": list(best_asc.flags),
            })
        zero_values: Dict[float, float] = {}
        for z_loc in part.resolved_zeros:
            if config.y_frozen is not None:
                y_u = float(np.clip(config.y_frozen, game.y_min, game.y_max))
                z_u = _nash_exact(game, z_loc, y_u, theta_vec, None, gamma)
                val, x_u = float(game.leader_utility(z_loc, y_u, z_u)), z_loc
            else:
                val, x_u, y_u, z_u = _zero_point_eval(game, z_loc, theta_vec, config.mode, config.y_grid, gamma)
            zero_values[z_loc] = val
            candidates.append({
                "kind": "zero", "x": x_u, "y": y_u, "z": z_u,
                "value": val, "trace": (), "flags": [],
            })
        for gap in part.gaps:
            val, x_u, y_u, z_u = _zero_point_eval(game, gap, theta_vec, config.mode, config.y_grid, gamma)
            candidates.append({
                "kind": "gap", "x": x_u, "y": y_u, "z": z_u,
                "value": val, "trace": (), "flags": ["gap_interval"],
            })

        winner = candidates[0]
        for cand in candidates[1:]:
            if cand["value"] > winner["value"]:
                winner = cand

        if not eps_mode and winner["kind"] == "interval":
            near = max(10.0 * config.zero_width, 1e-9 * span)
            for z_loc, z_val in zero_values.items():
                if abs(winner["x"] - z_loc) <= near and winner["value"] > z_val + 1e-9:
                    winner["flags"].append("sup_not_attained")
                    break

        rec = dict(winner)
        rec["theta"] = theta_vec
        per_theta.append(rec)
        if best_rec is None or rec["value"] > best_rec["value"]:
            best_rec = rec

    summaries = tuple(
        {
            "theta": r["theta"], "value": r["value"], "x": r["x"], "y": r["y"],
            "z": tuple(float(v) for v in np.asarray(r["z"], dtype=float)),
            "kind": r["kind"], "flags": tuple(r["flags"]),
        }
        for r in per_theta
    )
    return EquilibriumResult(
        kind=kind,
        x_star=float(best_rec["x"]),
        y_star=float(best_rec["y"]),
        z_star=np.asarray(best_rec["z"], dtype=float),
        theta_star=best_rec["theta"],
        utility=float(best_rec["value"]),
        trace=tuple(best_rec["trace"]),
        flags=tuple(best_rec["flags"]),
        per_theta=summaries,
    )
