"""Core data model for three-tier leader/insider/attacker games.

A game couples one leader (scalar action ``x``), one insider (scalar action
``y`` whose utility is affine in ``y``), and ``N`` attackers (joint action
``z``).  The leader always evaluates its own utility under the true signal
parameter, while the insider and the attackers respond to a manipulated
parameter drawn from a finite set.  Attacker equilibria are characterised by
the stacked pseudogradient mapping ``F``, assumed strongly monotone and
Lipschitz in ``z``.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, GameValidationError

_BOX_TOL = 1e-9


@dataclasses.dataclass(frozen=True)
class StrategyBox:
    """Axis-aligned box of admissible actions, one coordinate per player dimension."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise GameValidationError(f"box bounds must be 1-D and matching, got {lo.shape} vs {hi.shape}")
        if np.any(lo > hi):
            bad = int(np.argmax(lo > hi))
            raise GameValidationError(f"box has lo > hi at coordinate {bad}: {lo[bad]} > {hi[bad]}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def span(self) -> np.ndarray:
        return self.hi - self.lo

    def clamp(self, v):
        """Project ``v`` onto the box, coordinate by coordinate."""
        return np.minimum(self.hi, np.maximum(self.lo, np.asarray(v, dtype=float)))

    def contains(self, v, tol: float = _BOX_TOL) -> bool:
        v = np.atleast_1d(np.asarray(v, dtype=float))
        return bool(np.all(v >= self.lo - tol) and np.all(v <= self.hi + tol))

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        if size is None:
            return rng.uniform(self.lo, self.hi)
        return rng.uniform(self.lo, self.hi, size=(size, self.dim))


def _as_theta(value) -> np.ndarray:
    return np.atleast_1d(np.asarray(value, dtype=float))


@dataclasses.dataclass(frozen=True)
class TemplateLeaderUtility:
    """Leader utility of the separable form ``base(x) + interaction(y, z) * x``.

    ``base`` absorbs the true-signal dependence; ``interaction`` couples the
    followers' actions back into the leader's payoff.  The assembled utility
    and its two partial gradients are exposed with the same call signatures as
    hand-written evaluators, so a template can be dropped straight into
    :class:`GameDefinition`.
    """

    base: Callable[[float], float]
    base_grad: Callable[[float], float]
    interaction: Callable[[float, np.ndarray], float]
    interaction_grad_z: Callable[[float, np.ndarray], np.ndarray]

    def utility(self, x, y, z):
        return self.base(x) + self.interaction(y, z) * x

    def grad_x(self, x, y, z):
        return self.base_grad(x) + self.interaction(y, z)

    def grad_z(self, x, y, z):
        return x * np.asarray(self.interaction_grad_z(y, z), dtype=float)


@dataclasses.dataclass(frozen=True)
class GameDefinition:
    """Immutable bundle of utilities, gradients, and strategy constraints.

    All evaluators must be pure functions; instances are safe to share across
    worker threads.  ``leader_utility`` and its gradients always see the true
    parameter (it is baked into the closures), while the insider slope and the
    pseudogradient receive the perceived parameter explicitly.
    """

    n_attackers: int
    x_box: StrategyBox
    y_box: StrategyBox
    z_box: StrategyBox
    theta_set: tuple
    theta_true: np.ndarray
    leader_utility: Callable  # (x, y, z) -> float, true parameter baked in
    grad_x_leader: Callable  # (x, y, z) -> float
    grad_z_leader: Callable  # (x, y, z) -> (N,) array
    insider_slope: Callable  # (x, theta) -> float
    insider_intercept: Callable  # (x,) -> float
    attacker_utility: Callable  # (i, x, y, z, theta) -> float; z may be (N,) or (B, N)
    pseudogradient: Callable  # (x, y, z, theta) -> (N,) array
    jac_x_pseudograd: Callable  # (x, y, z, theta) -> (N, 1) array
    jac_z_pseudograd: Callable  # (x, y, z, theta) -> (N, N) array
    mu: float
    kappa: float
    name: str = "custom"
    template: Optional[TemplateLeaderUtility] = None

    def __post_init__(self):
        if self.n_attackers < 1:
            raise GameValidationError("n_attackers must be >= 1")
        if self.x_box.dim != 1 or self.y_box.dim != 1:
            raise GameValidationError("leader and insider boxes must be one-dimensional")
        if self.z_box.dim != self.n_attackers:
            raise GameValidationError(
                f"attacker box has dimension {self.z_box.dim}, expected {self.n_attackers}"
            )
        thetas = tuple(_as_theta(t) for t in self.theta_set)
        if len(thetas) == 0:
            raise GameValidationError("theta_set must be finite and nonempty")
        object.__setattr__(self, "theta_set", thetas)
        object.__setattr__(self, "theta_true", _as_theta(self.theta_true))
        if any(t.shape != self.theta_true.shape for t in thetas):
            raise GameValidationError("all deception parameters must share the true parameter's shape")
        if not (self.mu > 0):
            raise GameValidationError(f"strong-monotonicity modulus must be positive, got {self.mu}")
        if self.mu > self.kappa:
            raise GameValidationError(f"mu={self.mu} exceeds kappa={self.kappa}")

    # -- convenience -------------------------------------------------------

    @property
    def x_min(self) -> float:
        return float(self.x_box.lo[0])

    @property
    def x_max(self) -> float:
        return float(self.x_box.hi[0])

    @property
    def y_min(self) -> float:
        return float(self.y_box.lo[0])

    @property
    def y_max(self) -> float:
        return float(self.y_box.hi[0])

    def insider_utility(self, x, y, theta) -> float:
        """Insider payoff reconstructed from its slope/intercept decomposition."""
        return float(self.insider_slope(x, theta)) * float(y) + float(self.insider_intercept(x))

    def theta_admissible(self, theta) -> bool:
        theta = _as_theta(theta)
        if np.allclose(theta, self.theta_true, rtol=0.0, atol=1e-12):
            return True
        return any(np.allclose(theta, t, rtol=0.0, atol=1e-12) for t in self.theta_set)


def _check_point(game: GameDefinition, x, y, z):
    if not game.x_box.contains(x):
        raise DomainError(f"leader action {x} outside [{game.x_min}, {game.x_max}]")
    if not game.y_box.contains(y):
        raise DomainError(f"insider action {y} outside [{game.y_min}, {game.y_max}]")
    z = np.asarray(z, dtype=float)
    if not game.z_box.contains(z):
        raise DomainError("attacker profile outside its box")
    return z


def evaluate_leader_utility(game: GameDefinition, x: float, y: float, z) -> float:
    """Leader payoff at ``(x, y, z)`` under the true signal parameter.

    Raises:
        DomainError: if any action lies outside its box.
    """
    z = _check_point(game, x, y, z)
    return float(game.leader_utility(float(x), float(y), z))


def evaluate_pseudogradient(game: GameDefinition, x: float, y: float, z, theta) -> np.ndarray:
    """Stacked negated attacker gradients at ``(x, y, z)`` under the perceived ``theta``."""
    z = _check_point(game, x, y, z)
    if not game.theta_admissible(theta):
        raise DomainError(f"theta {theta} is neither the true parameter nor a member of the deception set")
    out = np.asarray(game.pseudogradient(float(x), float(y), z, _as_theta(theta)), dtype=float)
    return out.reshape(game.n_attackers)


def finite_difference_gradients(game: GameDefinition, point, h: float = 1e-6) -> dict:
    """Central-difference estimates of every registered analytic derivative.

    Args:
        point: tuple ``(x, y, z, theta)``; ``theta`` is used for the
            pseudogradient Jacobians only.
        h: step size; steps that would leave a box fall back to one-sided
            differences.

    Returns:
        dict with keys ``grad_x_leader``, ``grad_z_leader``, ``pseudogradient``
        (the analytic value, for convenience), ``jac_x_pseudograd`` and
        ``jac_z_pseudograd``.
    """
    x, y, z, theta = point
    z = np.asarray(z, dtype=float)
    n = game.n_attackers

    def central(f, v, lo, hi):
        lo_ok = v - h >= lo
        hi_ok = v + h <= hi
        if lo_ok and hi_ok:
            return (f(v + h) - f(v - h)) / (2.0 * h)
        if hi_ok:
            return (f(v + h) - f(v)) / h
        return (f(v) - f(v - h)) / h

    gx = central(lambda v: game.leader_utility(v, y, z), x, game.x_min, game.x_max)

    gz = np.zeros(n)
    for i in range(n):
        def f_zi(v, i=i):
            zz = z.copy()
            zz[i] = v
            return game.leader_utility(x, y, zz)

        gz[i] = central(f_zi, z[i], game.z_box.lo[i], game.z_box.hi[i])

    j1 = np.zeros((n, 1))
    for i in range(n):
        def f_x(v, i=i):
            return game.pseudogradient(v, y, z, theta)[i]

        j1[i, 0] = central(f_x, x, game.x_min, game.x_max)

    j3 = np.zeros((n, n))
    for jcol in range(n):
        def f_zj(v, jcol=jcol):
            zz = z.copy()
            zz[jcol] = v
            return np.asarray(game.pseudogradient(x, y, zz, theta), dtype=float)

        col = central(f_zj, z[jcol], game.z_box.lo[jcol], game.z_box.hi[jcol])
        j3[:, jcol] = col

    return {
        "grad_x_leader": float(gx),
        "grad_z_leader": gz,
        "pseudogradient": np.asarray(game.pseudogradient(x, y, z, theta), dtype=float),
        "jac_x_pseudograd": j1,
        "jac_z_pseudograd": j3,
    }


def verify_template(game: GameDefinition, points: Sequence, tol: float = 1e-12) -> None:
    """Assert the template assembly matches the direct leader evaluator at ``points``."""
    if game.template is None:
        return
    for (x, y, z) in points:
        direct = game.leader_utility(x, y, np.asarray(z, dtype=float))
        assembled = game.template.utility(x, y, np.asarray(z, dtype=float))
        if abs(direct - assembled) > tol:
            raise GameValidationError(
                f"template assembly mismatch at (x={x}, y={y}): {assembled} vs {direct}"
            )
