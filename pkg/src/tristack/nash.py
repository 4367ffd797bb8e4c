"""Bottom-level Nash solver: projected pseudogradient fixed-point iteration.

The attackers' simultaneous game is solved by iterating the projected map
``h(x, y, z) = clamp(z - gamma * F(x, y, z))``, which is a contraction in
``z`` whenever ``gamma < 2*mu/kappa**2``.  The module also classifies where
the unprojected update lands relative to the box faces: the clamp is affine
on each face pattern, and the sensitivity stage is only valid while the
pattern is locally constant.
"""

from __future__ import annotations

import dataclasses
import math
from typing import List, Optional, Tuple

import numpy as np

from .errors import DomainError, NonConvergenceError
from .game import GameDefinition, _as_theta

#: smallest contraction constant we report; an exact eta of zero (single
#: attacker with gamma = 1/kappa) would break log-based iteration estimates.
ETA_FLOOR = 1e-16

DEFAULT_MAX_ITER = 1_000_000


@dataclasses.dataclass(frozen=True)
class ContractionParams:
    """Step size and contraction modulus of the projected update map."""

    gamma: float
    eta: float

    def __post_init__(self):
        if not (self.gamma > 0.0):
            raise DomainError(f"step size must be positive, got {self.gamma}")
        if not (0.0 < self.eta < 1.0):
            raise DomainError(f"contraction constant must lie in (0,1), got {self.eta}")


def default_contraction(game: GameDefinition) -> ContractionParams:
    """Step size minimising the contraction modulus, gamma = mu/kappa^2.

    The modulus is ``sqrt(1 - gamma*(2*mu - gamma*kappa^2))``; at the default
    step this simplifies to ``sqrt(1 - mu^2/kappa^2)``.  The result is floored
    away from zero so downstream logarithms stay finite.
    """
    gamma = game.mu / game.kappa ** 2
    eta_sq = 1.0 - gamma * (2.0 * game.mu - gamma * game.kappa ** 2)
    eta = math.sqrt(max(eta_sq, 0.0))
    return ContractionParams(gamma=gamma, eta=max(eta, ETA_FLOOR))


def contraction_for(game: GameDefinition, gamma: float) -> ContractionParams:
    """Contraction parameters for a caller-chosen step size."""
    eta_sq = 1.0 - gamma * (2.0 * game.mu - gamma * game.kappa ** 2)
    if eta_sq >= 1.0:
        raise DomainError(
            f"step size {gamma} is outside the contraction range (0, {2.0 * game.mu / game.kappa ** 2:.6g})"
        )
    return ContractionParams(gamma=gamma, eta=max(math.sqrt(max(eta_sq, 0.0)), ETA_FLOOR))


def ppg_step(game: GameDefinition, x: float, y: float, z: np.ndarray, theta, gamma: float) -> np.ndarray:
    """One projected pseudogradient step: clamp(z - gamma * F(x, y, z))."""
    F = game.pseudogradient(x, y, np.asarray(z, dtype=float), _as_theta(theta))
    return game.z_box.clamp(np.asarray(z, dtype=float) - gamma * np.asarray(F, dtype=float).reshape(-1))


def solve_nash(
    game: GameDefinition,
    x: float,
    y: float,
    theta,
    z0: Optional[np.ndarray] = None,
    sigma: float = 1e-10,
    *,
    gamma: Optional[float] = None,
    max_iter: int = DEFAULT_MAX_ITER,
    residual_log: Optional[List[float]] = None,
) -> Tuple[np.ndarray, int]:
    """Iterate the projected update until the step norm drops to ``sigma``.

    Args:
        z0: warm start; defaults to the box midpoint.
        sigma: stopping tolerance on ``norm(z_next - z)``; the returned point
            is within ``sigma * eta / (1 - eta)`` of the exact Nash point.
        residual_log: optional list that receives every step norm.

    Returns:
        ``(z, iters)`` where ``iters`` counts applications of the map.

    Raises:
        NonConvergenceError: if the cap is hit; under a correct contraction
            declaration this indicates mis-declared monotonicity constants.
    """
    if sigma <= 0.0:
        raise DomainError(f"tolerance must be positive, got {sigma}")
    if gamma is None:
        gamma = default_contraction(game).gamma
    theta_vec = _as_theta(theta)
    z = game.z_box.clamp(np.asarray(z0, dtype=float).reshape(-1)) if z0 is not None else game.z_box.midpoint()
    residual = math.inf
    for it in range(1, max_iter + 1):
        F = game.pseudogradient(x, y, z, theta_vec)
        z_next = game.z_box.clamp(z - gamma * np.asarray(F, dtype=float).reshape(-1))
        residual = float(np.linalg.norm(z_next - z))
        if residual_log is not None:
            residual_log.append(residual)
        z = z_next
        if residual <= sigma:
            return z, it
    raise NonConvergenceError(
        f"lower-level solve exceeded {max_iter} iterations (last step norm {residual:.3e})",
        residual=residual,
        iterations=max_iter,
    )


@dataclasses.dataclass(frozen=True)
class ActiveRegionInfo:
    """Where the unprojected update ``omega = z - gamma*F`` sits in the box.

    ``pattern`` holds one tag per coordinate: ``below_lo`` / ``above_hi`` when
    the clamp saturates, ``interior`` otherwise.  ``is_singleton`` is true when
    every coordinate of omega keeps a strictly positive distance from the box
    faces, and ``delta`` is the smallest such distance (0.0 when some
    coordinate sits on a face within tolerance) — the radius within which the
    face pattern, and hence the clamp's Jacobian, cannot change.
    """

    pattern: Tuple[str, ...]
    is_singleton: bool
    delta: float


def active_region(
    game: GameDefinition,
    x: float,
    y: float,
    z: np.ndarray,
    theta,
    gamma: float,
    boundary_tol: float = 1e-9,
) -> ActiveRegionInfo:
    """Classify each coordinate of the unprojected update against the box faces.

    ``z`` should be a converged Nash point; the classification is taken at that
    point only.  A coordinate within ``boundary_tol`` of a face makes the
    result non-singleton (the clamp is not differentiable there), which is a
    reportable outcome rather than an error.
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    F = np.asarray(game.pseudogradient(x, y, z, _as_theta(theta)), dtype=float).reshape(-1)
    omega = z - gamma * F
    lo, hi = game.z_box.lo, game.z_box.hi
    pattern = tuple(
        "below_lo" if w < l else ("above_hi" if w > h else "interior")
        for w, l, h in zip(omega, lo, hi)
    )
    dist = np.minimum(np.abs(omega - lo), np.abs(omega - hi))
    min_dist = float(dist.min())
    singleton = min_dist > boundary_tol
    return ActiveRegionInfo(pattern=pattern, is_singleton=singleton, delta=min_dist if singleton else 0.0)
