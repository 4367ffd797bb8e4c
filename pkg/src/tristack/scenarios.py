"""Built-in game instances: two application scenarios and two analytic toys.

Each builder returns a fully wired :class:`~tristack.game.GameDefinition`
with closed-form gradients.  Monotonicity and Lipschitz constants are closed
form where the pseudogradient is affine and are estimated by seeded sampling
where it is not (the jamming scenario), with safety factors applied before
they are stored.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Optional, Sequence

import numpy as np

from .errors import GameValidationError
from .game import GameDefinition, StrategyBox, TemplateLeaderUtility

_LN2 = math.log(2.0)


# ---------------------------------------------------------------------------
# jamming / secure-rate scenario
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class WirelessParams:
    """Parameters of the secure-transmission game with eavesdropping attackers.

    The leader transmits with power ``x``; the insider relays with effort
    ``y``; each attacker ``i`` chooses a jamming level ``z_i``.  The signal
    parameter is the reported channel gain: attackers perceive the manipulated
    value while the leader's own rate uses the true gain ``h_rd0``.

    ``cert_x_lo`` bounds the sampling slice ``[cert_x_lo, x_max]`` on which the
    monotonicity/Lipschitz constants are estimated: as the transmit power
    approaches zero the attackers' marginal incentives flatten out and every
    best response saturates at the box floor, so the fixed-point iteration
    still converges there but a positive modulus can only be certified away
    from zero power.
    """

    n: int = 3
    h_rd0: float = 1.0
    h_ed: float = 0.8
    eta_noise: float = 0.5
    d1: float = 10.0
    d3: float = 2.0
    d4: float = 7.0
    d2: Sequence[float] = (0.5, 0.6, 0.7)
    x_max: float = 5.0
    y_min: float = 0.0
    y_max: float = 2.0
    z_max: float = 1.0
    theta_set: Sequence[float] = (0.8, 1.0, 1.2)
    cert_x_lo: float = 0.5
    est_samples: int = 10_000
    est_seed: int = 7031


def build_wireless(params: Optional[WirelessParams] = None, **overrides) -> GameDefinition:
    """Assemble the jamming game with sampled monotonicity constants.

    Raises:
        GameValidationError: on inconsistent parameters, or when the sampled
            monotonicity modulus fails to be positive on the certified slice.
    """
    p = params or WirelessParams()
    if overrides:
        p = dataclasses.replace(p, **overrides)
    d2 = np.asarray(p.d2, dtype=float)
    if d2.shape != (p.n,):
        raise GameValidationError(f"d2 must have length n={p.n}, got shape {d2.shape}")
    if min(p.h_ed, p.eta_noise, p.x_max, p.z_max) <= 0 or p.h_rd0 <= 0:
        raise GameValidationError("channel gains, noise and box spans must be positive")
    if not (0 < p.cert_x_lo < p.x_max):
        raise GameValidationError("certification slice must sit strictly inside the power range")

    h2 = p.h_ed ** 2
    h0sq = p.h_rd0 ** 2
    d1, d4, eta = p.d1, p.d4, p.eta_noise
    n = p.n

    def interaction(y, z):
        s = float(np.sum(z))
        return d1 * h0sq / (eta + h2 * s) - d4 * y

    def interaction_grad_z(y, z):
        s = float(np.sum(z))
        return np.full(n, -d1 * h0sq * h2 / (eta + h2 * s) ** 2)

    template = TemplateLeaderUtility(
        base=lambda x: 0.0,
        base_grad=lambda x: 0.0,
        interaction=interaction,
        interaction_grad_z=interaction_grad_z,
    )

    def attacker_utility(i, x, y, z, theta):
        z = np.asarray(z, dtype=float)
        a = float(theta[0]) ** 2 * x
        c = eta + h2 * z[..., i]
        return -np.log2(1.0 + a / c) - d2[i] * z[..., i]

    def pseudogradient(x, y, z, theta):
        a = float(theta[0]) ** 2 * x
        c = eta + h2 * np.asarray(z, dtype=float)
        psi = h2 * a / (_LN2 * c * (c + a))
        return d2 - psi

    def jac_x_pseudograd(x, y, z, theta):
        th2 = float(theta[0]) ** 2
        a = th2 * x
        c = eta + h2 * np.asarray(z, dtype=float)
        return (-th2 * h2 / (_LN2 * (c + a) ** 2)).reshape(n, 1)

    def jac_z_pseudograd(x, y, z, theta):
        a = float(theta[0]) ** 2 * x
        c = eta + h2 * np.asarray(z, dtype=float)
        diag = h2 * h2 * a * (2.0 * c + a) / (_LN2 * c ** 2 * (c + a) ** 2)
        return np.diag(diag)

    mu, kappa = _estimate_wireless_constants(p, h2)

    return GameDefinition(
        n_attackers=n,
        x_box=StrategyBox(np.array([0.0]), np.array([p.x_max])),
        y_box=StrategyBox(np.array([p.y_min]), np.array([p.y_max])),
        z_box=StrategyBox(np.zeros(n), np.full(n, p.z_max)),
        theta_set=tuple(float(t) for t in p.theta_set),
        theta_true=float(p.h_rd0),
        leader_utility=template.utility,
        grad_x_leader=template.grad_x,
        grad_z_leader=template.grad_z,
        insider_slope=lambda x, theta: float(x),
        insider_intercept=lambda x: -p.d3 * float(x),
        attacker_utility=attacker_utility,
        pseudogradient=pseudogradient,
        jac_x_pseudograd=jac_x_pseudograd,
        jac_z_pseudograd=jac_z_pseudograd,
        mu=mu,
        kappa=kappa,
        name="wireless",
        template=template,
    )


def _estimate_wireless_constants(p: WirelessParams, h2: float):
    """Sampled bounds on the jamming pseudogradient's z-Jacobian spectrum.

    The Jacobian is diagonal, so its extreme eigenvalues are the extreme
    diagonal entries; those are sampled over the certified power slice, the
    jamming box, and every admissible signal parameter, then padded with the
    corner combinations so the extremes cannot slip between random draws.
    """
    rng = np.random.default_rng(p.est_seed)
    thetas = np.asarray(sorted(set(float(t) for t in p.theta_set) | {float(p.h_rd0)}))
    xs = rng.uniform(p.cert_x_lo, p.x_max, size=p.est_samples)
    zs = rng.uniform(0.0, p.z_max, size=(p.est_samples, p.n))
    ths = thetas[np.arange(p.est_samples) % thetas.size]

    # corner padding: extremes of a = theta^2 x against extremes of c
    corner_a = np.array([t * t * x for t in (thetas.min(), thetas.max()) for x in (p.cert_x_lo, p.x_max)])
    corner_c = np.array([p.eta_noise, p.eta_noise + h2 * p.z_max])

    a = (ths ** 2 * xs)[:, None]
    c = p.eta_noise + h2 * zs
    diag = h2 * h2 * a * (2.0 * c + a) / (_LN2 * c ** 2 * (c + a) ** 2)
    ca, cc = np.meshgrid(corner_a, corner_c)
    corner_diag = h2 * h2 * ca * (2.0 * cc + ca) / (_LN2 * cc ** 2 * (cc + ca) ** 2)

    lo = float(min(diag.min(), corner_diag.min()))
    hi = float(max(diag.max(), corner_diag.max()))
    if lo <= 0.0:
        raise GameValidationError(
            f"sampled monotonicity modulus is not positive on x in [{p.cert_x_lo}, {p.x_max}] "
            f"(min diagonal {lo:.3e}); the parameter set does not support a contraction step"
        )
    return 0.9 * lo, 1.1 * hi


# ---------------------------------------------------------------------------
# microgrid / false-data-injection scenario
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class MicrogridParams:
    """Parameters of the load-altering game on a distribution grid.

    The leader picks a defense budget ``x``; the insider decides whether to
    amplify the attack (``y``); attackers inject loads ``z_i`` coupled through
    the symmetric matrix ``G``.  The insider's perceived cost slope replaces
    the true price coefficient with the manipulated one.
    """

    n: int = 3
    big_l: float = 20.0
    lambda_loss: float = 1.5
    alpha_amp: float = 0.5
    v_base: float = 3.0
    beta: float = 1.0
    delta_cost: float = 0.8
    g_off: float = 0.2
    G: Optional[np.ndarray] = None
    x_max: float = 5.0
    y_min: float = 0.0
    y_max: float = 1.0
    z_max: float = 5.0
    theta_set: Sequence[float] = (0.8, 1.0, 1.2)


def build_microgrid(params: Optional[MicrogridParams] = None, **overrides) -> GameDefinition:
    """Assemble the load-injection game; the monotonicity bound is closed form.

    Raises:
        GameValidationError: when the coupling matrix breaks the strong
            monotonicity condition ``c(x_min) > max row sum of G``.
    """
    p = params or MicrogridParams()
    if overrides:
        p = dataclasses.replace(p, **overrides)
    n = p.n
    if p.G is not None:
        G = np.asarray(p.G, dtype=float).copy()
        if G.shape != (n, n):
            raise GameValidationError(f"coupling matrix must be {n}x{n}, got {G.shape}")
    else:
        G = np.full((n, n), p.g_off, dtype=float)
    np.fill_diagonal(G, 0.0)
    if np.any(G < 0):
        raise GameValidationError("coupling entries must be nonnegative")

    lam, alpha, delta, big_l, v = p.lambda_loss, p.alpha_amp, p.delta_cost, p.big_l, p.v_base
    row = float(np.max(np.sum(G, axis=1))) if n > 1 else 0.0
    c_min = 1.0  # c(x) = 1 + delta * x at x_min = 0
    c_max = 1.0 + delta * p.x_max
    mu = c_min - row
    kappa = c_max + row
    if mu <= 0.0:
        raise GameValidationError(
            f"strong monotonicity violated: c(x_min)={c_min} must exceed the largest "
            f"coupling row sum {row}"
        )

    def b(y):
        return 1.0 + alpha * float(y)

    def leader_utility(x, y, z):
        return big_l - x - lam * b(y) * float(np.sum(z))

    def grad_x_leader(x, y, z):
        return -1.0

    def grad_z_leader(x, y, z):
        return np.full(n, -lam * b(y))

    def attacker_utility(i, x, y, z, theta):
        z = np.asarray(z, dtype=float)
        zi = z[..., i]
        c = 1.0 + delta * x
        coupling = z @ G[i]
        return b(y) * zi - 0.5 * c * zi ** 2 + zi * coupling

    def pseudogradient(x, y, z, theta):
        z = np.asarray(z, dtype=float)
        return -b(y) + (1.0 + delta * x) * z - G @ z

    def jac_x_pseudograd(x, y, z, theta):
        return (delta * np.asarray(z, dtype=float)).reshape(n, 1)

    def jac_z_pseudograd(x, y, z, theta):
        return (1.0 + delta * x) * np.eye(n) - G

    return GameDefinition(
        n_attackers=n,
        x_box=StrategyBox(np.array([0.0]), np.array([p.x_max])),
        y_box=StrategyBox(np.array([p.y_min]), np.array([p.y_max])),
        z_box=StrategyBox(np.zeros(n), np.full(n, p.z_max)),
        theta_set=tuple(float(t) for t in p.theta_set),
        theta_true=float(p.beta),
        leader_utility=leader_utility,
        grad_x_leader=grad_x_leader,
        grad_z_leader=grad_z_leader,
        insider_slope=lambda x, theta: v - float(theta[0]) * float(x),
        insider_intercept=lambda x: float(x),
        attacker_utility=attacker_utility,
        pseudogradient=pseudogradient,
        jac_x_pseudograd=jac_x_pseudograd,
        jac_z_pseudograd=jac_z_pseudograd,
        mu=mu,
        kappa=kappa,
        name="microgrid",
    )


def build_random_microgrid(n: int, seed: int, coupling_scale: float = 0.2) -> GameDefinition:
    """Microgrid instance with a random coupling matrix, rescaled to stay monotone.

    Off-diagonal entries are drawn uniformly from ``[0, coupling_scale]``; if the
    largest row sum exceeds 0.4 the whole matrix is shrunk onto that bound so the
    assembled game always satisfies the build-time monotonicity check.  The draw
    is fully determined by ``seed``.
    """
    if n < 2:
        raise GameValidationError("random coupling needs at least two attackers")
    rng = np.random.default_rng(seed)
    G = rng.uniform(0.0, coupling_scale, size=(n, n))
    np.fill_diagonal(G, 0.0)
    row = float(np.max(np.sum(G, axis=1)))
    if row > 0.4:
        G *= 0.4 / row
    params = MicrogridParams(n=n, G=G, theta_set=(1.0,))
    return build_microgrid(params)


# ---------------------------------------------------------------------------
# analytic toys
# ---------------------------------------------------------------------------

def build_toy(name: str) -> GameDefinition:
    """Closed-form miniature games used for exact-value tests.

    ``"robustness"`` — a quadratic-tracking attacker where two deception
    choices tie for the leader; one of them survives as a simultaneous-move
    equilibrium and the other does not.

    ``"nonexistence"`` — a game whose pessimistic leader value has a supremum
    that no strategy attains; the deception set is empty and is normalised to
    the singleton true parameter (classical mode).
    """
    if name == "robustness":
        return _build_robustness_toy()
    if name == "nonexistence":
        return _build_nonexistence_toy()
    raise GameValidationError(f"unknown toy '{name}'; available: nonexistence, robustness")


def _build_robustness_toy() -> GameDefinition:
    def attacker_utility(i, x, y, z, theta):
        z = np.asarray(z, dtype=float)
        return -(z[..., 0] - float(theta[0]) * x) ** 2

    return GameDefinition(
        n_attackers=1,
        x_box=StrategyBox(np.array([-2.0]), np.array([2.0])),
        y_box=StrategyBox(np.array([0.0]), np.array([2.0])),
        z_box=StrategyBox(np.array([-2.0]), np.array([2.0])),
        theta_set=(0.0, -4.0 / 3.0),
        theta_true=0.0,
        leader_utility=lambda x, y, z: 25.0 - (x - 1.0) ** 2 - (z[0] - 2.0) ** 2,
        grad_x_leader=lambda x, y, z: -2.0 * (x - 1.0),
        grad_z_leader=lambda x, y, z: np.array([-2.0 * (z[0] - 2.0)]),
        insider_slope=lambda x, theta: abs(float(x)) + 1.0,
        insider_intercept=lambda x: 0.0,
        attacker_utility=attacker_utility,
        pseudogradient=lambda x, y, z, theta: np.array([2.0 * (z[0] - float(theta[0]) * x)]),
        jac_x_pseudograd=lambda x, y, z, theta: np.array([[-2.0 * float(theta[0])]]),
        jac_z_pseudograd=lambda x, y, z, theta: np.array([[2.0]]),
        mu=2.0,
        kappa=2.0,
        name="robustness",
    )


def _build_nonexistence_toy() -> GameDefinition:
    template = TemplateLeaderUtility(
        base=lambda x: -2.0 * x ** 2 + 2.0 * x,
        base_grad=lambda x: -4.0 * x + 2.0,
        interaction=lambda y, z: -float(y),
        interaction_grad_z=lambda y, z: np.zeros(1),
    )

    def attacker_utility(i, x, y, z, theta):
        z = np.asarray(z, dtype=float)
        return -0.5 * z[..., 0] ** 2

    return GameDefinition(
        n_attackers=1,
        x_box=StrategyBox(np.array([0.0]), np.array([3.0])),
        y_box=StrategyBox(np.array([-1.0]), np.array([1.0])),
        z_box=StrategyBox(np.array([-1.0]), np.array([1.0])),
        theta_set=(0.0,),  # empty deception set normalised to the true parameter
        theta_true=0.0,
        leader_utility=template.utility,
        grad_x_leader=template.grad_x,
        grad_z_leader=template.grad_z,
        insider_slope=lambda x, theta: (float(x) - 1.0) * (float(x) - 2.0),
        insider_intercept=lambda x: 0.0,
        attacker_utility=attacker_utility,
        pseudogradient=lambda x, y, z, theta: np.asarray(z, dtype=float).copy(),
        jac_x_pseudograd=lambda x, y, z, theta: np.zeros((1, 1)),
        jac_z_pseudograd=lambda x, y, z, theta: np.eye(1),
        mu=1.0,
        kappa=1.0,
        name="nonexistence",
    )


# ---------------------------------------------------------------------------
# registry + demo
# ---------------------------------------------------------------------------

def available_scenarios() -> tuple:
    return ("wireless", "microgrid", "robustness", "nonexistence", "random_microgrid")


def build_scenario(name: str, overrides: Optional[dict] = None) -> GameDefinition:
    """Name-based dispatcher used by the command line front end."""
    overrides = dict(overrides or {})
    if name == "wireless":
        if "theta_set" in overrides:
            overrides["theta_set"] = tuple(overrides["theta_set"])
        if "d2" in overrides:
            overrides["d2"] = tuple(overrides["d2"])
        return build_wireless(**overrides)
    if name == "microgrid":
        if "theta_set" in overrides:
            overrides["theta_set"] = tuple(overrides["theta_set"])
        if "G" in overrides:
            overrides["G"] = np.asarray(overrides["G"], dtype=float)
        return build_microgrid(**overrides)
    if name == "random_microgrid":
        return build_random_microgrid(
            n=int(overrides.get("n", 50)),
            seed=int(overrides.get("seed", 0)),
            coupling_scale=float(overrides.get("coupling_scale", 0.2)),
        )
    if name in ("robustness", "nonexistence"):
        if overrides:
            raise GameValidationError(f"toy scenario '{name}' accepts no overrides")
        return build_toy(name)
    raise GameValidationError(
        f"unknown scenario '{name}'; available: {', '.join(available_scenarios())}"
    )


def intractable_zero_demo(n_points: int = 512) -> dict:
    """Data for the optimistic-tie-break case whose switch point has no closed form.

    The insider's marginal term ``2 sin(x) - x`` vanishes at an irrational
    point that can only be bracketed numerically.  The demo emits the
    piecewise leader utility on both insider branches together with both
    candidate values at the switch point, leaving the tie-break choice to the
    caller — solving this case is out of scope by design.
    """
    lo, hi = 1.0, math.pi
    f = lambda x: 2.0 * math.sin(x) - x
    a, fb = lo, f(hi)
    b = hi
    for _ in range(200):
        m = 0.5 * (a + b)
        if f(a) * f(m) <= 0:
            b = m
        else:
            a = m
    zero = 0.5 * (a + b)
    xs = np.linspace(0.0, math.pi, n_points)
    return {
        "zero": zero,
        "lower_branch_value": -zero ** 2 + zero,
        "upper_branch_value": -zero ** 2 + 2.0 * zero,
        "x": xs,
        "utility_amplified": -xs ** 2,          # insider fully cooperative branch
        "utility_suppressed": -xs ** 2 + 2 * xs,  # insider fully adversarial branch
        "slope": 2.0 * np.sin(xs) - xs,
    }
