"""Numerical solvers for three-tier deception games.

A leader commits to an action and a manipulated signal; an insider with an
affine utility and a pool of box-constrained attackers best-respond to the
signal; the leader's utility is judged under the true signal.  The package
computes the leader's committed equilibria (weak/strong/approximate), the
simultaneous-move equilibria, and the consistency between the two — all
cross-checked against brute-force grid oracles.
"""

from .config import RunConfig, load_config, validate_config
from .errors import (
    BoundaryRegionError,
    ConfigError,
    DomainError,
    GameValidationError,
    NonConvergenceError,
    OracleBudgetError,
    OracleCycleError,
)
from .game import (
    GameDefinition,
    StrategyBox,
    TemplateLeaderUtility,
    evaluate_leader_utility,
    evaluate_pseudogradient,
    finite_difference_gradients,
    verify_template,
)
from .hne import ConsistencyReport, HNEPoint, check_consistency, nearest_hne, solve_hne
from .nash import (
    ActiveRegionInfo,
    ContractionParams,
    active_region,
    contraction_for,
    default_contraction,
    ppg_step,
    solve_nash,
)
from .oracle import OracleGrid, oracle_dse, oracle_hne, oracle_nash
from .partition import (
    BRResult,
    PartitionResult,
    SignInterval,
    br_insider,
    halve_gap,
    partition_leader_domain,
    partition_with_gaps,
)
from .scenarios import (
    MicrogridParams,
    WirelessParams,
    available_scenarios,
    build_microgrid,
    build_random_microgrid,
    build_scenario,
    build_toy,
    build_wireless,
    intractable_zero_demo,
)
from .sensitivity import (
    SensitivityState,
    inner_loop,
    jacobians_of_h,
    offline_sensitivity,
)
from .solver import (
    AscentResult,
    EquilibriumResult,
    SolverConfig,
    TracePoint,
    ascend_interval,
    hypergradient,
    solve_dse,
    zero_point_utility,
)

__version__ = "0.1.0"

__all__ = [
    "ActiveRegionInfo",
    "AscentResult",
    "BoundaryRegionError",
    "BRResult",
    "ConfigError",
    "ConsistencyReport",
    "ContractionParams",
    "DomainError",
    "EquilibriumResult",
    "GameDefinition",
    "GameValidationError",
    "HNEPoint",
    "MicrogridParams",
    "NonConvergenceError",
    "OracleBudgetError",
    "OracleCycleError",
    "OracleGrid",
    "PartitionResult",
    "RunConfig",
    "SensitivityState",
    "SignInterval",
    "SolverConfig",
    "StrategyBox",
    "TemplateLeaderUtility",
    "TracePoint",
    "WirelessParams",
    "active_region",
    "ascend_interval",
    "available_scenarios",
    "br_insider",
    "build_microgrid",
    "build_random_microgrid",
    "build_scenario",
    "build_toy",
    "build_wireless",
    "check_consistency",
    "contraction_for",
    "default_contraction",
    "evaluate_leader_utility",
    "evaluate_pseudogradient",
    "finite_difference_gradients",
    "halve_gap",
    "hypergradient",
    "inner_loop",
    "intractable_zero_demo",
    "jacobians_of_h",
    "load_config",
    "nearest_hne",
    "offline_sensitivity",
    "oracle_dse",
    "oracle_hne",
    "oracle_nash",
    "partition_leader_domain",
    "partition_with_gaps",
    "ppg_step",
    "solve_dse",
    "solve_hne",
    "solve_nash",
    "validate_config",
    "verify_template",
    "zero_point_utility",
]
