"""Controlled splitting of power networks into coherent islands.

Given a DC network case and a grouping of generator buses that must end up
in separate islands, the package builds mixed-integer models whose optimum
is a certified switching plan: which branches to open, how load and
generation are shed, and what flows remain. Two interchangeable model
families are provided (switched angle/commodity formulation and a
cycle-based formulation with lazily separated connectivity rows), along
with an LP-guided rounding heuristic, an independent plan certifier, and a
batch CLI.
"""

from .formulations import (
    BigMConfig,
    ModelVariant,
    ObjectiveWeights,
    build_benchmark,
    build_model,
    build_proposed,
    cycle_slack_bound,
)
from .graph_core import (
    CycleBasis,
    DirectedCycle,
    SignedCycle,
    bridges,
    connected_components,
    extract_directed_cycles,
    fundamental_cycle_basis,
    min_spanning_forest,
    short_cycles,
)
from .heuristic import (
    PartialIslands,
    freeze_partial_islands,
    heuristic_budget,
    run_heuristic,
    solution_to_start,
)
from .milp_core import MilpModel, MilpSolution, lp_relax, solve
from .net_model import (
    Branch,
    Bus,
    CaseParseError,
    CoherentGroups,
    DisconnectedNetworkError,
    NetworkCase,
    UnsupportedElementError,
    apply_flow_limits,
    base_dc_power_flow,
    dc_power_flow_angles,
    load_groups,
    parse_case,
    serialize_case,
)
from .separation import SeparationReport, make_separators
from .validate_metrics import (
    CertificationResult,
    IslandingMetrics,
    IslandingPlan,
    certify,
    compute_metrics,
    extract_plan,
)

__version__ = "0.1.0"

__all__ = [
    "BigMConfig",
    "Branch",
    "Bus",
    "CaseParseError",
    "CertificationResult",
    "CoherentGroups",
    "CycleBasis",
    "DirectedCycle",
    "DisconnectedNetworkError",
    "IslandingMetrics",
    "IslandingPlan",
    "MilpModel",
    "MilpSolution",
    "ModelVariant",
    "NetworkCase",
    "ObjectiveWeights",
    "PartialIslands",
    "SeparationReport",
    "SignedCycle",
    "UnsupportedElementError",
    "apply_flow_limits",
    "base_dc_power_flow",
    "bridges",
    "build_benchmark",
    "build_model",
    "build_proposed",
    "certify",
    "compute_metrics",
    "connected_components",
    "cycle_slack_bound",
    "dc_power_flow_angles",
    "extract_directed_cycles",
    "extract_plan",
    "freeze_partial_islands",
    "fundamental_cycle_basis",
    "heuristic_budget",
    "lp_relax",
    "load_groups",
    "make_separators",
    "min_spanning_forest",
    "parse_case",
    "run_heuristic",
    "serialize_case",
    "short_cycles",
    "solution_to_start",
    "solve",
    "__version__",
]
