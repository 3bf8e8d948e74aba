"""Solver-independent certification of islanding plans, plus result metrics.

A plan is certified directly against the case data using its own graph
traversals and flow arithmetic; nothing here reads model rows, so a bug in a
formulation cannot certify itself. Checks: the partition is a set of exactly
K connected islands containing precisely their required groups, the open
set is exactly the cross-island branch set, per-bus power balance holds with
the declared sheds, branch flows respect limits and vanish on open branches,
per-island loop sums vanish (fresh cycle basis, not the model's), and sheds
stay within their boxes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import graph_core
from .formulations import ObjectiveWeights
from .milp_core import MilpModel
from .net_model import CoherentGroups, NetworkCase

CERT_TOL = 1e-6


@dataclass(frozen=True)
class IslandingPlan:
    """A concrete splitting decision in bus/branch terms.

    ``island_of`` maps every bus id to an island label 1..K (island k hosts
    group k), ``open_branches`` holds branch indices, sheds are per bus id
    (absent means zero), ``island_flows`` holds the post-split flow of every
    branch (open branches carry zero).
    """

    island_of: Mapping[int, int]
    open_branches: frozenset[int]
    shed_load: Mapping[int, float]
    shed_gen: Mapping[int, float]
    island_flows: Mapping[int, float]

    def islands(self) -> dict[int, set[int]]:
        out: dict[int, set[int]] = {}
        for bus, k in self.island_of.items():
            out.setdefault(k, set()).add(bus)
        return out


@dataclass
class CertificationResult:
    passed: bool
    violations: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.passed


@dataclass
class IslandingMetrics:
    """Aggregate quality figures of a certified plan."""

    p_ls_total: float
    p_delta_total: float
    p_gs_total: float
    flow_cut_total: float
    objective: float
    gap: float = 0.0
    wall_time: float = 0.0

    def as_dict(self) -> dict:
        return {
            "P_LS_total": self.p_ls_total,
            "P_Delta_total": self.p_delta_total,
            "P_GS_total": self.p_gs_total,
            "flow_cut_total": self.flow_cut_total,
            "objective": self.objective,
            "gap": self.gap,
            "wall_time": self.wall_time,
        }


def extract_plan(model: MilpModel, values: np.ndarray,
                 case: NetworkCase) -> IslandingPlan:
    """Read a solved model's valuation into bus/branch terms."""
    x = model.group_values(values, "x")
    island_of: dict[int, int] = {}
    kk = max(k for (_, k) in x) + 1
    for i, bus in enumerate(case.buses):
        best = max(range(kk), key=lambda k: x[(i, k)])
        island_of[bus.id] = best + 1
    y = model.group_values(values, "y")
    open_branches = frozenset(e for e, v in y.items() if v > 0.5)
    def shed_of(group: str) -> dict[int, float]:
        if not model.has_group(group):
            return {}
        return {
            case.buses[i].id: v
            for i, v in model.group_values(values, group).items()
            if abs(v) > 0
        }

    shed_load = shed_of("P_LS")
    shed_gen = shed_of("P_GS")
    flows = model.group_values(values, "p")
    return IslandingPlan(
        island_of=island_of,
        open_branches=open_branches,
        shed_load=shed_load,
        shed_gen=shed_gen,
        island_flows={e: flows[e] for e in range(case.m)},
    )


def certify(plan: IslandingPlan, case: NetworkCase, groups: CoherentGroups,
            tol: float = CERT_TOL) -> CertificationResult:
    """Check a plan against the case from first principles.

    Returns every violation found (empty list means certified). All power
    quantities are compared at the given per-unit tolerance.
    """
    out: list[str] = []
    kk = groups.k

    labeled = set(plan.island_of)
    expected = set(case.bus_ids)
    if labeled != expected:
        out.append("partition: island_of does not cover exactly the case buses")
        return CertificationResult(False, out)
    labels = set(plan.island_of.values())
    if labels != set(range(1, kk + 1)):
        out.append(
            f"partition: expected islands 1..{kk}, found labels {sorted(labels)}"
        )
    for k, g in enumerate(groups.groups, start=1):
        for bus in sorted(g):
            got = plan.island_of.get(bus)
            if got != k:
                out.append(f"groups: bus {bus} must sit in island {k}, got {got}")

    # open set must be exactly the cross-island branch set
    for e, br in enumerate(case.branches):
        cross = plan.island_of[br.from_bus] != plan.island_of[br.to_bus]
        is_open = e in plan.open_branches
        if cross and not is_open:
            out.append(f"switching: branch {e} joins two islands but is closed")
        if not cross and is_open:
            out.append(f"switching: branch {e} is open inside island")

    # island connectivity over closed branches
    closed = [e for e in range(case.m) if e not in plan.open_branches]
    comp = graph_core.connected_components(case.n, case.edge_nodes, active=closed)
    for k in range(1, kk + 1):
        members = [case.bus_index(b) for b, lab in plan.island_of.items()
                   if lab == k]
        if not members:
            continue
        if len({comp[i] for i in members}) != 1:
            out.append(f"connectivity: island {k} is not connected")
    if len({comp[i] for i in range(case.n)}) != kk:
        out.append(
            f"connectivity: closed subgraph has {len(set(comp))} components, "
            f"expected {kk}"
        )

    # shed boxes
    for bus, v in plan.shed_load.items():
        cap = case.bus(bus).load_pu
        if v < -tol or v > cap + tol:
            out.append(f"shedding: load shed at bus {bus} outside [0, {cap}]")
    for bus, v in plan.shed_gen.items():
        cap = case.bus(bus).gen_pu
        if v < -tol or v > cap + tol:
            out.append(f"shedding: generation shed at bus {bus} outside [0, {cap}]")

    # flow limits, open branches carry nothing
    for e, br in enumerate(case.branches):
        flow = plan.island_flows.get(e, 0.0)
        if e in plan.open_branches:
            if abs(flow) > tol:
                out.append(f"flows: open branch {e} carries {flow:.3e}")
        elif abs(flow) > br.flow_limit_pu + tol:
            out.append(
                f"flows: branch {e} at {flow:.6f} exceeds limit "
                f"{br.flow_limit_pu:.6f}"
            )

    # nodal balance with sheds applied
    for i, bus in enumerate(case.buses):
        net = 0.0
        for e, (u, v) in enumerate(case.edge_nodes):
            if u == i:
                net += plan.island_flows.get(e, 0.0)
            elif v == i:
                net -= plan.island_flows.get(e, 0.0)
        inj = (bus.gen_pu - plan.shed_gen.get(bus.id, 0.0)
               - bus.load_pu + plan.shed_load.get(bus.id, 0.0))
        if abs(net - inj) > tol:
            out.append(
                f"balance: bus {bus.id} mismatch {net - inj:.3e} "
                f"(flows {net:.6f} vs injection {inj:.6f})"
            )

    # per-island loop consistency on a fresh basis
    sub_edges = [case.edge_nodes[e] for e in closed]
    tree, _ = graph_core.min_spanning_forest(case.n, sub_edges)
    basis = graph_core.fundamental_cycle_basis(case.n, sub_edges, tree)
    for cyc in basis.cycles:
        residual = 0.0
        for le, sgn in cyc.edges:
            e = closed[le]
            residual += sgn * plan.island_flows.get(e, 0.0) \
                / case.branches[e].susceptance_pu
        if abs(residual) > tol:
            edges_str = ",".join(str(closed[le]) for le, _ in cyc.edges)
            out.append(
                f"loops: cycle ({edges_str}) has oriented sum {residual:.3e}"
            )

    return CertificationResult(not out, out)


def compute_metrics(
    plan: IslandingPlan,
    case: NetworkCase,
    groups: CoherentGroups,
    weights: ObjectiveWeights,
    *,
    gap: float = 0.0,
    wall_time: float = 0.0,
) -> IslandingMetrics:
    """Aggregate a certified plan into totals and the weighted objective.

    Raises if the plan does not certify; the recomputed objective matches
    the solver's objective for the same plan by construction of the models.
    """
    cert = certify(plan, case, groups)
    if not cert:
        raise ValueError(
            "metrics require a certified plan; violations: "
            + "; ".join(cert.violations[:4])
        )
    p_ls = sum(plan.shed_load.values())
    p_gs = sum(plan.shed_gen.values())
    imb: dict[int, float] = {}
    for bus in case.buses:
        k = plan.island_of[bus.id]
        imb[k] = imb.get(k, 0.0) + bus.gen_pu - bus.load_pu
    p_delta = sum(abs(v) for v in imb.values())
    if weights.signed_flow_disruption:
        cut = sum(case.branches[e].base_flow_pu for e in plan.open_branches)
    else:
        cut = sum(abs(case.branches[e].base_flow_pu) for e in plan.open_branches)
    objective = (weights.alpha * p_delta + weights.beta * p_ls
                 + weights.gamma * p_gs + weights.mu * cut)
    return IslandingMetrics(
        p_ls_total=p_ls,
        p_delta_total=p_delta,
        p_gs_total=p_gs,
        flow_cut_total=cut,
        objective=objective,
        gap=gap,
        wall_time=wall_time,
    )
