"""LP-guided rounding heuristic that warm-starts the exact solve.

The fractional x of an LP relaxation often already commits most buses: any
edge whose two endpoints both exceed a threshold for the same island is
treated as decided, and the connected regions of those decided edges that
contain exactly one root are frozen. If enough of the network is frozen, a
reduced mixed-integer model (the switched-flow formulation with the frozen
assignments fixed) is solved under a small time budget; its incumbent is
then translated into a full starting vector for the model actually being
solved, including any tree-arc, commodity, angle or imbalance variables the
reduced model never had.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import graph_core
from .formulations import BigMConfig, ObjectiveWeights, build_benchmark
from .milp_core import DEFAULT_REL_GAP, MilpModel, MilpSolution, solve
from .net_model import CoherentGroups, NetworkCase
from .validate_metrics import certify, extract_plan

X_FREEZE_THRESHOLD = 0.9
COVERAGE_THRESHOLD = 0.8
BUDGET_FRACTION = 0.03


def heuristic_budget(total_time_limit: float) -> float:
    """Wall-clock share reserved for the rounding stage."""
    return BUDGET_FRACTION * float(total_time_limit)


@dataclass(frozen=True)
class PartialIslands:
    """Frozen node sets per island (node indices), plus covered fraction."""

    frozen: tuple[frozenset[int], ...]
    coverage: float

    def assigned(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for k, nodes in enumerate(self.frozen):
            for i in nodes:
                out[i] = k
        return out


def freeze_partial_islands(
    lp_x: Mapping[tuple[int, int], float],
    case: NetworkCase,
    groups: CoherentGroups,
    threshold: float = X_FREEZE_THRESHOLD,
) -> PartialIslands | None:
    """Turn fractional assignments into committed island fragments.

    Edges whose endpoints both clear the threshold for a common island are
    kept; connected regions of the kept edges holding exactly one root are
    frozen to that root's island. Regions without a root stay free. Returns
    None when a region captures two roots or contradicts a required group,
    both of which make the rounding unusable.
    """
    kk = groups.k
    active = []
    for e, (u, v) in enumerate(case.edge_nodes):
        if any(lp_x[(u, k)] > threshold and lp_x[(v, k)] > threshold
               for k in range(kk)):
            active.append(e)
    comp = graph_core.connected_components(case.n, case.edge_nodes,
                                           active=active)
    members: dict[int, list[int]] = {}
    for i in range(case.n):
        members.setdefault(comp[i], []).append(i)
    root_idx = {case.bus_index(r): k for k, r in enumerate(groups.roots)}
    group_of = {}
    for k, g in enumerate(groups.groups):
        for bus in g:
            group_of[case.bus_index(bus)] = k

    frozen: list[frozenset[int]] = [frozenset() for _ in range(kk)]
    covered = 0
    for nodes in members.values():
        hit = [root_idx[i] for i in nodes if i in root_idx]
        if len(hit) == 0:
            continue
        if len(hit) > 1:
            return None
        k = hit[0]
        for i in nodes:
            if group_of.get(i, k) != k:
                return None
        frozen[k] = frozenset(nodes)
        covered += len(nodes)
    return PartialIslands(tuple(frozen), covered / case.n)


@dataclass
class HeuristicResult:
    solution: MilpSolution
    model: MilpModel
    partial: PartialIslands


def run_heuristic(
    lp_x: Mapping[tuple[int, int], float],
    case: NetworkCase,
    groups: CoherentGroups,
    time_budget: float,
    *,
    weights: ObjectiveWeights | None = None,
    bigm: BigMConfig | None = None,
    threshold: float = X_FREEZE_THRESHOLD,
    coverage_threshold: float = COVERAGE_THRESHOLD,
    rel_gap: float = DEFAULT_REL_GAP,
    partial: PartialIslands | None = None,
) -> HeuristicResult | None:
    """Solve the reduced fixed-fragment model; None when rounding fails.

    Any incumbent returned has been certified against the case; an
    uncertifiable incumbent is a defect and raises instead of being
    silently dropped.
    """
    if time_budget <= 0:
        return None
    if partial is None:
        partial = freeze_partial_islands(lp_x, case, groups, threshold)
    if partial is None or partial.coverage < coverage_threshold:
        return None

    model = build_benchmark(case, groups, weights=weights, bigm=bigm)
    assigned = partial.assigned()
    kk = groups.k
    for i, k in assigned.items():
        for kother in range(kk):
            model.fix_var(model.var("x", (i, kother)),
                          1.0 if kother == k else 0.0)
    for e, (u, v) in enumerate(case.edge_nodes):
        if u in assigned and v in assigned:
            model.fix_var(model.var("y", e),
                          0.0 if assigned[u] == assigned[v] else 1.0)

    sol = solve(model, time_limit=time_budget, rel_gap=rel_gap)
    if not sol.has_values:
        return None
    plan = extract_plan(model, sol.values, case)
    cert = certify(plan, case, groups)
    if not cert:
        raise RuntimeError(
            "rounding heuristic produced an uncertifiable incumbent: "
            + "; ".join(cert.violations[:4])
        )
    return HeuristicResult(sol, model, partial)


def _island_trees(case: NetworkCase, island_of: Sequence[int],
                  closed: Sequence[int], roots: Sequence[int]):
    """Per-island BFS trees over closed edges: (parent, child, edge) visits
    in discovery order, one list per island root."""
    adj: dict[int, list[tuple[int, int]]] = {i: [] for i in range(case.n)}
    for e in closed:
        u, v = case.edge_nodes[e]
        adj[u].append((v, e))
        adj[v].append((u, e))
    for lst in adj.values():
        lst.sort()
    trees = []
    for r in roots:
        seen = {r}
        order: list[tuple[int, int, int]] = []
        queue = [r]
        while queue:
            u = queue.pop(0)
            for w, e in adj[u]:
                if w in seen or island_of[w] != island_of[r]:
                    continue
                seen.add(w)
                order.append((u, w, e))
                queue.append(w)
        trees.append(order)
    return trees


def solution_to_start(source_model: MilpModel, source_values: np.ndarray,
                      target_model: MilpModel) -> np.ndarray | None:
    """Translate one model's incumbent into another model's start vector.

    Shared variables are copied by name; tree arcs, commodity flows, island
    imbalances and bus angles absent from the source are reconstructed from
    the islanded flow pattern. Returns None when the result is not feasible
    for the target (for example a single-bus island under a formulation
    that forbids one, or angles that overflow a tighter box).
    """
    info = getattr(target_model, "info", None)
    if info is None:
        raise ValueError("target model carries no build information")
    case = info.case

    start = np.zeros(target_model.n_vars)
    missing: set[str] = set()
    for gname, keyed in target_model.group_sizes().items():
        del keyed
        if source_model.has_group(gname):
            src = source_model.group(gname)
            tgt = target_model.group(gname)
            if set(src) != set(tgt):
                return None
            for key, idx in tgt.items():
                start[idx] = source_values[src[key]]
        else:
            missing.add(gname)

    derivable = {"z", "f", "P_Delta", "phi"}
    if not missing <= derivable:
        return None

    if missing:
        x = source_model.group_values(source_values, "x")
        y = source_model.group_values(source_values, "y")
        p = source_model.group_values(source_values, "p")
        kk = info.k
        island_of = [
            max(range(kk), key=lambda k: x[(i, k)]) for i in range(case.n)
        ]
        closed = [e for e in range(case.m) if y[e] < 0.5]
        trees = _island_trees(case, island_of, closed, info.roots)

    if "z" in missing or "f" in missing:
        subtree = [1] * case.n
        for order in trees:
            for parent, child, e in reversed(order):
                subtree[parent] += subtree[child]
        for order in trees:
            for parent, child, e in order:
                if "z" in missing:
                    start[target_model.var("z", (parent, child))] = 1.0
                if "f" in missing:
                    u, _ = case.edge_nodes[e]
                    sgn = 1.0 if u == parent else -1.0
                    start[target_model.var("f", e)] = sgn * subtree[child]

    if "P_Delta" in missing and target_model.has_group("P_Delta"):
        imb = [0.0] * kk
        for i, bus in enumerate(case.buses):
            imb[island_of[i]] += bus.gen_pu - bus.load_pu
        for k in range(kk):
            start[target_model.var("P_Delta", k)] = abs(imb[k])

    if "phi" in missing:
        theta = [0.0] * case.n
        for order in trees:
            for parent, child, e in order:
                u, _ = case.edge_nodes[e]
                b = case.branches[e].susceptance_pu
                drop = p[e] / b
                theta[child] = theta[parent] - drop if u == parent \
                    else theta[parent] + drop
        for i in range(case.n):
            start[target_model.var("phi", i)] = theta[i]

    if not target_model.is_feasible(start):
        return None
    return start
