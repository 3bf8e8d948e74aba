"""Lazy row generators for the spanning-forest / cycle-KVL models.

Three families run, in this order, on every integral incumbent:

1. directed cycle breaking: rogue directed cycles formed by the arc
   variables (they fake connectivity away from any root) are each capped at
   length-1 arcs;
2. root-to-terminal cutsets: if a must-serve terminal of group k cannot be
   reached from its root through enabled arcs, the arcs entering the
   terminal's ancestor set must number at least one;
3. loop-sum (KVL) refresh: the incumbent's closed subgraph gets a fresh
   spanning forest (original forest edges weighted near zero so the fresh
   cycle basis aligns with the seeded one) and every fresh basis cycle with
   a non-zero oriented flow sum contributes its row pair.

Every emitted row is checked to be violated by the incumbent that produced
it, and every row is globally valid: it never cuts off an islanding that the
validation suite would certify.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, TYPE_CHECKING

import numpy as np

from . import graph_core
from .formulations import CYCLE_KVL, kvl_row_pair
from .graph_core import SignedCycle

if TYPE_CHECKING:
    from .milp_core import MilpModel, RowSpec
    from .net_model import NetworkCase

TREE_EDGE_WEIGHT = 1e-6
NON_TREE_EDGE_WEIGHT = 1.0
VIOLATION_TOL = 1e-6

CYCLE_FAMILY = "cycle_breaking"
CUTSET_FAMILY = "root_cutset"
KVL_FAMILY = "kvl_refresh"


@dataclass
class SeparationReport:
    """Tally of the lazy-row loop: passes, rows per family, residual count."""

    rounds: int = 0
    added_rows: dict[str, int] = field(default_factory=dict)
    final_violations: int = 0

    @property
    def total_added(self) -> int:
        return sum(self.added_rows.values())

    def as_dict(self) -> dict:
        return {
            "rounds": self.rounds,
            "added_rows": dict(self.added_rows),
            "total_added": self.total_added,
            "final_violations": self.final_violations,
        }


def separate_cycle_breaking(
    z_values: Mapping[tuple[int, int], float],
    z_vars: Mapping[tuple[int, int], int],
    roots: Sequence[int],
) -> list["RowSpec"]:
    """Rows capping each rogue directed cycle of the incumbent arc set."""
    enabled = [a for a, v in z_values.items() if v > 0.5]
    rows: list = []
    for cyc in graph_core.extract_directed_cycles(enabled, roots):
        lhs = sum(z_values[a] for a in cyc.arcs)
        rhs = float(len(cyc) - 1)
        if lhs <= rhs + VIOLATION_TOL:
            raise RuntimeError("cycle-breaking row is not violated at emission")
        label = "_".join(f"{u}.{v}" for u, v in cyc.arcs)
        rows.append((
            [(z_vars[a], 1.0) for a in cyc.arcs], "<=", rhs,
            f"cyc_break_{label}",
        ))
    return rows


def separate_root_cutsets(
    z_values: Mapping[tuple[int, int], float],
    z_vars: Mapping[tuple[int, int], int],
    roots: Sequence[int],
    terminals_by_group: Sequence[frozenset[int]],
) -> list["RowSpec"]:
    """Rows forcing an enabled arc into the ancestor set of unreached terminals.

    For each group, every member other than the root is a terminal that must
    be reachable from the root through enabled arcs. For an unreached
    terminal t, let S be every node that currently reaches t; no enabled arc
    enters S (else its tail would be in S), so requiring one arc into S cuts
    the incumbent and is satisfied by every correctly rooted forest.
    """
    enabled_into: dict[int, list[int]] = {}
    for (u, v), val in z_values.items():
        if val > 0.5:
            enabled_into.setdefault(v, []).append(u)
    rows: list = []
    seen_sets: set[frozenset[int]] = set()
    for root, terminals in zip(roots, terminals_by_group):
        for t in sorted(terminals):
            if t == root:
                continue
            ancestors = {t}
            frontier = [t]
            while frontier:
                node = frontier.pop()
                for u in enabled_into.get(node, ()):
                    if u not in ancestors:
                        ancestors.add(u)
                        frontier.append(u)
            if root in ancestors:
                continue
            key = frozenset(ancestors)
            if key in seen_sets:
                continue
            seen_sets.add(key)
            coeffs = [
                (idx, 1.0)
                for (u, v), idx in z_vars.items()
                if v in key and u not in key
            ]
            lhs = sum(
                z_values[(u, v)]
                for (u, v) in z_values
                if v in key and u not in key
            )
            if lhs >= 1.0 - VIOLATION_TOL:
                raise RuntimeError("cutset row is not violated at emission")
            label = "_".join(str(x) for x in sorted(key)[:6])
            rows.append((coeffs, ">=", 1.0, f"cutset_{t}_{label}"))
    return rows


def refresh_kvl(
    p_values: Mapping[int, float],
    y_values: Mapping[int, float],
    case: "NetworkCase",
    mst_edges: frozenset[int],
    p_vars: Mapping[int, int],
    y_vars: Mapping[int, int],
    tol: float = VIOLATION_TOL,
) -> list["RowSpec"]:
    """Loop-sum rows for fresh basis cycles the incumbent flows violate.

    The closed subgraph gets a minimum spanning forest under weights that
    favor the original forest's edges, so most fresh fundamental cycles
    coincide with already-seeded ones (which the incumbent satisfies); only
    genuinely rerouted cycles carry a non-zero oriented sum and fire.
    """
    edges = case.edge_nodes
    closed = [e for e in range(case.m) if y_values[e] < 0.5]
    sub_edges = [edges[e] for e in closed]
    sub_weights = [
        TREE_EDGE_WEIGHT if e in mst_edges else NON_TREE_EDGE_WEIGHT
        for e in closed
    ]
    local_tree, _ = graph_core.min_spanning_forest(case.n, sub_edges, sub_weights)
    basis = graph_core.fundamental_cycle_basis(case.n, sub_edges, local_tree)
    rows: list = []
    for cyc in basis.cycles:
        global_cycle = SignedCycle(
            tuple((closed[e], sgn) for e, sgn in cyc.edges)
        )
        residual = sum(
            sgn * p_values[e] / case.branches[e].susceptance_pu
            for e, sgn in global_cycle.edges
        )
        if abs(residual) <= tol:
            continue
        hi, lo = kvl_row_pair(global_cycle, case, p_vars, y_vars, tag="kvl_lazy")
        rows.extend((hi, lo))
    return rows


class _Separator:
    def __init__(self, family: str, fn: Callable[[np.ndarray], list]):
        self.family = family
        self._fn = fn

    def __call__(self, values: np.ndarray) -> list:
        return self._fn(values)


def make_separators(model: "MilpModel") -> list[Callable[[np.ndarray], list]]:
    """Ordered lazy-row generators matching the model's structure.

    Models without arc variables (commodity-flow connectivity) get no
    cycle/cutset separators; models with per-branch Ohm rows get no KVL
    refresh. The plain big-M model therefore returns an empty list.
    """
    info = getattr(model, "info", None)
    if info is None:
        raise ValueError("model carries no build info")
    seps: list[Callable] = []
    if model.has_group("z"):
        z_vars = model.group("z")
        roots = info.roots
        terminals = tuple(
            frozenset(g - {r}) for g, r in zip(info.group_nodes, info.roots)
        )

        def run_cycles(values: np.ndarray, _zv=z_vars) -> list:
            z_values = {a: float(values[i]) for a, i in _zv.items()}
            return separate_cycle_breaking(z_values, _zv, roots)

        def run_cutsets(values: np.ndarray, _zv=z_vars) -> list:
            z_values = {a: float(values[i]) for a, i in _zv.items()}
            return separate_root_cutsets(z_values, _zv, roots, terminals)

        seps.append(_Separator(CYCLE_FAMILY, run_cycles))
        seps.append(_Separator(CUTSET_FAMILY, run_cutsets))
    if info.variant.kvl == CYCLE_KVL:
        p_vars = model.group("p")
        y_vars = model.group("y")
        mst = info.mst_edges or frozenset()

        def run_kvl(values: np.ndarray) -> list:
            p_values = {e: float(values[i]) for e, i in p_vars.items()}
            y_values = {e: float(values[i]) for e, i in y_vars.items()}
            return refresh_kvl(p_values, y_values, info.case, mst,
                               p_vars, y_vars)

        seps.append(_Separator(KVL_FAMILY, run_kvl))
    return seps
