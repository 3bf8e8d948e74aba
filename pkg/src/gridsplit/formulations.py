"""MILP formulations for splitting a grid into K connected, balanced islands.

Two families share the partition and power blocks and differ in how they
model island connectivity and loop flow consistency:

* the big-M family gates Ohm's law per branch with bus-angle variables and
  enforces connectivity with a single-commodity flow rooted at each island's
  root bus;
* the cycle family replaces angles with loop-sum (KVL) rows over a cycle
  basis and enforces connectivity with a rooted directed spanning forest
  whose cycle-breaking rows are generated lazily.

All variables live in named groups: ``x`` bus-to-island assignment, ``y``
branch open/closed, ``p`` branch flow, ``P_LS``/``P_GS`` load/generation
shed, ``phi`` bus angles, ``f`` commodity flows, ``z`` forest arcs,
``P_Delta`` per-island absolute imbalance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from . import graph_core
from .graph_core import CycleBasis, SignedCycle
from .milp_core import BINARY, CONTINUOUS, MilpModel
from .net_model import CoherentGroups, NetworkCase

COMMODITY_FLOW = "commodity_flow"
SPANNING_FOREST = "spanning_forest"
ANGLE_BIG_M = "angle_big_m"
CYCLE_KVL = "cycle_kvl"

DEFAULT_SHORT_CYCLE_LEN = 7


@dataclass(frozen=True)
class ObjectiveWeights:
    """Weights of the four objective terms.

    ``alpha`` scales total island imbalance, ``beta`` total load shed,
    ``gamma`` total generation shed, ``mu`` the switching cost of opening
    branches. The switching coefficient uses the magnitude of the pre-split
    branch flow; set ``signed_flow_disruption`` to use the raw signed flow
    instead.
    """

    alpha: float
    beta: float
    gamma: float
    mu: float
    signed_flow_disruption: bool = False

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma, self.mu) < 0:
            raise ValueError("objective weights must be non-negative")
        if max(self.alpha, self.beta, self.gamma, self.mu) == 0:
            raise ValueError("at least one objective weight must be positive")

    @classmethod
    def load_shed(cls) -> "ObjectiveWeights":
        """Default weighting that primarily minimizes shed load."""
        return cls(alpha=0.0, beta=1.0, gamma=0.01, mu=0.1)

    @classmethod
    def imbalance(cls) -> "ObjectiveWeights":
        """Default weighting that primarily balances the islands."""
        return cls(alpha=1.0, beta=0.01, gamma=0.01, mu=0.01)


@dataclass(frozen=True)
class BigMConfig:
    """Big-M constants of the angle/commodity family.

    ``ohm_big_m`` relaxes Ohm's law on open branches, the angle box bounds
    every bus angle, and ``commodity_cap`` bounds commodity flows (defaults
    to n-1 when unset).
    """

    ohm_big_m: float = 2.0 * math.pi
    angle_min: float = -math.pi
    angle_max: float = math.pi
    commodity_cap: float | None = None

    def __post_init__(self):
        if self.ohm_big_m <= 0:
            raise ValueError("ohm_big_m must be positive")
        if self.angle_min >= self.angle_max:
            raise ValueError("angle box is empty")
        if self.commodity_cap is not None and self.commodity_cap <= 0:
            raise ValueError("commodity_cap must be positive")

    @classmethod
    def scaled(cls, factor: float) -> "BigMConfig":
        """Widen the whole angular big-M family by one factor.

        The Ohm relaxation constant and the angle box move together: the box
        is itself a big-M device, so enlarging only one of the two leaves
        the other binding and changes nothing.
        """
        if factor <= 0:
            raise ValueError("factor must be positive")
        return cls(ohm_big_m=factor * 2.0 * math.pi,
                   angle_min=-factor * math.pi,
                   angle_max=factor * math.pi)


@dataclass(frozen=True)
class ModelVariant:
    """Structural choices: connectivity device, KVL device, strengthening."""

    connectivity: str = SPANNING_FOREST
    kvl: str = CYCLE_KVL
    short_cycle_len: int = DEFAULT_SHORT_CYCLE_LEN
    triangles: bool = True

    def __post_init__(self):
        if self.connectivity not in (COMMODITY_FLOW, SPANNING_FOREST):
            raise ValueError(f"unknown connectivity device {self.connectivity!r}")
        if self.kvl not in (ANGLE_BIG_M, CYCLE_KVL):
            raise ValueError(f"unknown kvl device {self.kvl!r}")
        if self.short_cycle_len != 0 and not 3 <= self.short_cycle_len <= 8:
            raise ValueError("short_cycle_len must be 0 (off) or within 3..8")

    @classmethod
    def benchmark(cls) -> "ModelVariant":
        """Angle big-M KVL with commodity-flow connectivity."""
        return cls(COMMODITY_FLOW, ANGLE_BIG_M, short_cycle_len=0, triangles=False)

    @classmethod
    def proposed(cls, short_cycle_len: int = DEFAULT_SHORT_CYCLE_LEN,
                 triangles: bool = True) -> "ModelVariant":
        """Cycle-KVL with spanning-forest connectivity (lazy rows)."""
        return cls(SPANNING_FOREST, CYCLE_KVL, short_cycle_len, triangles)

    @classmethod
    def hybrid(cls) -> "ModelVariant":
        """Angle big-M KVL with spanning-forest connectivity."""
        return cls(SPANNING_FOREST, ANGLE_BIG_M,
                   short_cycle_len=DEFAULT_SHORT_CYCLE_LEN, triangles=False)

    @property
    def name(self) -> str:
        if self == ModelVariant.benchmark():
            return "benchmark"
        if self.connectivity == SPANNING_FOREST and self.kvl == CYCLE_KVL:
            return "proposed"
        if self == ModelVariant.hybrid():
            return "hybrid"
        return f"{self.connectivity}+{self.kvl}"


@dataclass
class BuildInfo:
    """Structural context captured at build time, for separators and reports."""

    case: NetworkCase
    groups: CoherentGroups
    weights: ObjectiveWeights
    variant: ModelVariant
    bigm: BigMConfig
    edges: tuple[tuple[int, int], ...]
    roots: tuple[int, ...]
    group_nodes: tuple[frozenset[int], ...]
    mst_edges: frozenset[int] | None = None
    basis: CycleBasis | None = None
    known_cycles: tuple[SignedCycle, ...] = ()
    bridge_edges: frozenset[int] | None = None

    @property
    def k(self) -> int:
        return len(self.roots)


def cycle_slack_bound(cycle: SignedCycle, case: NetworkCase) -> float:
    """Largest |oriented sum of p/b| a cycle can carry once it is cut.

    A cycle inside one island has zero oriented sum; a cut cycle has at
    least two open branches, so its worst-case sum is the sum of every
    branch's limit/susceptance ratio minus the two smallest ratios (the two
    open branches contribute nothing: their flows are zero).
    """
    if len(cycle) < 3:
        raise ValueError("cycles shorter than 3 edges carry no slack bound")
    ratios = sorted(
        case.branches[e].flow_limit_pu / case.branches[e].susceptance_pu
        for e in cycle.edge_indices()
    )
    return float(sum(ratios[2:]))


def _add_partition_block(model: MilpModel, case: NetworkCase,
                         groups: CoherentGroups) -> None:
    n, kk = case.n, groups.k
    for i in range(n):
        for k in range(kk):
            model.add_var("x", (i, k), kind=BINARY)
    for e in range(case.m):
        model.add_var("y", e, kind=BINARY)
    for k, g in enumerate(groups.groups):
        for bus in g:
            i = case.bus_index(bus)
            for l in range(kk):
                model.fix_var(model.var("x", (i, l)), 1.0 if l == k else 0.0)
    for i in range(n):
        model.add_row(
            [(model.var("x", (i, k)), 1.0) for k in range(kk)],
            "=", 1.0, name=f"onehot_{i}",
        )
    for e, (i, j) in enumerate(case.edge_nodes):
        ye = model.var("y", e)
        for k in range(kk):
            xi, xj = model.var("x", (i, k)), model.var("x", (j, k))
            model.add_row([(xi, 1.0), (xj, -1.0), (ye, -1.0)], "<=", 0.0,
                          name=f"cut_a_{e}_{k}")
            model.add_row([(xj, 1.0), (xi, -1.0), (ye, -1.0)], "<=", 0.0,
                          name=f"cut_b_{e}_{k}")
            model.add_row([(xi, 1.0), (xj, 1.0), (ye, 1.0)], "<=", 2.0,
                          name=f"closed_{e}_{k}")


def _add_power_block(model: MilpModel, case: NetworkCase,
                     weights: ObjectiveWeights) -> None:
    for e, br in enumerate(case.branches):
        cost = br.base_flow_pu if weights.signed_flow_disruption else abs(br.base_flow_pu)
        model.add_var("p", e, lb=-br.flow_limit_pu, ub=br.flow_limit_pu)
        # opening a branch costs mu times its pre-split flow
        model.add_objective_coeff(model.var("y", e), weights.mu * cost)
    for i, bus in enumerate(case.buses):
        if bus.load_pu > 0:
            model.add_var("P_LS", i, lb=0.0, ub=bus.load_pu, obj=weights.beta)
        if bus.gen_pu > 0:
            model.add_var("P_GS", i, lb=0.0, ub=bus.gen_pu, obj=weights.gamma)
    for i, bus in enumerate(case.buses):
        coeffs: list[tuple[int, float]] = []
        for e, (u, v) in enumerate(case.edge_nodes):
            if u == i:
                coeffs.append((model.var("p", e), 1.0))
            elif v == i:
                coeffs.append((model.var("p", e), -1.0))
        if bus.gen_pu > 0:
            coeffs.append((model.var("P_GS", i), 1.0))
        if bus.load_pu > 0:
            coeffs.append((model.var("P_LS", i), -1.0))
        model.add_row(coeffs, "=", bus.gen_pu - bus.load_pu, name=f"bal_{i}")
    for e, br in enumerate(case.branches):
        pe, ye = model.var("p", e), model.var("y", e)
        pmax = br.flow_limit_pu
        model.add_row([(pe, 1.0), (ye, pmax)], "<=", pmax, name=f"gate_hi_{e}")
        model.add_row([(pe, 1.0), (ye, -pmax)], ">=", -pmax, name=f"gate_lo_{e}")


def _add_angle_big_m_block(model: MilpModel, case: NetworkCase,
                           roots: Sequence[int], bigm: BigMConfig) -> None:
    for i in range(case.n):
        model.add_var("phi", i, lb=bigm.angle_min, ub=bigm.angle_max)
    for r in roots:
        model.fix_var(model.var("phi", r), 0.0)
    m_phi = bigm.ohm_big_m
    for e, ((i, j), br) in enumerate(zip(case.edge_nodes, case.branches)):
        pe, ye = model.var("p", e), model.var("y", e)
        fi, fj = model.var("phi", i), model.var("phi", j)
        b = br.susceptance_pu
        model.add_row([(pe, 1.0), (fi, -b), (fj, b), (ye, -m_phi)], "<=", 0.0,
                      name=f"ohm_hi_{e}")
        model.add_row([(pe, 1.0), (fi, -b), (fj, b), (ye, m_phi)], ">=", 0.0,
                      name=f"ohm_lo_{e}")


def _add_commodity_block(model: MilpModel, case: NetworkCase,
                         groups: CoherentGroups, bigm: BigMConfig) -> None:
    n = case.n
    cap = float(bigm.commodity_cap if bigm.commodity_cap is not None else n - 1)
    for e in range(case.m):
        model.add_var("f", e, lb=-cap, ub=cap)
    for e in range(case.m):
        fe, ye = model.var("f", e), model.var("y", e)
        model.add_row([(fe, 1.0), (ye, cap)], "<=", cap, name=f"comm_hi_{e}")
        model.add_row([(fe, 1.0), (ye, -cap)], ">=", -cap, name=f"comm_lo_{e}")
    roots = {case.bus_index(r): k for k, r in enumerate(groups.roots)}
    for i in range(n):
        coeffs = []
        for e, (u, v) in enumerate(case.edge_nodes):
            if u == i:
                coeffs.append((model.var("f", e), 1.0))
            elif v == i:
                coeffs.append((model.var("f", e), -1.0))
        if i in roots:
            # the root emits one commodity unit per non-root member of its
            # island: island size minus one
            k = roots[i]
            coeffs.extend((model.var("x", (j, k)), -1.0) for j in range(n))
            model.add_row(coeffs, "=", -1.0, name=f"comm_src_{k}")
        else:
            model.add_row(coeffs, "=", -1.0, name=f"comm_sink_{i}")


def build_spanning_forest_connectivity(model: MilpModel, case: NetworkCase,
                                       groups: CoherentGroups) -> frozenset[int]:
    """Add the rooted directed spanning-forest connectivity block over z, y.

    Adds two arc variables per branch, forbids arcs into roots, requires one
    incoming arc per non-root and at least one outgoing arc per root, fixes
    the total arc count to n-K, and couples arcs to switching: an open branch
    carries no arc, a closed bridge carries exactly one. Directed
    cycle-breaking rows are *not* added here; they are seeded for short
    cycles and otherwise generated lazily. Returns the bridge edge set.
    """
    n, kk = case.n, groups.k
    edges = case.edge_nodes
    root_nodes = [case.bus_index(r) for r in groups.roots]
    root_set = set(root_nodes)
    for e, (u, v) in enumerate(edges):
        for a, b in ((u, v), (v, u)):
            idx = model.add_var("z", (a, b), kind=BINARY)
            if b in root_set:
                model.fix_var(idx, 0.0)
    model.add_row(
        [(i, 1.0) for i in model.group("z").values()],
        "=", float(n - kk), name="arcs_total",
    )
    out_arcs: dict[int, list[int]] = {i: [] for i in range(n)}
    in_arcs: dict[int, list[int]] = {i: [] for i in range(n)}
    for (a, b), idx in model.group("z").items():
        out_arcs[a].append(idx)
        in_arcs[b].append(idx)
    for k, r in enumerate(root_nodes):
        model.add_row([(i, 1.0) for i in out_arcs[r]], ">=", 1.0,
                      name=f"root_out_{k}")
    for i in range(n):
        if i not in root_set:
            model.add_row([(idx, 1.0) for idx in in_arcs[i]], "=", 1.0,
                          name=f"indeg_{i}")
    bridge_edges = graph_core.bridges(n, edges)
    for e, (u, v) in enumerate(edges):
        zuv = model.var("z", (u, v))
        zvu = model.var("z", (v, u))
        ye = model.var("y", e)
        sense = "=" if e in bridge_edges else "<="
        model.add_row([(zuv, 1.0), (zvu, 1.0), (ye, 1.0)], sense, 1.0,
                      name=f"pair_{e}")
    return bridge_edges


def kvl_row_pair(cycle: SignedCycle, case: NetworkCase,
                 p_vars: dict, y_vars: dict, tag: str = "kvl"):
    """The <= / >= loop-sum row pair of one cycle, as raw row specs."""
    mc = cycle_slack_bound(cycle, case)
    p_terms = [
        (p_vars[e], float(sgn) / case.branches[e].susceptance_pu)
        for e, sgn in cycle.edges
    ]
    y_terms = [(y_vars[e], mc / 2.0) for e in cycle.edge_indices()]
    label = "_".join(str(e) for e in sorted(cycle.edge_indices()))
    hi = (p_terms + [(i, -c) for i, c in y_terms], "<=", 0.0,
          f"{tag}_hi_{label}")
    lo = (p_terms + [(i, c) for i, c in y_terms], ">=", 0.0,
          f"{tag}_lo_{label}")
    return hi, lo


def build_cycle_kvl(model: MilpModel, case: NetworkCase,
                    cycles: Iterable[SignedCycle]) -> int:
    """Add the loop-sum (KVL) row pair for every given cycle; returns count.

    Within one island the oriented sum of p/b around a cycle must vanish; a
    cut cycle has at least two open branches and its sum is released by half
    the cycle's slack bound per open branch.
    """
    p_vars, y_vars = model.group("p"), model.group("y")
    added = 0
    for cyc in cycles:
        hi, lo = kvl_row_pair(cyc, case, p_vars, y_vars)
        model.add_row(*hi[:3], name=hi[3])
        model.add_row(*lo[:3], name=lo[3])
        added += 1
    return added


def build_triangle_cuts(model: MilpModel,
                        cycles: Iterable[SignedCycle]) -> int:
    """For each 3-cycle: no single branch may be open alone. Returns row count."""
    added = 0
    for cyc in cycles:
        idxs = cyc.edge_indices()
        if len(idxs) != 3:
            continue
        ys = [model.var("y", e) for e in idxs]
        for pos in range(3):
            coeffs = [(ys[pos], 1.0)] + [
                (ys[q], -1.0) for q in range(3) if q != pos
            ]
            model.add_row(coeffs, "<=", 0.0, name=f"tri_{model.n_rows}")
            added += 1
    return added


def build_imbalance_objective(model: MilpModel, case: NetworkCase,
                              groups: CoherentGroups, alpha: float) -> None:
    """Add per-island |load-generation imbalance| epigraph variables and rows."""
    injections = [(i, b.gen_pu - b.load_pu) for i, b in enumerate(case.buses)]
    cap = sum(abs(v) for _, v in injections)
    for k in range(groups.k):
        pd = model.add_var("P_Delta", k, lb=0.0, ub=max(cap, 1e-12), obj=alpha)
        terms = [(model.var("x", (i, k)), v) for i, v in injections if v != 0.0]
        model.add_row([(pd, 1.0)] + [(i, -c) for i, c in terms], ">=", 0.0,
                      name=f"imb_hi_{k}")
        model.add_row([(pd, 1.0)] + [(i, c) for i, c in terms], ">=", 0.0,
                      name=f"imb_lo_{k}")


def seed_cycle_breaking(model: MilpModel,
                        cycles: Iterable[SignedCycle],
                        edges: Sequence[tuple[int, int]]) -> int:
    """Pre-seed directed cycle-breaking rows for known short cycles.

    Each undirected cycle yields two directed orientations; an orientation
    with every arc enabled would be a rogue directed cycle, so each
    orientation's arc count is capped at its length minus one.
    """
    added = 0
    for cyc in cycles:
        arcs = []
        for e, sgn in cyc.edges:
            u, v = edges[e]
            arcs.append((u, v) if sgn > 0 else (v, u))
        for oriented in (arcs, [(v, u) for u, v in reversed(arcs)]):
            coeffs = [(model.var("z", a), 1.0) for a in oriented]
            model.add_row(coeffs, "<=", float(len(oriented) - 1),
                          name=f"seed_cyc_{model.n_rows}")
            added += 1
    return added


def build_model(
    case: NetworkCase,
    groups: CoherentGroups,
    *,
    variant: ModelVariant | None = None,
    weights: ObjectiveWeights | None = None,
    bigm: BigMConfig | None = None,
) -> MilpModel:
    """Assemble a full islanding model for the given structural variant.

    The imbalance block is always present in the cycle/forest variant and
    otherwise only when its weight is positive, so the plain big-M model
    under load-shed weights contains exactly the partition, power, Ohm and
    commodity blocks.
    """
    variant = variant or ModelVariant()
    weights = weights or ObjectiveWeights.load_shed()
    bigm = bigm or BigMConfig()
    groups.validate_against(case)
    n = case.n
    edges = case.edge_nodes
    roots = tuple(case.bus_index(r) for r in groups.roots)
    group_nodes = tuple(
        frozenset(case.bus_index(b) for b in g) for g in groups.groups
    )
    info = BuildInfo(case, groups, weights, variant, bigm, edges, roots,
                     group_nodes)
    model = MilpModel(name=f"islanding_{variant.name}_K{groups.k}")

    _add_partition_block(model, case, groups)
    _add_power_block(model, case, weights)

    needs_cycles = variant.kvl == CYCLE_KVL or (
        variant.connectivity == SPANNING_FOREST and variant.short_cycle_len >= 3
    ) or variant.triangles
    if needs_cycles:
        tree, _ = graph_core.min_spanning_forest(n, edges)
        info.mst_edges = frozenset(tree)
        info.basis = graph_core.fundamental_cycle_basis(n, edges, tree)
        known = list(info.basis.cycles)
        seen = {c.key() for c in known}
        if variant.short_cycle_len >= 3:
            for c in graph_core.short_cycles(n, edges, variant.short_cycle_len):
                if c.key() not in seen:
                    known.append(c)
                    seen.add(c.key())
        info.known_cycles = tuple(known)

    if variant.kvl == ANGLE_BIG_M:
        _add_angle_big_m_block(model, case, roots, bigm)
    else:
        build_cycle_kvl(model, case, info.known_cycles)

    if variant.connectivity == COMMODITY_FLOW:
        _add_commodity_block(model, case, groups, bigm)
    else:
        info.bridge_edges = build_spanning_forest_connectivity(model, case, groups)
        if variant.short_cycle_len >= 3:
            short = [c for c in info.known_cycles
                     if len(c) <= variant.short_cycle_len]
            seed_cycle_breaking(model, short, edges)

    if variant.triangles:
        build_triangle_cuts(model, [c for c in info.known_cycles if len(c) == 3])

    if weights.alpha > 0 or (
        variant.connectivity == SPANNING_FOREST and variant.kvl == CYCLE_KVL
    ):
        build_imbalance_objective(model, case, groups, weights.alpha)

    model.info = info
    return model


def build_benchmark(
    case: NetworkCase,
    groups: CoherentGroups,
    weights: ObjectiveWeights | None = None,
    bigm: BigMConfig | None = None,
) -> MilpModel:
    """Angle big-M / commodity-flow model (no lazily separated rows needed)."""
    return build_model(case, groups, variant=ModelVariant.benchmark(),
                       weights=weights, bigm=bigm)


def build_proposed(
    case: NetworkCase,
    groups: CoherentGroups,
    weights: ObjectiveWeights | None = None,
    variant: ModelVariant | None = None,
) -> MilpModel:
    """Cycle-KVL / spanning-forest model; pair with the lazy separators."""
    variant = variant or ModelVariant.proposed()
    if variant.connectivity != SPANNING_FOREST or variant.kvl != CYCLE_KVL:
        raise ValueError("variant must keep spanning-forest connectivity "
                         "and cycle KVL")
    return build_model(case, groups, variant=variant, weights=weights)
