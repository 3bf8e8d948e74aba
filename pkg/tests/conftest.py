"""Shared fixtures: hand-sized cases with known structure plus a random
instance generator whose groups are grown along a spanning tree, which
guarantees at least one feasible partition exists."""

from __future__ import annotations

import math

import numpy as np
import pytest

from gridsplit import (
    Branch,
    Bus,
    CoherentGroups,
    NetworkCase,
    base_dc_power_flow,
    build_model,
    certify,
    extract_plan,
    make_separators,
    solve,
)

QUARTER_PI = math.pi / 4.0


def mk_case(bus_spec, branch_spec) -> NetworkCase:
    """bus_spec: (id, load, gen) triples; branch_spec: (i, j, b) or
    (i, j, b, limit) tuples, limit defaulting to b*pi/4."""
    buses = tuple(Bus(i, load_pu=ld, gen_pu=g) for i, ld, g in bus_spec)
    branches = []
    for row in branch_spec:
        i, j, b = row[:3]
        lim = row[3] if len(row) > 3 else b * QUARTER_PI
        branches.append(Branch(i, j, b, lim))
    return NetworkCase(buses, tuple(branches))


@pytest.fixture
def case4():
    """Triangle 1-2-3 plus pendant 4; generation at 1, load at 3 and 4."""
    case = mk_case(
        [(1, 0.0, 1.0), (2, 0.0, 0.0), (3, 0.6, 0.0), (4, 0.4, 0.0)],
        [(1, 2, 1.0, 1.0), (2, 3, 1.0, 1.0), (1, 3, 1.0, 1.0),
         (3, 4, 1.0, 1.0)],
    )
    return base_dc_power_flow(case, slack_bus=1)


@pytest.fixture
def groups4():
    return CoherentGroups((frozenset({1, 2}), frozenset({3, 4})), (1, 3))


@pytest.fixture
def case6():
    """Two triangles joined by a bridge; only feasible K=2 splits are the
    bridge cut and the two cuts around it."""
    case = mk_case(
        [(1, 0.0, 1.0), (2, 0.5, 0.0), (3, 0.3, 0.0),
         (4, 0.2, 0.0), (5, 0.5, 0.0), (6, 0.0, 0.5)],
        [(1, 2, 2.0), (2, 3, 1.0), (1, 3, 1.0), (3, 4, 1.0),
         (4, 5, 1.0), (5, 6, 2.0), (4, 6, 1.0)],
    )
    return base_dc_power_flow(case, slack_bus=1)


@pytest.fixture
def groups6():
    return CoherentGroups((frozenset({1, 2}), frozenset({5, 6})), (1, 6))


@pytest.fixture
def ring24():
    """Two 11-bus chains closed into a ring, one chain interrupted by a
    parallel bus pair (a retained 4-cycle). Every bus is grouped, so the
    partition is forced and only the shedding differs between models: each
    island must move 0.75 pu across ten series hops, an angle spread of 7.5
    rad, more than a [-pi, pi] angle box can host with the root pinned."""
    bus_spec = [(i, 0.0, 0.0) for i in range(1, 25)]
    bus_spec[0] = (1, 0.0, 0.75)
    bus_spec[10] = (11, 0.75, 0.0)
    bus_spec[11] = (12, 0.0, 0.75)
    bus_spec[21] = (22, 0.75, 0.0)
    branch_spec = []
    for i in range(1, 22):
        if i == 5:
            continue
        branch_spec.append((i, i + 1, 1.0))
    branch_spec.append((22, 1, 1.0))
    branch_spec += [(5, 23, 1.0), (23, 6, 1.0), (5, 24, 1.0), (24, 6, 1.0)]
    case = mk_case(bus_spec, branch_spec)
    return base_dc_power_flow(case, slack_bus=1)


@pytest.fixture
def groups_ring24():
    g1 = frozenset(set(range(1, 12)) | {23, 24})
    g2 = frozenset(range(12, 23))
    return CoherentGroups((g1, g2), (1, 12))


@pytest.fixture
def lollipop_a():
    """Path 1..6 with a generator triangle 7-8-9 hanging off bus 6.

    Under the imbalance objective the triangle's generation wants to be
    *accounted* to island 1 (which holds the load) while being physically
    severed; only a rogue directed tree-arc cycle can express that, so the
    instance forces lazy cycle-breaking rounds.
    """
    bus_spec = [(1, 0.0, 0.0), (2, 1.5, 0.0), (3, 0.0, 0.0), (4, 0.0, 0.0),
                (5, 0.0, 0.0), (6, 0.0, 0.0),
                (7, 0.0, 0.5), (8, 0.0, 0.5), (9, 0.0, 0.5)]
    branch_spec = [(1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (4, 5, 1.0),
                   (5, 6, 1.0), (6, 7, 1.0),
                   (7, 8, 1.0), (8, 9, 1.0), (9, 7, 1.0)]
    case = mk_case(bus_spec, branch_spec)
    groups = CoherentGroups((frozenset({1, 2}), frozenset({5, 6})), (1, 5))
    return base_dc_power_flow(case, slack_bus=1), groups


@pytest.fixture
def lollipop_b():
    """Terminal bus 6 of group 2 lives in a triangle reachable only through
    group-1 territory: no honest partition exists, and the first rogue
    incumbent triggers both the cycle and the root-cutset separators."""
    bus_spec = [(1, 0.0, 0.5), (2, 0.5, 0.0), (3, 0.0, 0.0), (4, 0.0, 0.3),
                (5, 0.0, 0.0), (6, 0.3, 0.0), (7, 0.0, 0.0)]
    branch_spec = [(1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0),
                   (2, 5, 1.0), (5, 6, 1.0), (6, 7, 1.0), (7, 5, 1.0)]
    case = mk_case(bus_spec, branch_spec)
    groups = CoherentGroups((frozenset({1, 2}), frozenset({4, 6})), (1, 4))
    return base_dc_power_flow(case, slack_bus=1), groups


@pytest.fixture
def grid2x3():
    """2x3 grid with one cycle per island after splitting {1,4} off."""
    case = mk_case(
        [(1, 0.0, 0.5), (2, 0.0, 0.5), (3, 0.3, 0.0),
         (4, 0.2, 0.0), (5, 0.5, 0.0), (6, 0.0, 0.0)],
        [(1, 2, 1.0), (2, 3, 1.0), (4, 5, 1.0), (5, 6, 1.0),
         (1, 4, 1.0), (2, 5, 1.0), (3, 6, 1.0)],
    )
    return base_dc_power_flow(case, slack_bus=1)


def random_instance(rng: np.random.Generator, n: int | None = None,
                    k: int | None = None):
    """Connected random case with tree-grown groups of >= 2 members.

    Growing each group along spanning-tree edges guarantees a feasible
    group-respecting partition exists (a tree with K marked connected
    blobs can always be cut into K connected parts around them).
    """
    n = int(rng.integers(6, 13)) if n is None else n
    kk = int(rng.integers(2, 4)) if k is None else k

    parent = [int(rng.integers(0, i)) for i in range(1, n)]
    edges = {(p, i) for i, p in enumerate(parent, start=1)}
    tree_adj = {i: set() for i in range(n)}
    for p, i in edges:
        tree_adj[p].add(i)
        tree_adj[i].add(p)
    extra = int(rng.integers(0, n + 2))
    all_pairs = [(a, b) for a in range(n) for b in range(a + 1, n)
                 if (a, b) not in edges]
    rng.shuffle(all_pairs)
    for pair in all_pairs[:extra]:
        edges.add(pair)
        if len(edges) >= 2 * n:
            break
    edge_list = sorted(edges)

    groups = None
    for _ in range(50):
        seeds = [int(s) for s in rng.choice(n, size=kk, replace=False)]
        taken = set(seeds)
        trial = []
        for s in seeds:
            grown = {s}
            want = int(rng.integers(2, 4))
            frontier = sorted(tree_adj[s] - taken)
            while len(grown) < want and frontier:
                pick = frontier.pop(int(rng.integers(0, len(frontier))))
                grown.add(pick)
                taken.add(pick)
                frontier += sorted(tree_adj[pick] - taken - set(frontier))
            if len(grown) < 2:
                break
            trial.append(grown)
        if len(trial) == kk:
            groups = trial
            break
    if groups is None:
        # pathological tree shape (e.g. a star); draw a fresh instance
        return random_instance(rng, n=n, k=k)

    loads = np.where(rng.random(n) < 0.6, rng.uniform(0.05, 1.0, n), 0.0)
    gens = np.zeros(n)
    gen_buses = rng.choice(n, size=max(2, n // 3), replace=False)
    gens[gen_buses] = rng.uniform(0.2, 1.2, len(gen_buses))

    bus_spec = [(i + 1, float(loads[i]), float(gens[i])) for i in range(n)]
    sus = rng.uniform(0.5, 2.0, len(edge_list))
    branch_spec = [(u + 1, v + 1, float(sus[e]))
                   for e, (u, v) in enumerate(edge_list)]
    case = mk_case(bus_spec, branch_spec)
    cg = CoherentGroups(
        tuple(frozenset(b + 1 for b in g) for g in groups),
        tuple(s + 1 for s in seeds),
    )
    case = base_dc_power_flow(case, slack_bus=cg.roots[0])
    return case, cg


def solve_and_certify(case, groups, variant=None, weights=None, bigm=None,
                      time_limit=60.0, rel_gap=1e-9, start=None):
    """Build, solve, extract, certify; every test solution goes through
    this so nothing uncertified can ever look like a pass."""
    model = build_model(case, groups, variant=variant, weights=weights,
                        bigm=bigm)
    sol = solve(model, time_limit=time_limit, rel_gap=rel_gap,
                separators=make_separators(model), start=start)
    assert sol.has_values, f"no incumbent: status={sol.status}"
    plan = extract_plan(model, sol.values, case)
    cert = certify(plan, case, groups)
    assert cert.passed, cert.violations
    return model, sol, plan
