"""Deterministic graph kernels used by the islanding models.

All kernels share one plain representation: ``n`` nodes numbered ``0..n-1``
and an edge list ``edges[e] = (u, v)`` with ``u != v``. The edge index ``e``
is the identity of an edge everywhere in this package; parallel circuits are
merged upstream, so ``(u, v)`` pairs are unique up to direction.

Determinism contract:

* spanning forests break ties by (weight, edge index),
* component labels are the smallest contained node,
* enumerated cycles are canonicalized (rotated so the smallest edge index
  comes first, oriented so the second edge index is smaller than the last)
  and returned in a sorted order.

A :class:`SignedCycle` stores, per traversed edge, a sign that is +1 when the
closed walk traverses the edge in storage direction ``u -> v`` and -1
otherwise, so that ``sum(sign_e * drop_e)`` is the oriented sum of any
per-edge quantity around the cycle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class SignedCycle:
    """Simple cycle as an oriented closed walk of (edge_index, sign) pairs."""

    edges: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.edges)

    def edge_indices(self) -> tuple[int, ...]:
        return tuple(e for e, _ in self.edges)

    def key(self) -> frozenset[int]:
        """Orientation-independent identity (edge-index set)."""
        return frozenset(e for e, _ in self.edges)


@dataclass(frozen=True)
class CycleBasis:
    """Fundamental cycles of a spanning forest, one per non-forest edge."""

    cycles: tuple[SignedCycle, ...]
    tree_edges: frozenset[int]

    def __len__(self) -> int:
        return len(self.cycles)


@dataclass(frozen=True)
class DirectedCycle:
    """Directed cycle as consecutive arcs ((u, v), (v, w), ..., (., u))."""

    arcs: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.arcs)

    def nodes(self) -> tuple[int, ...]:
        return tuple(u for u, _ in self.arcs)


class _DisjointSets:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        p = self.parent
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if rb < ra:
            ra, rb = rb, ra
        self.parent[rb] = ra
        return True


def _check_edges(n: int, edges: Sequence[tuple[int, int]]) -> None:
    for e, (u, v) in enumerate(edges):
        if u == v:
            raise ValueError(f"edge {e} is a self-loop on node {u}")
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError(f"edge {e}=({u},{v}) out of range for n={n}")


def min_spanning_forest(
    n: int,
    edges: Sequence[tuple[int, int]],
    weights: Sequence[float] | None = None,
) -> tuple[list[int], list[int]]:
    """Kruskal minimum spanning forest.

    Returns ``(tree_edge_indices, component_labels)`` where labels map each
    node to the smallest node of its connected component. Ties are broken by
    edge index, so the result is a pure function of the inputs.
    """
    _check_edges(n, edges)
    m = len(edges)
    if weights is None:
        order = range(m)
    else:
        if len(weights) != m:
            raise ValueError("weights length must match edges")
        order = sorted(range(m), key=lambda e: (weights[e], e))
    dsu = _DisjointSets(n)
    tree: list[int] = []
    for e in order:
        u, v = edges[e]
        if dsu.union(u, v):
            tree.append(e)
    labels = [dsu.find(i) for i in range(n)]
    return tree, labels


def connected_components(
    n: int,
    edges: Sequence[tuple[int, int]],
    active: Iterable[int] | None = None,
) -> list[int]:
    """Component label per node; the label is the smallest node in the component.

    ``active`` optionally restricts the graph to a subset of edge indices.
    """
    _check_edges(n, edges)
    dsu = _DisjointSets(n)
    idx = range(len(edges)) if active is None else active
    for e in idx:
        u, v = edges[e]
        dsu.union(u, v)
    return [dsu.find(i) for i in range(n)]


def fundamental_cycle_basis(
    n: int,
    edges: Sequence[tuple[int, int]],
    tree_edges: Iterable[int],
) -> CycleBasis:
    """Fundamental cycles of a spanning forest: one per non-forest edge.

    Each cycle starts with its non-forest edge carrying sign +1 and closes
    through the forest path between the edge's endpoints. Raises if
    ``tree_edges`` contains a cycle, references unknown edges, or fails to
    span the endpoints of some non-forest edge.
    """
    _check_edges(n, edges)
    m = len(edges)
    tset = sorted(set(tree_edges))
    dsu = _DisjointSets(n)
    adj: dict[int, list[tuple[int, int]]] = {i: [] for i in range(n)}
    for e in tset:
        if not (0 <= e < m):
            raise ValueError(f"forest edge {e} not in graph")
        u, v = edges[e]
        if not dsu.union(u, v):
            raise ValueError("tree_edges contain a cycle")
        adj[u].append((v, e))
        adj[v].append((u, e))

    parent: dict[int, tuple[int, int]] = {}
    depth = [0] * n
    seen = [False] * n
    for root in range(n):
        if seen[root]:
            continue
        seen[root] = True
        stack = [root]
        while stack:
            u = stack.pop()
            for v, e in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    parent[v] = (u, e)
                    depth[v] = depth[u] + 1
                    stack.append(v)

    def climb(node: int, target_depth: int, out: list[tuple[int, int]]) -> int:
        # record (edge, sign) for steps node -> parent while deeper than target
        while depth[node] > target_depth:
            p, e = parent[node]
            out.append((e, 1 if edges[e] == (node, p) else -1))
            node = p
        return node

    cycles: list[SignedCycle] = []
    tree_set = set(tset)
    for e in range(m):
        if e in tree_set:
            continue
        a, b = edges[e]
        if dsu.find(a) != dsu.find(b):
            raise ValueError(f"forest does not span endpoints of edge {e}")
        up_b: list[tuple[int, int]] = []
        up_a: list[tuple[int, int]] = []
        x, y = b, a
        x = climb(x, min(depth[a], depth[b]), up_b)
        y = climb(y, min(depth[a], depth[b]), up_a)
        while x != y:
            p, te = parent[x]
            up_b.append((te, 1 if edges[te] == (x, p) else -1))
            x = p
            q, te = parent[y]
            up_a.append((te, 1 if edges[te] == (y, q) else -1))
            y = q
        # closed walk a -e-> b -up_b-> lca -reversed(up_a)-> a
        walk = [(e, 1)]
        walk.extend(up_b)
        walk.extend((te, -s) for te, s in reversed(up_a))
        cycles.append(SignedCycle(tuple(walk)))
    return CycleBasis(tuple(cycles), frozenset(tree_set))


def bridges(n: int, edges: Sequence[tuple[int, int]]) -> frozenset[int]:
    """Edges whose removal disconnects their component (iterative lowlink)."""
    _check_edges(n, edges)
    adj: dict[int, list[tuple[int, int]]] = {i: [] for i in range(n)}
    for e, (u, v) in enumerate(edges):
        adj[u].append((v, e))
        adj[v].append((u, e))
    disc = [-1] * n
    low = [0] * n
    out: set[int] = set()
    timer = 0
    for start in range(n):
        if disc[start] != -1:
            continue
        stack: list[tuple[int, int, int]] = [(start, -1, 0)]
        while stack:
            u, pe, it = stack[-1]
            if it == 0:
                disc[u] = low[u] = timer
                timer += 1
            if it < len(adj[u]):
                stack[-1] = (u, pe, it + 1)
                v, e = adj[u][it]
                if e == pe:
                    continue
                if disc[v] == -1:
                    stack.append((v, e, 0))
                else:
                    low[u] = min(low[u], disc[v])
            else:
                stack.pop()
                if stack:
                    p = stack[-1][0]
                    low[p] = min(low[p], low[u])
                    if low[u] > disc[p]:
                        out.add(pe)
    return frozenset(out)


def _canonical_cycle(walk: list[tuple[int, int]]) -> SignedCycle:
    # rotate to the smallest edge index, then pick the orientation whose
    # second edge index is smaller than its last
    def rotate(seq: list[tuple[int, int]]) -> list[tuple[int, int]]:
        i = min(range(len(seq)), key=lambda j: seq[j][0])
        return seq[i:] + seq[:i]

    fwd = rotate(walk)
    rev = rotate([(e, -s) for e, s in reversed(walk)])
    return SignedCycle(tuple(fwd if fwd[1][0] <= rev[1][0] else rev))


def short_cycles(
    n: int,
    edges: Sequence[tuple[int, int]],
    max_len: int,
) -> list[SignedCycle]:
    """All simple cycles of length 3..max_len, canonicalized and sorted.

    ``max_len`` is guarded to 3..8; the enumeration anchors each cycle at its
    smallest node and visits only larger nodes, so every cycle is produced
    exactly once.
    """
    if not 3 <= max_len <= 8:
        raise ValueError(f"max_len must be within 3..8, got {max_len}")
    _check_edges(n, edges)
    emap: dict[tuple[int, int], tuple[int, int]] = {}
    adj: dict[int, list[int]] = {i: [] for i in range(n)}
    for e, (u, v) in enumerate(edges):
        if (u, v) in emap or (v, u) in emap:
            raise ValueError(f"parallel edge {e}=({u},{v}) not supported")
        emap[(u, v)] = (e, 1)
        emap[(v, u)] = (e, -1)
        adj[u].append(v)
        adj[v].append(u)
    for i in range(n):
        adj[i].sort()

    found: dict[frozenset[int], SignedCycle] = {}
    path: list[int] = []
    on_path = [False] * n

    def dfs(anchor: int, u: int) -> None:
        for v in adj[u]:
            if v == anchor and len(path) >= 3:
                if path[1] < path[-1]:
                    walk = [
                        emap[(path[i], path[(i + 1) % len(path)])]
                        for i in range(len(path))
                    ]
                    cyc = _canonical_cycle(walk)
                    found[cyc.key()] = cyc
            elif v > anchor and not on_path[v] and len(path) < max_len:
                path.append(v)
                on_path[v] = True
                dfs(anchor, v)
                path.pop()
                on_path[v] = False

    for anchor in range(n):
        path = [anchor]
        on_path[anchor] = True
        dfs(anchor, anchor)
        on_path[anchor] = False

    return sorted(found.values(), key=lambda c: (len(c), c.edge_indices()))


def extract_directed_cycles(
    arcs: Iterable[tuple[int, int]],
    roots: Iterable[int],
    expected_components: int | None = None,
) -> list[DirectedCycle]:
    """Directed cycles hiding in an in-degree-<=1 arc selection.

    ``arcs`` is the set of enabled arcs of a candidate spanning forest: every
    node has in-degree at most one and roots have in-degree zero (raises on a
    violation). Components reachable from a root are arborescences and yield
    nothing; every rootless weak component whose nodes all have a predecessor
    contains exactly one directed cycle, which is returned. An empty result
    on a full in-degree-one selection means the arcs form exactly one
    arborescence per root. ``expected_components`` is accepted for callers
    that track that count; it does not alter the result.
    """
    arc_list = sorted(set(arcs))
    root_set = set(roots)
    pred: dict[int, int] = {}
    for u, v in arc_list:
        if u == v:
            raise ValueError(f"self-loop arc ({u},{v})")
        if v in pred:
            raise ValueError(f"node {v} has in-degree > 1")
        if v in root_set:
            raise ValueError(f"root {v} has an incoming arc ({u},{v})")
        pred[v] = u

    nodes = sorted({x for a in arc_list for x in a} | root_set)
    index = {x: i for i, x in enumerate(nodes)}
    dsu = _DisjointSets(len(nodes))
    for u, v in arc_list:
        dsu.union(index[u], index[v])
    has_root = [False] * len(nodes)
    for r in root_set:
        has_root[dsu.find(index[r])] = True

    out: list[DirectedCycle] = []
    claimed: set[int] = set()
    for start in nodes:
        if start in claimed or has_root[dsu.find(index[start])]:
            continue
        order: dict[int, int] = {}
        v = start
        while v in pred and v not in order:
            order[v] = len(order)
            v = pred[v]
        if v not in order:
            claimed.update(order)
            continue
        chain = sorted(order, key=order.get)[order[v]:]
        claimed.update(order)
        claimed.update(c for c in chain)
        seq = list(reversed(chain))
        i = seq.index(min(seq))
        seq = seq[i:] + seq[:i]
        cycle_arcs = tuple(
            (seq[i], seq[(i + 1) % len(seq)]) for i in range(len(seq))
        )
        out.append(DirectedCycle(cycle_arcs))
        # mark the whole weak component as handled
        comp = dsu.find(index[start])
        claimed.update(x for x in nodes if dsu.find(index[x]) == comp)
    return sorted(out, key=lambda c: c.arcs)
