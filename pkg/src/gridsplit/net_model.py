"""Problem-instance model: case files, per-unit data, base DC power flow.

A :class:`NetworkCase` is an immutable DC snapshot of a transmission grid:
buses carry per-unit load/generation, branches are lossless susceptance
links with a flow limit. Cases are read from the common ``mpc``-style text
format (``baseMVA``, ``bus``, ``gen``, ``branch`` matrices); only the
columns relevant to DC studies are consumed and everything else is ignored.

Conventions (all per unit on the case's MVA base):

* positive ``load_pu`` consumes, positive ``gen_pu`` injects,
* branch susceptance ``b = 1/x`` with the series reactance ``x > 0``,
* a branch flow ``p = b * (theta_from - theta_to)`` is positive from
  ``from_bus`` to ``to_bus``,
* parallel circuits between the same pair of buses are merged by adding
  susceptances; out-of-service elements are dropped.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import graph_core

ANGLE_QUARTER_PI = "angle_quarter_pi"


class CaseParseError(ValueError):
    """Malformed case text; carries the offending 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class UnsupportedElementError(ValueError):
    """Element outside the supported DC subset (e.g. non-positive reactance)."""


class DisconnectedNetworkError(ValueError):
    """The in-service network does not form one connected component."""


@dataclass(frozen=True)
class Bus:
    """Bus with aggregated per-unit demand and in-service generation."""

    id: int
    load_pu: float = 0.0
    gen_pu: float = 0.0

    def __post_init__(self):
        if self.load_pu < 0 or self.gen_pu < 0:
            raise ValueError(f"bus {self.id}: negative load or generation")


@dataclass(frozen=True)
class Branch:
    """Directed-by-convention susceptance link between two buses."""

    from_bus: int
    to_bus: int
    susceptance_pu: float
    flow_limit_pu: float
    base_flow_pu: float = 0.0

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise ValueError(f"branch on bus {self.from_bus} is a self-loop")
        if self.susceptance_pu <= 0:
            raise ValueError("branch susceptance must be positive")
        if self.flow_limit_pu <= 0:
            raise ValueError("branch flow limit must be positive")


@dataclass(frozen=True)
class NetworkCase:
    """Immutable connected network snapshot."""

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    base_mva: float = 100.0

    def __post_init__(self):
        if self.base_mva <= 0:
            raise ValueError("base_mva must be positive")
        if len(self.buses) < 2:
            raise ValueError("a case needs at least two buses")
        if len(self.branches) < 1:
            raise ValueError("a case needs at least one branch")
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate bus ids")
        idset = set(ids)
        seen_pairs: set[frozenset[int]] = set()
        for br in self.branches:
            if br.from_bus not in idset or br.to_bus not in idset:
                raise ValueError(
                    f"branch ({br.from_bus},{br.to_bus}) references unknown bus"
                )
            pair = frozenset((br.from_bus, br.to_bus))
            if pair in seen_pairs:
                raise ValueError(
                    f"parallel branches between {br.from_bus} and {br.to_bus} "
                    "must be merged"
                )
            seen_pairs.add(pair)
        labels = graph_core.connected_components(self.n, self.edge_nodes)
        if len(set(labels)) != 1:
            raise DisconnectedNetworkError(
                "network is not connected; islanded input is rejected"
            )

    @property
    def n(self) -> int:
        return len(self.buses)

    @property
    def m(self) -> int:
        return len(self.branches)

    @cached_property
    def bus_ids(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.buses)

    @cached_property
    def _index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def edge_nodes(self) -> tuple[tuple[int, int], ...]:
        """Branch endpoints as 0-based node-index pairs, aligned with branches."""
        idx = {b.id: i for i, b in enumerate(self.buses)}
        return tuple(
            (idx[br.from_bus], idx[br.to_bus]) for br in self.branches
        )

    @cached_property
    def _pair_to_edge(self) -> dict[frozenset[int], int]:
        return {
            frozenset((br.from_bus, br.to_bus)): e
            for e, br in enumerate(self.branches)
        }

    def bus_index(self, bus_id: int) -> int:
        try:
            return self._index[bus_id]
        except KeyError:
            raise KeyError(f"unknown bus id {bus_id}") from None

    def bus(self, bus_id: int) -> Bus:
        return self.buses[self.bus_index(bus_id)]

    def edge_between(self, bus_a: int, bus_b: int) -> int | None:
        return self._pair_to_edge.get(frozenset((bus_a, bus_b)))

    @property
    def total_load_pu(self) -> float:
        return sum(b.load_pu for b in self.buses)

    @property
    def total_gen_pu(self) -> float:
        return sum(b.gen_pu for b in self.buses)


@dataclass(frozen=True)
class CoherentGroups:
    """Bus groups that must end up in distinct islands, one root bus each.

    Group k's root acts as the island's reference and as the origin for the
    connectivity side of the models. Groups need not cover all buses; the
    uncovered buses are assigned by the optimization.
    """

    groups: tuple[frozenset[int], ...]
    roots: tuple[int, ...]

    def __post_init__(self):
        if len(self.groups) < 2:
            raise ValueError("need at least two groups")
        if len(self.roots) != len(self.groups):
            raise ValueError("one root per group required")
        seen: set[int] = set()
        for g, r in zip(self.groups, self.roots):
            if not g:
                raise ValueError("empty group")
            if r not in g:
                raise ValueError(f"root {r} is not a member of its group")
            if seen & g:
                raise ValueError("groups must be disjoint")
            seen |= g
        object.__setattr__(self, "groups", tuple(frozenset(g) for g in self.groups))

    @property
    def k(self) -> int:
        return len(self.groups)

    def group_of(self, bus_id: int) -> int | None:
        for k, g in enumerate(self.groups):
            if bus_id in g:
                return k
        return None

    def validate_against(self, case: NetworkCase) -> None:
        known = set(case.bus_ids)
        for g in self.groups:
            missing = g - known
            if missing:
                raise ValueError(f"group references unknown buses {sorted(missing)}")


def _matrix_rows(text: str) -> tuple[float | None, dict[str, list[tuple[int, list[float]]]]]:
    """Scan mpc-style text into (baseMVA, {section: [(line_no, row), ...]})."""
    base_mva: float | None = None
    sections: dict[str, list[tuple[int, list[float]]]] = {
        "bus": [], "gen": [], "branch": []
    }
    current: str | None = None

    def push_rows(name: str, chunk: str, lineno: int) -> None:
        for part in chunk.split(";"):
            part = part.strip()
            if not part:
                continue
            try:
                row = [float(tok) for tok in part.split()]
            except ValueError:
                raise CaseParseError(f"bad numeric row in mpc.{name}", lineno)
            sections[name].append((lineno, row))

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        if current is None:
            m = re.match(r"mpc\.(\w+)\s*=\s*(.*)$", line)
            if not m:
                continue
            name, rest = m.group(1), m.group(2).strip()
            if name == "baseMVA":
                try:
                    base_mva = float(rest.rstrip(";").strip())
                except ValueError:
                    raise CaseParseError("bad baseMVA value", lineno)
            elif name in sections:
                if not rest.startswith("["):
                    raise CaseParseError(f"expected '[' after mpc.{name}", lineno)
                rest = rest[1:].strip()
                if "]" in rest:
                    push_rows(name, rest.split("]", 1)[0], lineno)
                else:
                    push_rows(name, rest, lineno)
                    current = name
            # any other assignment (version, names, ...) is ignored
        else:
            if "]" in line:
                push_rows(current, line.split("]", 1)[0], lineno)
                current = None
            else:
                push_rows(current, line, lineno)
    if current is not None:
        raise CaseParseError(f"unterminated mpc.{current} matrix")
    return base_mva, sections


def parse_case(text: str) -> NetworkCase:
    """Parse mpc-style case text into a :class:`NetworkCase`.

    Consumed columns: bus (BUS_I, PD), gen (GEN_BUS, PG, GEN_STATUS),
    branch (F_BUS, T_BUS, BR_X, BR_STATUS). Anything else, including rate
    columns, shunts and transformer settings, is ignored. Flow limits are
    initialized with the default rule from :func:`apply_flow_limits`.
    Negative demand is folded into generation and vice versa so that the
    per-bus quantities stay non-negative.
    """
    base_mva, sections = _matrix_rows(text)
    if base_mva is None:
        raise CaseParseError("mpc.baseMVA not found")
    if base_mva <= 0:
        raise CaseParseError("baseMVA must be positive")
    if not sections["bus"]:
        raise CaseParseError("mpc.bus not found or empty")
    if not sections["branch"]:
        raise CaseParseError("mpc.branch not found or empty")

    load: dict[int, float] = {}
    gen: dict[int, float] = {}
    order: list[int] = []
    for lineno, row in sections["bus"]:
        if len(row) < 3:
            raise CaseParseError("bus row needs at least 3 columns", lineno)
        bus_id = int(round(row[0]))
        if bus_id in load:
            raise CaseParseError(f"duplicate bus id {bus_id}", lineno)
        pd = row[2] / base_mva
        load[bus_id] = max(pd, 0.0)
        gen[bus_id] = max(-pd, 0.0)
        order.append(bus_id)

    for lineno, row in sections["gen"]:
        if len(row) < 2:
            raise CaseParseError("gen row needs at least 2 columns", lineno)
        bus_id = int(round(row[0]))
        if bus_id not in load:
            raise CaseParseError(f"gen row references unknown bus {bus_id}", lineno)
        status = int(round(row[7])) if len(row) > 7 else 1
        if status <= 0:
            continue
        pg = row[1] / base_mva
        gen[bus_id] += max(pg, 0.0)
        load[bus_id] += max(-pg, 0.0)

    merged: dict[frozenset[int], list] = {}
    pair_order: list[frozenset[int]] = []
    for lineno, row in sections["branch"]:
        if len(row) < 4:
            raise CaseParseError("branch row needs at least 4 columns", lineno)
        f_bus, t_bus = int(round(row[0])), int(round(row[1]))
        status = int(round(row[10])) if len(row) > 10 else 1
        if status <= 0:
            continue
        if f_bus == t_bus:
            raise CaseParseError(f"self-loop branch on bus {f_bus}", lineno)
        if f_bus not in load or t_bus not in load:
            raise CaseParseError(
                f"branch ({f_bus},{t_bus}) references unknown bus", lineno
            )
        x = row[3]
        if x <= 0:
            raise UnsupportedElementError(
                f"line {lineno}: branch ({f_bus},{t_bus}) has non-positive "
                f"reactance {x}; only inductive links are supported"
            )
        pair = frozenset((f_bus, t_bus))
        if pair in merged:
            merged[pair][2] += 1.0 / x
        else:
            merged[pair] = [f_bus, t_bus, 1.0 / x]
            pair_order.append(pair)

    branches = tuple(
        Branch(
            from_bus=merged[p][0],
            to_bus=merged[p][1],
            susceptance_pu=merged[p][2],
            flow_limit_pu=merged[p][2] * math.pi / 4.0,
        )
        for p in pair_order
    )
    buses = tuple(Bus(i, load_pu=load[i], gen_pu=gen[i]) for i in order)
    return NetworkCase(buses=buses, branches=branches, base_mva=base_mva)


def serialize_case(case: NetworkCase) -> str:
    """Render a case back to mpc-style text (supported subset only).

    Parsing the output reproduces the case exactly, provided its flow
    limits follow the default rule (limits themselves are not stored in
    the text format).
    """
    out = io.StringIO()
    out.write("function mpc = case_export\n")
    out.write(f"mpc.baseMVA = {case.base_mva:.10g};\n")
    out.write("mpc.bus = [\n")
    for b in case.buses:
        pd = b.load_pu * case.base_mva
        out.write(f"\t{b.id}\t1\t{pd:.10g}\t0\t0\t0\t1\t1\t0\t345\t1\t1.1\t0.9;\n")
    out.write("];\n")
    out.write("mpc.gen = [\n")
    for b in case.buses:
        if b.gen_pu > 0:
            pg = b.gen_pu * case.base_mva
            out.write(
                f"\t{b.id}\t{pg:.10g}\t0\t0\t0\t1\t{case.base_mva:.10g}"
                f"\t1\t{pg:.10g}\t0;\n"
            )
    out.write("];\n")
    out.write("mpc.branch = [\n")
    for br in case.branches:
        x = 1.0 / br.susceptance_pu
        out.write(
            f"\t{br.from_bus}\t{br.to_bus}\t0\t{x:.17g}\t0\t0\t0\t0\t0\t0\t1\t0\t0;\n"
        )
    out.write("];\n")
    return out.getvalue()


def apply_flow_limits(
    case: NetworkCase,
    rule: str | Mapping = ANGLE_QUARTER_PI,
) -> NetworkCase:
    """Return a copy of the case with branch flow limits (re)assigned.

    ``rule`` is either the name ``"angle_quarter_pi"`` (limit = susceptance
    times pi/4, i.e. the flow at a quarter-pi angle difference) or a mapping
    of branch index -- or unordered ``(bus, bus)`` pair -- to an explicit
    positive limit; branches absent from the mapping keep their limit.
    """
    if isinstance(rule, str):
        if rule != ANGLE_QUARTER_PI:
            raise ValueError(f"unknown flow-limit rule {rule!r}")
        new = tuple(
            replace(br, flow_limit_pu=br.susceptance_pu * math.pi / 4.0)
            for br in case.branches
        )
        return replace(case, branches=new)

    explicit: dict[int, float] = {}
    for key, val in rule.items():
        if isinstance(key, int):
            e = key
            if not 0 <= e < case.m:
                raise KeyError(f"branch index {e} out of range")
        else:
            a, b = key
            found = case.edge_between(a, b)
            if found is None:
                raise KeyError(f"no branch between buses {a} and {b}")
            e = found
        if val <= 0:
            raise ValueError(f"flow limit for branch {e} must be positive")
        explicit[e] = float(val)
    new = tuple(
        replace(br, flow_limit_pu=explicit[e]) if e in explicit else br
        for e, br in enumerate(case.branches)
    )
    return replace(case, branches=new)


def dc_power_flow_angles(case: NetworkCase, slack_bus: int | None = None) -> np.ndarray:
    """Bus angles (radians, node order) of the base-case DC power flow.

    The slack bus angle is 0 and the slack absorbs any system-wide
    generation/demand mismatch.
    """
    slack = case.bus_index(slack_bus if slack_bus is not None else case.buses[0].id)
    n = case.n
    bmat = np.zeros((n, n))
    for (i, j), br in zip(case.edge_nodes, case.branches):
        b = br.susceptance_pu
        bmat[i, i] += b
        bmat[j, j] += b
        bmat[i, j] -= b
        bmat[j, i] -= b
    inj = np.array([b.gen_pu - b.load_pu for b in case.buses])
    keep = [i for i in range(n) if i != slack]
    theta = np.zeros(n)
    theta[keep] = np.linalg.solve(bmat[np.ix_(keep, keep)], inj[keep])
    return theta


def base_dc_power_flow(case: NetworkCase, slack_bus: int | None = None) -> NetworkCase:
    """Return a copy of the case with pre-split branch flows filled in."""
    theta = dc_power_flow_angles(case, slack_bus)
    new = tuple(
        replace(br, base_flow_pu=br.susceptance_pu * (theta[i] - theta[j]))
        for (i, j), br in zip(case.edge_nodes, case.branches)
    )
    return replace(case, branches=new)


def load_groups(text: str, case: NetworkCase | None = None) -> CoherentGroups:
    """Parse a groups description (JSON or CSV) into :class:`CoherentGroups`.

    JSON accepts ``[[1, 2], [5, 6]]``, ``[{"buses": [...], "root": 2}, ...]``
    or a mapping of group label to either form. CSV rows are
    ``group,bus[,root]`` with an optional header; the third cell marks the
    row's bus as the group root. A group without an explicit root uses its
    smallest bus id. When ``case`` is given, membership is validated.
    """
    stripped = text.lstrip()
    entries: list[tuple[list[int], int | None]] = []
    if stripped.startswith("[") or stripped.startswith("{"):
        data = json.loads(text)
        if isinstance(data, Mapping):
            def label_key(k):
                # numeric-aware: group "10" sorts after "2"
                try:
                    return (0, int(k), "")
                except (TypeError, ValueError):
                    return (1, 0, str(k))
            items = [data[k] for k in sorted(data, key=label_key)]
        else:
            items = list(data)
        for item in items:
            if isinstance(item, Mapping):
                buses = [int(b) for b in item["buses"]]
                root = int(item["root"]) if "root" in item else None
            else:
                buses = [int(b) for b in item]
                root = None
            entries.append((buses, root))
    else:
        by_label: dict[str, tuple[list[int], list[int]]] = {}
        label_order: list[str] = []
        for row in csv.reader(io.StringIO(text)):
            cells = [c.strip() for c in row if c.strip()]
            if not cells:
                continue
            try:
                bus = int(cells[1])
            except (IndexError, ValueError):
                continue  # header or blank line
            label = cells[0]
            if label not in by_label:
                by_label[label] = ([], [])
                label_order.append(label)
            by_label[label][0].append(bus)
            if len(cells) > 2 and cells[2].lower() in ("root", "1", "true"):
                by_label[label][1].append(bus)
        for label in label_order:
            buses, roots = by_label[label]
            if len(roots) > 1:
                raise ValueError(f"group {label} declares multiple roots")
            entries.append((buses, roots[0] if roots else None))

    if not entries:
        raise ValueError("no groups found")
    groups = tuple(frozenset(buses) for buses, _ in entries)
    roots = tuple(
        root if root is not None else min(buses) for buses, root in entries
    )
    cg = CoherentGroups(groups=groups, roots=roots)
    if case is not None:
        cg.validate_against(case)
    return cg
