"""Model assembly: counts, bounds, coefficients, configuration guards."""

import math

import numpy as np
import pytest

from gridsplit import (
    BigMConfig,
    ModelVariant,
    ObjectiveWeights,
    build_benchmark,
    build_model,
    build_proposed,
    cycle_slack_bound,
)
from gridsplit import graph_core
from gridsplit.formulations import build_triangle_cuts, kvl_row_pair

from conftest import mk_case


class TestObjectiveWeights:
    def test_presets(self):
        w = ObjectiveWeights.load_shed()
        assert (w.alpha, w.beta, w.gamma, w.mu) == (0.0, 1.0, 0.01, 0.1)
        w = ObjectiveWeights.imbalance()
        assert (w.alpha, w.beta, w.gamma, w.mu) == (1.0, 0.01, 0.01, 0.01)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            ObjectiveWeights(alpha=-1.0, beta=1.0, gamma=0.0, mu=0.0)

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            ObjectiveWeights(alpha=0.0, beta=0.0, gamma=0.0, mu=0.0)


class TestBigMConfig:
    def test_defaults(self):
        b = BigMConfig()
        assert b.ohm_big_m == pytest.approx(2.0 * math.pi)
        assert b.angle_min == pytest.approx(-math.pi)
        assert b.angle_max == pytest.approx(math.pi)
        assert b.commodity_cap is None

    def test_scaled_moves_the_family_together(self):
        b = BigMConfig.scaled(10.0)
        assert b.ohm_big_m == pytest.approx(20.0 * math.pi)
        assert b.angle_min == pytest.approx(-10.0 * math.pi)
        assert b.angle_max == pytest.approx(10.0 * math.pi)

    def test_invalid_rejected(self):
        with pytest.raises(ValueError):
            BigMConfig(ohm_big_m=0.0)
        with pytest.raises(ValueError):
            BigMConfig(angle_min=1.0, angle_max=1.0)
        with pytest.raises(ValueError):
            BigMConfig(commodity_cap=0.0)
        with pytest.raises(ValueError):
            BigMConfig.scaled(0.0)


class TestModelVariant:
    def test_preset_names(self):
        assert ModelVariant.benchmark().name == "benchmark"
        assert ModelVariant.proposed().name == "proposed"
        assert ModelVariant.hybrid().name == "hybrid"
        # seeding choices do not change the family name
        assert ModelVariant.proposed(short_cycle_len=0,
                                     triangles=False).name == "proposed"

    def test_guards(self):
        with pytest.raises(ValueError):
            ModelVariant(connectivity="steiner")
        with pytest.raises(ValueError):
            ModelVariant(kvl="acopf")
        with pytest.raises(ValueError):
            ModelVariant(short_cycle_len=2)
        with pytest.raises(ValueError):
            ModelVariant(short_cycle_len=9)

    def test_build_proposed_rejects_other_families(self):
        case = mk_case([(1, 0.0, 1.0), (2, 1.0, 0.0)], [(1, 2, 1.0)])
        from gridsplit import load_groups
        groups = load_groups("[[1], [2]]", case=case)
        with pytest.raises(ValueError):
            build_proposed(case, groups, variant=ModelVariant.benchmark())
        with pytest.raises(ValueError):
            build_proposed(case, groups, variant=ModelVariant.hybrid())


class TestCycleSlackBound:
    def test_triangle_drops_two_smallest_ratios(self):
        case = mk_case(
            [(1, 0.0, 0.0), (2, 0.0, 0.0), (3, 0.0, 0.0)],
            [(1, 2, 1.0, 1.0), (2, 3, 1.0, 2.0), (1, 3, 1.0, 3.0)],
        )
        tree, _ = graph_core.min_spanning_forest(case.n, case.edge_nodes)
        basis = graph_core.fundamental_cycle_basis(case.n, case.edge_nodes, tree)
        (cyc,) = basis.cycles
        # ratios 1, 2, 3 -> two open branches silence the two smallest
        assert cycle_slack_bound(cyc, case) == pytest.approx(3.0)

    def test_quad(self):
        case = mk_case(
            [(i, 0.0, 0.0) for i in range(1, 5)],
            [(1, 2, 2.0, 1.0), (2, 3, 1.0, 1.0), (3, 4, 0.5, 1.0),
             (1, 4, 0.25, 1.0)],
        )
        tree, _ = graph_core.min_spanning_forest(case.n, case.edge_nodes)
        basis = graph_core.fundamental_cycle_basis(case.n, case.edge_nodes, tree)
        (cyc,) = basis.cycles
        # ratios 0.5, 1, 2, 4 keep 2 + 4
        assert cycle_slack_bound(cyc, case) == pytest.approx(6.0)

    def test_short_cycle_rejected(self):
        case = mk_case(
            [(1, 0.0, 0.0), (2, 0.0, 0.0), (3, 0.0, 0.0)],
            [(1, 2, 1.0), (2, 3, 1.0), (1, 3, 1.0)],
        )
        tree, _ = graph_core.min_spanning_forest(case.n, case.edge_nodes)
        basis = graph_core.fundamental_cycle_basis(case.n, case.edge_nodes, tree)
        (cyc,) = basis.cycles
        short = type(cyc)(edges=cyc.edges[:2])
        with pytest.raises(ValueError):
            cycle_slack_bound(short, case)


class TestBenchmarkStructure:
    def test_group_sizes(self, case4, groups4):
        model = build_benchmark(case4, groups4)
        sizes = model.group_sizes()
        assert sizes["x"] == case4.n * groups4.k
        assert sizes["y"] == case4.m
        assert sizes["p"] == case4.m
        assert sizes["phi"] == case4.n
        assert sizes["f"] == case4.m
        assert sizes["P_LS"] == 2   # two load buses
        assert sizes["P_GS"] == 1   # one generator bus
        assert "z" not in sizes
        assert "P_Delta" not in sizes  # load-shed weights, alpha = 0

    def test_row_count_formula(self, case4, groups4):
        model = build_benchmark(case4, groups4)
        n, m, k = case4.n, case4.m, groups4.k
        partition = n + 3 * m * k
        power = n + 2 * m
        ohm = 2 * m
        commodity = 2 * m + n
        assert model.n_rows == partition + power + ohm + commodity

    def test_member_assignments_fixed(self, case4, groups4):
        model = build_benchmark(case4, groups4)
        # bus 1 sits in the first group, bus 3 in the second
        i1, i3 = case4.bus_index(1), case4.bus_index(3)
        assert model.bounds_of(model.var("x", (i1, 0))) == (1.0, 1.0)
        assert model.bounds_of(model.var("x", (i1, 1))) == (0.0, 0.0)
        assert model.bounds_of(model.var("x", (i3, 1))) == (1.0, 1.0)
        assert model.bounds_of(model.var("x", (i3, 0))) == (0.0, 0.0)

    def test_roots_pinned_at_zero_angle(self, case4, groups4):
        model = build_benchmark(case4, groups4)
        for root in groups4.roots:
            idx = model.var("phi", case4.bus_index(root))
            assert model.bounds_of(idx) == (0.0, 0.0)

    def test_flow_and_shed_boxes(self, case4, groups4):
        model = build_benchmark(case4, groups4)
        for e, br in enumerate(case4.branches):
            lb, ub = model.bounds_of(model.var("p", e))
            assert (lb, ub) == (-br.flow_limit_pu, br.flow_limit_pu)
        i3 = case4.bus_index(3)
        assert model.bounds_of(model.var("P_LS", i3)) == (0.0, 0.6)
        i1 = case4.bus_index(1)
        assert model.bounds_of(model.var("P_GS", i1)) == (0.0, 1.0)

    def test_hand_built_split_is_feasible(self, case4, groups4):
        """Full assignment for the {1,2} | {3,4} split, checked row by row.

        Exercises the commodity source convention (emitted units = island
        size minus one): the assignment is feasible only if the source rows
        carry that exact constant.
        """
        model = build_benchmark(case4, groups4)
        vals = np.zeros(model.n_vars)
        idx = case4.bus_index
        island_of = {1: 0, 2: 0, 3: 1, 4: 1}
        for bus, k in island_of.items():
            vals[model.var("x", (idx(bus), k))] = 1.0
        # edges: (1,2) (1,3) (2,3) (3,4); the middle two are cut
        for e in (1, 2):
            vals[model.var("y", e)] = 1.0
        # both islands shed everything, so no real power flows
        vals[model.var("P_GS", idx(1))] = 1.0
        vals[model.var("P_LS", idx(3))] = 0.6
        vals[model.var("P_LS", idx(4))] = 0.4
        # commodity: each root feeds its single non-root member
        vals[model.var("f", 0)] = 1.0
        vals[model.var("f", 3)] = 1.0
        assert model.is_feasible(vals)
        obj = sum(model.objective_coeff(i) * vals[i]
                  for i in range(model.n_vars))
        # beta*(0.6+0.4) + gamma*1.0 + mu*(1/3 + 2/3) on the cut branches
        assert obj == pytest.approx(1.11, abs=1e-9)
        # off-by-one in the source constant would reject this assignment
        vals[model.var("f", 0)] = 2.0
        assert not model.is_feasible(vals)


class TestProposedStructure:
    def test_group_sizes(self, case4, groups4):
        model = build_proposed(case4, groups4)
        sizes = model.group_sizes()
        assert sizes["z"] == 2 * case4.m
        assert sizes["P_Delta"] == groups4.k
        assert "phi" not in sizes
        assert "f" not in sizes

    def test_row_count_formula(self, case4, groups4):
        model = build_proposed(case4, groups4)
        n, m, k = case4.n, case4.m, groups4.k
        partition = n + 3 * m * k
        power = n + 2 * m
        n_cycles = 1           # single triangle
        kvl = 2 * n_cycles
        forest = 1 + k + (n - k) + m
        seeded = 2 * n_cycles  # both orientations of each short cycle
        triangles = 3 * n_cycles
        imbalance = 2 * k
        assert model.n_rows == (partition + power + kvl + forest
                                + seeded + triangles + imbalance)

    def test_arcs_into_roots_forbidden(self, case4, groups4):
        model = build_proposed(case4, groups4)
        roots = {case4.bus_index(r) for r in groups4.roots}
        for (a, b), i in model.group("z").items():
            if b in roots:
                assert model.bounds_of(i) == (0.0, 0.0)

    def test_build_info_captured(self, case4, groups4):
        model = build_proposed(case4, groups4)
        info = model.info
        assert info.k == groups4.k
        assert info.basis is not None
        assert len(info.known_cycles) == 1
        assert info.bridge_edges == frozenset({3})  # the (3,4) pendant
        bench = build_benchmark(case4, groups4)
        assert bench.info.basis is None
        assert bench.info.bridge_edges is None

    def test_imbalance_present_when_weighted(self, case4, groups4):
        model = build_benchmark(case4, groups4,
                                weights=ObjectiveWeights.imbalance())
        assert model.group_sizes()["P_Delta"] == groups4.k
        # epigraph box covers the total absolute injection
        lb, ub = model.bounds_of(model.var("P_Delta", 0))
        assert (lb, ub) == (0.0, pytest.approx(2.0))

    def test_hybrid_mixes_blocks(self, case4, groups4):
        model = build_model(case4, groups4, variant=ModelVariant.hybrid())
        sizes = model.group_sizes()
        assert "phi" in sizes and "z" in sizes
        assert "f" not in sizes


class TestKvlRows:
    def test_row_pair_coefficients(self, case6):
        tree, _ = graph_core.min_spanning_forest(case6.n, case6.edge_nodes)
        basis = graph_core.fundamental_cycle_basis(
            case6.n, case6.edge_nodes, tree)
        cyc = basis.cycles[0]
        p_vars = {e: 100 + e for e in range(case6.m)}
        y_vars = {e: 200 + e for e in range(case6.m)}
        hi, lo = kvl_row_pair(cyc, case6, p_vars, y_vars)
        mc = cycle_slack_bound(cyc, case6)
        for coeffs, sense, rhs, _ in (hi, lo):
            assert rhs == 0.0
            got_p = {i: c for i, c in coeffs if i < 200}
            got_y = {i: c for i, c in coeffs if i >= 200}
            for e, sgn in cyc.edges:
                b = case6.branches[e].susceptance_pu
                assert got_p[100 + e] == pytest.approx(sgn / b)
            expect = -mc / 2.0 if sense == "<=" else mc / 2.0
            for e in cyc.edge_indices():
                assert got_y[200 + e] == pytest.approx(expect)
        assert hi[1] == "<=" and lo[1] == ">="

    def test_triangle_cuts_skip_longer_cycles(self, ring24):
        from gridsplit import MilpModel
        tree, _ = graph_core.min_spanning_forest(ring24.n, ring24.edge_nodes)
        basis = graph_core.fundamental_cycle_basis(
            ring24.n, ring24.edge_nodes, tree)
        model = MilpModel("t")
        for e in range(ring24.m):
            model.add_var("y", e, kind="binary")
        long_cycles = [c for c in basis.cycles if len(c) > 3]
        assert build_triangle_cuts(model, long_cycles) == 0
        assert model.n_rows == 0
