"""Model container and solve loop against cvxopt and analytic answers."""

import io
import math

import numpy as np
import pytest

from gridsplit import MilpModel, lp_relax, solve
from gridsplit.milp_core import BINARY, CONTINUOUS


def knapsack(values, weights, cap) -> MilpModel:
    model = MilpModel("knap")
    for i, v in enumerate(values):
        model.add_var("pick", i, kind=BINARY, obj=-float(v))
    model.add_row([(model.var("pick", i), float(w))
                   for i, w in enumerate(weights)], "<=", float(cap))
    return model


class TestContainer:
    def test_duplicate_key_rejected(self):
        m = MilpModel("t")
        m.add_var("x", 0, lb=0.0, ub=1.0)
        with pytest.raises(ValueError):
            m.add_var("x", 0, lb=0.0, ub=1.0)

    def test_binary_defaults_unit_box(self):
        m = MilpModel("t")
        i = m.add_var("b", 0, kind=BINARY)
        assert m.bounds_of(i) == (0.0, 1.0)

    def test_continuous_needs_finite_bounds(self):
        m = MilpModel("t")
        with pytest.raises(ValueError):
            m.add_var("x", 0, kind=CONTINUOUS, lb=0.0, ub=math.inf)

    def test_row_rejects_bad_sense_and_index(self):
        m = MilpModel("t")
        i = m.add_var("x", 0, lb=0.0, ub=1.0)
        with pytest.raises(ValueError):
            m.add_row([(i, 1.0)], "<", 1.0)
        with pytest.raises(IndexError):
            m.add_row([(i + 5, 1.0)], "<=", 1.0)

    def test_group_values_and_sizes(self):
        m = MilpModel("t")
        m.add_var("x", (0, 0), kind=BINARY)
        m.add_var("x", (0, 1), kind=BINARY)
        m.add_var("y", 0, lb=0.0, ub=2.0)
        vals = np.array([1.0, 0.0, 1.5])
        assert m.group_values(vals, "x") == {(0, 0): 1.0, (0, 1): 0.0}
        assert m.group_sizes() == {"x": 2, "y": 1}

    def test_is_feasible_checks_rows_bounds_integrality(self):
        m = MilpModel("t")
        b = m.add_var("b", 0, kind=BINARY)
        x = m.add_var("x", 0, lb=0.0, ub=2.0)
        m.add_row([(b, 1.0), (x, 1.0)], "<=", 2.0)
        assert m.is_feasible(np.array([1.0, 1.0]))
        assert not m.is_feasible(np.array([0.5, 1.0]))   # fractional binary
        assert not m.is_feasible(np.array([1.0, 3.0]))   # bound
        assert not m.is_feasible(np.array([1.0, 1.5]))   # row

    def test_write_lp_mentions_sections(self):
        m = knapsack([3, 5], [2, 4], 5)
        buf = io.StringIO()
        m.write_lp(buf)
        text = buf.getvalue()
        for kw in ("Minimize", "Subject To", "Bounds", "Binaries", "End"):
            assert kw in text


class TestSolve:
    def test_knapsack_analytic(self):
        # items (v, w): (6,4) (5,3) (5,3), cap 6 -> take the two 3s
        model = knapsack([6, 5, 5], [4, 3, 3], 6)
        sol = solve(model)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(-10.0)
        picks = model.group_values(sol.values, "pick")
        assert picks[0] == pytest.approx(0.0, abs=1e-6)
        assert picks[1] == pytest.approx(1.0, abs=1e-6)
        assert picks[2] == pytest.approx(1.0, abs=1e-6)

    def test_lp_relaxation_bounds_the_milp(self):
        model = knapsack([6, 5, 5], [4, 3, 3], 6)
        lp = lp_relax(model)
        sol = solve(model)
        assert lp.objective <= sol.objective + 1e-9

    def test_infeasible_detected(self):
        m = MilpModel("t")
        x = m.add_var("x", 0, lb=0.0, ub=1.0)
        m.add_row([(x, 1.0)], ">=", 2.0)
        sol = solve(m)
        assert sol.status == "infeasible"
        assert not sol.has_values

    def test_random_lps_match_cvxopt(self):
        cvxopt = pytest.importorskip("cvxopt")
        from cvxopt import matrix, solvers
        solvers.options["show_progress"] = False
        rng = np.random.default_rng(19)
        for _ in range(10):
            nvar, nrow = 6, 4
            c = rng.uniform(-1, 1, nvar)
            a = rng.uniform(-1, 1, (nrow, nvar))
            b = rng.uniform(0.5, 2.0, nrow)
            model = MilpModel("lp")
            for i in range(nvar):
                model.add_var("v", i, lb=0.0, ub=10.0, obj=float(c[i]))
            for r in range(nrow):
                model.add_row(
                    [(i, float(a[r, i])) for i in range(nvar)], "<=",
                    float(b[r]))
            mine = lp_relax(model)
            # cvxopt wants all inequalities stacked, bounds included
            g = np.vstack([a, -np.eye(nvar), np.eye(nvar)])
            h = np.concatenate([b, np.zeros(nvar), 10.0 * np.ones(nvar)])
            res = solvers.lp(matrix(c), matrix(g), matrix(h))
            assert res["status"] == "optimal"
            assert mine.objective == pytest.approx(
                float(res["primal objective"]), abs=1e-6)

    def test_start_acts_as_cutoff_and_fallback(self):
        model = knapsack([6, 5, 5], [4, 3, 3], 6)
        start = np.array([0.0, 1.0, 1.0])
        sol = solve(model, start=start)
        assert sol.objective <= -10.0 + 1e-9

    def test_suboptimal_start_never_reported(self):
        model = knapsack([6, 5, 5], [4, 3, 3], 6)
        start = np.array([1.0, 0.0, 0.0])  # objective -6, optimum -10
        sol = solve(model, start=start)
        assert sol.objective == pytest.approx(-10.0)

    def test_infeasible_start_ignored(self):
        model = knapsack([6, 5, 5], [4, 3, 3], 6)
        start = np.array([1.0, 1.0, 1.0])  # violates the capacity row
        sol = solve(model, start=start)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(-10.0)

    def test_separator_rows_drive_resolves(self):
        # lazily forbid x = (1,1): two rounds, then optimal at (1,0) or (0,1)
        model = MilpModel("t")
        a = model.add_var("x", 0, kind=BINARY, obj=-1.0)
        b = model.add_var("x", 1, kind=BINARY, obj=-1.0)
        calls = []

        def sep(values):
            calls.append(tuple(round(v) for v in values))
            if values[a] > 0.5 and values[b] > 0.5:
                return [(((a, 1.0), (b, 1.0)), "<=", 1.0, "conflict")]
            return []

        sep.family = "conflict"
        sol = solve(model, separators=[sep])
        assert sol.objective == pytest.approx(-1.0)
        assert sol.separation.rounds == 2
        assert sol.separation.added_rows["conflict"] == 1
        assert len(calls) == 2
