"""Thin MILP layer over scipy's HiGHS interface.

Models are plain coefficient stores with named variable groups (``x``, ``y``,
``z``, ``f``, ``p``, ``phi``, ``P_LS``, ``P_GS``, ``P_Delta``) so the rest of
the package never touches solver objects. :func:`solve` runs an outer
solve -> separate -> re-solve loop for lazily generated rows: after each
integral incumbent, every separator may contribute violated rows; the model
is re-solved until no separator fires, a time budget runs out, or the round
cap is hit. All lazily added rows must be globally valid (they never cut an
actually feasible islanding), so the dual bound of the final re-solve is a
valid bound for the original problem.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence, TYPE_CHECKING

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, milp

if TYPE_CHECKING:
    from .separation import SeparationReport

BINARY = "binary"
CONTINUOUS = "continuous"

DEFAULT_REL_GAP = 1e-4
MAX_SEPARATION_ROUNDS = 50
INTEGRALITY_TOL = 1e-6
FEASIBILITY_TOL = 1e-6

# (coefficients, sense, rhs, name) with sense one of "<=", ">=", "="
RowSpec = tuple[Sequence[tuple[int, float]], str, float, str]
Separator = Callable[[np.ndarray], list[RowSpec]]

_SENSES = ("<=", ">=", "=")


class MilpModel:
    """Mixed-binary linear model with named, non-overlapping variable groups."""

    def __init__(self, name: str = "model"):
        self.name = name
        self._groups: dict[str, dict] = {}
        self._kind: list[str] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._obj: list[float] = []
        self._vnames: list[str] = []
        self._rows: list[tuple[tuple[tuple[int, float], ...], str, float, str]] = []

    # -- variables ---------------------------------------------------------

    def add_var(
        self,
        group: str,
        key,
        *,
        kind: str = CONTINUOUS,
        lb: float = 0.0,
        ub: float | None = None,
        obj: float = 0.0,
    ) -> int:
        if kind not in (BINARY, CONTINUOUS):
            raise ValueError(f"unknown variable kind {kind!r}")
        if kind == BINARY:
            lb, ub = (0.0, 1.0) if ub is None else (lb, ub)
        if ub is None or not (math.isfinite(lb) and math.isfinite(ub)):
            raise ValueError(f"variable {group}[{key}] needs finite bounds")
        if lb > ub:
            raise ValueError(f"variable {group}[{key}] has lb > ub")
        grp = self._groups.setdefault(group, {})
        if key in grp:
            raise ValueError(f"duplicate variable {group}[{key}]")
        idx = len(self._kind)
        grp[key] = idx
        self._kind.append(kind)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._obj.append(float(obj))
        self._vnames.append(_var_name(group, key))
        return idx

    def fix_var(self, idx: int, value: float) -> None:
        self._lb[idx] = float(value)
        self._ub[idx] = float(value)

    def set_bounds(self, idx: int, lb: float, ub: float) -> None:
        if lb > ub:
            raise ValueError("lb > ub")
        self._lb[idx] = float(lb)
        self._ub[idx] = float(ub)

    def add_objective_coeff(self, idx: int, delta: float) -> None:
        self._obj[idx] += float(delta)

    def var(self, group: str, key) -> int:
        return self._groups[group][key]

    def has_group(self, group: str) -> bool:
        return group in self._groups and bool(self._groups[group])

    def group(self, group: str) -> Mapping:
        return dict(self._groups.get(group, {}))

    def group_sizes(self) -> dict[str, int]:
        return {g: len(d) for g, d in self._groups.items() if d}

    def group_values(self, values: np.ndarray, group: str) -> dict:
        return {k: float(values[i]) for k, i in self._groups.get(group, {}).items()}

    @property
    def n_vars(self) -> int:
        return len(self._kind)

    @property
    def n_binary(self) -> int:
        return sum(1 for k in self._kind if k == BINARY)

    @property
    def n_rows(self) -> int:
        return len(self._rows)

    def bounds_of(self, idx: int) -> tuple[float, float]:
        return self._lb[idx], self._ub[idx]

    def objective_coeff(self, idx: int) -> float:
        return self._obj[idx]

    # -- rows ---------------------------------------------------------------

    def add_row(
        self,
        coeffs: Iterable[tuple[int, float]],
        sense: str,
        rhs: float,
        name: str = "",
    ) -> int:
        if sense not in _SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        if not math.isfinite(rhs):
            raise ValueError("rhs must be finite")
        packed = tuple((int(i), float(c)) for i, c in coeffs)
        for i, _ in packed:
            if not 0 <= i < self.n_vars:
                raise IndexError(f"row references unknown variable {i}")
        self._rows.append((packed, sense, float(rhs), name))
        return len(self._rows) - 1

    def row_activity(self, values: np.ndarray, row: int) -> float:
        coeffs, _, _, _ = self._rows[row]
        return float(sum(c * values[i] for i, c in coeffs))

    def row_violation(self, values: np.ndarray, row: int) -> float:
        coeffs, sense, rhs, _ = self._rows[row]
        act = sum(c * values[i] for i, c in coeffs)
        if sense == "<=":
            return max(0.0, act - rhs)
        if sense == ">=":
            return max(0.0, rhs - act)
        return abs(act - rhs)

    def max_violation(self, values: np.ndarray) -> float:
        worst = 0.0
        for r in range(self.n_rows):
            worst = max(worst, self.row_violation(values, r))
        return worst

    def is_feasible(self, values: np.ndarray, tol: float = FEASIBILITY_TOL) -> bool:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_vars,):
            return False
        for i in range(self.n_vars):
            if values[i] < self._lb[i] - tol or values[i] > self._ub[i] + tol:
                return False
            if self._kind[i] == BINARY and abs(values[i] - round(values[i])) > max(
                tol, INTEGRALITY_TOL
            ):
                return False
        return self.max_violation(values) <= tol

    def objective_value(self, values: np.ndarray) -> float:
        return float(np.dot(np.asarray(self._obj), np.asarray(values, dtype=float)))

    # -- solver bridge ------------------------------------------------------

    def matrices(self):
        c = np.array(self._obj, dtype=float)
        integrality = np.array(
            [1 if k == BINARY else 0 for k in self._kind], dtype=np.uint8
        )
        bounds = Bounds(np.array(self._lb), np.array(self._ub))
        if not self._rows:
            return c, integrality, bounds, None, None, None
        data, rows_ix, cols_ix = [], [], []
        cl = np.empty(len(self._rows))
        cu = np.empty(len(self._rows))
        for r, (coeffs, sense, rhs, _) in enumerate(self._rows):
            for i, coef in coeffs:
                rows_ix.append(r)
                cols_ix.append(i)
                data.append(coef)
            if sense == "<=":
                cl[r], cu[r] = -np.inf, rhs
            elif sense == ">=":
                cl[r], cu[r] = rhs, np.inf
            else:
                cl[r], cu[r] = rhs, rhs
        a = sp.csr_matrix(
            (data, (rows_ix, cols_ix)), shape=(len(self._rows), self.n_vars)
        )
        return c, integrality, bounds, a, cl, cu

    def write_lp(self, stream) -> None:
        """Emit the model in LP text format (debugging aid)."""
        w = stream.write
        w(f"\\ {self.name}\n")
        w("Minimize\n obj:")
        terms = [
            f" {c:+.17g} {self._vnames[i]}"
            for i, c in enumerate(self._obj)
            if c != 0.0
        ]
        w("".join(terms) if terms else " 0 " + self._vnames[0])
        w("\nSubject To\n")
        for r, (coeffs, sense, rhs, name) in enumerate(self._rows):
            label = name or f"c{r}"
            expr = "".join(f" {c:+.17g} {self._vnames[i]}" for i, c in coeffs)
            op = {"<=": "<=", ">=": ">=", "=": "="}[sense]
            w(f" {label}:{expr} {op} {rhs:.17g}\n")
        w("Bounds\n")
        for i in range(self.n_vars):
            w(f" {self._lb[i]:.17g} <= {self._vnames[i]} <= {self._ub[i]:.17g}\n")
        binaries = [self._vnames[i] for i, k in enumerate(self._kind) if k == BINARY]
        if binaries:
            w("Binaries\n")
            for name in binaries:
                w(f" {name}\n")
        w("End\n")


def _var_name(group: str, key) -> str:
    if isinstance(key, tuple):
        tail = "_".join(str(k) for k in key)
    else:
        tail = str(key)
    safe = "".join(ch if ch.isalnum() or ch == "_" else "_" for ch in tail)
    return f"{group}_{safe}" if safe else group


@dataclass
class MilpSolution:
    """Outcome of a solve: valuation, objective, dual bound, gap and status.

    ``status`` is one of ``"optimal"`` (proved within the relative gap),
    ``"feasible"`` (incumbent without proof, e.g. time limit), ``"infeasible"``
    and ``"limit"`` (no usable incumbent). ``values`` is None exactly for the
    last two.
    """

    status: str
    values: np.ndarray | None
    objective: float = math.nan
    bound: float = math.nan
    gap: float = math.inf
    wall_time: float = 0.0
    separation: "SeparationReport | None" = None

    @property
    def has_values(self) -> bool:
        return self.values is not None


def _relative_gap(objective: float, bound: float) -> float:
    if not (math.isfinite(objective) and math.isfinite(bound)):
        return math.inf
    return max(0.0, objective - bound) / max(abs(objective), 1e-9)


def _solve_once(model: MilpModel, time_limit: float | None, rel_gap: float,
                integral: bool = True):
    c, integrality, bounds, a, cl, cu = model.matrices()
    constraints = LinearConstraint(a, cl, cu) if a is not None else None
    options: dict = {"presolve": True}
    if time_limit is not None:
        options["time_limit"] = max(float(time_limit), 0.05)
    if integral:
        options["mip_rel_gap"] = rel_gap
    res = milp(
        c=c,
        constraints=constraints,
        integrality=integrality if integral else None,
        bounds=bounds,
        options=options,
    )
    if res.status == 2:
        # the backend's presolve occasionally misdeclares switched-flow
        # models infeasible; an infeasibility verdict is only trusted when
        # the presolve-free solve agrees
        res = milp(
            c=c,
            constraints=constraints,
            integrality=integrality if integral else None,
            bounds=bounds,
            options={**options, "presolve": False},
        )
    if res.status == 3:
        raise RuntimeError("model is unbounded despite boxed variables")
    if res.status == 4:
        raise RuntimeError(f"solver failure: {res.message}")
    return res


def lp_relax(model: MilpModel, time_limit: float | None = None) -> MilpSolution:
    """Solve the continuous relaxation (binaries relaxed to [0, 1])."""
    t0 = time.monotonic()
    res = _solve_once(model, time_limit, DEFAULT_REL_GAP, integral=False)
    wall = time.monotonic() - t0
    if res.status == 2:
        return MilpSolution("infeasible", None, wall_time=wall)
    if res.x is None:
        return MilpSolution("limit", None, wall_time=wall)
    obj = float(res.fun)
    status = "optimal" if res.status == 0 else "feasible"
    return MilpSolution(status, np.asarray(res.x), obj, obj, 0.0, wall)


def solve(
    model: MilpModel,
    *,
    time_limit: float | None = None,
    separators: Sequence[Separator] = (),
    start: np.ndarray | None = None,
    rel_gap: float = DEFAULT_REL_GAP,
    max_rounds: int = MAX_SEPARATION_ROUNDS,
) -> MilpSolution:
    """Solve a model, lazily separating rows until the incumbent is clean.

    ``separators`` are called on every integral incumbent in order; each
    returns (possibly empty) violated rows which are appended to the model
    before re-solving. A feasible ``start`` vector acts as an objective
    cutoff and as a fallback incumbent: the returned objective is never
    worse than the start's.
    """
    from .separation import SeparationReport

    t0 = time.monotonic()
    report = SeparationReport()
    start_vals: np.ndarray | None = None
    start_obj = math.inf
    if start is not None:
        cand = np.asarray(start, dtype=float)
        if cand.shape == (model.n_vars,) and model.is_feasible(cand):
            if not any(sep(cand) for sep in separators):
                start_vals = cand
                start_obj = model.objective_value(cand)
                model.add_row(
                    [(i, model.objective_coeff(i)) for i in range(model.n_vars)
                     if model.objective_coeff(i) != 0.0],
                    "<=",
                    start_obj + 1e-7,
                    name="start_cutoff",
                )

    def finish(status, values, objective, bound):
        wall = time.monotonic() - t0
        if values is not None and start_vals is not None and start_obj < objective:
            values, objective = start_vals, start_obj
        if values is None and start_vals is not None:
            status, values, objective = "feasible", start_vals, start_obj
            if not math.isfinite(bound):
                bound = start_obj
        gap = _relative_gap(objective, bound) if values is not None else math.inf
        return MilpSolution(status, values, objective, bound, gap, wall, report)

    add_rounds = 0
    last_bound = math.nan
    while True:
        remaining = None
        if time_limit is not None:
            remaining = time_limit - (time.monotonic() - t0)
            if remaining <= 0:
                return finish("limit", None, math.nan, last_bound)
        res = _solve_once(model, remaining, rel_gap)
        if res.status == 2:
            if start_vals is not None:
                # infeasible only against the start cutoff: the start is optimal
                # up to the cutoff slack
                return finish("feasible", start_vals, start_obj, start_obj)
            return finish("infeasible", None, math.nan, math.nan)
        if res.x is None:
            return finish("limit", None, math.nan, last_bound)
        vals = np.asarray(res.x, dtype=float)
        last_bound = float(getattr(res, "mip_dual_bound", res.fun))
        report.rounds += 1
        pending: list[RowSpec] = []
        for sep in separators:
            fired = sep(vals)
            if fired:
                family = getattr(sep, "family", getattr(sep, "__name__", "sep"))
                report.added_rows[family] = report.added_rows.get(family, 0) + len(fired)
                pending.extend(fired)
        if not pending:
            report.final_violations = 0
            status = "optimal" if res.status == 0 else "feasible"
            return finish(status, vals, float(res.fun), last_bound)
        if add_rounds >= max_rounds:
            report.final_violations = len(pending)
            return finish("limit", None, math.nan, last_bound)
        for coeffs, sense, rhs, name in pending:
            model.add_row(coeffs, sense, rhs, name)
        add_rounds += 1
