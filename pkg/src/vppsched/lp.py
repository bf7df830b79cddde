"""Sparse minimization LPs with primal solutions and constraint duals.

The container keeps variables (with native lower/upper bounds, including
free variables), sparse constraints, and a linear objective. ``solve``
hands the program to HiGHS dual simplex (via scipy) and reports primal
values, per-constraint dual multipliers, and bound multipliers.

Dual convention: every dual is the sensitivity of the optimal objective
to that constraint's right-hand side (d obj / d rhs). In a minimization
this means duals of ``>=`` rows are nonnegative, duals of ``<=`` rows are
nonpositive, and duals of ``==`` rows are free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

LE = "<="
GE = ">="
EQ = "=="

SENSES = (LE, GE, EQ)

#: feasibility / optimality tolerances the solution report is held to
FEAS_TOL = 1e-7
OPT_TOL = 1e-7

#: tolerances passed to the backend (two orders below the report contract)
_SOLVER_TOL = 1e-9

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class LpError(Exception):
    """Malformed program (bad bounds, unknown index, duplicate terms)."""


class LpSolveError(Exception):
    """Numerical breakdown or iteration limit inside the solver backend."""


@dataclass(frozen=True)
class VariableRef:
    index: int
    lower: float
    upper: float
    name: str = ""


@dataclass(frozen=True)
class LinearConstraint:
    terms: tuple[tuple[int, float], ...]
    sense: str
    rhs: float
    name: str = ""


@dataclass
class LpSolution:
    """Solver report. ``duals`` has one entry per constraint, in the order
    constraints were added; ``lower_marginals``/``upper_marginals`` carry the
    bound multipliers needed to reconstruct the dual objective."""

    status: str
    objective: float
    primal: np.ndarray
    duals: np.ndarray
    lower_marginals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    upper_marginals: np.ndarray = field(default_factory=lambda: np.zeros(0))


class LinearProgram:
    """Minimization LP built incrementally; immutable once handed to solve."""

    def __init__(self, name: str = ""):
        self.name = name
        self.variables: list[VariableRef] = []
        self.constraints: list[LinearConstraint] = []
        self.objective: dict[int, float] = {}

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def add_variable(self, lower: float = 0.0, upper: float = math.inf,
                     name: str = "") -> VariableRef:
        if math.isnan(lower) or math.isnan(upper):
            raise LpError(f"variable {name!r}: NaN bound")
        if lower > upper:
            raise LpError(f"variable {name!r}: inverted bounds [{lower}, {upper}]")
        ref = VariableRef(len(self.variables), float(lower), float(upper), name)
        self.variables.append(ref)
        return ref

    def add_variables(self, n: int, lower: float = 0.0, upper: float = math.inf,
                      name: str = "") -> list[VariableRef]:
        return [self.add_variable(lower, upper, f"{name}[{k}]") for k in range(n)]

    def add_constraint(self, terms, sense: str, rhs: float, name: str = "") -> int:
        """Append a constraint; ``terms`` is an iterable of (var index, coef).

        Returns the row index (position in the dual vector)."""
        if sense not in SENSES:
            raise LpError(f"constraint {name!r}: unknown sense {sense!r}")
        if not math.isfinite(rhs):
            raise LpError(f"constraint {name!r}: non-finite rhs {rhs}")
        seen = set()
        clean = []
        for idx, coef in terms:
            idx = int(idx)
            if idx < 0 or idx >= len(self.variables):
                raise LpError(f"constraint {name!r}: unknown variable index {idx}")
            if idx in seen:
                raise LpError(f"constraint {name!r}: duplicate variable index {idx}")
            if not math.isfinite(coef):
                raise LpError(f"constraint {name!r}: non-finite coefficient on {idx}")
            seen.add(idx)
            clean.append((idx, float(coef)))
        self.constraints.append(LinearConstraint(tuple(clean), sense, float(rhs), name))
        return len(self.constraints) - 1

    def add_objective_term(self, index: int, coef: float) -> None:
        if index < 0 or index >= len(self.variables):
            raise LpError(f"objective: unknown variable index {index}")
        if not math.isfinite(coef):
            raise LpError(f"objective: non-finite coefficient on {index}")
        self.objective[index] = self.objective.get(index, 0.0) + float(coef)

    def add_objective_terms(self, terms) -> None:
        for idx, coef in terms:
            self.add_objective_term(idx, coef)


def _status_from_scipy(code: int) -> str:
    if code == 0:
        return OPTIMAL
    if code == 2:
        return INFEASIBLE
    if code == 3:
        return UNBOUNDED
    raise LpSolveError(f"solver reported failure (scipy status {code})")


def solve(program: LinearProgram, maxiter: int = 200_000) -> LpSolution:
    """Solve to optimality with HiGHS dual simplex; never fails silently.

    Raises LpSolveError on numerical breakdown or iteration exhaustion."""
    n = program.num_variables
    c = np.zeros(n)
    for idx, coef in program.objective.items():
        c[idx] = coef
    bounds = [(v.lower if math.isfinite(v.lower) else None,
               v.upper if math.isfinite(v.upper) else None)
              for v in program.variables]

    ub_rows: list[tuple[int, float]] = []   # (constraint position, sign flip)
    eq_rows: list[int] = []
    ub_data, ub_i, ub_j, ub_rhs = [], [], [], []
    eq_data, eq_i, eq_j, eq_rhs = [], [], [], []
    for pos, ct in enumerate(program.constraints):
        if ct.sense == EQ:
            row = len(eq_rhs)
            eq_rows.append(pos)
            eq_rhs.append(ct.rhs)
            for idx, coef in ct.terms:
                eq_i.append(row)
                eq_j.append(idx)
                eq_data.append(coef)
        else:
            sign = 1.0 if ct.sense == LE else -1.0
            row = len(ub_rhs)
            ub_rows.append((pos, sign))
            ub_rhs.append(sign * ct.rhs)
            for idx, coef in ct.terms:
                ub_i.append(row)
                ub_j.append(idx)
                ub_data.append(sign * coef)

    from scipy.sparse import csr_matrix

    A_ub = b_ub = A_eq = b_eq = None
    if ub_rhs:
        A_ub = csr_matrix((ub_data, (ub_i, ub_j)), shape=(len(ub_rhs), n))
        b_ub = np.asarray(ub_rhs)
    if eq_rhs:
        A_eq = csr_matrix((eq_data, (eq_i, eq_j)), shape=(len(eq_rhs), n))
        b_eq = np.asarray(eq_rhs)

    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                  method="highs-ds",
                  options={"maxiter": maxiter,
                           "primal_feasibility_tolerance": _SOLVER_TOL,
                           "dual_feasibility_tolerance": _SOLVER_TOL})
    status = _status_from_scipy(res.status)
    if status != OPTIMAL:
        return LpSolution(status, math.nan, np.zeros(0), np.zeros(0))

    duals = np.zeros(program.num_constraints)
    if ub_rhs:
        marg = np.asarray(res.ineqlin.marginals)
        for row, (pos, sign) in enumerate(ub_rows):
            # marginal is d obj / d (sign * rhs); chain rule restores d obj / d rhs
            duals[pos] = sign * marg[row]
    if eq_rhs:
        marg = np.asarray(res.eqlin.marginals)
        for row, pos in enumerate(eq_rows):
            duals[pos] = marg[row]

    return LpSolution(OPTIMAL, float(res.fun), np.asarray(res.x), duals,
                      np.asarray(res.lower.marginals),
                      np.asarray(res.upper.marginals))


def dual_objective(program: LinearProgram, solution: LpSolution) -> float:
    """Objective of the dual solution: rhs-weighted duals plus the finite-bound
    multiplier contributions. Matches the primal objective within OPT_TOL for
    every optimal solve (strong duality)."""
    if solution.status != OPTIMAL:
        raise LpError("dual objective is only defined for optimal solutions")
    total = sum(ct.rhs * solution.duals[pos]
                for pos, ct in enumerate(program.constraints))
    for v in program.variables:
        if math.isfinite(v.lower):
            total += v.lower * solution.lower_marginals[v.index]
        if math.isfinite(v.upper):
            total += v.upper * solution.upper_marginals[v.index]
    return float(total)


def evaluate_terms(terms, primal: np.ndarray) -> float:
    """Value of a linear expression (list of (index, coef)) at a primal point."""
    return float(sum(coef * primal[idx] for idx, coef in terms))


def _fmt_coef(coef: float, name: str) -> str:
    sign = "-" if coef < 0 else "+"
    return f"{sign} {abs(coef):.17g} {name}"


def write_lp_text(program: LinearProgram) -> str:
    """Fixed-format LP text (Minimize / Subject To / Bounds / End) for
    cross-checking against external LP tooling."""
    names = [v.name if v.name else f"x{v.index}" for v in program.variables]
    out = ["Minimize", " obj:"]
    parts = [_fmt_coef(coef, names[idx]) for idx, coef in sorted(program.objective.items())]
    out[1] += " " + " ".join(parts) if parts else " 0 " + (names[0] if names else "x0")
    out.append("Subject To")
    for pos, ct in enumerate(program.constraints):
        label = ct.name if ct.name else f"c{pos}"
        body = " ".join(_fmt_coef(coef, names[idx]) for idx, coef in ct.terms)
        if not body:
            body = "0 " + names[0]
        op = {LE: "<=", GE: ">=", EQ: "="}[ct.sense]
        out.append(f" {label}: {body} {op} {ct.rhs:.17g}")
    out.append("Bounds")
    for v in program.variables:
        lo = "-inf" if not math.isfinite(v.lower) else f"{v.lower:.17g}"
        hi = "+inf" if not math.isfinite(v.upper) else f"{v.upper:.17g}"
        out.append(f" {lo} <= {names[v.index]} <= {hi}")
    out.append("End")
    return "\n".join(out) + "\n"


def write_lp_file(program: LinearProgram, path) -> None:
    with open(path, "w") as fh:
        fh.write(write_lp_text(program))
