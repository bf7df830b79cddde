"""Extensive-form assembly of the two-stage program and the empirical
tail-risk evaluator.

Risk handling: under expectation the objective is the probability-weighted
sum of scenario net costs. Under the tail measure the objective is
gamma + sum_s pi_s * y_s / (1 - alpha) with y_s >= C_s - gamma, y_s >= 0,
the standard linear certainty-equivalent of the expected cost in the worst
(1 - alpha) tail. Minimizing it penalizes adverse cost realizations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import lp
from . import market as mk
from .devices import infeasibility_suspects
from .model import ScenarioBlock, VppModel, merge_terms
from .scenarios import ScenarioSet

EXPECTATION = "expectation"
CVAR = "cvar"


class StochasticError(Exception):
    pass


class ModelInfeasible(StochasticError):
    def __init__(self, message, scenario_index=None, suspects=()):
        super().__init__(message)
        self.scenario_index = scenario_index
        self.suspects = list(suspects)


@dataclass(frozen=True)
class RiskMeasure:
    kind: str
    alpha: float = 0.9

    def __post_init__(self):
        if self.kind not in (EXPECTATION, CVAR):
            raise StochasticError(f"unknown risk measure {self.kind!r}")
        if self.kind == CVAR and not (0.0 < self.alpha < 1.0):
            raise StochasticError("alpha must lie in (0, 1)")


@dataclass
class ExtensiveForm:
    program: lp.LinearProgram
    first_stage: mk.FirstStageVars
    blocks: list[ScenarioBlock]
    risk: RiskMeasure
    probabilities: np.ndarray
    gamma_index: int | None = None
    aux_indices: list[int] | None = None


@dataclass
class ExtensiveSolution:
    objective: float
    first_stage: mk.FirstStageDecision
    breakdowns: list[mk.CostBreakdown]
    scenario_costs: np.ndarray
    solution: lp.LpSolution


def build_extensive(model: VppModel, sset: ScenarioSet,
                    risk: RiskMeasure) -> ExtensiveForm:
    """One LP over all scenarios with the bid variables shared (first-stage
    columns appear in every scenario block, so non-anticipativity holds by
    construction)."""
    if len(sset) == 0:
        raise StochasticError("empty scenario set")
    model.validate()
    program = lp.LinearProgram("extensive")
    fs = model.emit_first_stage(program)
    blocks = [model.build_block(program, scen, fs, tag=f"_s{k}")
              for k, scen in enumerate(sset.scenarios)]
    probs = sset.probabilities()

    gamma_index = None
    aux_indices = None
    if risk.kind == EXPECTATION:
        for pi, block in zip(probs, blocks):
            program.add_objective_terms(
                (idx, pi * coef) for idx, coef in block.groups.net_cost_terms())
    else:
        gamma = program.add_variable(-math.inf, math.inf, "gamma")
        gamma_index = gamma.index
        aux_indices = []
        scale = 1.0 / (1.0 - risk.alpha)
        program.add_objective_term(gamma.index, 1.0)
        for k, (pi, block) in enumerate(zip(probs, blocks)):
            y = program.add_variable(0.0, math.inf, f"tail[{k}]")
            aux_indices.append(y.index)
            program.add_objective_term(y.index, pi * scale)
            # y_k >= C_k - gamma
            terms = [(y.index, 1.0), (gamma.index, 1.0)]
            terms += [(idx, -coef) for idx, coef in block.groups.net_cost_terms()]
            program.add_constraint(merge_terms(terms), lp.GE, 0.0, f"tail[{k}]")
    return ExtensiveForm(program, fs, blocks, risk, probs, gamma_index,
                         aux_indices)


def _diagnose_infeasible(model: VppModel, sset: ScenarioSet) -> ModelInfeasible:
    """Probe scenario blocks one at a time (first stage left free) to name
    the violated block and any device whose envelope check fails."""
    for k, scen in enumerate(sset.scenarios):
        probe = lp.LinearProgram(f"probe_{k}")
        fs = model.emit_first_stage(probe)
        model.build_block(probe, scen, fs, tag="")
        if lp.solve(probe).status == lp.INFEASIBLE:
            suspects = infeasibility_suspects(model.park, scen, model.horizon)
            return ModelInfeasible(
                f"scenario block {k} is infeasible"
                + (f" (device suspects: {', '.join(suspects)})" if suspects else ""),
                scenario_index=k, suspects=suspects)
    return ModelInfeasible("model infeasible through first-stage coupling")


def solve_extensive(model: VppModel, ef: ExtensiveForm,
                    sset: ScenarioSet) -> ExtensiveSolution:
    sol = lp.solve(ef.program)
    if sol.status == lp.INFEASIBLE:
        raise _diagnose_infeasible(model, sset)
    if sol.status != lp.OPTIMAL:
        raise StochasticError(f"extensive form ended with status {sol.status}")
    breakdowns = [block.groups.breakdown(sol.primal) for block in ef.blocks]
    costs = np.array([b.total for b in breakdowns])
    decision = model.extract_first_stage(ef.first_stage, sol.primal)
    return ExtensiveSolution(sol.objective, decision, breakdowns, costs, sol)


def cvar_of_samples(costs, probs, alpha: float) -> float:
    """Expected cost over the worst (1 - alpha) probability mass, computed
    exactly by sorting and splitting the atom that straddles the quantile."""
    costs = np.asarray(costs, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if costs.size == 0:
        raise StochasticError("empty sample")
    if costs.shape != probs.shape:
        raise StochasticError("costs and probabilities differ in length")
    if abs(float(probs.sum()) - 1.0) > 1e-9:
        raise StochasticError("probabilities must sum to one")
    if not (0.0 < alpha < 1.0):
        raise StochasticError("alpha must lie in (0, 1)")
    order = np.argsort(-costs, kind="stable")
    tail_mass = 1.0 - alpha
    remaining = tail_mass
    acc = 0.0
    for i in order:
        take = min(float(probs[i]), remaining)
        acc += take * float(costs[i])
        remaining -= take
        if remaining <= 1e-15:
            break
    return acc / tail_mass


def risk_functional(costs, probs, risk: RiskMeasure) -> float:
    if risk.kind == EXPECTATION:
        return float(np.asarray(probs) @ np.asarray(costs))
    return cvar_of_samples(costs, probs, risk.alpha)
