"""Model assembly: one shared first stage plus per-scenario constraint blocks.

``VppModel`` bundles the horizon, network, device park, and market
configuration, and knows how to emit everything one scenario needs into a
LinearProgram: device constraints, grid flow constraints, market recourse
variables, coupling rows, and the six cost/revenue term groups that make
up the scenario's net cost. The extensive form and the decomposition
subproblems are both built from this factory, which keeps them provably
consistent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import devices as dv
from . import lp
from . import market as mk
from . import network as nw
from .scenarios import Scenario


class ModelError(Exception):
    pass


def merge_terms(terms) -> list[tuple[int, float]]:
    """Sum coefficients sharing a variable index (constraint rows must not
    carry duplicates)."""
    acc: dict[int, float] = {}
    for idx, coef in terms:
        acc[idx] = acc.get(idx, 0.0) + coef
    return [(idx, coef) for idx, coef in acc.items() if coef != 0.0]


@dataclass
class CostTermGroups:
    """Linear expressions (over LP variables) for each stream of one
    scenario's net cost."""

    r_dam: list[tuple[int, float]]
    r_rcm: list[tuple[int, float]]
    r_ram: list[tuple[int, float]]
    c_ops: list[tuple[int, float]]
    c_tariff: list[tuple[int, float]]
    c_imb: list[tuple[int, float]]

    def net_cost_terms(self) -> list[tuple[int, float]]:
        signed = [(self.r_dam, -1.0), (self.r_rcm, -1.0), (self.r_ram, -1.0),
                  (self.c_ops, 1.0), (self.c_tariff, 1.0), (self.c_imb, 1.0)]
        out = []
        for terms, sign in signed:
            out.extend((idx, sign * coef) for idx, coef in terms)
        return merge_terms(out)

    def breakdown(self, primal: np.ndarray) -> mk.CostBreakdown:
        ev = lambda terms: lp.evaluate_terms(terms, primal)
        return mk.CostBreakdown.from_components(
            ev(self.r_dam), ev(self.r_rcm), ev(self.r_ram),
            ev(self.c_ops), ev(self.c_tariff), ev(self.c_imb))


@dataclass
class ScenarioBlock:
    """Handles for everything emitted for one scenario."""

    scenario: Scenario
    devices: list[dv.DeviceHandles]
    grid: nw.GridHandles
    second_stage: mk.SecondStageVars
    groups: CostTermGroups


@dataclass
class VppModel:
    horizon: mk.MarketHorizon
    network: nw.RadialNetwork
    park: dv.DerPark
    market: mk.MarketConfig
    flow_segments: int = 8
    dam_bid_cap_kw: float | None = None
    _topo: nw.Topology | None = field(default=None, repr=False)

    def validate(self) -> nw.Topology:
        if self._topo is None:
            topo = nw.validate_radial(self.network)
            self.park.validate_nodes(set(self.network.bus_ids()))
            if len(self.market.tariff_per_mwh) != self.horizon.step_count:
                raise ModelError("tariff schedule length != step count")
            self._topo = topo
        return self._topo

    @property
    def dam_cap_kw(self) -> float:
        """Cap on day-ahead bid magnitude; bounds the first stage before any
        recourse information exists. Applied identically in every solve path."""
        if self.dam_bid_cap_kw is not None:
            return self.dam_bid_cap_kw
        return self.park.total_power_kw() + self.market.prequalified_power_kw

    def emit_first_stage(self, program: lp.LinearProgram,
                         free_bounds: bool = False) -> mk.FirstStageVars:
        if free_bounds:
            # subproblem use: bids get pinned by equality rows instead
            dam = [program.add_variable(-np.inf, np.inf, f"dam[{t}]").index
                   for t in range(self.horizon.step_count)]
            rcm_up = [program.add_variable(-np.inf, np.inf, f"rcm_up[{w}]").index
                      for w in range(self.horizon.window_count)]
            rcm_dn = [program.add_variable(-np.inf, np.inf, f"rcm_dn[{w}]").index
                      for w in range(self.horizon.window_count)]
            return mk.FirstStageVars(dam, rcm_up, rcm_dn)
        return mk.emit_first_stage(program, self.horizon, self.market,
                                   self.dam_cap_kw)

    def build_block(self, program: lp.LinearProgram, scenario: Scenario,
                    fs: mk.FirstStageVars, tag: str = "") -> ScenarioBlock:
        """Emit one scenario's full constraint block and cost expressions."""
        topo = self.validate()
        hz = self.horizon
        handles: list[dv.DeviceHandles] = []
        for dg in self.park.dgs:
            handles.append(dv.emit_dg(program, dg, scenario, hz, tag))
        for hp in self.park.hps:
            handles.append(dv.emit_hp(program, hp, scenario, hz, tag))
        for ev in self.park.evs:
            handles.append(dv.emit_ev(program, ev, scenario, hz, tag))
        for b in self.park.bess:
            handles.append(dv.emit_bess(program, b, scenario, hz, tag))

        cons_p: dict[int, list[list[tuple[int, float]]]] = {}
        cons_q: dict[int, list[list[tuple[int, float]]]] = {}
        for h in handles:
            tp = cons_p.setdefault(h.node, [[] for _ in range(hz.step_count)])
            tq = cons_q.setdefault(h.node, [[] for _ in range(hz.step_count)])
            for t in range(hz.step_count):
                if t < len(h.cons_p):
                    tp[t].extend(h.cons_p[t])
                if t < len(h.cons_q):
                    tq[t].extend(h.cons_q[t])

        grid = nw.emit_distflow(program, self.network, topo, hz, cons_p, cons_q,
                                scenario.load_active, scenario.load_reactive, tag)
        nw.emit_flow_limits(program, self.network, grid, hz,
                            self.flow_segments, tag)

        ss = mk.emit_second_stage(program, hz, self.market, tag)
        mk.emit_reserve_coupling(program, hz, fs, ss)
        mk.emit_position_balance(program, hz, fs, ss, grid.pcc)

        dt = hz.step_hours
        groups = CostTermGroups(
            r_dam=mk.dam_revenue_terms(scenario.day_ahead_price, fs.dam, dt),
            r_rcm=mk.rcm_revenue_terms(scenario.rcm_up_price,
                                       scenario.rcm_dn_price,
                                       fs.rcm_up, fs.rcm_dn),
            r_ram=mk.ram_revenue_terms(scenario.ram_up_price,
                                       scenario.ram_dn_price,
                                       ss.ram_up, ss.ram_dn, dt),
            c_ops=dv.park_operating_cost(handles),
            c_tariff=mk.tariff_cost_terms(self.market.tariff_per_mwh,
                                          grid.wit, dt),
            c_imb=mk.imbalance_cost_terms(scenario.imbalance_short_price,
                                          scenario.imbalance_long_price,
                                          ss.imb_short, ss.imb_long, dt),
        )
        return ScenarioBlock(scenario, handles, grid, ss, groups)

    def extract_first_stage(self, fs: mk.FirstStageVars,
                            primal: np.ndarray) -> mk.FirstStageDecision:
        clip0 = lambda a: np.where(np.abs(a) < 1e-12, 0.0, a)
        return mk.FirstStageDecision(
            p_dam_kw=np.array([primal[i] for i in fs.dam]),
            p_rcm_up_kw=clip0(np.array([primal[i] for i in fs.rcm_up])),
            p_rcm_dn_kw=clip0(np.array([primal[i] for i in fs.rcm_dn])),
        )


def extract_block_series(block: ScenarioBlock, primal: np.ndarray) -> dict:
    """Numeric second-stage series for reporting and persistence."""
    take = lambda idxs: np.array([primal[i] for i in idxs])
    out = {
        "ram_up_kw": take(block.second_stage.ram_up),
        "ram_dn_kw": take(block.second_stage.ram_dn),
        "imb_short_kw": take(block.second_stage.imb_short),
        "imb_long_kw": take(block.second_stage.imb_long),
        "p_vpp_kw": take(block.second_stage.p_vpp),
        "pcc_kw": take(block.grid.pcc),
        "wit_kw": {bus: take(idxs) for bus, idxs in block.grid.wit.items()},
        "devices": {},
    }
    steps = len(block.second_stage.ram_up)

    def padded(idxs, start):
        series = np.zeros(steps)
        series[start:start + len(idxs)] = take(idxs)
        return series

    for h in block.devices:
        start = h.window[0] if h.window else 0
        entry = {}
        if h.p:
            entry["p_kw"] = padded(h.p, start)
        if h.charge:
            entry["charge_kw"] = padded(h.charge, start)
            entry["discharge_kw"] = padded(h.discharge, start)
        if h.soc:
            entry["soc_kwh"] = take(h.soc)
        if h.temp:
            entry["temp_c"] = take(h.temp)
        out["devices"][h.name] = entry
    return out
