"""Multi-market scheduling of virtual power plants under uncertainty.

Two-stage stochastic dispatch and bidding for a DER portfolio behind a
radial distribution network: day-ahead and reserve-capacity bids in the
first stage, device dispatch, reserve activation, and imbalance positions
in the second. Risk-neutral and CVaR objectives, solved either as one
monolithic LP or by multi-cut Benders decomposition.
"""

from . import benders, config, devices, instance, lp, market, model, \
    network, reports, scenarios, stochastic
from .benders import BendersOptions, iterate
from .market import FirstStageDecision, MarketConfig, MarketHorizon
from .model import VppModel
from .scenarios import BaseForecast, ScenarioSet, build_scenarios
from .stochastic import RiskMeasure, build_extensive, cvar_of_samples, \
    solve_extensive

__version__ = "0.1.0"

__all__ = [
    "BaseForecast", "BendersOptions", "FirstStageDecision", "MarketConfig",
    "MarketHorizon", "RiskMeasure", "ScenarioSet", "VppModel",
    "benders", "build_extensive", "build_scenarios", "config",
    "cvar_of_samples", "devices", "instance", "iterate", "lp", "market",
    "model", "network", "reports", "scenarios", "solve_extensive",
    "stochastic",
]
