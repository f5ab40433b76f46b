"""Double-sided energy auction with discriminatory price weights.

Load aggregators (buyers) and energy service providers (sellers) bid
through a distributed ADMM exchange coordinated by an energy trading
center, which steers per-player price weights toward the allocation that
maximises social welfare.
"""
from .admm_bidding import AdmmParams, demand_admm_solve, supply_admm_solve
from .atc_coordinator import AtcState, DadpParams, MarketOutcome, run_dadp
from .baselines import (
    MechanismReport,
    centralized_optimum,
    compare_mechanisms,
    kelly_clearing,
    pool_clearing,
    vcg_clearing,
)
from .market_model import (
    EnergyServiceProvider,
    LoadAggregator,
    MarketKind,
    Scenario,
    ThermalEnvelope,
)

__all__ = [
    "AdmmParams", "AtcState", "DadpParams", "EnergyServiceProvider", "LoadAggregator",
    "MarketKind", "MarketOutcome", "MechanismReport", "Scenario", "ThermalEnvelope",
    "centralized_optimum", "compare_mechanisms", "demand_admm_solve", "kelly_clearing",
    "pool_clearing", "run_dadp", "supply_admm_solve", "vcg_clearing",
]
