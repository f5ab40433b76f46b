"""Centralised welfare optimum and the comparison mechanisms.

``centralized_optimum`` clears the market by the equal-marginal rule: at a
common price every unconstrained LA's marginal value and every
unconstrained ESP's marginal cost equal that price, and the price is the
root of the monotone excess-demand curve. Kelly, pool and VCG clearings
are built on top of it and on the DADP driver.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .atc_coordinator import DadpParams, MarketOutcome, run_dadp
from .errors import DadpError, DegenerateMarketError, InfeasibleMarketError
from .market_model import PlayerArrays, Scenario, cost, value

logger = logging.getLogger(__name__)

MECHANISMS = ("ORACLE", "DADP", "KEL", "POOL", "VCG")


@dataclass
class MechanismReport:
    """One row of the mechanism comparison.

    ``la_payments`` are amounts paid by each LA; ``esp_revenues`` amounts
    received by each ESP. ``budget_surplus`` is their difference.
    """

    mechanism: str
    energy: float
    value: float
    cost: float
    sw: float
    budget_surplus: float
    demands: np.ndarray
    supplies: np.ndarray
    la_payments: np.ndarray
    esp_revenues: np.ndarray
    la_ids: list = field(default_factory=list)
    esp_ids: list = field(default_factory=list)
    price: Optional[float] = None
    converged: bool = True
    notes: str = ""
    error: Optional[str] = None
    outcome: Optional[MarketOutcome] = None


@dataclass(frozen=True)
class _Allocation:
    price: float
    demands: np.ndarray
    supplies: np.ndarray


def _welfare(scenario: Scenario, d, s):
    v = math.fsum(value(la, max(float(x), 0.0)) for la, x in zip(scenario.las, d))
    c = math.fsum(cost(e, max(float(x), 0.0)) for e, x in zip(scenario.esps, s))
    return v, c


def _equal_marginal(arrays: PlayerArrays) -> _Allocation:
    """Welfare-maximising allocation for coefficient arrays (any I, J)."""
    lo, hi = arrays.d_lo, arrays.d_hi

    def demand(price):
        if arrays.alpha.size == 0:
            return np.zeros(0)
        return np.clip((arrays.alpha - price) / (2.0 * arrays.beta), lo, hi)

    def supply(price):
        if arrays.m.size == 0:
            return np.zeros(0)
        return np.clip((price - arrays.n) / (2.0 * arrays.m), 0.0, arrays.s_max)

    def excess(price):
        return demand(price).sum() - supply(price).sum()

    floor = float(lo.sum()) if lo.size else 0.0
    cap = float(arrays.s_max.sum()) if arrays.s_max.size else 0.0
    if floor > cap * (1 + 1e-12):
        raise InfeasibleMarketError(
            f"demand floors {floor:.6g} exceed supply capacity {cap:.6g}")
    if excess(0.0) <= 0:
        price = 0.0
    else:
        tops = [arrays.alpha.max() if arrays.alpha.size else 0.0]
        if arrays.m.size:
            tops.append(float((arrays.n + 2.0 * arrays.m * arrays.s_max).max()))
        top = max(tops) + 1.0
        while excess(top) > 0:
            top *= 2.0
            if top > 1e300:
                raise InfeasibleMarketError("excess demand never closes")
        price = brentq(excess, 0.0, top, xtol=1e-14, rtol=8.9e-16, maxiter=500)
    return _Allocation(float(price), demand(price), supply(price))


def _report(mechanism, scenario, alloc_d, alloc_s, pay, rev, price=None, notes="",
            converged=True, outcome=None):
    v, c = _welfare(scenario, alloc_d, alloc_s)
    return MechanismReport(
        mechanism=mechanism, energy=float(np.sum(alloc_d)), value=v, cost=c, sw=v - c,
        budget_surplus=math.fsum(pay) - math.fsum(rev),
        demands=np.asarray(alloc_d, dtype=float), supplies=np.asarray(alloc_s, dtype=float),
        la_payments=np.asarray(pay, dtype=float), esp_revenues=np.asarray(rev, dtype=float),
        la_ids=[la.id for la in scenario.las], esp_ids=[e.id for e in scenario.esps],
        price=price, notes=notes, converged=converged, outcome=outcome)


def centralized_optimum(scenario: Scenario) -> MechanismReport:
    """Welfare-maximising allocation; payments are left at zero.

    Raises:
        InfeasibleMarketError: demand floors exceed total supply capacity.
    """
    scenario.validate(require_game=False)
    alloc = _equal_marginal(PlayerArrays.from_scenario(scenario))
    zeros_d = np.zeros(scenario.n_las)
    zeros_s = np.zeros(scenario.n_esps)
    return _report("ORACLE", scenario, alloc.demands, alloc.supplies, zeros_d, zeros_s,
                   price=alloc.price)


def _outcome_report(mechanism, scenario, outcome: MarketOutcome, notes=""):
    return _report(mechanism, scenario, outcome.demands, outcome.supplies,
                   outcome.la_payments, outcome.esp_revenues, price=outcome.mu,
                   notes=notes, converged=outcome.converged, outcome=outcome)


def dadp_clearing(scenario: Scenario, params: DadpParams = DadpParams(), relay=None):
    return _outcome_report("DADP", scenario, run_dadp(scenario, params, relay=relay))


def kelly_clearing(scenario: Scenario, params: DadpParams = DadpParams()) -> MechanismReport:
    """Same bidding and coordination machinery with weights frozen at uniform."""
    outcome = run_dadp(scenario, params, frozen_weights=True)
    return _outcome_report("KEL", scenario, outcome)


def pool_clearing(scenario: Scenario) -> MechanismReport:
    """Single uniform price from truthful demand and marginal-cost curves.

    Raises:
        DegenerateMarketError: the curves do not cross at a positive volume.
    """
    scenario.validate(require_game=False)
    alloc = _equal_marginal(PlayerArrays.from_scenario(scenario))
    if alloc.demands.sum() <= 0 or alloc.supplies.sum() <= 0:
        raise DegenerateMarketError("demand and supply curves do not cross at positive volume")
    price = alloc.price
    return _report("POOL", scenario, alloc.demands, alloc.supplies, price * alloc.demands,
                   price * alloc.supplies, price=price,
                   notes="truthful uniform pricing; matches the welfare optimum")


def _residual_welfare(scenario: Scenario, drop_la=None, drop_esp=None):
    """Optimal welfare of the market without one player.

    If the residual market cannot meet its demand floors, LAs sit at their
    floors and ESPs at their caps; the shortfall is logged.
    """
    las = [la for la in scenario.las if la.id != drop_la]
    esps = [e for e in scenario.esps if e.id != drop_esp]
    sub = Scenario(scenario.market_kind, las, esps, scenario.scene_id)
    arrays = PlayerArrays.from_scenario(sub)
    try:
        alloc = _equal_marginal(arrays)
        d, s = alloc.demands, alloc.supplies
    except InfeasibleMarketError:
        logger.warning("residual market without %s is infeasible; using floors and caps",
                       drop_la or drop_esp)
        d, s = arrays.d_lo.copy(), arrays.s_max.copy()
    v, c = _welfare(sub, d, s)
    return v - c


def vcg_clearing(scenario: Scenario) -> MechanismReport:
    """Welfare optimum with Clarke-pivot payments.

    Each player pays the welfare the others would reach without it minus
    the welfare the others get at the optimum. ESP pivots are negative, so
    they are reported as revenues with the sign flipped.
    """
    opt = centralized_optimum(scenario)
    values = np.array([value(la, max(float(x), 0.0)) for la, x in zip(scenario.las, opt.demands)])
    costs = np.array([cost(e, max(float(x), 0.0)) for e, x in zip(scenario.esps, opt.supplies)])
    total = math.fsum(values) - math.fsum(costs)
    pay = np.array([_residual_welfare(scenario, drop_la=la.id) - (total - values[i])
                    for i, la in enumerate(scenario.las)])
    rev = np.array([-(_residual_welfare(scenario, drop_esp=e.id) - (total + costs[j]))
                    for j, e in enumerate(scenario.esps)])
    return _report("VCG", scenario, opt.demands, opt.supplies, pay, rev, price=opt.price,
                   notes="Clarke pivots from one re-solve per player")


def compare_mechanisms(scenario: Scenario, params: DadpParams = DadpParams(),
                       mechanisms=MECHANISMS):
    """Run the requested mechanisms on one scenario; failures become error rows.

    Rows come back in the fixed order of ``MECHANISMS``.
    """
    wanted = {name.upper() for name in mechanisms}
    unknown = wanted - set(MECHANISMS)
    if unknown:
        raise ValueError(f"unknown mechanism(s): {sorted(unknown)}")
    runners = {
        "ORACLE": lambda: centralized_optimum(scenario),
        "DADP": lambda: dadp_clearing(scenario, params),
        "KEL": lambda: kelly_clearing(scenario, params),
        "POOL": lambda: pool_clearing(scenario),
        "VCG": lambda: vcg_clearing(scenario),
    }
    reports = []
    for name in MECHANISMS:
        if name not in wanted:
            continue
        try:
            reports.append(runners[name]())
        except DadpError as exc:
            logger.error("%s failed: %s", name, exc)
            nan = float("nan")
            reports.append(MechanismReport(
                mechanism=name, energy=nan, value=nan, cost=nan, sw=nan, budget_surplus=nan,
                demands=np.full(scenario.n_las, nan), supplies=np.full(scenario.n_esps, nan),
                la_payments=np.full(scenario.n_las, nan),
                esp_revenues=np.full(scenario.n_esps, nan),
                la_ids=[la.id for la in scenario.las], esp_ids=[e.id for e in scenario.esps],
                converged=False, error=f"{type(exc).__name__}: {exc}"))
    return reports
