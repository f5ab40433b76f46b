"""Outer coordination loop and the full discriminatory double-auction driver.

Each outer round clears the demand side against an announced total supply,
hands the resulting total demand to the supply side, then lets the ETC pick
new targets. Targets come from a small penalised problem the ETC solves on
local affine models of the two sides' marginal prices, with the multipliers
``chi`` and ``gamma`` driving the two totals together.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .admm_bidding import AdmmParams, AdmmResult, demand_admm_solve, supply_admm_solve
from .errors import DomainError, InfeasibleMarketError, NonConvergenceError
from .market_model import PlayerArrays, Scenario, cost, value
from .price_control import (
    StepController,
    demand_weight_bracket,
    normalize,
    supply_weight_bracket,
)

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("phase", "m", "n", "k", "player_id", "quantity", "shadow_price",
                 "weight", "primal_res", "dual_res")

# Multipliers tried on rho when an ADMM run hits its cap.
_RHO_RETRIES = (1.0, 8.0, 1.0 / 8.0, 64.0)


@dataclass(frozen=True)
class DadpParams:
    """Tuning knobs for ``run_dadp``.

    ``delta=None`` uses ``1/total`` on each side, which turns the weight
    update into a direct substitution of the equilibrium share. ``eps1``
    and ``initial_supply`` default to ``1e-3`` and ``0.5`` of total supply
    capacity. ``rho_gain`` rescales rho between ADMM runs to
    ``rho_gain * |price| / total``; ``None`` keeps ``admm.rho`` throughout.
    ``polish_tol`` is the tolerance of one last ADMM run per side, at the
    final weights and totals, so the reported allocation meets the
    announced totals closely; ``None`` skips it.
    """

    admm: AdmmParams = field(default_factory=AdmmParams)
    delta: Optional[float] = None
    weight_tol: float = 1e-4
    max_weight_rounds: int = 200
    chi0: float = 0.0
    gamma0: float = 0.1
    beta_growth: float = 2.5
    eps1: Optional[float] = None
    eps2: float = 1e-4
    max_outer: int = 100
    initial_supply: Optional[float] = None
    rho_gain: Optional[float] = 4.0
    warm_chi: bool = True
    record_trace: bool = True
    polish_tol: Optional[float] = 1e-9

    def __post_init__(self):
        if not 2.0 < self.beta_growth < 3.0:
            raise DomainError("beta_growth must lie in (2, 3)")
        if self.gamma0 <= 0:
            raise DomainError("gamma0 must be positive")
        if self.eps1 is not None and self.eps1 <= 0:
            raise DomainError("eps1 must be positive")
        if self.eps2 <= 0:
            raise DomainError("eps2 must be positive")
        if self.delta is not None and self.delta < 0:
            raise DomainError("delta must be non-negative")
        if self.polish_tol is not None and self.polish_tol <= 0:
            raise DomainError("polish_tol must be positive")


@dataclass(frozen=True)
class AtcState:
    """ETC-side state of the outer loop.

    Besides the multipliers, the ETC keeps the (target, marginal price)
    pairs each side has produced so far and a bracket on the balancing
    total, all built from aggregates it is entitled to see.
    """

    chi: float = 0.0
    gamma: float = 0.1
    beta_growth: float = 2.5
    m: int = 1
    eps1: float = 1e-3
    eps2: float = 1e-4
    estimated_total_supply: float = 0.0
    estimated_total_demand: float = 0.0
    total_lo: float = 0.0
    total_hi: float = math.inf
    bracket_lo: float = 0.0
    bracket_hi: float = math.inf
    demand_history: tuple = ()
    supply_history: tuple = ()
    chi_initialized: bool = False

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError("gamma must be positive")
        if not 2.0 < self.beta_growth < 3.0:
            raise DomainError("beta_growth must lie in (2, 3)")
        if not (self.eps1 > 0 and self.eps2 > 0):
            raise DomainError("convergence tolerances must be positive")


@dataclass
class SideResult:
    """Converged weight loop on one side of the market."""

    side: str
    target: float
    admm: AdmmResult
    weights: np.ndarray
    price_estimate: float
    weight_rounds: int
    inner_iterations: int
    weights_converged: bool
    max_inner: int = 0

    @property
    def quantities(self) -> np.ndarray:
        return self.admm.quantities

    @property
    def total(self) -> float:
        return float(self.admm.quantities.sum())


@dataclass
class MarketOutcome:
    """Result of one DADP (or frozen-weight) clearing."""

    la_ids: list
    esp_ids: list
    demands: np.ndarray
    supplies: np.ndarray
    bids: np.ndarray
    offers: np.ndarray
    p: np.ndarray
    q: np.ndarray
    mu: float
    omega: float
    la_payments: np.ndarray
    esp_revenues: np.ndarray
    la_utilities: np.ndarray
    esp_utilities: np.ndarray
    value: float
    cost: float
    sw: float
    outer_iterations: int
    weight_rounds: int
    inner_iterations: int
    converged: bool
    total_supply_target: float
    total_demand_target: float
    demand_prices: np.ndarray = None
    supply_prices: np.ndarray = None
    max_inner_iterations: int = 0
    scene_id: str = ""
    market_kind: str = ""
    atc_history: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    @property
    def total_demand(self) -> float:
        return float(self.demands.sum())

    @property
    def total_supply(self) -> float:
        return float(self.supplies.sum())

    @property
    def mismatch(self) -> float:
        return self.total_supply - self.total_demand

    @property
    def budget_surplus(self) -> float:
        return math.fsum(self.la_payments) - math.fsum(self.esp_revenues)

    @property
    def iterations(self):
        return (self.outer_iterations, self.weight_rounds, self.inner_iterations)


# ------------------------------------------------------------------ ATC pieces

def atc_converged(outcome, previous, state: AtcState) -> bool:
    """Energy-mismatch and relative welfare-change test on two outer iterates."""
    if previous is None:
        return False
    if abs(outcome.total_supply - outcome.total_demand) > state.eps1:
        return False
    change = outcome.sw - previous.sw
    if outcome.sw == 0:
        return abs(change) <= state.eps2
    return abs(change / outcome.sw) <= state.eps2


def update_atc_multipliers(state: AtcState, total_supply_prev, total_demand_prev) -> AtcState:
    """Multiplier step on the energy mismatch, then geometric penalty growth."""
    chi = state.chi + 2.0 * state.gamma ** 2 * (total_supply_prev - total_demand_prev)
    return replace(state, chi=chi, gamma=state.beta_growth * state.gamma, m=state.m + 1)


def demand_price_estimate(d, mu, p, total_supply, lo, hi) -> float:
    """Marginal value of energy implied by the demand-side equilibrium.

    An interior LA's first-order condition gives its marginal value as
    ``mu_i p_i S / (S - d_i)``; the estimate is the demand-weighted mean
    over interior LAs. With no interior LA the aggregate form
    ``mean(mu) |p|_1 / (I - 1)`` is used.
    """
    d = np.asarray(d, dtype=float)
    mu = np.asarray(mu, dtype=float)
    p = np.asarray(p, dtype=float)
    S = float(total_supply)
    tol = 1e-9 * S
    gap = S - d
    interior = (d > lo + tol) & (d < hi - tol) & (gap > tol)
    if interior.any() and d[interior].sum() > 0:
        est = mu[interior] * p[interior] * S / gap[interior]
        w = d[interior]
        return float((est * w).sum() / w.sum())
    return float(np.mean(mu)) * p.sum() / (p.size - 1)


def supply_price_estimate(s, omega, q, total_demand, cap) -> float:
    """Marginal cost of energy implied by the supply-side equilibrium.

    Interior ESPs reveal ``omega_j q_j K / (K + s_j)`` with
    ``K = (J - 2) D``; the fallback is ``mean(omega) (J - 2) |q|_1 / (J - 1)^2``.
    """
    s = np.asarray(s, dtype=float)
    omega = np.asarray(omega, dtype=float)
    q = np.asarray(q, dtype=float)
    D = float(total_demand)
    J = q.size
    K = (J - 2) * D
    tol = 1e-9 * D
    interior = (s > tol) & (s < np.minimum(cap, D) - tol)
    if interior.any():
        est = omega[interior] * q[interior] * K / (K + s[interior])
        w = s[interior]
        return float((est * w).sum() / w.sum())
    return float(np.mean(omega)) * (J - 2) * q.sum() / (J - 1) ** 2


def _slope(history, sign):
    """Secant slope of the last two points, or a proportional fallback."""
    if len(history) >= 2:
        (t0, l0), (t1, l1) = history[-2], history[-1]
        if abs(t1 - t0) > 1e-9 * max(1.0, abs(t1)):
            slope = (l1 - l0) / (t1 - t0)
            if sign * slope > 0:
                return slope
    t, lam = history[-1]
    return sign * max(abs(lam), 1e-6) / max(t, 1e-9)


def _safeguard(candidate, previous, state: AtcState):
    lo = max(state.bracket_lo, previous / 4.0, state.total_lo)
    hi = min(state.bracket_hi, previous * 4.0, state.total_hi)
    if lo >= hi:
        lo = max(state.bracket_lo, state.total_lo)
        hi = min(state.bracket_hi, state.total_hi)
        return 0.5 * (lo + hi)
    if not lo < candidate < hi:
        return 0.5 * (lo + hi)
    return float(candidate)


def next_supply_target(state: AtcState) -> float:
    """Total supply the ETC announces to the demand side for the next round.

    Solves the two stationarity conditions of the penalised target problem
    ``max V(T_D) - C(T_S) - chi (T_S - T_D) - gamma^2 (T_S - T_D)^2`` with the
    marginal prices replaced by affine models, then keeps the answer inside
    the known bracket and a trust region around the last target.
    """
    if not state.demand_history or not state.supply_history:
        return state.estimated_total_supply
    slope_d = _slope(state.demand_history, -1.0)
    slope_s = _slope(state.supply_history, +1.0)
    t_d, lam_d = state.demand_history[-1]
    t_s, lam_s = state.supply_history[-1]
    g = 2.0 * state.gamma ** 2
    a = np.array([[slope_d - g, g], [-g, slope_s + g]])
    b = np.array([-lam_d + slope_d * t_d - state.chi, -lam_s + slope_s * t_s - state.chi])
    try:
        target = float(np.linalg.solve(a, b)[0])
    except np.linalg.LinAlgError:
        target = math.nan
    return _safeguard(target, t_d, state)


def etc_estimate_exchange(state: AtcState, side_result: SideResult) -> AtcState:
    """Fold a converged side into the ETC's models and set the next target.

    After the demand side, the supply side receives the demand total as its
    target, shifted by the penalty terms from the second round on. After
    the supply side only the model and the bracket are updated. Nothing but
    totals and the ETC's own price estimates enter the state.
    """
    if side_result.side == "demand":
        total_demand = side_result.total
        hist = state.demand_history + ((side_result.target, side_result.price_estimate),)
        state = replace(state, demand_history=hist)
        if not state.supply_history:
            return replace(state, estimated_total_demand=total_demand)
        slope_s = _slope(state.supply_history, +1.0)
        t_s, lam_s = state.supply_history[-1]
        g = 2.0 * state.gamma ** 2
        target = (-lam_s + slope_s * t_s - state.chi + g * total_demand) / (slope_s + g)
        lo = max(state.total_lo, total_demand / 4.0)
        hi = min(state.total_hi, total_demand * 4.0)
        if not math.isfinite(target):
            target = total_demand
        return replace(state, estimated_total_demand=float(min(max(target, lo), hi)))

    hist = state.supply_history + ((side_result.target, side_result.price_estimate),)
    state = replace(state, supply_history=hist)
    t_d, lam_d = state.demand_history[-1]
    t_s, lam_s = side_result.target, side_result.price_estimate
    lo, hi = state.bracket_lo, state.bracket_hi
    # Demand prices fall and supply prices rise with the total, so the sign
    # of the price gap says on which side of both totals the balance lies.
    if lam_d > lam_s:
        lo = max(lo, min(t_d, t_s))
    elif lam_d < lam_s:
        hi = min(hi, max(t_d, t_s))
    return replace(state, supply_history=hist, bracket_lo=lo, bracket_hi=hi)


# ----------------------------------------------------------- one-side clearing

def _rescaled_rho(base: AdmmParams, current, price, total, gain):
    if gain is None or not math.isfinite(price) or price == 0:
        return current
    return float(np.clip(gain * abs(price) / total, 1e-3 * base.rho, 1e3 * base.rho))


def _admm_with_retries(solve, args, base: AdmmParams, rho, state, relay, record):
    """Run one ADMM to convergence, retrying at other rho values on failure.

    Returns the result, the rho it used and the iterations spent on failed
    attempts. Each attempt keeps rho fixed throughout.
    """
    wasted = 0
    last = None
    for factor in _RHO_RETRIES:
        params = replace(base, rho=rho * factor)
        try:
            result = solve(*args, params, state=state, relay=relay, record_trace=record)
            return result, params.rho, wasted
        except NonConvergenceError as exc:
            last = exc
            wasted += len(exc.trace) if exc.trace else base.max_iter
            logger.debug("ADMM failed at rho=%g, retrying", params.rho)
    raise last


def _trace_rows(phase, m, n, ids, weights, records):
    rows = []
    for rec in records:
        for pid, qty, price, w in zip(ids, rec.quantities, rec.prices, weights):
            rows.append((phase, m, n, rec.k, pid, float(qty), float(price), float(w),
                         rec.primal_res, rec.dual_res))
    return rows


@dataclass
class _SideMemory:
    """Warm-start data one side carries from round to round."""

    weights: np.ndarray
    admm_state: object = None
    rho: float = 1.0


def clear_side(side, arrays: PlayerArrays, target, memory: _SideMemory, params: DadpParams,
               m=1, relay=None, frozen_weights=False, trace=None) -> SideResult:
    """Weight loop on one side: ADMM to convergence, weight step, repeat.

    With ``frozen_weights`` a single ADMM run at the current weights is
    returned. ``memory`` is updated in place with the warm-start data.
    """
    if side == "demand":
        solve = demand_admm_solve
        args_of = lambda w: (arrays.alpha, arrays.beta, arrays.d_lo, arrays.d_hi, w, target)
        bracket_of = demand_weight_bracket
        ids = arrays.la_ids or [f"LA{i + 1}" for i in range(arrays.alpha.size)]
    else:
        solve = supply_admm_solve
        args_of = lambda w: (arrays.m, arrays.n, arrays.s_max, w, target)
        bracket_of = supply_weight_bracket
        ids = arrays.esp_ids or [f"ESP{j + 1}" for j in range(arrays.m.size)]
    base = params.admm
    record = params.record_trace
    controller = StepController(params.delta if params.delta is not None else 1.0 / target,
                                tol=params.weight_tol)
    w = memory.weights
    inner = 0
    max_inner = 0
    n = 0
    if side == "demand" and target <= arrays.d_lo.sum() * (1 + 1e-9):
        # Every LA is held at its floor, so the allocation says nothing about
        # the weights; updating them anyway sends floor-bound LAs to weight
        # zero, from which they absorb all supply in later rounds.
        frozen_weights = True
    converged = frozen_weights
    while True:
        n += 1
        if relay is not None:
            w = relay.weights(side, m, n, w, target)
        result, rho_used, wasted = _admm_with_retries(
            solve, args_of(w), base, memory.rho, memory.admm_state, relay, record)
        inner += result.iterations if record else result.state.k
        inner += wasted
        max_inner = max(max_inner, result.state.k)
        memory.admm_state = result.state
        memory.rho = _rescaled_rho(base, rho_used, result.price, target, params.rho_gain)
        if trace is not None and record:
            trace.extend(_trace_rows(side, m, n, ids, w, result.trace))
        if frozen_weights or converged:
            break
        bracket = bracket_of(w, result.quantities, target)
        controller.observe(bracket)
        w_new = normalize(w + controller.delta * bracket)
        step = np.abs(w_new - w).sum()
        w = w_new
        if step < params.weight_tol:
            # One more ADMM run so the reported allocation matches the weights.
            converged = True
            continue
        if n >= params.max_weight_rounds:
            logger.warning("%s weights did not settle in %d rounds", side, n)
            n += 1
            result, rho_used, wasted = _admm_with_retries(
                solve, args_of(w), base, memory.rho, memory.admm_state, relay, record)
            inner += (result.iterations if record else result.state.k) + wasted
            memory.admm_state = result.state
            break
    memory.weights = w
    if side == "demand":
        price = demand_price_estimate(result.quantities, result.prices, w, target,
                                      arrays.d_lo, arrays.d_hi)
    else:
        price = supply_price_estimate(result.quantities, result.prices, w, target, arrays.s_max)
    return SideResult(side, float(target), result, w.copy(), price, n, inner, converged,
                      max_inner)


def polish_side(sres: SideResult, arrays: PlayerArrays, memory: _SideMemory,
                params: DadpParams, m, relay=None, trace=None) -> SideResult:
    """Re-run one side's ADMM at ``params.polish_tol`` with weights unchanged.

    Falls back to the unpolished result if the tight run does not converge.
    """
    if params.polish_tol is None:
        return sres
    tight = replace(params.admm, eps_pri=params.polish_tol, eps_dual=params.polish_tol,
                    max_iter=max(params.admm.max_iter, 2000))
    if sres.side == "demand":
        solve = demand_admm_solve
        args = (arrays.alpha, arrays.beta, arrays.d_lo, arrays.d_hi, sres.weights, sres.target)
        ids = arrays.la_ids
    else:
        solve = supply_admm_solve
        args = (arrays.m, arrays.n, arrays.s_max, sres.weights, sres.target)
        ids = arrays.esp_ids
    n = sres.weight_rounds + 1
    if relay is not None:
        relay.weights(sres.side, m, n, sres.weights, sres.target)
    try:
        result, _, wasted = _admm_with_retries(solve, args, tight, memory.rho,
                                               memory.admm_state, relay, params.record_trace)
    except NonConvergenceError:
        logger.warning("%s polish run did not converge; keeping the loose allocation",
                       sres.side)
        return sres
    if trace is not None and params.record_trace:
        trace.extend(_trace_rows(sres.side, m, n, ids, sres.weights, result.trace))
    memory.admm_state = result.state
    if sres.side == "demand":
        price = demand_price_estimate(result.quantities, result.prices, sres.weights,
                                      sres.target, arrays.d_lo, arrays.d_hi)
    else:
        price = supply_price_estimate(result.quantities, result.prices, sres.weights,
                                      sres.target, arrays.s_max)
    return replace(sres, admm=result, price_estimate=price, weight_rounds=n,
                   inner_iterations=sres.inner_iterations + result.state.k + wasted)


# -------------------------------------------------------------------- driver

def total_bounds(arrays: PlayerArrays):
    """Range of totals the ETC may announce, from aggregate registration data."""
    cap = float(arrays.s_max.sum())
    floor = float(arrays.d_lo.sum())
    ceiling = float(arrays.d_hi.sum())
    if floor > cap:
        raise InfeasibleMarketError(
            f"demand floors {floor:.6g} exceed total supply capacity {cap:.6g}")
    lo = max(floor, 1e-3 * cap)
    hi = min(cap, ceiling)
    if lo > hi:
        lo = hi
    return lo, hi


def _build_outcome(scenario, arrays, dres: SideResult, sres: SideResult, m, weight_rounds,
                   inner, converged, max_inner):
    d = dres.quantities.copy()
    s = sres.quantities.copy()
    S = dres.target
    D = sres.target
    J = s.size
    bids = dres.admm.quotes.copy()
    offers = sres.admm.quotes.copy()
    p = dres.weights
    q = sres.weights
    omega = float(offers.sum() / ((J - 1) * D))
    mu = float(np.mean(dres.admm.prices))
    la_pay = p * bids
    esp_rev = q * omega * s
    values = np.array([value(la, max(float(x), 0.0)) for la, x in zip(scenario.las, d)])
    costs = np.array([cost(e, max(float(x), 0.0)) for e, x in zip(scenario.esps, s)])
    total_value = math.fsum(values)
    total_cost = math.fsum(costs)
    return MarketOutcome(
        la_ids=[la.id for la in scenario.las], esp_ids=[e.id for e in scenario.esps],
        demands=d, supplies=s, bids=bids, offers=offers, p=p.copy(), q=q.copy(),
        mu=mu, omega=omega, la_payments=la_pay, esp_revenues=esp_rev,
        la_utilities=values - la_pay, esp_utilities=esp_rev - costs,
        value=total_value, cost=total_cost, sw=total_value - total_cost,
        outer_iterations=m, weight_rounds=weight_rounds, inner_iterations=inner,
        converged=converged, total_supply_target=S, total_demand_target=D,
        demand_prices=dres.admm.prices.copy(), supply_prices=sres.admm.prices.copy(),
        max_inner_iterations=max_inner, scene_id=scenario.scene_id,
        market_kind=scenario.market_kind.value,
    )


def run_dadp(scenario: Scenario, params: DadpParams = DadpParams(), relay=None,
             frozen_weights=False) -> MarketOutcome:
    """Clear one market with the discriminatory double auction.

    Args:
        scenario: validated market; needs I > 1 and J > 2.
        params: algorithm settings.
        relay: optional message relay; when given, every ETC/player exchange
            passes through it and players act on what they receive.
        frozen_weights: keep the uniform initial weights (Kelly mechanism).

    Raises:
        InfeasibleMarketError: demand floors exceed supply capacity.
        NonConvergenceError: the outer loop hit ``max_outer``; ``best``
            holds the round with the smallest energy mismatch.
    """
    scenario.validate()
    arrays = PlayerArrays.from_scenario(scenario)
    lo, hi = total_bounds(arrays)
    cap = float(arrays.s_max.sum())
    eps1 = params.eps1 if params.eps1 is not None else 1e-3 * cap
    first = params.initial_supply if params.initial_supply is not None else 0.5 * cap
    first = min(max(first, lo), hi)
    if params.initial_supply is None and first <= lo * (1 + 1e-9) and hi > lo:
        # At the floor total every LA is pinned and the demand price is
        # uninformative; open the first round midway into the range.
        first = lo + 0.5 * (min(hi, cap) - lo)
    if not first > 0:
        raise InfeasibleMarketError("no positive total can be traded")
    I, J = arrays.alpha.size, arrays.m.size
    state = AtcState(chi=params.chi0, gamma=params.gamma0, beta_growth=params.beta_growth,
                     eps1=eps1, eps2=params.eps2, estimated_total_supply=first,
                     total_lo=lo, total_hi=hi, bracket_lo=lo, bracket_hi=hi)
    demand_mem = _SideMemory(np.full(I, 1.0 / I), rho=params.admm.rho)
    supply_mem = _SideMemory(np.full(J, 1.0 / J), rho=params.admm.rho)
    trace = [] if params.record_trace else None
    history = []
    previous = None
    best = None
    weight_rounds = inner = max_inner = 0
    for m in range(1, params.max_outer + 1):
        if m > 1:
            state = replace(state, estimated_total_supply=next_supply_target(state))
        dres = clear_side("demand", arrays, state.estimated_total_supply, demand_mem, params,
                          m, relay, frozen_weights, trace)
        state = etc_estimate_exchange(state, dres)
        if relay is not None:
            relay.exchange(m, "estimated_total_demand", state.estimated_total_demand)
        sres = clear_side("supply", arrays, state.estimated_total_demand, supply_mem, params,
                          m, relay, frozen_weights, trace)
        state = etc_estimate_exchange(state, sres)
        if params.warm_chi and not state.chi_initialized:
            state = replace(state, chi=-0.5 * (dres.price_estimate + sres.price_estimate),
                            chi_initialized=True)
        weight_rounds += dres.weight_rounds + sres.weight_rounds
        inner += dres.inner_iterations + sres.inner_iterations
        max_inner = max(max_inner, dres.max_inner, sres.max_inner)
        outcome = _build_outcome(scenario, arrays, dres, sres, m, weight_rounds, inner, False,
                                 max_inner)
        history.append({
            "m": m, "total_supply_target": dres.target, "total_demand": outcome.total_demand,
            "total_supply": outcome.total_supply, "demand_price": dres.price_estimate,
            "supply_price": sres.price_estimate, "chi": state.chi, "gamma": state.gamma,
            "sw": outcome.sw,
        })
        if best is None or abs(outcome.mismatch) < abs(best.mismatch):
            best = outcome
        if atc_converged(outcome, previous, state):
            pd = polish_side(dres, arrays, demand_mem, params, m, relay, trace)
            ps = polish_side(sres, arrays, supply_mem, params, m, relay, trace)
            weight_rounds += (pd.weight_rounds - dres.weight_rounds
                              + ps.weight_rounds - sres.weight_rounds)
            inner += (pd.inner_iterations - dres.inner_iterations
                      + ps.inner_iterations - sres.inner_iterations)
            outcome = _build_outcome(scenario, arrays, pd, ps, m, weight_rounds, inner, False,
                                     max_inner)
            outcome.converged = True
            outcome.atc_history = history
            outcome.trace = trace if trace is not None else []
            return outcome
        state = update_atc_multipliers(state, outcome.total_supply, outcome.total_demand)
        previous = outcome
    best.atc_history = history
    best.trace = trace if trace is not None else []
    raise NonConvergenceError(
        f"outer loop did not converge in {params.max_outer} rounds", trace=history, best=best)
