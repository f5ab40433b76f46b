"""ADMM-based distributed bidding (ADBA) on both sides of the market.

Each iteration the ETC sends every player its consensus estimate and shadow
price; players answer with a proximal best response on their price-weighted
potential and a one-dimensional quote (bid or offer). The ETC then projects
the responses onto the total-energy hyperplane and takes a dual step.

Sign conventions: on the demand side the Lagrangian carries
``-mu.(d - z)`` and the dual step is ``mu + rho (d - z')``. On the supply
side it carries ``+omega.(s - x)``; ``omega`` is a price paid to the ESPs,
so the dual step is ``omega - rho (s - x')`` (it falls on oversupply).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .errors import DomainError, NonConvergenceError
from .market_model import EnergyServiceProvider, LoadAggregator


@dataclass(frozen=True)
class AdmmParams:
    rho: float = 1.0
    eps_pri: float = 1e-4
    eps_dual: float = 1e-4
    max_iter: int = 500

    def __post_init__(self):
        if not self.rho > 0:
            raise DomainError("rho must be positive")


@dataclass(frozen=True)
class DemandAdmmState:
    """ETC-side state of the demand ADMM: estimates ``z`` and prices ``mu``."""

    z: np.ndarray
    mu: np.ndarray
    rho: float = 1.0
    k: int = 0
    eps_pri: float = 1e-4
    eps_dual: float = 1e-4
    primal_res: float = math.inf
    dual_res: float = math.inf

    @classmethod
    def initial(cls, n_players, total_supply, params: AdmmParams = AdmmParams()):
        return cls(z=np.full(n_players, total_supply / n_players),
                   mu=np.zeros(n_players), rho=params.rho,
                   eps_pri=params.eps_pri, eps_dual=params.eps_dual)


@dataclass(frozen=True)
class SupplyAdmmState:
    """ETC-side state of the supply ADMM: estimates ``x`` and prices ``omega``."""

    x: np.ndarray
    omega: np.ndarray
    rho: float = 1.0
    k: int = 0
    eps_pri: float = 1e-4
    eps_dual: float = 1e-4
    primal_res: float = math.inf
    dual_res: float = math.inf

    @classmethod
    def initial(cls, n_players, total_demand, params: AdmmParams = AdmmParams()):
        return cls(x=np.full(n_players, total_demand / n_players),
                   omega=np.zeros(n_players), rho=params.rho,
                   eps_pri=params.eps_pri, eps_dual=params.eps_dual)


@dataclass(frozen=True)
class Bid:
    player_id: str
    b: float


@dataclass(frozen=True)
class Offer:
    player_id: str
    a: float


class TraceRecord(NamedTuple):
    k: int
    primal_res: float
    dual_res: float
    quantities: np.ndarray
    prices: np.ndarray


@dataclass
class AdmmResult:
    """Converged output of one ADBA run.

    ``quotes`` holds bids (demand side) or offers (supply side);
    ``prices`` the per-player shadow prices after the last ETC update.
    """

    quantities: np.ndarray
    quotes: np.ndarray
    prices: np.ndarray
    state: object
    trace: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def price(self) -> float:
        return float(np.mean(self.prices))


# ---------------------------------------------------------------- demand side

def _la_objective(alpha, beta, p, S, mu, z, rho, d):
    vhat = (alpha * d - beta * d ** 2 - alpha * d ** 2 / (2 * S)
            + (2 * beta / 3) * d ** 3 / S) / p
    return vhat - mu * d - 0.5 * rho * (d - z) ** 2


def la_best_responses(alpha, beta, lo, hi, p, z, mu, rho, total_supply):
    """Vectorised LA best responses over ``[lo, min(hi, S)]``.

    Stationarity of the proximal objective is a quadratic in ``d``. Its
    smaller root is the interior maximiser; past satiation the objective may
    turn up again, so the upper endpoint is kept as a second candidate.
    """
    S = total_supply
    upper = np.minimum(hi, S)
    A = 2.0 * beta / (p * S)
    B = alpha / (p * S) + 2.0 * beta / p + rho
    C = alpha / p - mu + rho * z
    disc = B * B - 4.0 * A * C
    with np.errstate(invalid="ignore"):
        root = 2.0 * C / (B + np.sqrt(disc))
    root = np.where(disc >= 0, root, upper)
    cand = np.minimum(np.maximum(root, lo), upper)
    f_cand = _la_objective(alpha, beta, p, S, mu, z, rho, cand)
    f_up = _la_objective(alpha, beta, p, S, mu, z, rho, upper)
    return np.where(f_up > f_cand, upper, cand)


def la_best_response(la: LoadAggregator, p_i, z_i, mu_i, rho, total_supply,
                     d_lo=None, d_hi=None) -> float:
    """Argmax over ``d`` of ``vhat(d, p_i) - mu_i d - rho/2 (d - z_i)^2``."""
    if p_i <= 0 or total_supply <= 0:
        raise DomainError("price weight and total supply must be positive")
    lo = la.d_min if d_lo is None else d_lo
    hi = math.inf if d_hi is None else d_hi
    out = la_best_responses(np.array([la.alpha]), np.array([la.beta]), np.array([lo]),
                            np.array([hi]), np.array([p_i]), np.array([z_i]),
                            np.array([mu_i]), rho, total_supply)
    return float(out[0])


def etc_demand_update(d, state: DemandAdmmState, total_supply) -> DemandAdmmState:
    """Project ``d + mu/rho`` onto ``sum(z) = S`` and take the dual step."""
    d = np.asarray(d, dtype=float)
    rho = state.rho
    w = d + state.mu / rho
    z_new = w + (total_supply - w.sum()) / d.size
    mu_new = state.mu + rho * (d - z_new)
    primal = np.abs(d - z_new).sum() / total_supply
    dual = rho * np.abs(state.z - z_new).sum() / total_supply
    return replace(state, z=z_new, mu=mu_new, k=state.k + 1,
                   primal_res=float(primal), dual_res=float(dual))


def _reproject(vec, total):
    return vec + (total - vec.sum()) / vec.size


def demand_admm_solve(alpha, beta, lo, hi, p, total_supply, params: AdmmParams = AdmmParams(),
                      state: Optional[DemandAdmmState] = None, relay=None,
                      record_trace=True) -> AdmmResult:
    """Run demand-side ADBA to its stopping rule.

    Coefficient arrays are passed directly (see ``PlayerArrays``); a prior
    state warm-starts the run and is re-projected onto the new total.
    ``relay``, when given, carries every signal and response through a
    message bus and the players act on what they received.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0):
        raise DomainError("price weights must be positive")
    S = float(total_supply)
    I = p.size
    if state is None:
        state = DemandAdmmState.initial(I, S, params)
    else:
        state = replace(state, z=_reproject(state.z, S), rho=params.rho, k=0,
                        eps_pri=params.eps_pri, eps_dual=params.eps_dual)
    trace = []
    for _ in range(params.max_iter):
        z, mu = state.z, state.mu
        if relay is not None:
            z, mu = relay.signals("demand", state.k, z, mu)
        d = la_best_responses(alpha, beta, lo, hi, p, z, mu, params.rho, S)
        bids = mu * d
        if relay is not None:
            d, bids = relay.responses("demand", state.k, d, bids)
        state = etc_demand_update(d, state, S)
        if record_trace:
            trace.append(TraceRecord(state.k, state.primal_res, state.dual_res, d, state.mu))
        if state.primal_res < params.eps_pri and state.dual_res < params.eps_dual:
            return AdmmResult(d, bids, state.mu, state, trace)
    raise NonConvergenceError(
        f"demand ADMM did not converge in {params.max_iter} iterations", trace=trace)


# ---------------------------------------------------------------- supply side

def esp_best_responses(m, n, cap, q, x, omega, rho, total_demand, J):
    """Vectorised ESP best responses over ``[0, min(cap, D)]``.

    The objective is strictly concave, so stationarity has exactly one
    relevant root (the larger one), taken in cancellation-free form.
    """
    D = total_demand
    K = (J - 2) * D
    a = 2.0 * m / (q * K)
    b = 2.0 * m / q + n / (q * K) + rho
    c = n / q - rho * x - omega
    root = -2.0 * c / (b + np.sqrt(b * b - 4.0 * a * np.minimum(c, 0.0)))
    return np.minimum(np.maximum(root, 0.0), np.minimum(cap, D))


def esp_best_response(esp: EnergyServiceProvider, q_j, x_j, omega_j, rho, total_demand, J,
                      s_cap=None) -> float:
    """Argmax over ``s`` of ``-chat(s, q_j) + omega_j s - rho/2 (s - x_j)^2``."""
    if q_j <= 0 or total_demand <= 0:
        raise DomainError("price weight and total demand must be positive")
    if J <= 2:
        raise DomainError(f"supply game needs J > 2, got {J}")
    cap = esp.s_max if s_cap is None else s_cap
    out = esp_best_responses(np.array([esp.m]), np.array([esp.n]), np.array([cap]),
                             np.array([q_j]), np.array([x_j]), np.array([omega_j]),
                             rho, total_demand, J)
    return float(out[0])


def etc_supply_update(s, state: SupplyAdmmState, total_demand) -> SupplyAdmmState:
    """Project ``s - omega/rho`` onto ``sum(x) = D`` and take the dual step."""
    s = np.asarray(s, dtype=float)
    rho = state.rho
    w = s - state.omega / rho
    x_new = w + (total_demand - w.sum()) / s.size
    omega_new = state.omega - rho * (s - x_new)
    primal = np.abs(s - x_new).sum() / total_demand
    dual = rho * np.abs(state.x - x_new).sum() / total_demand
    return replace(state, x=x_new, omega=omega_new, k=state.k + 1,
                   primal_res=float(primal), dual_res=float(dual))


def supply_admm_solve(m, n, cap, q, total_demand, params: AdmmParams = AdmmParams(),
                      state: Optional[SupplyAdmmState] = None, relay=None,
                      record_trace=True) -> AdmmResult:
    """Run supply-side ADBA to its stopping rule (see ``demand_admm_solve``)."""
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0):
        raise DomainError("price weights must be positive")
    J = q.size
    if J <= 2:
        raise DomainError(f"supply game needs J > 2, got {J}")
    D = float(total_demand)
    if state is None:
        state = SupplyAdmmState.initial(J, D, params)
    else:
        state = replace(state, x=_reproject(state.x, D), rho=params.rho, k=0,
                        eps_pri=params.eps_pri, eps_dual=params.eps_dual)
    trace = []
    for _ in range(params.max_iter):
        x, omega = state.x, state.omega
        if relay is not None:
            x, omega = relay.signals("supply", state.k, x, omega)
        s = esp_best_responses(m, n, cap, q, x, omega, params.rho, D, J)
        offers = omega * (D - s)
        if relay is not None:
            s, offers = relay.responses("supply", state.k, s, offers)
        state = etc_supply_update(s, state, D)
        if record_trace:
            trace.append(TraceRecord(state.k, state.primal_res, state.dual_res, s, state.omega))
        if state.primal_res < params.eps_pri and state.dual_res < params.eps_dual:
            return AdmmResult(s, offers, state.omega, state, trace)
    raise NonConvergenceError(
        f"supply ADMM did not converge in {params.max_iter} iterations", trace=trace)


def make_bids(ids, bids):
    return [Bid(i, float(b)) for i, b in zip(ids, bids)]


def make_offers(ids, offers):
    return [Offer(j, float(a)) for j, a in zip(ids, offers)]
