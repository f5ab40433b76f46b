"""Player models, value/cost curves and scenario definitions.

Load aggregators (LAs) hold concave quadratic value curves, energy service
providers (ESPs) hold convex quadratic cost curves. The ``modified_*``
functions are the price-weighted potentials whose maximisers are the Nash
equilibria of the bidding games on each side of the market.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DegenerateMarketError,
    DomainError,
    InfeasibleMarketError,
    InvalidOfferError,
    ScenarioValidationError,
)

logger = logging.getLogger(__name__)


class MarketKind(str, enum.Enum):
    ELECTRICITY = "electricity"
    HEAT = "heat"

    @classmethod
    def parse(cls, text) -> "MarketKind":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower()
        if key in ("power", "electricity", "elec"):
            return cls.ELECTRICITY
        if key == "heat":
            return cls.HEAT
        raise ValueError(f"unknown market kind {text!r}")


@dataclass(frozen=True)
class ThermalEnvelope:
    """First-order building thermal model for one LA.

    Attributes:
        R: shell thermal resistance (degC/MW).
        C: air heat capacity (MWh/degC).
        T_in_min, T_in_max: comfort band (degC).
        T_in_current: indoor temperature at the start of the period (degC).
        T_out: outdoor temperature during the period (degC).
        dt: period length (h).
    """

    R: float
    C: float
    T_in_min: float
    T_in_max: float
    T_in_current: float
    T_out: float
    dt: float = 1.0

    def __post_init__(self):
        if self.R <= 0 or self.C <= 0 or self.dt <= 0:
            raise ScenarioValidationError(
                "thermal envelope needs R > 0, C > 0, dt > 0", "thermal_positive")
        if not self.T_in_min <= self.T_in_current <= self.T_in_max:
            raise ScenarioValidationError(
                "thermal envelope needs T_in_min <= T_in_current <= T_in_max",
                "thermal_band")

    @property
    def tau(self) -> float:
        return self.R * self.C


@dataclass(frozen=True)
class LoadAggregator:
    """Demand-side player with value ``alpha*d - beta*d**2``."""

    id: str
    alpha: float
    beta: float
    d_min: float = 0.0
    thermal: Optional[ThermalEnvelope] = None

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ScenarioValidationError(
                f"LA {self.id}: alpha and beta must be positive", "value_concave")
        if self.d_min < 0:
            raise ScenarioValidationError(
                f"LA {self.id}: d_min must be non-negative", "d_min_nonneg")

    @property
    def satiation(self) -> float:
        """Demand at which marginal value reaches zero."""
        return self.alpha / (2.0 * self.beta)


@dataclass(frozen=True)
class EnergyServiceProvider:
    """Supply-side player with cost ``m*s**2 + n*s`` for ``s > 0``."""

    id: str
    m: float
    n: float
    s_max: float

    def __post_init__(self):
        if not self.m > 0:
            raise ScenarioValidationError(
                f"ESP {self.id}: m must be positive", "cost_convex")
        if self.n < 0:
            raise ScenarioValidationError(
                f"ESP {self.id}: n must be non-negative", "cost_linear_nonneg")
        if not self.s_max > 0:
            raise ScenarioValidationError(
                f"ESP {self.id}: s_max must be positive", "s_max_positive")


@dataclass(frozen=True)
class Scenario:
    """One single-period market: the LAs and ESPs taking part in it."""

    market_kind: MarketKind
    las: tuple
    esps: tuple
    scene_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "market_kind", MarketKind.parse(self.market_kind))
        object.__setattr__(self, "las", tuple(self.las))
        object.__setattr__(self, "esps", tuple(self.esps))

    @property
    def n_las(self) -> int:
        return len(self.las)

    @property
    def n_esps(self) -> int:
        return len(self.esps)

    def demand_bounds(self):
        """Per-LA demand interval ``(lo, hi)`` as arrays (MWh).

        In the heat market the interval comes from the thermal envelope,
        combined with any declared floor.
        """
        lo = np.array([la.d_min for la in self.las], dtype=float)
        hi = np.full(len(self.las), np.inf)
        if self.market_kind is MarketKind.HEAT:
            for i, la in enumerate(self.las):
                if la.thermal is None:
                    continue
                p_min, p_max = heat_demand_bounds(la.thermal)
                lo[i] = max(lo[i], p_min * la.thermal.dt, 0.0)
                hi[i] = max(p_max * la.thermal.dt, 0.0)
        return lo, hi

    def supply_caps(self):
        return np.array([e.s_max for e in self.esps], dtype=float)

    def validate(self, require_game=True) -> "Scenario":
        """Check structural invariants; returns self for chaining.

        ``require_game`` enforces the player counts the bidding games need
        (at least two LAs, more than two ESPs). Centralised clearing does
        not need them.
        """
        ids = [la.id for la in self.las] + [e.id for e in self.esps]
        if len(set(ids)) != len(ids):
            raise ScenarioValidationError("player ids must be unique", "unique_ids")
        if require_game:
            if self.n_esps <= 2:
                raise ScenarioValidationError(
                    f"the supply game needs more than two ESPs (J > 2), got J = {self.n_esps}",
                    "min_esps")
            if self.n_las <= 1:
                raise ScenarioValidationError(
                    f"number of LAs must satisfy I > 1, got I = {self.n_las}", "min_las")
        if self.market_kind is MarketKind.HEAT:
            for la in self.las:
                if la.thermal is None:
                    raise ScenarioValidationError(
                        f"heat market: LA {la.id} has no thermal envelope", "heat_thermal")
        lo, hi = self.demand_bounds()
        for la, low, high in zip(self.las, lo, hi):
            if low >= la.satiation:
                raise ScenarioValidationError(
                    f"LA {la.id}: demand floor {low:g} is beyond satiation "
                    f"{la.satiation:g}; marginal value would be negative",
                    "marginal_value_nonneg")
            if high < low:
                raise ScenarioValidationError(
                    f"LA {la.id}: empty demand interval [{low:g}, {high:g}]",
                    "demand_interval")
        return self

    def check_feasible(self):
        lo, _ = self.demand_bounds()
        cap = self.supply_caps().sum()
        if lo.sum() > cap:
            raise InfeasibleMarketError(
                f"demand floors {lo.sum():g} MWh exceed supply capacity {cap:g} MWh")

    def subset(self, la_ids=None, esp_ids=None, scene_id=None) -> "Scenario":
        las = self.las if la_ids is None else tuple(la for la in self.las if la.id in set(la_ids))
        esps = self.esps if esp_ids is None else tuple(e for e in self.esps if e.id in set(esp_ids))
        return Scenario(self.market_kind, las, esps, self.scene_id if scene_id is None else scene_id)


def value(la: LoadAggregator, d: float) -> float:
    if d < 0:
        raise DomainError(f"demand must be non-negative, got {d}")
    return la.alpha * d - la.beta * d * d


def marginal_value(la: LoadAggregator, d: float) -> float:
    return la.alpha - 2.0 * la.beta * d


def cost(esp: EnergyServiceProvider, s: float) -> float:
    if s <= 0:
        return 0.0
    return esp.m * s * s + esp.n * s


def marginal_cost(esp: EnergyServiceProvider, s: float) -> float:
    return 2.0 * esp.m * max(s, 0.0) + esp.n


def modified_value(la: LoadAggregator, d: float, p: float, total_supply: float) -> float:
    """Price-weighted value potential of an LA.

    Integral over ``[0, d]`` of ``v'(z) (1 - z/S) / p``, in closed form
    for the quadratic value curve.
    """
    if p <= 0:
        raise DomainError(f"price weight must be positive, got {p}")
    if total_supply <= 0:
        raise DomainError(f"total supply must be positive, got {total_supply}")
    if d < 0:
        raise DomainError(f"demand must be non-negative, got {d}")
    a, b, S = la.alpha, la.beta, total_supply
    return (a * d - b * d ** 2 - a * d ** 2 / (2 * S) + (2 * b / 3) * d ** 3 / S) / p


def modified_cost(esp: EnergyServiceProvider, s: float, q: float,
                  total_demand: float, J: int) -> float:
    """Price-weighted cost potential of an ESP.

    Integral over ``[0, s]`` of ``c'(z) (1 + z/K) / q`` with
    ``K = (J - 2) * total_demand``.
    """
    if J <= 2:
        raise DomainError(f"supply game needs J > 2, got J = {J}")
    if q <= 0:
        raise DomainError(f"price weight must be positive, got {q}")
    if total_demand <= 0:
        raise DomainError(f"total demand must be positive, got {total_demand}")
    if s < 0:
        raise DomainError(f"supply must be non-negative, got {s}")
    m, n = esp.m, esp.n
    K = (J - 2) * total_demand
    return (m * s ** 2 + n * s + (2 * m / 3) * s ** 3 / K + n * s ** 2 / (2 * K)) / q


def heat_demand_bounds(env: ThermalEnvelope):
    """Heat-power range keeping the next-period indoor temperature in band.

    Returns ``(P_min, P_max)`` in MW.
    """
    decay = math.exp(-env.dt / env.tau)

    def power(target):
        return ((target - env.T_in_current * decay) / (1.0 - decay) - env.T_out) / env.R

    return power(env.T_in_min), power(env.T_in_max)


def demand_allocation(bids: Sequence[float], total_supply: float) -> np.ndarray:
    """Proportional split of the total supply by bid size."""
    b = np.asarray(bids, dtype=float)
    if total_supply <= 0:
        raise DomainError(f"total supply must be positive, got {total_supply}")
    if np.any(b < 0):
        raise DomainError("bids must be non-negative")
    total = b.sum()
    if total <= 0:
        raise DegenerateMarketError("all bids are zero")
    return b / total * total_supply


def supply_allocation(offers: Sequence[float], total_demand: float):
    """Clearing-price estimate and supply split implied by ESP offers.

    Returns ``(omega, s)``. A large enough offer drives the affine supply
    formula negative; such entries are clamped to zero and the excess is
    taken back proportionally from the positive suppliers.
    """
    a = np.asarray(offers, dtype=float)
    J = a.size
    if J <= 2:
        raise DomainError(f"supply allocation needs J > 2 offers, got {J}")
    if np.any(a <= 0):
        raise InvalidOfferError("every offer must be strictly positive")
    if total_demand <= 0:
        raise DomainError(f"total demand must be positive, got {total_demand}")
    total = a.sum()
    omega = total / ((J - 1) * total_demand)
    s = total_demand - a / total * (J - 1) * total_demand
    if np.any(s < 0):
        logger.warning("supply allocation: %d offer(s) imply negative supply; clamping",
                       int(np.sum(s < 0)))
        s = np.where(s > 0, s, 0.0)
        s *= total_demand / s.sum()
    return omega, s


def total_value(las, d) -> float:
    return math.fsum(value(la, float(x)) for la, x in zip(las, d))


def total_cost(esps, s) -> float:
    return math.fsum(cost(e, float(x)) for e, x in zip(esps, s))


@dataclass
class PlayerArrays:
    """Coefficient arrays extracted once for the vectorised inner loops."""

    alpha: np.ndarray
    beta: np.ndarray
    d_lo: np.ndarray
    d_hi: np.ndarray
    m: np.ndarray
    n: np.ndarray
    s_max: np.ndarray
    la_ids: list = field(default_factory=list)
    esp_ids: list = field(default_factory=list)

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "PlayerArrays":
        lo, hi = scenario.demand_bounds()
        return cls(
            alpha=np.array([la.alpha for la in scenario.las], dtype=float),
            beta=np.array([la.beta for la in scenario.las], dtype=float),
            d_lo=lo,
            d_hi=hi,
            m=np.array([e.m for e in scenario.esps], dtype=float),
            n=np.array([e.n for e in scenario.esps], dtype=float),
            s_max=scenario.supply_caps(),
            la_ids=[la.id for la in scenario.las],
            esp_ids=[e.id for e in scenario.esps],
        )
