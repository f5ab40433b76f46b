"""Discriminatory price-weight control.

The ETC nudges each player's weight toward the value at which the Nash
equilibrium of the weighted game coincides with the welfare-optimal split:
demand weights proportional to ``S - d_i``, supply weights proportional to
``(J - 2) D + s_j``. Weights are kept L1-normalised.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

WEIGHT_FLOOR = 1e-8


@dataclass(frozen=True)
class PriceWeights:
    values: np.ndarray
    side: str  # "demand" or "supply"

    def __post_init__(self):
        if self.side not in ("demand", "supply"):
            raise ValueError(f"unknown side {self.side!r}")
        vals = np.asarray(self.values, dtype=float)
        if np.any(vals <= 0):
            raise DomainError("price weights must be strictly positive")
        object.__setattr__(self, "values", vals)

    @classmethod
    def uniform(cls, n, side):
        return cls(np.full(n, 1.0 / n), side)

    def normalized(self) -> "PriceWeights":
        return PriceWeights(normalize(self.values), self.side)

    def __len__(self):
        return self.values.size


def normalize(values, floor=WEIGHT_FLOOR):
    """L1-normalise with every entry held at or above ``floor``.

    Returns ``max(v / c, floor)`` with ``c`` chosen so the entries sum to
    one. Entries that already satisfy this come back unchanged, so the
    operation is idempotent.
    """
    v = np.asarray(values, dtype=float)
    if v.size * floor >= 1.0:
        raise DomainError("weight floor too large for the number of players")
    clamped = v <= 0
    while True:
        free = v[~clamped].sum()
        if free <= 0:
            return np.full(v.size, 1.0 / v.size)
        scale = free / (1.0 - floor * clamped.sum())
        now = clamped | (v / scale < floor)
        if np.array_equal(now, clamped):
            return np.where(clamped, floor, v / scale)
        clamped = now


def demand_weight_bracket(p, d, total_supply):
    p = np.asarray(p, dtype=float)
    I = p.size
    return (total_supply - np.asarray(d, dtype=float)) / (I - 1) - p * total_supply / p.sum()


def supply_weight_bracket(q, s, total_demand):
    q = np.asarray(q, dtype=float)
    J = q.size
    return (((J - 2) * total_demand + np.asarray(s, dtype=float)) / (J - 1) ** 2
            - q * total_demand / q.sum())


def update_demand_weights(p: PriceWeights, d, total_supply, delta) -> PriceWeights:
    """One weight step for the LAs, floor-clamped and L1-normalised."""
    if len(p) < 2:
        raise DomainError("demand weights need I > 1")
    if delta < 0:
        raise DomainError("step size must be non-negative")
    raw = p.values + delta * demand_weight_bracket(p.values, d, total_supply)
    return PriceWeights(normalize(raw), "demand")


def update_supply_weights(q: PriceWeights, s, total_demand, delta) -> PriceWeights:
    """One weight step for the ESPs, floor-clamped and L1-normalised."""
    if len(q) <= 2:
        raise DomainError("supply weights need J > 2")
    if delta < 0:
        raise DomainError("step size must be non-negative")
    raw = q.values + delta * supply_weight_bracket(q.values, s, total_demand)
    return PriceWeights(normalize(raw), "supply")


def weight_fixed_point_residual(weights: PriceWeights, allocation, total_opposite):
    """Distance of each weight share from its equilibrium share.

    Demand: ``p_i/|p|_1 - (S - d_i)/((I - 1) S)``; supply:
    ``q_j/|q|_1 - ((J - 2) D + s_j)/((J - 1)^2 D)``. Both vanish exactly at
    the fixed point of the weight updates.
    """
    w = weights.values
    share = w / w.sum()
    x = np.asarray(allocation, dtype=float)
    n = w.size
    if weights.side == "demand":
        target = (total_opposite - x) / ((n - 1) * total_opposite)
    else:
        target = ((n - 2) * total_opposite + x) / ((n - 1) ** 2 * total_opposite)
    return share - target


class StepController:
    """Step size with halving when the update bracket keeps flipping sign.

    A round counts as a flip when any player's bracket changes sign while
    the step it would produce is above ``tol``; three consecutive flips
    halve the step.
    """

    def __init__(self, delta, tol=1e-4, patience=3):
        self.delta = float(delta)
        self.tol = tol
        self.patience = patience
        self._last_sign = None
        self._flips = 0
        self.halvings = 0

    def observe(self, bracket):
        sign = np.sign(bracket)
        if (self._last_sign is not None and self.delta * np.abs(bracket).sum() > self.tol
                and np.any(sign * self._last_sign < 0)):
            self._flips += 1
        else:
            self._flips = 0
        self._last_sign = sign
        if self._flips >= self.patience:
            self.delta *= 0.5
            self.halvings += 1
            self._flips = 0
