"""Seeded random market instances."""
from __future__ import annotations

import numpy as np

from .market_model import (
    EnergyServiceProvider,
    LoadAggregator,
    MarketKind,
    Scenario,
    ThermalEnvelope,
    heat_demand_bounds,
)

# Log-uniform coefficient ranges.
ALPHA_RANGE = (5.0, 50.0)
BETA_RANGE = (0.1, 1.0)
M_RANGE = (0.1, 1.0)
N_RANGE = (0.5, 5.0)
S_MAX_RANGE = (5.0, 30.0)


def _log_uniform(rng, bounds, size):
    lo, hi = bounds
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size))


def _thermal(rng):
    t_min = rng.uniform(18.0, 20.0)
    t_max = t_min + rng.uniform(2.0, 4.0)
    return ThermalEnvelope(
        R=float(rng.uniform(1.0, 3.0)), C=float(rng.uniform(0.5, 2.0)),
        T_in_min=float(t_min), T_in_max=float(t_max),
        T_in_current=float(rng.uniform(t_min, t_max)),
        T_out=float(rng.uniform(-5.0, 10.0)), dt=1.0)


def random_scenario(rng, n_las, n_esps, market="electricity", floors=False,
                    scene_id="") -> Scenario:
    """Draw one valid instance.

    Coefficients are log-uniform over the module-level ranges. With
    ``floors`` about half of the LAs get a demand floor below a third of
    their satiation point, scaled back if the floors would exceed capacity.
    Heat instances give every LA a thermal envelope and size its value
    curve so the envelope's minimum heat stays below satiation.
    """
    rng = np.random.default_rng(rng)
    kind = MarketKind.parse(market)
    alpha = _log_uniform(rng, ALPHA_RANGE, n_las)
    beta = _log_uniform(rng, BETA_RANGE, n_las)
    m = _log_uniform(rng, M_RANGE, n_esps)
    n = _log_uniform(rng, N_RANGE, n_esps)
    s_max = _log_uniform(rng, S_MAX_RANGE, n_esps)
    d_min = np.zeros(n_las)
    if floors:
        sat = alpha / (2 * beta)
        d_min = np.where(rng.random(n_las) < 0.5, rng.uniform(0.0, 0.3, n_las) * sat, 0.0)
        if d_min.sum() > 0.8 * s_max.sum():
            d_min *= 0.8 * s_max.sum() / d_min.sum()
    thermals = [None] * n_las
    if kind is MarketKind.HEAT:
        for i in range(n_las):
            env = _thermal(rng)
            p_min, p_max = heat_demand_bounds(env)
            if d_min[i] > p_max * env.dt:
                # Keep a floor that the envelope would override inside it.
                d_min[i] = max(0.5 * (p_min + p_max) * env.dt, 0.0)
            # Keep the comfort floor well inside the value curve.
            low = max(p_min * env.dt, d_min[i], 0.0)
            if low >= 0.5 * alpha[i] / (2 * beta[i]):
                alpha[i] = 4.0 * beta[i] * low + 1.0
            thermals[i] = env
        cap = s_max.sum()
        floor = sum(max(heat_demand_bounds(t)[0] * t.dt, 0.0) for t in thermals) + d_min.sum()
        if floor > 0.8 * cap:
            s_max *= floor / (0.8 * cap)
    las = [LoadAggregator(f"LA{i + 1}", float(alpha[i]), float(beta[i]), float(d_min[i]),
                          thermals[i]) for i in range(n_las)]
    esps = [EnergyServiceProvider(f"ESP{j + 1}", float(m[j]), float(n[j]), float(s_max[j]))
            for j in range(n_esps)]
    return Scenario(kind, las, esps, scene_id).validate()


def random_instances(seed, count, las_range=(2, 6), esps_range=(3, 6), floors=False,
                     market="electricity"):
    """``count`` instances with player counts drawn uniformly from the ranges."""
    rng = np.random.default_rng(seed)
    out = []
    for idx in range(count):
        n_las = int(rng.integers(las_range[0], las_range[1] + 1))
        n_esps = int(rng.integers(esps_range[0], esps_range[1] + 1))
        out.append(random_scenario(rng, n_las, n_esps, market, floors, scene_id=f"R{idx + 1}"))
    return out
