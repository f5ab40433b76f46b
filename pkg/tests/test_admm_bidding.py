import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import grid_argmax
from dadp.admm_bidding import (
    AdmmParams,
    DemandAdmmState,
    SupplyAdmmState,
    demand_admm_solve,
    esp_best_response,
    etc_demand_update,
    etc_supply_update,
    la_best_response,
    supply_admm_solve,
)
from dadp.errors import DomainError, NonConvergenceError
from dadp.market_model import (
    EnergyServiceProvider,
    LoadAggregator,
    demand_allocation,
    modified_cost,
    modified_value,
    supply_allocation,
)

TIGHT = AdmmParams(eps_pri=1e-9, eps_dual=1e-9, max_iter=5000)


def la_objective(agent, p, z, mu, rho, S):
    def f(d):
        return np.array([modified_value(agent, x, p, S) for x in np.atleast_1d(d)]) \
            - mu * d - 0.5 * rho * (d - z) ** 2
    return f


def esp_objective(agent, q, x, omega, rho, D, J):
    def f(s):
        return -np.array([modified_cost(agent, v, q, D, J) for v in np.atleast_1d(s)]) \
            + omega * s - 0.5 * rho * (s - x) ** 2
    return f


def test_la_best_response_grid_oracle():
    agent = LoadAggregator("LA", 4.0, 1.0)
    got = la_best_response(agent, 1.0, 1.0, 0.0, 2.0, 4.0)
    oracle = grid_argmax(la_objective(agent, 1.0, 1.0, 0.0, 2.0, 4.0), 0.0, 4.0, 1e-4)
    assert abs(got - oracle) <= 1e-4
    assert got == pytest.approx(5 - np.sqrt(13), abs=1e-12)
    finer = grid_argmax(la_objective(agent, 1.0, 1.0, 0.0, 2.0, 4.0), 0.0, 4.0, 5e-5)
    assert abs(finer - oracle) < 1e-4


def test_la_best_response_limits():
    agent = LoadAggregator("LA", 4.0, 1.0)
    assert la_best_response(agent, 1.0, 1.0, 1e6, 2.0, 4.0) == 0.0
    assert la_best_response(agent, 1.0, 3.3, 0.5, 1e9, 4.0) == pytest.approx(3.3, abs=1e-6)
    assert la_best_response(agent, 1.0, 7.0, 0.5, 1e9, 4.0) == pytest.approx(4.0)


def test_la_best_response_honours_floor():
    agent = LoadAggregator("LA", 4.0, 1.0, d_min=1.5)
    assert la_best_response(agent, 1.0, 0.0, 1e6, 2.0, 4.0) == 1.5


def test_esp_best_response_grid_oracle():
    agent = EnergyServiceProvider("ESP", 1.0, 0.0, 10.0)
    got = esp_best_response(agent, 1.0, 0.5, 2.0, 2.0, 1.0, 3)
    oracle = grid_argmax(esp_objective(agent, 1.0, 0.5, 2.0, 2.0, 1.0, 3), 0.0, 1.0, 1e-4)
    assert abs(got - oracle) <= 1e-4
    assert got == pytest.approx((-4 + np.sqrt(40)) / 4, abs=1e-12)


def test_esp_best_response_limits():
    agent = EnergyServiceProvider("ESP", 1.0, 2.0, 10.0)
    assert esp_best_response(agent, 1.0, 0.0, 0.0, 1.0, 5.0, 3) == 0.0
    assert esp_best_response(agent, 1.0, 2.2, 0.0, 1e9, 5.0, 3) == pytest.approx(2.2, abs=1e-6)
    with pytest.raises(DomainError):
        esp_best_response(agent, 1.0, 0.0, 0.0, 1.0, 5.0, 2)


@settings(max_examples=50, deadline=None)
@given(alpha=st.floats(1, 50), beta=st.floats(0.05, 2), p=st.floats(0.05, 1),
       S=st.floats(1, 40), zf=st.floats(0, 1.2), mu=st.floats(-5, 30), rho=st.floats(0.05, 20))
def test_la_best_response_beats_grid(alpha, beta, p, S, zf, mu, rho):
    agent = LoadAggregator("LA", alpha, beta)
    f = la_objective(agent, p, zf * S, mu, rho, S)
    got = la_best_response(agent, p, zf * S, mu, rho, S)
    grid = np.linspace(0.0, S, 2001)
    assert f(np.array([got]))[0] >= f(grid).max() - 1e-9 * (1 + abs(f(grid).max()))


@settings(max_examples=50, deadline=None)
@given(m=st.floats(0.05, 2), n=st.floats(0, 10), q=st.floats(0.05, 1), D=st.floats(1, 40),
       J=st.integers(3, 7), xf=st.floats(-0.2, 1.2), omega=st.floats(-5, 60),
       rho=st.floats(0.05, 20))
def test_esp_best_response_beats_grid(m, n, q, D, J, xf, omega, rho):
    agent = EnergyServiceProvider("ESP", m, n, 1e9)
    f = esp_objective(agent, q, xf * D, omega, rho, D, J)
    got = esp_best_response(agent, q, xf * D, omega, rho, D, J)
    grid = np.linspace(0.0, D, 2001)
    assert f(np.array([got]))[0] >= f(grid).max() - 1e-9 * (1 + abs(f(grid).max()))


def test_etc_demand_update_examples():
    state = DemandAdmmState(z=np.array([0.0, 0.0]), mu=np.zeros(2), rho=1.0)
    new = etc_demand_update([1.0, 1.0], state, 4.0)
    np.testing.assert_allclose(new.z, [2.0, 2.0])
    np.testing.assert_allclose(new.mu, [-1.0, -1.0])
    assert new.k == 1
    feasible = etc_demand_update([1.0, 3.0], DemandAdmmState(np.zeros(2), np.zeros(2)), 4.0)
    np.testing.assert_allclose(feasible.z, [1.0, 3.0])
    np.testing.assert_allclose(feasible.mu, [0.0, 0.0])


def test_etc_supply_update_examples():
    state = SupplyAdmmState(x=np.zeros(3), omega=np.zeros(3), rho=1.0)
    new = etc_supply_update([1.0, 1.0, 2.0], state, 4.0)
    np.testing.assert_allclose(new.x, [1.0, 1.0, 2.0])
    np.testing.assert_allclose(new.omega, [0.0, 0.0, 0.0])


def test_supply_dual_step_raises_price_on_shortage():
    state = SupplyAdmmState(x=np.zeros(3), omega=np.zeros(3), rho=1.0)
    new = etc_supply_update([1.0, 1.0, 1.0], state, 6.0)
    assert np.all(new.omega > 0)


@settings(max_examples=100, deadline=None)
@given(vals=st.lists(st.tuples(st.floats(-50, 50), st.floats(-50, 50)), min_size=2, max_size=8),
       total=st.floats(0.1, 100), rho=st.floats(0.01, 100))
def test_etc_updates_preserve_totals(vals, total, rho):
    q = np.array([v[0] for v in vals])
    price = np.array([v[1] for v in vals])
    dem = etc_demand_update(q, DemandAdmmState(np.zeros(q.size), price, rho), total)
    sup = etc_supply_update(q, SupplyAdmmState(np.zeros(q.size), price, rho), total)
    scale = 1e-12 * (total + np.abs(q).sum() + np.abs(price).sum() / rho)
    assert abs(dem.z.sum() - total) <= scale
    assert abs(sup.x.sum() - total) <= scale


def solve_demand(alpha, beta, p, S, params=TIGHT, lo=None):
    alpha = np.asarray(alpha, float)
    lo = np.zeros(alpha.size) if lo is None else np.asarray(lo, float)
    return demand_admm_solve(alpha, np.asarray(beta, float), lo, np.full(alpha.size, np.inf),
                             np.asarray(p, float), S, params)


def solve_supply(m, n, q, D, params=TIGHT, cap=None):
    m = np.asarray(m, float)
    cap = np.full(m.size, 1e9) if cap is None else np.asarray(cap, float)
    return supply_admm_solve(m, np.asarray(n, float), cap, np.asarray(q, float), D, params)


def test_demand_admm_symmetric_split():
    res = solve_demand([20] * 4, [0.5] * 4, [0.25] * 4, 10.0)
    np.testing.assert_allclose(res.quantities, [2.5] * 4, atol=1e-7)


def test_supply_admm_symmetric_split():
    res = solve_supply([0.3] * 4, [2] * 4, [0.25] * 4, 10.0)
    np.testing.assert_allclose(res.quantities, [2.5] * 4, atol=1e-7)


def test_demand_admm_matches_constrained_solver():
    # Frozen from an SLSQP solve of max sum modified value s.t. sum d = 4.
    res = solve_demand([10, 6], [1, 1], [0.5, 0.5], 4.0)
    np.testing.assert_allclose(res.quantities, [2.5, 1.5], atol=1e-6)


def test_supply_admm_matches_constrained_solver():
    # Frozen from an SLSQP solve of min sum modified cost s.t. sum s = 3.
    res = solve_supply([1, 1, 2], [0, 0, 0], [1 / 3] * 3, 3.0)
    np.testing.assert_allclose(res.quantities, [1.16789262, 1.16789262, 0.66421476], atol=1e-6)


def test_demand_stationarity_at_convergence():
    alpha = np.array([30.0, 22.0, 15.0])
    beta = np.array([0.4, 0.6, 0.5])
    p = np.array([0.2, 0.3, 0.5])
    S = 25.0
    res = solve_demand(alpha, beta, p, S, AdmmParams())
    d = res.quantities
    lhs = (alpha - 2 * beta * d) * (1 - d / S) / p
    mu = res.price
    interior = d > 1e-9
    assert np.max(np.abs(lhs[interior] - mu)) / abs(mu) < 1e-3


def test_supply_stationarity_at_convergence():
    m = np.array([0.2, 0.5, 0.3, 0.8])
    n = np.array([1.0, 2.0, 3.0, 0.5])
    q = np.array([0.3, 0.2, 0.25, 0.25])
    D = 20.0
    res = solve_supply(m, n, q, D, AdmmParams())
    s = res.quantities
    rhs = (2 * m * s + n) * (1 + s / (2 * D)) / q
    interior = s > 1e-9
    assert np.max(np.abs(rhs[interior] - res.price)) / abs(res.price) < 1e-3


def test_bids_reproduce_demands():
    params = AdmmParams()
    S = 12.0
    res = solve_demand([30, 22, 15], [0.4, 0.6, 0.5], [0.3, 0.3, 0.4], S, params)
    realloc = demand_allocation(res.quotes, S)
    assert np.max(np.abs(realloc - res.quantities)) <= 10 * params.eps_pri * S


def test_offers_reproduce_supplies():
    params = AdmmParams()
    D = 12.0
    res = solve_supply([0.2, 0.5, 0.3, 0.8], [1, 2, 3, 0.5], [0.3, 0.2, 0.25, 0.25], D, params)
    _, realloc = supply_allocation(res.quotes, D)
    assert np.max(np.abs(realloc - res.quantities)) <= 10 * params.eps_pri * D


def test_unit_invariance_of_demands():
    alpha = np.array([30.0, 22.0, 15.0])
    beta = np.array([0.4, 0.6, 0.5])
    p = np.array([0.3, 0.3, 0.4])
    base = solve_demand(alpha, beta, p, 12.0)
    # Dollars to cents: every price-like quantity and rho scale by 100.
    cents = AdmmParams(rho=100.0, eps_pri=1e-9, eps_dual=1e-7, max_iter=5000)
    scaled = solve_demand(alpha * 100, beta * 100, p, 12.0, cents)
    np.testing.assert_allclose(scaled.quantities, base.quantities, atol=1e-6)
    np.testing.assert_allclose(scaled.prices, base.prices * 100, rtol=1e-5)


def test_trace_records_residuals_and_cap():
    res = solve_demand([30, 22, 15], [0.4, 0.6, 0.5], [0.3, 0.3, 0.4], 12.0, AdmmParams())
    last = res.trace[-1]
    assert last.primal_res < 1e-4 and last.dual_res < 1e-4
    assert [r.k for r in res.trace] == list(range(1, len(res.trace) + 1))
    with pytest.raises(NonConvergenceError) as info:
        solve_demand([30, 22, 15], [0.4, 0.6, 0.5], [0.3, 0.3, 0.4], 12.0,
                     AdmmParams(max_iter=3))
    assert len(info.value.trace) == 3


def test_admm_rejects_bad_weights():
    with pytest.raises(DomainError):
        solve_demand([10, 6], [1, 1], [0.5, 0.0], 4.0)
    with pytest.raises(DomainError):
        solve_supply([1, 1], [0, 0], [0.5, 0.5], 4.0)
    with pytest.raises(DomainError):
        AdmmParams(rho=0.0)


def test_warm_start_reprojects_onto_new_total():
    first = solve_demand([30, 22, 15], [0.4, 0.6, 0.5], [0.3, 0.3, 0.4], 12.0, AdmmParams())
    warm = demand_admm_solve(np.array([30.0, 22, 15]), np.array([0.4, 0.6, 0.5]), np.zeros(3),
                             np.full(3, np.inf), np.array([0.3, 0.3, 0.4]), 14.0, AdmmParams(),
                             state=first.state)
    assert warm.state.z.sum() == pytest.approx(14.0, rel=1e-12)
    assert warm.quantities.sum() == pytest.approx(14.0, rel=1e-3)
