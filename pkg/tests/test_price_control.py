import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dadp.errors import DomainError
from dadp.price_control import (
    WEIGHT_FLOOR,
    PriceWeights,
    StepController,
    normalize,
    update_demand_weights,
    update_supply_weights,
    weight_fixed_point_residual,
)


def test_zero_step_is_identity():
    p = PriceWeights(np.array([0.2, 0.3, 0.5]), "demand")
    np.testing.assert_allclose(update_demand_weights(p, [1, 2, 3], 6.0, 0.0).values, p.values)
    q = PriceWeights(np.array([0.2, 0.3, 0.5]), "supply")
    np.testing.assert_allclose(update_supply_weights(q, [1, 2, 3], 6.0, 0.0).values, q.values)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_symmetric_demand_fixed_point(n):
    p = PriceWeights.uniform(n, "demand")
    S = 7.0
    d = np.full(n, S / n)
    np.testing.assert_allclose(update_demand_weights(p, d, S, 0.3).values, p.values, atol=1e-15)
    np.testing.assert_allclose(weight_fixed_point_residual(p, d, S), 0.0, atol=1e-15)


@pytest.mark.parametrize("n", [3, 4, 6])
def test_symmetric_supply_fixed_point(n):
    q = PriceWeights.uniform(n, "supply")
    D = 9.0
    s = np.full(n, D / n)
    np.testing.assert_allclose(update_supply_weights(q, s, D, 0.3).values, q.values, atol=1e-15)
    np.testing.assert_allclose(weight_fixed_point_residual(q, s, D), 0.0, atol=1e-15)


def test_demand_update_example():
    p = PriceWeights(np.array([0.5, 0.5]), "demand")
    new = update_demand_weights(p, [3.0, 1.0], 4.0, 0.1)
    np.testing.assert_allclose(new.values, [0.4, 0.6], atol=1e-12)


def test_supply_update_example():
    q = PriceWeights.uniform(3, "supply")
    new = update_supply_weights(q, [2.0, 1.0, 0.0], 3.0, 0.1)
    raw = np.array([1 / 3 + 0.1 * ((3 + s) / 4 - 1) for s in (2.0, 1.0, 0.0)])
    np.testing.assert_allclose(raw, [0.358333, 0.333333, 0.308333], atol=1e-6)
    np.testing.assert_allclose(new.values, raw / raw.sum(), atol=1e-12)


def test_residual_sign_under_perturbation():
    p = PriceWeights(np.array([0.6, 0.2, 0.2]), "demand")
    d = np.full(3, 2.0)
    base = weight_fixed_point_residual(PriceWeights.uniform(3, "demand"), d, 6.0)
    assert weight_fixed_point_residual(p, d, 6.0)[0] > base[0]


def test_normalize_floors_tiny_entries():
    w = normalize([1.0, 0.0, -3.0])
    np.testing.assert_allclose(w, [1 - 2 * WEIGHT_FLOOR, WEIGHT_FLOOR, WEIGHT_FLOOR])
    np.testing.assert_allclose(normalize([2.0, 2.0]), [0.5, 0.5])


def test_weights_must_be_positive():
    with pytest.raises(DomainError):
        PriceWeights(np.array([0.5, 0.0]), "demand")
    with pytest.raises(ValueError):
        PriceWeights(np.array([0.5, 0.5]), "sideways")
    with pytest.raises(DomainError):
        update_demand_weights(PriceWeights(np.array([1.0]), "demand"), [1.0], 1.0, 0.1)
    with pytest.raises(DomainError):
        update_supply_weights(PriceWeights.uniform(2, "supply"), [1.0, 1.0], 2.0, 0.1)


@settings(max_examples=100, deadline=None)
@given(vals=st.lists(st.floats(1e-6, 1e3), min_size=1, max_size=10))
def test_normalize_idempotent(vals):
    once = normalize(vals)
    np.testing.assert_allclose(normalize(once), once, rtol=1e-12)
    assert once.sum() == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(raw=st.lists(st.floats(0.01, 1.0), min_size=3, max_size=8),
       frac=st.lists(st.floats(0.0, 1.0), min_size=8, max_size=8),
       total=st.floats(0.1, 100), delta=st.floats(0, 100))
def test_updates_stay_positive_and_normalised(raw, frac, total, delta):
    n = len(raw)
    alloc = np.array(frac[:n]) * total
    p = PriceWeights(normalize(raw), "demand")
    q = PriceWeights(normalize(raw), "supply")
    for new in (update_demand_weights(p, alloc, total, delta),
                update_supply_weights(q, alloc, total, delta)):
        assert np.all(new.values >= WEIGHT_FLOOR * (1 - 1e-12))
        assert new.values.sum() == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(frac=st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6), total=st.floats(1, 50))
def test_substitution_step_lands_on_fixed_point(frac, total):
    d = np.array(frac) / sum(frac) * total
    n = d.size
    p = PriceWeights.uniform(n, "demand")
    new = update_demand_weights(p, d, total, 1.0 / total)
    np.testing.assert_allclose(weight_fixed_point_residual(new, d, total), 0.0, atol=1e-12)
    # Larger demand, smaller weight.
    order = np.argsort(d)
    assert np.all(np.diff(new.values[order]) <= 1e-15)


def test_step_controller_halves_on_oscillation():
    ctl = StepController(0.4, tol=1e-6, patience=3)
    for k in range(4):
        ctl.observe(np.array([1.0, -1.0]) * (-1) ** k)
    assert ctl.delta == pytest.approx(0.2)
    assert ctl.halvings == 1
    steady = StepController(0.4, tol=1e-6)
    for _ in range(5):
        steady.observe(np.array([1.0, -1.0]))
    assert steady.delta == 0.4
