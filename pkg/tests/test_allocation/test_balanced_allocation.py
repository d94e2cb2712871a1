"""
uv run pytest tests/test_allocation/test_balanced_allocation.py
"""
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from fedplt.allocation import (
    balance_objective,
    balanced_allocation,
    balanced_contribution,
    contribution_caps,
    contribution_std,
    contribution_to_allocation,
    contribution_vector,
    imbalance_error,
    imbalance_table,
    layer_counts_mlp,
    training_ratio,
    water_level,
)
from fedplt.errors import InfeasibleAllocationError, ShapeMismatchError, UndefinedMetricError


FCN_FASHION = [784, 512, 256, 128, 10]
FCN_CIFAR = [3072, 512, 256, 128, 10]
RESNET_COUNTS = (448, 4640, 13888, 55296, 650)

counts_strategy = st.lists(st.integers(min_value=1, max_value=100_000), min_size=1, max_size=6)


def _bisection_level(caps, iters=200):
    low, high = 0.0, float(np.max(caps))
    for _ in range(iters):
        mid = 0.5 * (low + high)
        if np.minimum(caps, mid).sum() < 1:
            low = mid
        else:
            high = mid
    return high


def test_layer_counts_of_dense_networks():
    assert layer_counts_mlp(FCN_FASHION) == (401920, 131328, 32896, 1290)
    assert layer_counts_mlp([2, 3]) == (9,)
    assert layer_counts_mlp([1, 1]) == (2,)


def test_training_ratio():
    H = layer_counts_mlp(FCN_FASHION)
    assert training_ratio((0.08, 0.68, 0.68, 1.00), H) == pytest.approx(0.256, abs=1e-3)
    assert training_ratio((1, 1, 1, 1), H) == pytest.approx(1.0)
    assert training_ratio((0, 0, 0, 0), H) == 0.0
    with pytest.raises(ShapeMismatchError):
        training_ratio((1, 1), H)


def test_contribution_vector_of_full_models():
    fcn = contribution_vector((1, 1, 1, 1), layer_counts_mlp(FCN_FASHION))
    np.testing.assert_allclose(fcn, (0.708, 0.231, 0.058, 0.002), atol=1e-3)
    assert contribution_std(fcn) == pytest.approx(0.278, abs=1e-3)

    resnet = contribution_vector((1, 1, 1, 1, 1), RESNET_COUNTS)
    np.testing.assert_allclose(resnet, (0.00598, 0.06193, 0.18537, 0.73805, 0.00868), atol=1e-4)

    assert contribution_vector((0.3,), (17,)).tolist() == [1.0]
    with pytest.raises(InfeasibleAllocationError):
        contribution_vector((0, 0, 0, 0), layer_counts_mlp(FCN_FASHION))


@pytest.mark.parametrize(
    "Q, r, X, std",
    [
        ((0.08, 0.68, 0.68, 1.00), 0.256, (0.222, 0.615, 0.154, 0.009), 0.224),
        ((0.30, 0.10, 0.10, 1.00), 0.244, (0.872, 0.095, 0.024, 0.009), 0.361),
    ],
)
def test_contribution_of_unbalanced_fashion_allocations(Q, r, X, std):
    H = layer_counts_mlp(FCN_FASHION)
    x = contribution_vector(Q, H)
    assert training_ratio(Q, H) == pytest.approx(r, abs=1e-3)
    np.testing.assert_allclose(x, X, atol=1e-3)
    assert contribution_std(x) == pytest.approx(std, abs=1e-3)


def test_contribution_of_resnet_allocations():
    full = contribution_vector((1, 1, 1, 1, 1), RESNET_COUNTS)
    assert contribution_std(full) == pytest.approx(0.27677, abs=5e-4)

    Q = (1, 1, 0.5, 0.25, 1)
    x = contribution_vector(Q, RESNET_COUNTS)
    assert training_ratio(Q, RESNET_COUNTS) == pytest.approx(0.3538, abs=5e-4)
    np.testing.assert_allclose(x, (0.01690, 0.17505, 0.26198, 0.52154, 0.02452), atol=5e-4)
    assert contribution_std(x) == pytest.approx(0.18556, abs=5e-4)


def test_balanced_contribution_fashion_fcn():
    H = layer_counts_mlp(FCN_FASHION)
    x_star = balanced_contribution(0.29, H)
    np.testing.assert_allclose(x_star, (0.396, 0.396, 0.200, 0.0078), atol=1e-3)
    plan = contribution_to_allocation(x_star, 0.29, H)
    np.testing.assert_allclose(plan.q, (0.16, 0.50, 1.00, 1.00), atol=1e-2)
    assert plan.r == pytest.approx(0.29, abs=1e-9)


def test_balanced_allocation_cifar_fcn():
    plan = balanced_allocation(0.23, layer_counts_mlp(FCN_CIFAR))
    np.testing.assert_allclose(plan.q, (0.15, 1.00, 1.00, 1.00), atol=1e-2)


def test_balanced_allocation_resnet_counts():
    plan = balanced_allocation(0.18, RESNET_COUNTS)
    np.testing.assert_allclose(plan.q, (1.00, 0.88, 0.31, 0.08, 1.00), atol=1.5e-2)
    assert sum(plan.x) == pytest.approx(1.0, abs=1e-10)


def test_full_ratio_gives_the_full_model():
    H = layer_counts_mlp(FCN_FASHION)
    np.testing.assert_allclose(balanced_contribution(1.0, H), contribution_vector((1, 1, 1, 1), H), atol=1e-12)
    np.testing.assert_allclose(balanced_allocation(1.0, H).q, (1, 1, 1, 1), atol=1e-12)


@pytest.mark.parametrize("r", [0.0, -0.1, 1.5])
def test_ratio_outside_unit_interval_is_rejected(r):
    with pytest.raises(InfeasibleAllocationError):
        balanced_contribution(r, layer_counts_mlp(FCN_FASHION))


def test_water_level_rejects_caps_below_one():
    with pytest.raises(InfeasibleAllocationError):
        water_level([0.2, 0.3])
    assert water_level([0.5, 0.5]) == pytest.approx(0.5)


def test_infeasible_contribution_is_rejected():
    H = layer_counts_mlp(FCN_FASHION)
    with pytest.raises(InfeasibleAllocationError):
        contribution_to_allocation((0.0, 0.0, 0.0, 1.0), 0.29, H)


def test_imbalance_error_table_rows():
    H = layer_counts_mlp(FCN_FASHION)
    assert training_ratio((0.10, 0.73, 0.86, 0.90), H) == pytest.approx(0.2917, abs=1e-3)
    rows = [((0.25, 0.29, 0.78, 1.00), 0.8743), ((0.10, 0.73, 0.86, 0.90), 0.665), ((0.20, 0.45, 0.76, 0.80), 0.3053)]
    for Q, expected in rows:
        r = training_ratio(Q, H)
        assert imbalance_error(contribution_vector(Q, H), H, r) == pytest.approx(expected, abs=5e-3)

    x_star = balanced_contribution(0.29, H)
    assert imbalance_error(x_star, H, 0.29) == pytest.approx(0.0, abs=1e-12)


def test_imbalance_error_when_uniform_is_feasible():
    H = (100, 100, 100)
    uniform = np.full(3, 1 / 3)
    assert imbalance_error(uniform, H, 0.5) == 0.0
    with pytest.raises(UndefinedMetricError):
        imbalance_error((0.5, 0.25, 0.25), H, 0.5)


def test_imbalance_table_columns():
    H = layer_counts_mlp(FCN_FASHION)
    table = imbalance_table(
        {"balanced": balanced_allocation(0.29, H).q, "mild": (0.20, 0.45, 0.76, 0.80)},
        H,
    )
    assert list(table["config"]) == ["balanced", "mild"]
    assert {"r", "q_1", "x_4", "std", "imbalance_error"} <= set(table.columns)
    assert table.loc[0, "imbalance_error"] == pytest.approx(0.0, abs=1e-9)
    assert table.loc[1, "imbalance_error"] == pytest.approx(0.3053, abs=5e-3)


@settings(max_examples=200, deadline=None)
@given(H=counts_strategy, r=st.floats(min_value=0.01, max_value=1.0))
def test_water_level_matches_bisection(H, r):
    caps = contribution_caps(r, H)
    level = water_level(caps)
    assert abs(np.minimum(caps, level).sum() - 1) < 1e-9
    if caps.sum() > 1 + 1e-6:
        assert level == pytest.approx(_bisection_level(caps), rel=1e-7, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(H=counts_strategy, data=st.data())
def test_balanced_contribution_minimizes_imbalance(H, data):
    Q = data.draw(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=len(H), max_size=len(H)))
    r = training_ratio(Q, H)
    assume(r > 1e-3)
    x = contribution_vector(Q, H)
    x_star = balanced_contribution(r, H)
    assert abs(x_star.sum() - 1) < 1e-10
    assert balance_objective(x_star) <= balance_objective(x) + 1e-12


@settings(max_examples=100, deadline=None)
@given(H=counts_strategy, data=st.data())
def test_allocation_round_trip(H, data):
    Q = data.draw(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=len(H), max_size=len(H)))
    r = training_ratio(Q, H)
    assume(r > 1e-3)
    plan = contribution_to_allocation(contribution_vector(Q, H), r, H)
    np.testing.assert_allclose(plan.q, Q, atol=1e-9)
    assert plan.r == pytest.approx(r, abs=1e-9)


def _project_capped_simplex(V, caps, iters=100):
    """Rows of V projected onto {x : sum(x) = 1, 0 <= x <= caps} by bisection on a common shift."""
    V = np.atleast_2d(V)
    low = V.min(axis=1) - caps.max() - 1.0
    high = V.max(axis=1)
    for _ in range(iters):
        mid = 0.5 * (low + high)
        over = np.clip(V - mid[:, None], 0.0, caps).sum(axis=1) > 1
        low = np.where(over, mid, low)
        high = np.where(over, high, mid)
    return np.clip(V - high[:, None], 0.0, caps)


def _projected_gradient_optimum(caps, steps=60, step_size=0.5):
    uniform = 1.0 / caps.size
    x = caps / caps.sum()
    for _ in range(steps):
        x = _project_capped_simplex(x - step_size * (x - uniform), caps)[0]
    return x


def _random_instances(count, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        H = rng.integers(1, 100_001, size=int(rng.integers(1, 7)))
        yield rng, H, float(rng.uniform(0.01, 1.0))


def test_balanced_contribution_beats_random_feasible_competitors():
    for rng, H, r in _random_instances(200):
        caps = contribution_caps(r, H)
        x_star = balanced_contribution(r, H)

        projected = _project_capped_simplex(2.0 * rng.normal(size=(1000, H.size)), caps)
        weights = rng.uniform(size=(1000, 1))
        competitors = weights * projected + (1 - weights) * projected[rng.permutation(1000)]
        assert np.all(np.abs(competitors.sum(axis=1) - 1) < 1e-9)
        assert np.all(competitors <= caps + 1e-12)

        j_competitors = 0.5 * np.sum((competitors - 1.0 / H.size) ** 2, axis=1)
        assert balance_objective(x_star) <= j_competitors.min() + 1e-12


def test_balanced_contribution_matches_projected_gradient():
    for _, H, r in _random_instances(200, seed=1):
        caps = contribution_caps(r, H)
        np.testing.assert_allclose(balanced_contribution(r, H), _projected_gradient_optimum(caps), atol=1e-6)
