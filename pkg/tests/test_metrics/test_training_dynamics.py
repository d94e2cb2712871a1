"""
uv run pytest tests/test_metrics/test_training_dynamics.py
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fedplt.errors import ShapeMismatchError
from fedplt.metrics import DynamicsTracker, UpdateWindow, effective_perturbation, magnitude_gradient
from fedplt.model import ModelTopology, init_params, zero_params


def test_magnitude_gradient_of_flat_vectors():
    assert magnitude_gradient(np.array([3.0, 4.0]), np.zeros(2)) == pytest.approx(25.0)
    assert magnitude_gradient(np.ones(5), np.ones(5)) == 0.0
    with pytest.raises(ShapeMismatchError):
        magnitude_gradient(np.ones(3), np.ones(4))


def test_magnitude_gradient_per_layer():
    topology = ModelTopology((4, 3, 2))
    w0 = zero_params(topology)
    w1 = init_params(topology, seed=0)
    total = magnitude_gradient(w1, w0)
    per_layer = [magnitude_gradient(w1, w0, l) for l in range(topology.num_layers)]
    assert total == pytest.approx(sum(per_layer))
    assert per_layer[0] == pytest.approx(float((w1.weights[0] ** 2).sum()))


def test_effective_perturbation_extremes():
    e = np.eye(2)
    assert effective_perturbation([np.ones(3)] * 4) == pytest.approx(1.0)
    assert effective_perturbation([np.ones(3), -np.ones(3)]) == pytest.approx(0.0)
    assert effective_perturbation([e[0], e[1]]) == pytest.approx(math.sqrt(2) / 2)
    assert effective_perturbation([np.zeros(3), np.zeros(3)]) is None


def test_effective_perturbation_waits_for_a_full_window():
    window = UpdateWindow(3)
    for _ in range(2):
        window.push(np.ones(2))
        assert effective_perturbation(window) is None
    window.push(np.ones(2))
    assert effective_perturbation(window) == pytest.approx(1.0)
    window.push(-3 * np.ones(2))
    assert len(window) == 3
    assert effective_perturbation(window) == pytest.approx(1 / 5)


def test_window_rejects_mixed_lengths():
    window = UpdateWindow(2)
    window.push(np.ones(2))
    with pytest.raises(ShapeMismatchError):
        window.push(np.ones(3))
    with pytest.raises(ValueError):
        UpdateWindow(0)


def test_tracker_reports_model_and_layer_dynamics():
    topology = ModelTopology((3, 4, 2))
    tracker = DynamicsTracker(topology.num_layers, window=2)
    w = [init_params(topology, seed=s) for s in range(3)]
    first = tracker.update(w[1], w[0])
    assert set(first) == {"mg", "ep", "mg_l1", "ep_l1", "mg_l2", "ep_l2"}
    assert first["ep"] is None
    assert first["mg"] == pytest.approx(first["mg_l1"] + first["mg_l2"])
    second = tracker.update(w[2], w[1])
    assert 0.0 <= second["ep"] <= 1.0
    assert second["ep_l1"] is not None


@settings(max_examples=100, deadline=None)
@given(
    st.integers(1, 6).flatmap(
        lambda n: st.lists(arrays(np.float64, 4, elements=st.floats(-1e3, 1e3)), min_size=n, max_size=n)
    )
)
def test_effective_perturbation_lies_in_unit_interval(deltas):
    value = effective_perturbation(deltas)
    if value is not None:
        assert 0.0 <= value <= 1.0
