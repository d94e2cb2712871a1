"""
uv run pytest tests/test_federation/test_masked_aggregation.py
"""
import pytest
import torch

from fedplt.federation import aggregate_fedavg, aggregate_masked
from fedplt.model import ModelTopology, ParamMask, ParamSet, init_params, zero_params


TOPOLOGY = ModelTopology((2, 3))


def _constant(value: float) -> ParamSet:
    return ParamSet((torch.full((2, 3), value, dtype=torch.float64),), (torch.full((3,), value, dtype=torch.float64),))


def test_full_masks_reduce_to_weighted_average():
    topology = ModelTopology((4, 5, 2))
    models = [init_params(topology, seed=s) for s in range(3)]
    full = ParamMask.full(topology)
    contributions = [(m, full, n) for m, n in zip(models, (10, 20, 30))]
    masked = aggregate_masked(zero_params(topology), contributions)
    plain = aggregate_fedavg(zero_params(topology), contributions)
    assert masked.max_abs_diff(plain) < 1e-12


def test_disjoint_and_overlapping_units():
    a, b = _constant(1.0), _constant(5.0)
    mask_a = ParamMask.from_unit_indices(TOPOLOGY, [[0, 2]])
    mask_b = ParamMask.from_unit_indices(TOPOLOGY, [[1, 2]])
    result = aggregate_masked(_constant(-1.0), [(a, mask_a, 1), (b, mask_b, 3)])
    assert torch.all(result.weights[0][:, 0] == 1.0)
    assert torch.all(result.weights[0][:, 1] == 5.0)
    assert torch.all(result.weights[0][:, 2] == (1 * 1.0 + 3 * 5.0) / 4)
    assert result.biases[0].tolist() == [1.0, 5.0, 4.0]


def test_untrained_units_keep_the_global_value():
    mask = ParamMask.from_unit_indices(TOPOLOGY, [[0]])
    result = aggregate_masked(_constant(-1.0), [(_constant(2.0), mask, 4)])
    assert result.biases[0].tolist() == [2.0, -1.0, -1.0]


def test_clients_without_samples_do_not_count():
    full = ParamMask.full(TOPOLOGY)
    result = aggregate_masked(_constant(0.0), [(_constant(3.0), full, 2), (_constant(100.0), full, 0)])
    assert torch.all(result.weights[0] == 3.0)
    assert aggregate_fedavg(_constant(7.0), [(_constant(3.0), full, 0)]).bitwise_equal(_constant(7.0))


def test_empty_contribution_list_is_rejected():
    with pytest.raises(ValueError):
        aggregate_masked(_constant(0.0), [])
