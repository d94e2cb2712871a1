"""
uv run pytest tests/test_assignment/test_baseline_masks.py
"""
import pytest

from fedplt.assignment import BaselineSchedule, FixedMask, Strategy, baseline_mask
from fedplt.errors import ConfigError, UnknownStrategyError
from fedplt.model import ModelTopology, ParamMask


FCN = ModelTopology((784, 512, 256, 128, 10))
NARROW = ModelTopology((5, 10, 10, 3))


@pytest.mark.parametrize("strategy", ["feddrop", "heterofl", "fedrolex", "fedpmt"])
def test_output_layer_is_always_trained(strategy):
    mask = baseline_mask(strategy, client=1, round_idx=3, ratio=0.2, topology=NARROW, seed=0)
    assert bool(mask.units[-1].all())
    mask.check_topology(NARROW)


def test_heterofl_full_ratio_is_full_and_fixed():
    masks = [baseline_mask(Strategy.HETEROFL, 0, t, 1.0, NARROW, seed=0) for t in range(3)]
    assert all(m.is_full() for m in masks)


def test_heterofl_keeps_a_prefix():
    mask = baseline_mask(Strategy.HETEROFL, 0, 5, 0.35, NARROW, seed=0)
    assert mask.selected_units(0) == [0, 1, 2, 3]
    assert mask.equals(baseline_mask(Strategy.HETEROFL, 3, 9, 0.35, NARROW, seed=1))


def test_fedrolex_window_shifts_by_one_each_round():
    first = baseline_mask(Strategy.FEDROLEX, 0, 0, 0.3, NARROW, seed=0)
    second = baseline_mask(Strategy.FEDROLEX, 0, 1, 0.3, NARROW, seed=0)
    wrapped = baseline_mask(Strategy.FEDROLEX, 0, 9, 0.3, NARROW, seed=0)
    assert first.selected_units(0) == [0, 1, 2]
    assert second.selected_units(0) == [1, 2, 3]
    assert wrapped.selected_units(0) == [0, 1, 9]


def test_feddrop_is_fresh_per_round_and_reproducible():
    a = baseline_mask(Strategy.FEDDROP, 2, 0, 0.5, FCN, seed=7)
    b = baseline_mask(Strategy.FEDDROP, 2, 1, 0.5, FCN, seed=7)
    again = baseline_mask(Strategy.FEDDROP, 2, 0, 0.5, FCN, seed=7)
    assert not a.equals(b)
    assert a.equals(again)
    assert a.unit_fractions()[0] == pytest.approx(0.5, abs=0.1)


def _trained_layers(ratio, topology=FCN):
    return [bool(u.all()) for u in baseline_mask(Strategy.FEDPMT, 0, 0, ratio, topology, 0).units]


def test_fedpmt_trains_the_deepest_layers():
    assert _trained_layers(0.30) == [False, False, True, True]
    assert _trained_layers(0.10) == [False, False, False, True]
    assert _trained_layers(0.50) == [False, False, True, True]
    assert _trained_layers(0.51) == [False, True, True, True]
    assert _trained_layers(1.0) == [True, True, True, True]


def test_fedpmt_masks_whole_layers():
    mask = baseline_mask(Strategy.FEDPMT, 0, 0, 0.30, FCN, 0)
    assert mask.unit_fractions() == [0.0, 0.0, 1.0, 1.0]
    assert not bool(mask.units[0].any())
    assert _trained_layers(0.2, NARROW) == [False, False, True]


def test_unknown_or_non_baseline_strategy():
    with pytest.raises(UnknownStrategyError):
        baseline_mask("dropout", 0, 0, 0.5, NARROW, 0)
    with pytest.raises(UnknownStrategyError):
        baseline_mask(Strategy.FEDPLT, 0, 0, 0.5, NARROW, 0)
    with pytest.raises(ConfigError):
        Strategy.parse("nope")
    assert Strategy.parse("FedRolex") == Strategy.FEDROLEX


def test_ratio_out_of_range():
    with pytest.raises(ValueError):
        baseline_mask(Strategy.HETEROFL, 0, 0, 0.0, NARROW, 0)


def test_schedules_report_round_invariance():
    assert FixedMask(ParamMask.full(NARROW)).round_invariant
    assert BaselineSchedule(Strategy.HETEROFL, 0, 0.5, NARROW, 0).round_invariant
    assert not BaselineSchedule(Strategy.FEDDROP, 0, 0.5, NARROW, 0).round_invariant
    rolex = BaselineSchedule(Strategy.FEDROLEX, 0, 0.5, NARROW, 0)
    assert not rolex.round_invariant
    assert not rolex.mask_for_round(0).equals(rolex.mask_for_round(1))
