"""
uv run pytest tests/test_costmodel/test_device_efficiency.py
"""
from pathlib import Path

import numpy as np
import pytest

from fedplt.config import read_config_file
from fedplt.config.experiment import FleetConfig
from fedplt.costmodel import (
    DeviceProfile,
    Workload,
    communication_cost,
    computation_cost,
    efficiency_report,
    equalize_ratios,
    round_time,
    round_time_summary,
)


CONFIG_DIR = Path(__file__).parents[2] / "configs"
GIGA, MEGA = 1e9, 1e6
WORKLOAD = Workload(num_params=5e6, bytes_per_param=4, local_iters=150, alpha=2, beta=4)
FLEET = [
    DeviceProfile(80 * GIGA, 120 * MEGA, 40 * MEGA, 0.2, "C1"),
    DeviceProfile(30 * GIGA, 200 * MEGA, 50 * MEGA, 0.2, "C2"),
    DeviceProfile(18 * GIGA, 60 * MEGA, 25 * MEGA, 0.2, "C3"),
    DeviceProfile(10 * GIGA, 50 * MEGA, 16 * MEGA, 0.2, "C4"),
    DeviceProfile(8 * GIGA, 45 * MEGA, 12 * MEGA, 0.2, "C5"),
]


def test_computation_cost():
    assert computation_cost(WORKLOAD, 1.0) / GIGA == pytest.approx(4.5)
    assert computation_cost(WORKLOAD, 0.69) / GIGA == pytest.approx(3.57, abs=1e-9)
    assert computation_cost(WORKLOAD, 0.0) == pytest.approx(WORKLOAD.forward_flops)


def test_communication_cost():
    down, up = communication_cost(WORKLOAD, 0.078)
    assert (down + up) / MEGA == pytest.approx(21.56)
    assert sum(communication_cost(WORKLOAD, 1.0)) / MEGA == pytest.approx(40.0)
    assert communication_cost(WORKLOAD, 0.0) == (pytest.approx(20 * MEGA), 0.0)


def test_beta_defaults_to_twice_alpha():
    assert Workload(num_params=10, alpha=3).beta == 6


def test_full_model_round_times():
    times = [round_time(p, WORKLOAD, 1.0) for p in FLEET]
    np.testing.assert_allclose(times, (5.59, 4.35, 9.52, 13.85, 17.65), atol=1e-2)


def test_latency_only_device():
    tiny = Workload(num_params=1e-9)
    assert round_time(DeviceProfile(1e9, 1e9, 1e9, 0.3), tiny, 1.0) == pytest.approx(0.3)


def test_equalized_ratios_of_the_five_device_fleet():
    result = equalize_ratios(FLEET, WORKLOAD)
    np.testing.assert_allclose(result.ratios, (0.69, 1.00, 0.21, 0.078, 0.03), atol=1e-2)
    assert result.target == pytest.approx(4.35, abs=1e-2)
    assert result.round_time == pytest.approx(result.target, rel=1e-9)
    assert result.infeasible == ()


def test_homogeneous_fleet_keeps_the_full_model():
    result = equalize_ratios([FLEET[0]] * 3, WORKLOAD)
    assert result.ratios == pytest.approx((1.0, 1.0, 1.0))
    assert result.round_time == pytest.approx(round_time(FLEET[0], WORKLOAD, 1.0))


def test_target_below_fixed_cost_is_infeasible():
    result = equalize_ratios(FLEET, WORKLOAD, target=1.0)
    assert 4 in result.infeasible
    assert result.ratios[4] == 0.0


def test_round_time_efficiency():
    ratios = equalize_ratios(FLEET, WORKLOAD).ratios
    summary = round_time_summary(FLEET, WORKLOAD, ratios)
    assert summary.delta_time == pytest.approx(0.7535, abs=1e-3)
    assert summary.straggler == 4
    assert summary.straggler_delta_time == pytest.approx(summary.delta_time, abs=1e-9)


def test_efficiency_report_rows():
    ratios = equalize_ratios(FLEET, WORKLOAD).ratios
    report = efficiency_report(FLEET, WORKLOAD, ratios).set_index("client")
    assert report.loc["C4", "delta_comm_up"] == pytest.approx(0.922, abs=1e-3)
    assert report.loc["C4", "delta_comm_tot"] == pytest.approx(0.461, abs=1e-3)
    assert report.loc["C1", "idle_avoided"] == pytest.approx(12.06, abs=1e-2)
    assert report.loc["C1", "idle_avoided_pct"] == pytest.approx(0.6833, abs=1e-3)
    assert report.loc["C2", "delta_comp"] == pytest.approx(0.0)
    assert report.loc["C2", "delta_comm_tot"] == pytest.approx(0.0)


def test_fleet_file_parses_scaled_units():
    fleet = FleetConfig.from_dict(read_config_file(CONFIG_DIR / "fleet_five_devices.yaml")["fleet"])
    assert [p.gamma for p in fleet.profiles] == [p.gamma for p in FLEET]
    assert fleet.workload == WORKLOAD
    np.testing.assert_allclose(fleet.resolve_ratios(5), equalize_ratios(FLEET, WORKLOAD).ratios)
