from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from clog import get_logger


logger = get_logger(__name__)

GIGA = 1e9
MEGA = 1e6
BITS_PER_BYTE = 8


@dataclass(frozen=True)
class DeviceProfile:
    """Compute speed in FLOPs/s, bandwidths in bits/s, fixed latency in seconds."""
    gamma: float
    b_down: float
    b_up: float
    delta: float = 0.0
    name: str = ""

    def __post_init__(self):
        if not (self.gamma > 0 and self.b_down > 0 and self.b_up > 0):
            raise ValueError(f"device {self.name or '?'}: speed and bandwidths must be > 0")
        if self.delta < 0:
            raise ValueError(f"device {self.name or '?'}: latency must be >= 0, got {self.delta}")

    @classmethod
    def from_dict(cls, data: Mapping) -> "DeviceProfile":
        """Accepts base units (gamma, b_down, b_up) or the scaled keys gamma_gflops, b_down_mbps, b_up_mbps."""
        gamma = data["gamma_gflops"] * GIGA if "gamma_gflops" in data else data["gamma"]
        b_down = data["b_down_mbps"] * MEGA if "b_down_mbps" in data else data["b_down"]
        b_up = data["b_up_mbps"] * MEGA if "b_up_mbps" in data else data["b_up"]
        return cls(float(gamma), float(b_down), float(b_up), float(data.get("delta", 0.0)), str(data.get("name", "")))


@dataclass(frozen=True)
class Workload:
    """
    Per-round workload of one client.

    Attributes:
        num_params: model size P.
        bytes_per_param: s.
        local_iters: τ.
        alpha: forward FLOPs per parameter per iteration.
        beta: backward FLOPs per parameter per iteration; defaults to 2 * alpha.
    """
    num_params: float
    bytes_per_param: float = 4.0
    local_iters: int = 1
    alpha: float = 2.0
    beta: float | None = None

    def __post_init__(self):
        if self.beta is None:
            object.__setattr__(self, "beta", 2.0 * self.alpha)
        if not (self.num_params > 0 and self.bytes_per_param > 0 and self.local_iters > 0 and self.alpha > 0 and self.beta > 0):
            raise ValueError(f"workload entries must all be > 0, got {self}")

    @property
    def model_bytes(self) -> float:
        return self.num_params * self.bytes_per_param

    @property
    def forward_flops(self) -> float:
        return self.alpha * self.local_iters * self.num_params

    @property
    def backward_flops(self) -> float:
        return self.beta * self.local_iters * self.num_params

    @classmethod
    def from_dict(cls, data: Mapping) -> "Workload":
        return cls(
            num_params=float(data["num_params"]),
            bytes_per_param=float(data.get("bytes_per_param", 4.0)),
            local_iters=int(data.get("local_iters", 1)),
            alpha=float(data.get("alpha", 2.0)),
            beta=float(data["beta"]) if data.get("beta") is not None else None,
        )


def _check_ratio(r: float):
    if not 0 <= r <= 1:
        raise ValueError(f"training ratio must lie in [0, 1], got {r}")


def computation_cost(workload: Workload, r: float) -> float:
    """FLOPs per round: (α + β r) τ P."""
    _check_ratio(r)
    return workload.forward_flops + r * workload.backward_flops


def communication_cost(workload: Workload, r: float) -> tuple[float, float]:
    """(download, upload) bytes per round: the full model down, the trained fraction up."""
    _check_ratio(r)
    return workload.model_bytes, r * workload.model_bytes


def _fixed_time(profile: DeviceProfile, workload: Workload) -> float:
    return workload.forward_flops / profile.gamma + workload.model_bytes * BITS_PER_BYTE / profile.b_down


def _scaled_time(profile: DeviceProfile, workload: Workload) -> float:
    return workload.backward_flops / profile.gamma + workload.model_bytes * BITS_PER_BYTE / profile.b_up


def round_time(profile: DeviceProfile, workload: Workload, r: float) -> float:
    """δ + (forward + download) + r (backward + upload), in seconds."""
    _check_ratio(r)
    return profile.delta + _fixed_time(profile, workload) + r * _scaled_time(profile, workload)


@dataclass(frozen=True)
class Equalization:
    """Ratios that make every client finish near `target`, and the round time they realize."""
    ratios: tuple[float, ...]
    target: float
    round_time: float
    infeasible: tuple[int, ...]
    clipped: tuple[int, ...]


def equalize_ratios(profiles: Sequence[DeviceProfile], workload: Workload, target: float | None = None) -> Equalization:
    """
    Per-client ratio r_k = (T − δ_k − fixed_k) / scaled_k clipped to [0, 1].

    `target` defaults to the fastest full-model round time. Clients whose fixed part alone
    exceeds the target get r_k = 0 and are reported as infeasible.
    """
    if not profiles:
        raise ValueError("equalization needs at least one device profile")
    if target is None:
        target = min(round_time(p, workload, 1.0) for p in profiles)

    ratios, infeasible, clipped = [], [], []
    for k, profile in enumerate(profiles):
        raw = (target - profile.delta - _fixed_time(profile, workload)) / _scaled_time(profile, workload)
        if raw < 0:
            infeasible.append(k)
        elif raw > 1:
            clipped.append(k)
        ratios.append(float(min(1.0, max(0.0, raw))))

    if infeasible:
        logger.warning(f"Target round time {target:.4f}s is below the fixed cost of clients {infeasible}; their ratio is 0")
    if clipped:
        logger.info(f"Clients {clipped} finish before the target even with the full model")

    realized = max(round_time(p, workload, r) for p, r in zip(profiles, ratios))
    return Equalization(tuple(ratios), float(target), float(realized), tuple(infeasible), tuple(clipped))


def efficiency_report(profiles: Sequence[DeviceProfile], workload: Workload, ratios: Sequence[float]) -> pd.DataFrame:
    """
    Per-client savings of partial training against full-model training.

    Columns cover round time, computation (GFLOPs), communication (MB) and idle time, with the
    relative savings delta_comp, delta_comm_up, delta_comm_tot and idle_avoided_pct as fractions.
    """
    if len(profiles) != len(ratios):
        raise ValueError(f"{len(profiles)} profiles for {len(ratios)} ratios")

    t_full = np.array([round_time(p, workload, 1.0) for p in profiles])
    t_plt = np.array([round_time(p, workload, r) for p, r in zip(profiles, ratios)])
    round_full, round_plt = t_full.max(), t_plt.max()

    rows = []
    for k, (profile, r) in enumerate(zip(profiles, ratios)):
        down, up = communication_cost(workload, r)
        full_down, full_up = communication_cost(workload, 1.0)
        comp_full, comp_plt = computation_cost(workload, 1.0), computation_cost(workload, r)
        idle_full, idle_plt = round_full - t_full[k], round_plt - t_plt[k]
        rows.append({
            "client": profile.name or f"C{k + 1}",
            "r": float(r),
            "t_full": float(t_full[k]),
            "t_plt": float(t_plt[k]),
            "comp_full_gflops": comp_full / GIGA,
            "comp_plt_gflops": comp_plt / GIGA,
            "delta_comp": 1.0 - comp_plt / comp_full,
            "comm_full_mb": (full_down + full_up) / MEGA,
            "comm_plt_mb": (down + up) / MEGA,
            "delta_comm_up": 1.0 - up / full_up,
            "delta_comm_tot": 1.0 - (down + up) / (full_down + full_up),
            "idle_full": float(idle_full),
            "idle_plt": float(idle_plt),
            "idle_avoided": float(idle_full - idle_plt),
            "idle_avoided_pct": float((idle_full - idle_plt) / round_full),
        })

    return pd.DataFrame(rows)


@dataclass(frozen=True)
class RoundTimeSummary:
    t_round_full: float
    t_round_plt: float
    delta_time: float
    straggler: int
    straggler_delta_time: float

    def to_dict(self) -> dict:
        return {
            "t_round_full": self.t_round_full,
            "t_round_plt": self.t_round_plt,
            "delta_time": self.delta_time,
            "straggler": self.straggler,
            "straggler_delta_time": self.straggler_delta_time,
        }


def round_time_summary(profiles: Sequence[DeviceProfile], workload: Workload, ratios: Sequence[float]) -> RoundTimeSummary:
    """
    Synchronous round time with and without partial training.

    `straggler_delta_time` is the closed-form saving (1 − r_s) scaled_s / T_s^full of the
    full-model straggler s; it equals `delta_time` whenever s still bounds the partial round.
    """
    t_full = [round_time(p, workload, 1.0) for p in profiles]
    t_plt = [round_time(p, workload, r) for p, r in zip(profiles, ratios)]
    straggler = int(np.argmax(t_full))
    round_full, round_plt = max(t_full), max(t_plt)
    closed_form = (1.0 - ratios[straggler]) * _scaled_time(profiles[straggler], workload) / t_full[straggler]

    return RoundTimeSummary(
        t_round_full=float(round_full),
        t_round_plt=float(round_plt),
        delta_time=float(1.0 - round_plt / round_full),
        straggler=straggler,
        straggler_delta_time=float(closed_form),
    )
