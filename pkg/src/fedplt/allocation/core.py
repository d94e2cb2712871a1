from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from clog import get_logger
from fedplt.errors import InfeasibleAllocationError, ShapeMismatchError, TopologyError, UndefinedMetricError
from fedplt.model.mlp import ModelTopology


logger = get_logger(__name__)

# Parameters per dense layer, biases included.
LayerCounts = tuple[int, ...]

FEASIBILITY_TOL = 1e-9
CLIP_REPORT_TOL = 1e-6


@dataclass(frozen=True)
class AllocationPlan:
    """(Q, r, X) of one client.

    Attributes:
        q: per-layer trained proportion q_l in [0, 1].
        r: overall training ratio sum(q_l h_l) / sum(h_l).
        x: contribution vector x_l = q_l h_l / (r sum(h)), sums to 1.
    """
    q: tuple[float, ...]
    r: float
    x: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"q": list(self.q), "r": self.r, "x": list(self.x)}


def _counts(H: Sequence[int]) -> np.ndarray:
    counts = np.asarray(H, dtype=np.float64)
    if counts.ndim != 1 or counts.size == 0:
        raise ShapeMismatchError(f"layer counts must be a non-empty vector, got {list(H)}")
    if np.any(counts < 1):
        raise TopologyError(f"every layer count must be >= 1, got {list(H)}", field_path="H")
    return counts


def _vector(values: Sequence[float], H: np.ndarray, name: str) -> np.ndarray:
    vector = np.asarray(values, dtype=np.float64)
    if vector.shape != H.shape:
        raise ShapeMismatchError(f"{name} has {vector.size} entries, H has {H.size}")
    return vector


def layer_counts_mlp(topology: ModelTopology | Sequence[int]) -> LayerCounts:
    """h_l = (d_{l-1} + 1) * d_l for every dense layer."""
    if not isinstance(topology, ModelTopology):
        topology = ModelTopology(tuple(topology))
    return tuple(topology.layer_param_count(l) for l in range(topology.num_layers))


def training_ratio(Q: Sequence[float], H: Sequence[int]) -> float:
    counts = _counts(H)
    q = _vector(Q, counts, "Q")
    if np.any(q < 0) or np.any(q > 1):
        raise ValueError(f"allocation entries must lie in [0, 1], got {q.tolist()}")
    return float(q @ counts / counts.sum())


def contribution_vector(Q: Sequence[float], H: Sequence[int]) -> np.ndarray:
    """Share of a client's trained parameters that falls in each layer."""
    counts = _counts(H)
    trained = _vector(Q, counts, "Q") * counts
    total = trained.sum()
    if total <= 0:
        raise InfeasibleAllocationError("contribution vector undefined for an all-zero allocation")
    return trained / total


def contribution_caps(r: float, H: Sequence[int]) -> np.ndarray:
    """Upper bounds x̄_l = h_l / (r sum(h)) reached when layer l is trained in full."""
    if not 0 < r <= 1:
        raise InfeasibleAllocationError(f"training ratio must lie in (0, 1], got {r}")
    counts = _counts(H)
    return counts / (r * counts.sum())


def water_level(caps: Sequence[float]) -> float:
    """
    The level τ with sum(min(cap_l, τ)) = 1.

    Caps are visited in increasing order; at step i the remaining mass is spread evenly over the
    L - i layers not yet saturated, and the first level that does not exceed the current cap is
    the answer.
    """
    sorted_caps = np.sort(np.asarray(caps, dtype=np.float64))
    if sorted_caps.size == 0:
        raise ShapeMismatchError("water level of an empty cap vector")
    if sorted_caps.sum() < 1 - FEASIBILITY_TOL:
        raise InfeasibleAllocationError(f"caps sum to {sorted_caps.sum():.12g} < 1")

    remaining = 1.0
    num_layers = sorted_caps.size
    for i, cap in enumerate(sorted_caps):
        level = remaining / (num_layers - i)
        if level <= cap:
            return float(level)
        remaining -= cap

    # caps sum to exactly 1: every layer saturates
    return float(sorted_caps[-1])


def balanced_contribution(r: float, H: Sequence[int]) -> np.ndarray:
    """Most balanced feasible contribution vector: x*_l = min(x̄_l, τ)."""
    caps = contribution_caps(r, H)
    level = water_level(caps)
    balanced = np.minimum(caps, level)
    return balanced / balanced.sum()


def contribution_to_allocation(X: Sequence[float], r: float, H: Sequence[int]) -> AllocationPlan:
    """
    Map a contribution vector back to per-layer proportions q_l = x_l r sum(h) / h_l.

    Proportions are clipped to [0, 1]; when clipping moves the training ratio the realized
    ratio is recomputed and returned in the plan.
    """
    caps = contribution_caps(r, H)
    counts = _counts(H)
    x = _vector(X, counts, "X")
    if np.any(x < -FEASIBILITY_TOL) or np.any(x > caps + FEASIBILITY_TOL):
        over = np.flatnonzero(x > caps + FEASIBILITY_TOL).tolist()
        raise InfeasibleAllocationError(f"contribution vector exceeds the layer caps at layers {over} for r={r}")

    raw_q = x * r * counts.sum() / counts
    q = np.clip(raw_q, 0.0, 1.0)
    realized = float(q @ counts / counts.sum())
    if abs(realized - r) > CLIP_REPORT_TOL:
        logger.warning(f"Clipping allocation moved r from {r:.6f} to {realized:.6f}")
    if realized <= 0:
        raise InfeasibleAllocationError("contribution vector maps to an all-zero allocation")

    return AllocationPlan(tuple(q.tolist()), realized, tuple(contribution_vector(q, counts).tolist()))


def balanced_allocation(r: float, H: Sequence[int]) -> AllocationPlan:
    return contribution_to_allocation(balanced_contribution(r, H), r, H)


def balance_objective(X: Sequence[float]) -> float:
    """J(X) = ½‖X − 1/L‖²."""
    x = np.asarray(X, dtype=np.float64)
    return float(0.5 * np.sum((x - 1.0 / x.size) ** 2))


def imbalance_error(X: Sequence[float], H: Sequence[int], r: float) -> float:
    """E(X) = (J(X) − J(X*)) / J(X*), relative excess imbalance over the balanced optimum."""
    counts = _counts(H)
    x = _vector(X, counts, "X")
    if abs(x.sum() - 1) > FEASIBILITY_TOL:
        raise ValueError(f"contribution vector must sum to 1, sums to {x.sum():.12g}")

    j_optimal = balance_objective(balanced_contribution(r, counts))
    j_value = balance_objective(x)
    if j_optimal <= 1e-15:
        if j_value <= 1e-15:
            return 0.0
        raise UndefinedMetricError(f"the uniform contribution is feasible at r={r}, relative error is unbounded")

    return max(0.0, (j_value - j_optimal) / j_optimal)


def contribution_std(X: Sequence[float]) -> float:
    x = np.asarray(X, dtype=np.float64)
    if x.size == 0:
        raise ValueError("std of an empty contribution vector")
    return float(np.std(x))


def imbalance_table(configs: Mapping[str, Sequence[float]], H: Sequence[int]) -> pd.DataFrame:
    """
    Per named allocation Q: realized ratio r, contribution X, std(X) and the imbalance error E at
    that same r.
    """
    counts = _counts(H)
    rows = []
    for name, Q in configs.items():
        r = training_ratio(Q, counts)
        x = contribution_vector(Q, counts)
        row = {"config": name, "r": r}
        row.update({f"q_{l + 1}": float(q) for l, q in enumerate(Q)})
        row.update({f"x_{l + 1}": float(v) for l, v in enumerate(x)})
        row["std"] = contribution_std(x)
        row["imbalance_error"] = imbalance_error(x, counts, r)
        rows.append(row)

    return pd.DataFrame(rows)
