from dataclasses import dataclass, field
from typing import Mapping, Sequence, TypeVar

import numpy as np

from clog import get_logger
from fedplt.errors import InfeasibleBudgetError, ShapeMismatchError
from fedplt.model.mlp import LayerBlocks


logger = get_logger(__name__)

BUDGET_TOL = 1e-12
# Clients with a zero update norm would get p = 0, which the selection contract forbids.
MIN_PROBABILITY = 1e-12

T = TypeVar("T", np.ndarray, LayerBlocks)


@dataclass(frozen=True)
class SamplingInput:
    """Per-client sample counts n_k, update norms ‖U_k‖, training ratios r_k and the budget κ."""
    n: np.ndarray
    norms: np.ndarray
    r: np.ndarray | None
    kappa: float

    def __post_init__(self):
        n = np.asarray(self.n, dtype=np.float64).reshape(-1)
        norms = np.asarray(self.norms, dtype=np.float64).reshape(-1)
        r = np.ones_like(n) if self.r is None else np.asarray(self.r, dtype=np.float64).reshape(-1)
        if not n.size == norms.size == r.size:
            raise ShapeMismatchError(f"n, norms and r have lengths {n.size}, {norms.size}, {r.size}")
        if n.size == 0:
            raise ValueError("sampling needs at least one client")
        if np.any(n < 0) or np.any(norms < 0):
            raise ValueError("sample counts and update norms must be >= 0")
        if np.any(r <= 0) or np.any(r > 1):
            raise ValueError(f"training ratios must lie in (0, 1], got {r.tolist()}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "norms", norms)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "kappa", float(self.kappa))

    @property
    def num_clients(self) -> int:
        return int(self.n.size)

    @property
    def weighted_norms(self) -> np.ndarray:
        return self.n * self.norms

    @classmethod
    def from_dict(cls, data: Mapping) -> "SamplingInput":
        return cls(np.asarray(data["n"]), np.asarray(data["norms"]), data.get("r"), data["kappa"])


@dataclass(frozen=True)
class SamplingDecision:
    """Inclusion probabilities, the unsaturated set 𝒪 (p < 1) and, once drawn, the selected clients."""
    probabilities: np.ndarray
    optimized_set: tuple[int, ...]
    selected: tuple[int, ...] = field(default=())

    @property
    def saturated_set(self) -> tuple[int, ...]:
        members = set(self.optimized_set)
        return tuple(k for k in range(self.probabilities.size) if k not in members)

    def expected_clients(self) -> float:
        return float(self.probabilities.sum())

    def expected_ratio_mass(self, r: Sequence[float]) -> float:
        return float(np.dot(r, self.probabilities))

    def to_dict(self) -> dict:
        return {
            "p": self.probabilities.tolist(),
            "O": list(self.optimized_set),
            "selected": list(self.selected),
        }


def _check_budget(total_ratio: float, kappa: float):
    if not kappa > 0:
        raise InfeasibleBudgetError(f"budget must be > 0, got {kappa}")
    if kappa > total_ratio + BUDGET_TOL:
        raise InfeasibleBudgetError(f"budget {kappa} exceeds the total training ratio {total_ratio:.12g}")


def ocs_plt_probabilities(instance: SamplingInput) -> SamplingDecision:
    """
    Variance-optimal inclusion probabilities under the ratio budget sum(r_k p_k) = κ.

    With a_k = n_k ‖U_k‖ the optimum is p_k ∝ a_k / sqrt(r_k) on the unsaturated set 𝒪 and p_k = 1
    elsewhere. Clients are ordered by b_k = a_k / sqrt(r_k); 𝒪 is seeded with the smallest until
    its ratios exceed sum(r) − κ, then grown while the next candidate still lands below 1.
    """
    r, a, kappa = instance.r, instance.weighted_norms, instance.kappa
    total_ratio = float(r.sum())
    _check_budget(total_ratio, kappa)
    num_clients = instance.num_clients

    if kappa >= total_ratio - BUDGET_TOL:
        return SamplingDecision(np.ones(num_clients), ())

    if not np.any(a > 0):
        logger.warning(f"All update norms are zero; using p_k = κ / Σr = {kappa / total_ratio:.6f}")
        probabilities = np.full(num_clients, min(1.0, kappa / total_ratio))
        return SamplingDecision(probabilities, tuple(range(num_clients)))

    b = a / np.sqrt(r)
    order = np.argsort(b, kind="stable")
    sqrt_r_a = np.sqrt(r) * a
    excess = total_ratio - kappa

    size = 0
    ratio_sum = 0.0
    while ratio_sum <= excess and size < num_clients:
        ratio_sum += r[order[size]]
        size += 1
    weight_sum = float(sqrt_r_a[order[:size]].sum())

    while size < num_clients:
        candidate = order[size]
        grown_weight = weight_sum + sqrt_r_a[candidate]
        grown_mass = kappa - total_ratio + ratio_sum + r[candidate]
        if not b[candidate] * grown_mass < grown_weight:
            break
        weight_sum, ratio_sum = grown_weight, ratio_sum + r[candidate]
        size += 1

    mass = kappa - total_ratio + ratio_sum
    if mass <= 0:
        raise InfeasibleBudgetError(f"degenerate normalization: remaining budget {mass:.3g} for the unsaturated set")

    probabilities = np.ones(num_clients)
    members = order[:size]
    if weight_sum > 0:
        probabilities[members] = np.clip(mass * b[members] / weight_sum, MIN_PROBABILITY, 1.0)
    else:
        # every unsaturated client has a zero update: any split of the remaining budget is optimal
        probabilities[members] = min(1.0, mass / ratio_sum)

    return SamplingDecision(probabilities, tuple(sorted(int(k) for k in members)))


def ocs_probabilities(n: Sequence[float], norms: Sequence[float], kappa: float) -> SamplingDecision:
    """Original client-count budget sum(p_k) = κ: every ratio treated as 1."""
    n = np.asarray(n, dtype=np.float64)
    return ocs_plt_probabilities(SamplingInput(n, np.asarray(norms), np.ones_like(n), kappa))


def select_clients(probabilities: Sequence[float], seed: int | np.random.Generator) -> tuple[int, ...]:
    """Independent inclusion of every client k with probability p_k."""
    p = np.asarray(probabilities, dtype=np.float64)
    if np.any(p <= 0) or np.any(p > 1):
        raise ValueError("inclusion probabilities must lie in (0, 1]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return tuple(int(k) for k in np.flatnonzero(rng.random(p.size) < p))


def _zeros(like: T) -> T:
    return like.zeros_like() if isinstance(like, LayerBlocks) else np.zeros_like(like, dtype=np.float64)


def aggregate_unbiased(updates: Mapping[int, T], probabilities: Sequence[float], n: Sequence[float], like: T) -> T:
    """
    Σ_{k∈A} (n_k / p_k) U_k / Σ_j n_j over the selected updates.

    The updates are expected to be already masked (each U_k vanishes outside its client's mask).
    An empty selection gives a zero update.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    weights = np.asarray(n, dtype=np.float64)
    total = float(weights.sum())
    if not updates:
        logger.warning("No client selected this round; global update is zero")
        return _zeros(like)
    if total <= 0:
        return _zeros(like)

    aggregate = _zeros(like)
    for k in sorted(updates):
        if not p[k] > 0:
            raise ValueError(f"selected client {k} has inclusion probability {p[k]}")
        aggregate = aggregate + updates[k] * float(weights[k] / (p[k] * total))

    return aggregate


def estimator_variance(probabilities: Sequence[float], n: Sequence[float], norms: Sequence[float]) -> float:
    """Σ n_k² ‖U_k‖² (1/p_k − 1)."""
    p = np.asarray(probabilities, dtype=np.float64)
    if np.any(p <= 0) or np.any(p > 1):
        raise ValueError("inclusion probabilities must lie in (0, 1]")
    a = np.asarray(n, dtype=np.float64) * np.asarray(norms, dtype=np.float64)
    return float(np.sum(a * a * (1.0 / p - 1.0)))
