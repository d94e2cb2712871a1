from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from clog import get_logger


logger = get_logger(__name__)


class StepSchedule(str, Enum):
    CONSTANT = "constant"
    DECAYING = "decaying"


@dataclass(frozen=True)
class ConvergenceConstants:
    """
    Constants of the one-step recursion D^{t+1} <= (1 − z η^t) D^t + (η^t)² B.

    Attributes:
        z: contraction constant μ ρ̲, > 0.
        B: aggregate error constant, >= 0.
        D0: initial expected squared distance to the optimum, >= 0.
    """
    z: float
    B: float
    D0: float

    def __post_init__(self):
        if not self.z > 0:
            raise ValueError(f"z must be > 0, got {self.z}")
        if self.B < 0 or self.D0 < 0:
            raise ValueError(f"B and D0 must be >= 0, got B={self.B}, D0={self.D0}")

    @classmethod
    def from_components(
        cls,
        mu: float,
        rho_min: float,
        smoothness: float,
        sigma2: float,
        grad_bound2: float,
        local_iters: int,
        client_weights: Sequence[float],
        ratios: Sequence[float],
        dim: int,
        heterogeneity_gap: float,
        nu: float,
        D0: float,
    ) -> "ConvergenceConstants":
        """
        z = μ ρ̲ and B = 2 τ² (G² + σ²) Γ + 2 L ν Λ + σ² Γ, with Γ = Σ c_k α_k² and
        α_k = min(1, sqrt(d r_k)).
        """
        if len(client_weights) != len(ratios):
            raise ValueError(f"{len(client_weights)} client weights for {len(ratios)} ratios")
        gamma = partial_training_factor(client_weights, ratios, dim)
        B = 2 * local_iters**2 * (grad_bound2 + sigma2) * gamma + 2 * smoothness * nu * heterogeneity_gap + sigma2 * gamma
        return cls(z=mu * rho_min, B=B, D0=D0)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ConvergenceConstants":
        if "z" in data:
            return cls(float(data["z"]), float(data["B"]), float(data["D0"]))
        return cls.from_components(
            mu=float(data["mu"]),
            rho_min=float(data["rho_min"]),
            smoothness=float(data["L"]),
            sigma2=float(data["sigma2"]),
            grad_bound2=float(data["G2"]),
            local_iters=int(data["tau"]),
            client_weights=list(data["c"]),
            ratios=list(data["r"]),
            dim=int(data["d"]),
            heterogeneity_gap=float(data["Lambda"]),
            nu=float(data["nu"]),
            D0=float(data["D0"]),
        )

    @property
    def sublinear_constant(self) -> float:
        """C = max(D0 + B/z², B/z²) of the decaying-step bound D^t <= C / (t + 1)."""
        return max(self.D0 + self.B / self.z**2, self.B / self.z**2)


def partial_training_factor(client_weights: Sequence[float], ratios: Sequence[float], dim: int) -> float:
    """Γ = Σ c_k min(1, sqrt(d r_k))²."""
    alphas = np.minimum(1.0, np.sqrt(dim * np.asarray(ratios, dtype=np.float64)))
    return float(np.dot(client_weights, alphas**2))


def step_sizes(constants: ConvergenceConstants, schedule: StepSchedule | str, horizon: int, eta: float | None = None) -> np.ndarray:
    """η^0 .. η^{horizon-1}; constant needs 0 < η < 1/z, decaying is η^t = 1/(z(t+1))."""
    schedule = StepSchedule(schedule)
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    if schedule == StepSchedule.CONSTANT:
        if eta is None or not 0 < eta < 1 / constants.z:
            raise ValueError(f"constant step must lie in (0, 1/z) = (0, {1 / constants.z:.6g}), got {eta}")
        return np.full(horizon, float(eta))
    return 1.0 / (constants.z * (np.arange(horizon) + 1.0))


def convergence_bound(constants: ConvergenceConstants, schedule: StepSchedule | str, horizon: int, eta: float | None = None) -> np.ndarray:
    """D^0 .. D^horizon with the recursion evaluated at equality."""
    etas = step_sizes(constants, schedule, horizon, eta)
    trajectory = np.empty(horizon + 1)
    trajectory[0] = constants.D0
    for t, step in enumerate(etas):
        trajectory[t + 1] = (1 - constants.z * step) * trajectory[t] + step * step * constants.B
    return trajectory


def finite_horizon_bound(constants: ConvergenceConstants, etas: Sequence[float]) -> float:
    """
    Unrolled recursion: Π(1 − z η^t) D0 + Σ_t (η^t)² B Π_{s>t}(1 − z η^s).
    """
    steps = np.asarray(etas, dtype=np.float64)
    if steps.size == 0:
        return float(constants.D0)
    factors = 1.0 - constants.z * steps
    # tail[t] = Π_{s>t} factors[s]
    tail = np.append(np.cumprod(factors[::-1])[::-1][1:], 1.0)
    return float(np.prod(factors) * constants.D0 + constants.B * np.sum(steps**2 * tail))


def geometric_envelope(constants: ConvergenceConstants, eta: float, horizon: int) -> np.ndarray:
    """(1 − zη)^t D0 + η B / z for t = 0..horizon; bounds the constant-step trajectory."""
    t = np.arange(horizon + 1)
    return (1 - constants.z * eta) ** t * constants.D0 + eta * constants.B / constants.z


def sublinear_envelope(constants: ConvergenceConstants, horizon: int) -> np.ndarray:
    """C / (t + 1) for t = 0..horizon; bounds the decaying-step trajectory."""
    return constants.sublinear_constant / (np.arange(horizon + 1) + 1.0)


def constant_step_limit(constants: ConvergenceConstants, eta: float) -> float:
    """Fixed point η B / z of the constant-step recursion."""
    if not 0 < eta < 1 / constants.z:
        raise ValueError(f"constant step must lie in (0, 1/z), got {eta}")
    return eta * constants.B / constants.z


def rounds_to_reach(trajectory: np.ndarray, level: float) -> int | None:
    """First t with D^t <= level, or None."""
    hits = np.flatnonzero(trajectory <= level)
    return int(hits[0]) if hits.size else None
