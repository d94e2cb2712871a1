from dataclasses import dataclass, field
from typing import Any

from fedplt.assignment.baselines import MaskProvider
from fedplt.config.experiment import LocalUnit, NormSource, ParticipationMode
from fedplt.data.dataset import Dataset
from fedplt.metrics.dynamics import DynamicsTracker
from fedplt.model.mlp import ParamMask, ParamSet


@dataclass(frozen=True)
class ClientState:
    """One simulated client.

    Attributes:
        client_id: position of the client in the fleet.
        shard: the client's private samples.
        masks: yields the client's training mask for a given round.
        lr: local learning rate.
        local_steps: τ, counted in epochs or iterations per `local_unit`.
        local_unit: whether τ counts passes over the shard or mini-batch steps.
        batch_size: mini-batch size; batches never exceed the shard.
        ratio: nominal training ratio r_k, used by the sampling budget.
        seed: master seed the client's batch order is derived from.
    """
    client_id: int
    shard: Dataset
    masks: MaskProvider
    lr: float
    local_steps: int = 1
    local_unit: LocalUnit = LocalUnit.EPOCHS
    batch_size: int = 32
    ratio: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.local_steps < 1:
            raise ValueError(f"client {self.client_id}: local_steps must be >= 1, got {self.local_steps}")
        if not self.lr > 0:
            raise ValueError(f"client {self.client_id}: learning rate must be > 0, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"client {self.client_id}: batch_size must be >= 1, got {self.batch_size}")

    @property
    def n_k(self) -> int:
        return len(self.shard)


@dataclass(frozen=True)
class LocalResult:
    """Outcome of one client's local training in one round."""
    client_id: int
    params: ParamSet
    update: ParamSet
    mask: ParamMask
    n_k: int
    trained_params: int
    samples_processed: int
    steps: int
    final_loss: float | None

    @property
    def update_norm(self) -> float:
        return self.update.norm()


@dataclass(frozen=True)
class Participation:
    """How clients take part in a round: everyone, or a sampled subset under budget κ."""
    mode: ParticipationMode = ParticipationMode.FULL
    kappa: float | None = None
    norm_source: NormSource = NormSource.STALE

    @property
    def sampled(self) -> bool:
        return self.mode != ParticipationMode.FULL


@dataclass
class RoundRecord:
    """Metrics and accounting of one communication round."""
    round: int
    pre_loss: float
    pre_accuracy: float
    loss: float
    accuracy: float
    mg: float
    ep: float | None
    layer_dynamics: dict[str, float | None]
    update_norms: dict[int, float]
    bytes_up: int
    bytes_down: int
    participants: tuple[int, ...]
    cumulative_bytes_up: int = 0
    cumulative_bytes_down: int = 0
    round_flops: float = 0.0
    cumulative_flops: float = 0.0
    expected_clients: float | None = None
    expected_ratio_mass: float | None = None
    comm_units: float | None = None

    def __post_init__(self):
        for name in ("pre_accuracy", "accuracy"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    def to_row(self) -> dict[str, Any]:
        row = {
            "round": self.round,
            "loss": self.loss,
            "accuracy": self.accuracy,
            "mg": self.mg,
            "ep": self.ep,
            "bytes_up": self.bytes_up,
            "bytes_down": self.bytes_down,
            "participants": len(self.participants),
            "pre_loss": self.pre_loss,
            "pre_accuracy": self.pre_accuracy,
            "cumulative_bytes_up": self.cumulative_bytes_up,
            "cumulative_bytes_down": self.cumulative_bytes_down,
            "cumulative_flops": self.cumulative_flops,
            "expected_clients": self.expected_clients,
            "expected_ratio_mass": self.expected_ratio_mass,
            "comm_units": self.comm_units,
        }
        row.update(self.layer_dynamics)
        return row


@dataclass
class GlobalState:
    """Server side of the simulation: round counter, W^t and the history so far."""
    round: int
    params: ParamSet
    history: list[RoundRecord] = field(default_factory=list)
    last_eval: tuple[float, float] | None = None
    # ‖U_k‖ of each client's most recent update; read by stale-norm sampling
    last_norms: dict[int, float] = field(default_factory=dict)
    dynamics: DynamicsTracker | None = None
