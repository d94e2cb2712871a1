"""
Mask-level reconstructions of the partial-training baselines.

Every baseline is expressed as a unit mask over the full model, so loss is always computed with
the complete architecture. The output layer is trained by every strategy.
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Protocol

import numpy as np

from clog import get_logger
from fedplt.errors import UnknownStrategyError
from fedplt.model.mlp import ModelTopology, ParamMask
from fedplt.seeding import MASK_STREAM, numpy_rng


logger = get_logger(__name__)


class Strategy(str, Enum):
    FEDAVG = "fedavg"
    FEDPLT = "fedplt"
    FEDDROP = "feddrop"
    HETEROFL = "heterofl"
    FEDROLEX = "fedrolex"
    FEDPMT = "fedpmt"

    @classmethod
    def parse(cls, name: str, field_path: str = "strategy") -> "Strategy":
        try:
            return cls(str(name).lower())
        except ValueError:
            raise UnknownStrategyError(field_path, name, [s.value for s in cls])


BASELINE_STRATEGIES = (Strategy.FEDDROP, Strategy.HETEROFL, Strategy.FEDROLEX, Strategy.FEDPMT)


def _kept_units(ratio: float, width: int) -> int:
    return min(width, max(1, math.ceil(ratio * width - 1e-9)))


def _feddrop(client: int, round_idx: int, ratio: float, topology: ModelTopology, seed: int) -> list[np.ndarray]:
    rng = numpy_rng(seed, MASK_STREAM, client, round_idx)
    return [rng.random(topology.width(l)) < ratio for l in range(topology.num_layers - 1)]


def _heterofl(ratio: float, topology: ModelTopology) -> list[np.ndarray]:
    units = []
    for l in range(topology.num_layers - 1):
        kept = np.zeros(topology.width(l), dtype=bool)
        kept[: _kept_units(ratio, topology.width(l))] = True
        units.append(kept)
    return units


def _fedrolex(round_idx: int, ratio: float, topology: ModelTopology) -> list[np.ndarray]:
    units = []
    for l in range(topology.num_layers - 1):
        width = topology.width(l)
        kept = np.zeros(width, dtype=bool)
        kept[(round_idx + np.arange(_kept_units(ratio, width))) % width] = True
        units.append(kept)
    return units


def _fedpmt(ratio: float, topology: ModelTopology) -> list[np.ndarray]:
    """
    Train the deepest dense layers in full and freeze the shallow ones.

    Of the L dense layers the deepest ceil(ratio * L) are trained, never fewer than the output
    layer. At ratio 0.3 on a four-layer network this gives Q = (0, 0, 1, 1); the trained parameter
    fraction follows from the layer sizes and is not matched to `ratio`.
    """
    num_layers = topology.num_layers
    trained_layers = min(num_layers, max(1, math.ceil(ratio * num_layers - 1e-9)))
    first_trained = num_layers - trained_layers
    return [np.full(topology.width(l), l >= first_trained) for l in range(num_layers - 1)]


def baseline_mask(strategy: Strategy | str, client: int, round_idx: int, ratio: float, topology: ModelTopology, seed: int) -> ParamMask:
    """Mask of `client` at round `round_idx` under a baseline strategy with training ratio `ratio`."""
    strategy = Strategy.parse(strategy) if not isinstance(strategy, Strategy) else strategy
    if strategy not in BASELINE_STRATEGIES:
        raise UnknownStrategyError("strategy", strategy.value, [s.value for s in BASELINE_STRATEGIES])
    if not 0 < ratio <= 1:
        raise ValueError(f"training ratio must lie in (0, 1], got {ratio}")

    match strategy:
        case Strategy.FEDDROP:
            hidden = _feddrop(client, round_idx, ratio, topology, seed)
        case Strategy.HETEROFL:
            hidden = _heterofl(ratio, topology)
        case Strategy.FEDROLEX:
            hidden = _fedrolex(round_idx, ratio, topology)
        case Strategy.FEDPMT:
            hidden = _fedpmt(ratio, topology)

    output = np.ones(topology.num_classes, dtype=bool)
    return ParamMask(tuple(hidden) + (output,))


class MaskProvider(Protocol):
    def mask_for_round(self, round_idx: int) -> ParamMask:
        ...

    @property
    def round_invariant(self) -> bool:
        ...


@dataclass(frozen=True)
class FixedMask:
    """Same mask every round (FedAvg, FedPLT)."""
    mask: ParamMask

    def mask_for_round(self, round_idx: int) -> ParamMask:
        return self.mask

    @property
    def round_invariant(self) -> bool:
        return True


@dataclass(frozen=True)
class BaselineSchedule:
    """Per-round mask of one client under a baseline strategy."""
    strategy: Strategy
    client: int
    ratio: float
    topology: ModelTopology
    seed: int

    def mask_for_round(self, round_idx: int) -> ParamMask:
        return baseline_mask(self.strategy, self.client, round_idx, self.ratio, self.topology, self.seed)

    @property
    def round_invariant(self) -> bool:
        return self.strategy in (Strategy.HETEROFL, Strategy.FEDPMT) or self.ratio >= 1
