import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from clog import get_logger
from fedplt.allocation.core import AllocationPlan, contribution_vector, layer_counts_mlp
from fedplt.errors import ConfigError, ShapeMismatchError
from fedplt.model.mlp import ModelTopology, ParamMask


logger = get_logger(__name__)

DEFAULT_HIDDEN_SUBLAYERS = 8
DEFAULT_OUTPUT_SUBLAYERS = 1


@dataclass(frozen=True)
class SublayerPartition:
    """Split of every dense layer's output units into contiguous, near-equal blocks.

    Attributes:
        topology: the network the blocks belong to.
        counts: number of sub-layers per dense layer.
    """
    topology: ModelTopology
    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if len(counts) != self.topology.num_layers:
            raise ShapeMismatchError(f"{len(counts)} sub-layer counts for {self.topology.num_layers} layers")
        for l, c in enumerate(counts):
            if not 1 <= c <= self.topology.width(l):
                raise ConfigError(f"sublayers[{l}]", f"must lie in [1, {self.topology.width(l)}], got {c}")
        object.__setattr__(self, "counts", counts)

    @property
    def num_layers(self) -> int:
        return len(self.counts)

    def blocks(self, layer: int) -> list[np.ndarray]:
        """Unit indices of each sub-layer; sizes ceil(d/H) first, then floor(d/H)."""
        return np.array_split(np.arange(self.topology.width(layer)), self.counts[layer])

    def block_sizes(self, layer: int) -> list[int]:
        return [int(block.size) for block in self.blocks(layer)]


@dataclass(frozen=True)
class SublayerAssignment:
    """Sub-layer indices (0-based) a client trains in every layer, fixed for all rounds."""
    client: int
    selected: tuple[tuple[int, ...], ...]

    def count(self, layer: int) -> int:
        return len(self.selected[layer])

    def to_dict(self) -> dict:
        return {"client": self.client, "sublayers": [list(s) for s in self.selected]}


def default_sublayer_counts(topology: ModelTopology) -> tuple[int, ...]:
    hidden = [min(DEFAULT_HIDDEN_SUBLAYERS, topology.width(l)) for l in range(topology.num_layers - 1)]
    return tuple(hidden + [DEFAULT_OUTPUT_SUBLAYERS])


def partition_layers(topology: ModelTopology, sublayers_per_layer: Sequence[int] | None = None) -> SublayerPartition:
    if sublayers_per_layer is None:
        return SublayerPartition(topology, default_sublayer_counts(topology))
    return SublayerPartition(topology, tuple(sublayers_per_layer))


def quantize_count(q: float, num_sublayers: int) -> int:
    """round(q * H) half-up, at least 1 when q > 0, at most H."""
    if not 0 <= q <= 1:
        raise ValueError(f"allocation entry must lie in [0, 1], got {q}")
    if q == 0:
        return 0
    return min(num_sublayers, max(1, math.floor(q * num_sublayers + 0.5)))


def assign_rotational(Qs: Sequence[Sequence[float]], partition: SublayerPartition) -> list[SublayerAssignment]:
    """
    Rotational assignment of sub-layers to clients.

    Client k takes n_{k,l} consecutive sub-layers (cyclically) starting where client k-1 stopped,
    so per-layer coverage never differs by more than one between sub-layers.
    """
    offsets = [0] * partition.num_layers
    assignments = []
    for client, Q in enumerate(Qs):
        if len(Q) != partition.num_layers:
            raise ShapeMismatchError(f"client {client}: allocation over {len(Q)} layers, partition has {partition.num_layers}")
        selected = []
        for l, q in enumerate(Q):
            num_sublayers = partition.counts[l]
            n = quantize_count(float(q), num_sublayers)
            selected.append(tuple(sorted((offsets[l] + j) % num_sublayers for j in range(n))))
            offsets[l] = (offsets[l] + n) % num_sublayers
        assignment = SublayerAssignment(client, tuple(selected))
        assignments.append(assignment)

        realized = realized_allocation(assignment, partition)
        requested = float(np.dot(Q, layer_counts_mlp(partition.topology)) / partition.topology.num_params)
        logger.info(f"Client {client}: requested r={requested:.4f}, realized r={realized.r:.4f} after quantization")

    return assignments


def materialize_mask(assignment: SublayerAssignment, partition: SublayerPartition, topology: ModelTopology | None = None) -> ParamMask:
    topology = topology or partition.topology
    if topology != partition.topology:
        raise ShapeMismatchError(f"partition built for {partition.topology.layer_sizes}, model is {topology.layer_sizes}")
    if len(assignment.selected) != partition.num_layers:
        raise ShapeMismatchError(f"assignment covers {len(assignment.selected)} layers, partition has {partition.num_layers}")

    units = []
    for l, selected in enumerate(assignment.selected):
        blocks = partition.blocks(l)
        chosen = np.concatenate([blocks[h] for h in selected]) if selected else np.zeros(0, dtype=np.int64)
        units.append(chosen.tolist())

    return ParamMask.from_unit_indices(topology, units)


def realized_allocation(assignment: SublayerAssignment, partition: SublayerPartition) -> AllocationPlan:
    """Per-layer trained unit fraction, overall ratio and contribution after quantization."""
    topology = partition.topology
    q = []
    for l, selected in enumerate(assignment.selected):
        sizes = partition.block_sizes(l)
        q.append(sum(sizes[h] for h in selected) / topology.width(l))

    H = layer_counts_mlp(topology)
    r = float(np.dot(q, H) / topology.num_params)
    x = tuple(contribution_vector(q, H).tolist()) if r > 0 else tuple(0.0 for _ in q)
    return AllocationPlan(tuple(q), r, x)


def coverage_report(assignments: Sequence[SublayerAssignment], partition: SublayerPartition) -> list[np.ndarray]:
    """Number of clients training each sub-layer, one count vector per layer."""
    coverage = [np.zeros(c, dtype=np.int64) for c in partition.counts]
    for assignment in assignments:
        for l, selected in enumerate(assignment.selected):
            coverage[l][list(selected)] += 1
    return coverage


def coverage_table(coverage: Sequence[np.ndarray]) -> pd.DataFrame:
    rows = [
        {"layer": l + 1, "sublayer": h, "trainers": int(count)}
        for l, counts in enumerate(coverage)
        for h, count in enumerate(counts)
    ]
    return pd.DataFrame(rows, columns=["layer", "sublayer", "trainers"])
