import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from clog import get_logger
from fedplt.data.dataset import Dataset
from fedplt.errors import ShapeMismatchError, TopologyError


logger = get_logger(__name__)
DTYPE = torch.float64


@dataclass(frozen=True)
class ModelTopology:
    """Layer sizes [d_0, d_1, ..., d_L]: input dimension, then L dense layer widths (last = classes)."""
    layer_sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise TopologyError(f"need an input size and at least one layer, got {list(sizes)}")
        if any(s < 1 for s in sizes):
            raise TopologyError(f"all layer sizes must be >= 1, got {list(sizes)}")
        object.__setattr__(self, "layer_sizes", sizes)

    @classmethod
    def parse(cls, text: str) -> "ModelTopology":
        try:
            return cls(tuple(int(s) for s in text.split(",") if s.strip()))
        except ValueError as e:
            raise TopologyError(f"cannot parse '{text}': {e}")

    @property
    def num_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def num_classes(self) -> int:
        return self.layer_sizes[-1]

    def fan_in(self, layer: int) -> int:
        return self.layer_sizes[layer]

    def width(self, layer: int) -> int:
        """Output units of layer `layer` (0-based over the L dense layers)."""
        return self.layer_sizes[layer + 1]

    def params_per_unit(self, layer: int) -> int:
        return self.layer_sizes[layer] + 1

    def layer_param_count(self, layer: int) -> int:
        return self.params_per_unit(layer) * self.width(layer)

    @property
    def num_params(self) -> int:
        return sum(self.layer_param_count(l) for l in range(self.num_layers))


@dataclass(frozen=True)
class LayerBlocks:
    """Per-layer (weight, bias) tensors; weight l has shape (d_{l-1}, d_l), bias l has shape (d_l,)."""
    weights: tuple[torch.Tensor, ...]
    biases: tuple[torch.Tensor, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.biases):
            raise ShapeMismatchError(f"{len(self.weights)} weight blocks vs {len(self.biases)} bias blocks")
        object.__setattr__(self, "weights", tuple(self.weights))
        object.__setattr__(self, "biases", tuple(self.biases))

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def topology(self) -> ModelTopology:
        return ModelTopology((self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights))

    def layers(self) -> Iterator[tuple[torch.Tensor, torch.Tensor]]:
        return zip(self.weights, self.biases)

    def check_compatible(self, other: "LayerBlocks"):
        if self.num_layers != other.num_layers:
            raise ShapeMismatchError(f"{self.num_layers} layers vs {other.num_layers} layers")
        for l, ((w, b), (w2, b2)) in enumerate(zip(self.layers(), other.layers())):
            if w.shape != w2.shape or b.shape != b2.shape:
                raise ShapeMismatchError(f"layer {l}: {tuple(w.shape)} vs {tuple(w2.shape)}")

    def _map(self, fn, other: "LayerBlocks | None" = None):
        if other is None:
            return type(self)(tuple(fn(w) for w in self.weights), tuple(fn(b) for b in self.biases))
        self.check_compatible(other)
        return type(self)(
            tuple(fn(w, w2) for w, w2 in zip(self.weights, other.weights)),
            tuple(fn(b, b2) for b, b2 in zip(self.biases, other.biases)),
        )

    def __add__(self, other: "LayerBlocks"):
        return self._map(torch.add, other)

    def __sub__(self, other: "LayerBlocks"):
        return self._map(torch.sub, other)

    def __mul__(self, scalar: float):
        return self._map(lambda t: t * scalar)

    __rmul__ = __mul__

    def clone(self):
        return self._map(torch.clone)

    def zeros_like(self):
        return self._map(torch.zeros_like)

    def layer_vector(self, layer: int) -> np.ndarray:
        """Weights (row-major) followed by bias of one layer, as a flat float64 array."""
        return np.concatenate([self.weights[layer].reshape(-1).numpy(), self.biases[layer].numpy()])

    def layer_vectors(self) -> list[np.ndarray]:
        return [self.layer_vector(l) for l in range(self.num_layers)]

    def flatten(self) -> np.ndarray:
        return np.concatenate(self.layer_vectors())

    def norm(self) -> float:
        return float(math.sqrt(sum(float((w * w).sum() + (b * b).sum()) for w, b in self.layers())))

    def is_finite(self) -> bool:
        return all(bool(torch.isfinite(w).all() and torch.isfinite(b).all()) for w, b in self.layers())

    def max_abs_diff(self, other: "LayerBlocks") -> float:
        self.check_compatible(other)
        return max(
            max(float((w - w2).abs().max()) if w.numel() else 0.0, float((b - b2).abs().max()) if b.numel() else 0.0)
            for (w, b), (w2, b2) in zip(self.layers(), other.layers())
        )

    def bitwise_equal(self, other: "LayerBlocks") -> bool:
        self.check_compatible(other)
        return all(torch.equal(w, w2) and torch.equal(b, b2) for (w, b), (w2, b2) in zip(self.layers(), other.layers()))


class ParamSet(LayerBlocks):
    """Model parameters W of a dense network."""


class Gradient(LayerBlocks):
    """Gradient of the mean loss with respect to every parameter of a ParamSet."""


def params_from_arrays(weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]) -> ParamSet:
    return ParamSet(
        tuple(torch.as_tensor(np.asarray(w, dtype=np.float64)) for w in weights),
        tuple(torch.as_tensor(np.asarray(b, dtype=np.float64)) for b in biases),
    )


def zero_params(topology: ModelTopology) -> ParamSet:
    return ParamSet(
        tuple(torch.zeros(topology.fan_in(l), topology.width(l), dtype=DTYPE) for l in range(topology.num_layers)),
        tuple(torch.zeros(topology.width(l), dtype=DTYPE) for l in range(topology.num_layers)),
    )


def init_params(topology: ModelTopology, seed: int) -> ParamSet:
    """Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases."""
    generator = torch.Generator()
    generator.manual_seed(int(seed))
    weights, biases = [], []
    for l in range(topology.num_layers):
        fan_in, fan_out = topology.fan_in(l), topology.width(l)
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        w = (torch.rand(fan_in, fan_out, generator=generator, dtype=DTYPE) * 2.0 - 1.0) * bound
        weights.append(w)
        biases.append(torch.zeros(fan_out, dtype=DTYPE))

    return ParamSet(tuple(weights), tuple(biases))


def _as_batch(params: LayerBlocks, batch: Dataset | tuple[torch.Tensor, torch.Tensor]) -> tuple[torch.Tensor, torch.Tensor]:
    x, y = batch.as_tensors() if isinstance(batch, Dataset) else batch
    if x.ndim != 2 or x.shape[0] == 0:
        raise ShapeMismatchError(f"batch must be a non-empty 2-D feature matrix, got {tuple(x.shape)}")
    if x.shape[1] != params.weights[0].shape[0]:
        raise ShapeMismatchError(f"feature dim {x.shape[1]} != model input dim {params.weights[0].shape[0]}")
    if y.shape[0] != x.shape[0]:
        raise ShapeMismatchError(f"{y.shape[0]} labels for {x.shape[0]} samples")
    return x, y


def _logits(weights: Sequence[torch.Tensor], biases: Sequence[torch.Tensor], x: torch.Tensor) -> torch.Tensor:
    h = x
    last = len(weights) - 1
    for l, (w, b) in enumerate(zip(weights, biases)):
        h = torch.addmm(b, h, w)
        if l < last:
            h = torch.relu(h)
    return h


def forward(params: ParamSet, batch: Dataset | tuple[torch.Tensor, torch.Tensor]) -> tuple[torch.Tensor, float]:
    """Logits and mean cross-entropy; ReLU on hidden layers, softmax folded into the loss."""
    x, y = _as_batch(params, batch)
    with torch.no_grad():
        logits = _logits(params.weights, params.biases, x)
        loss = F.cross_entropy(logits, y)
    return logits, float(loss)


def loss_and_gradient(params: ParamSet, batch: Dataset | tuple[torch.Tensor, torch.Tensor]) -> tuple[float, Gradient]:
    """Mean cross-entropy loss of `batch` and its exact gradient, from one forward pass."""
    x, y = _as_batch(params, batch)
    weights = [w.detach().clone().requires_grad_(True) for w in params.weights]
    biases = [b.detach().clone().requires_grad_(True) for b in params.biases]
    loss = F.cross_entropy(_logits(weights, biases, x), y)
    grads = torch.autograd.grad(loss, weights + biases)
    num_layers = len(weights)
    return float(loss.detach()), Gradient(tuple(grads[:num_layers]), tuple(grads[num_layers:]))


def backward(params: ParamSet, batch: Dataset | tuple[torch.Tensor, torch.Tensor]) -> Gradient:
    """Exact gradient of forward's mean loss w.r.t. every weight and bias."""
    return loss_and_gradient(params, batch)[1]


def masked_sgd_step(params: ParamSet, gradient: Gradient, mask: "ParamMask", lr: float) -> ParamSet:
    """SGD on masked-in parameters; masked-out entries are returned bit-identical."""
    if not lr > 0:
        raise ValueError(f"learning rate must be > 0, got {lr}")
    params.check_compatible(gradient)
    mask.check_topology(params.topology)

    weights, biases = [], []
    for l, ((w, b), (gw, gb)) in enumerate(zip(params.layers(), gradient.layers())):
        units = mask.units[l]
        weights.append(torch.where(units.unsqueeze(0), w - lr * gw, w))
        biases.append(torch.where(units, b - lr * gb, b))

    return ParamSet(tuple(weights), tuple(biases))


def sgd_step(params: ParamSet, gradient: Gradient, lr: float) -> ParamSet:
    return params - gradient * lr


def evaluate(params: ParamSet, dataset: Dataset) -> tuple[float, float]:
    """(accuracy, mean loss) over the whole dataset."""
    if len(dataset) == 0:
        raise ValueError("Cannot evaluate on an empty dataset")
    logits, loss = forward(params, dataset)
    _, y = dataset.as_tensors()
    accuracy = float((logits.argmax(dim=1) == y).double().mean())
    return accuracy, loss


@dataclass(frozen=True)
class ParamMask:
    """
    Unit-level mask: one bool vector of length d_l per dense layer.

    A selected unit trains all of its incoming weights (one weight column) and its bias, so the
    induced parameter fraction of a layer equals its selected-unit fraction.
    """
    units: tuple[torch.Tensor, ...]

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(torch.as_tensor(u, dtype=torch.bool) for u in self.units))

    @classmethod
    def full(cls, topology: ModelTopology) -> "ParamMask":
        return cls(tuple(torch.ones(topology.width(l), dtype=torch.bool) for l in range(topology.num_layers)))

    @classmethod
    def empty(cls, topology: ModelTopology) -> "ParamMask":
        return cls(tuple(torch.zeros(topology.width(l), dtype=torch.bool) for l in range(topology.num_layers)))

    @classmethod
    def from_unit_indices(cls, topology: ModelTopology, selected: Sequence[Sequence[int]]) -> "ParamMask":
        units = []
        for l, indices in enumerate(selected):
            u = torch.zeros(topology.width(l), dtype=torch.bool)
            u[list(indices)] = True
            units.append(u)
        return cls(tuple(units))

    def check_topology(self, topology: ModelTopology):
        if len(self.units) != topology.num_layers:
            raise ShapeMismatchError(f"mask has {len(self.units)} layers, model has {topology.num_layers}")
        for l, u in enumerate(self.units):
            if u.shape[0] != topology.width(l):
                raise ShapeMismatchError(f"layer {l}: mask over {u.shape[0]} units, layer has {topology.width(l)}")

    def complement(self) -> "ParamMask":
        return ParamMask(tuple(~u for u in self.units))

    def selected_units(self, layer: int) -> list[int]:
        return torch.nonzero(self.units[layer]).flatten().tolist()

    def unit_fractions(self) -> list[float]:
        return [float(u.double().mean()) for u in self.units]

    def layer_param_counts(self, topology: ModelTopology) -> list[int]:
        return [int(u.sum()) * topology.params_per_unit(l) for l, u in enumerate(self.units)]

    def trained_param_count(self, topology: ModelTopology) -> int:
        return sum(self.layer_param_counts(topology))

    def training_ratio(self, topology: ModelTopology) -> float:
        return self.trained_param_count(topology) / topology.num_params

    def is_full(self) -> bool:
        return all(bool(u.all()) for u in self.units)

    def is_empty(self) -> bool:
        return not any(bool(u.any()) for u in self.units)

    def equals(self, other: "ParamMask") -> bool:
        return len(self.units) == len(other.units) and all(torch.equal(a, b) for a, b in zip(self.units, other.units))

    def apply(self, blocks: LayerBlocks) -> LayerBlocks:
        """m ⊙ blocks: masked-out entries set to zero."""
        return type(blocks)(
            tuple(torch.where(u.unsqueeze(0), w, torch.zeros_like(w)) for u, w in zip(self.units, blocks.weights)),
            tuple(torch.where(u, b, torch.zeros_like(b)) for u, b in zip(self.units, blocks.biases)),
        )
