from collections import deque
from typing import Literal, Sequence

import numpy as np

from clog import get_logger
from fedplt.errors import ShapeMismatchError
from fedplt.model.mlp import LayerBlocks


logger = get_logger(__name__)

DEFAULT_EP_WINDOW = 10
MODEL_SCOPE = "model"

Scope = Literal["model"] | int


def _scoped(params: LayerBlocks | np.ndarray, scope: Scope) -> np.ndarray:
    if isinstance(params, LayerBlocks):
        return params.flatten() if scope == MODEL_SCOPE else params.layer_vector(int(scope))
    if scope != MODEL_SCOPE:
        raise ValueError(f"layer scope {scope} needs per-layer parameters, got a flat array")
    return np.asarray(params, dtype=np.float64).reshape(-1)


def parameter_delta(w_t: LayerBlocks | np.ndarray, w_prev: LayerBlocks | np.ndarray, scope: Scope = MODEL_SCOPE) -> np.ndarray:
    current, previous = _scoped(w_t, scope), _scoped(w_prev, scope)
    if current.shape != previous.shape:
        raise ShapeMismatchError(f"parameter vectors of length {current.size} and {previous.size}")
    return current - previous


def magnitude_gradient(w_t: LayerBlocks | np.ndarray, w_prev: LayerBlocks | np.ndarray, scope: Scope = MODEL_SCOPE) -> float:
    """MG = ‖w_t − w_prev‖² over the model or one layer (weights and bias)."""
    delta = parameter_delta(w_t, w_prev, scope)
    return float(delta @ delta)


class UpdateWindow:
    """Ring buffer of the last `length` parameter deltas of one scope."""

    def __init__(self, length: int = DEFAULT_EP_WINDOW):
        if length < 1:
            raise ValueError(f"window length must be >= 1, got {length}")
        self.length = length
        self._deltas: deque[np.ndarray] = deque(maxlen=length)

    def push(self, delta: np.ndarray):
        delta = np.asarray(delta, dtype=np.float64).reshape(-1)
        if self._deltas and self._deltas[0].shape != delta.shape:
            raise ShapeMismatchError(f"delta of length {delta.size} pushed into a window of length-{self._deltas[0].size} deltas")
        self._deltas.append(delta)

    @property
    def is_full(self) -> bool:
        return len(self._deltas) == self.length

    def deltas(self) -> tuple[np.ndarray, ...]:
        return tuple(self._deltas)

    def __len__(self) -> int:
        return len(self._deltas)


def effective_perturbation(window: UpdateWindow | Sequence[np.ndarray]) -> float | None:
    """
    EP = ‖Σ Δw‖ / Σ ‖Δw‖ over a full window.

    Returns None while the window is not yet full or when every delta is zero.
    """
    if isinstance(window, UpdateWindow):
        if not window.is_full:
            return None
        deltas = window.deltas()
    else:
        deltas = tuple(np.asarray(d, dtype=np.float64).reshape(-1) for d in window)
    if not deltas:
        return None

    stacked = np.stack(deltas)
    denominator = float(np.linalg.norm(stacked, axis=1).sum())
    if denominator == 0:
        return None

    numerator = float(np.linalg.norm(stacked.sum(axis=0)))
    return min(1.0, numerator / denominator)


class DynamicsTracker:
    """MG and EP of the global model, at model scope and for every dense layer."""

    def __init__(self, num_layers: int, window: int = DEFAULT_EP_WINDOW):
        self.num_layers = num_layers
        self.model_window = UpdateWindow(window)
        self.layer_windows = [UpdateWindow(window) for _ in range(num_layers)]

    def update(self, w_t: LayerBlocks, w_prev: LayerBlocks) -> dict[str, float | None]:
        """Record one round's delta and return {mg, ep, mg_l1, ep_l1, ...}."""
        layer_deltas = [parameter_delta(w_t, w_prev, l) for l in range(self.num_layers)]
        model_delta = np.concatenate(layer_deltas)
        self.model_window.push(model_delta)

        row: dict[str, float | None] = {
            "mg": float(model_delta @ model_delta),
            "ep": effective_perturbation(self.model_window),
        }
        for l, delta in enumerate(layer_deltas):
            self.layer_windows[l].push(delta)
            row[f"mg_l{l + 1}"] = float(delta @ delta)
            row[f"ep_l{l + 1}"] = effective_perturbation(self.layer_windows[l])

        return row
