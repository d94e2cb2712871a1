"""
ParamSet checkpoints.

Layout (little-endian): magic b"FPLW", version u32, L u32, then L+1 u32 layer sizes, then for each
layer the weight matrix (row-major) followed by the bias vector, all as float64.
"""
import struct
from pathlib import Path

import numpy as np
import torch

from clog import get_logger
from fedplt.model.mlp import ModelTopology, ParamSet


logger = get_logger(__name__)

CHECKPOINT_MAGIC = b"FPLW"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sII")


def save_checkpoint(params: ParamSet, path: str | Path):
    topology = params.topology
    sizes = np.asarray(topology.layer_sizes, dtype="<u4")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, topology.num_layers))
        f.write(sizes.tobytes())
        for w, b in params.layers():
            f.write(w.numpy().astype("<f8").tobytes(order="C"))
            f.write(b.numpy().astype("<f8").tobytes())

    logger.debug(f"Saved checkpoint of {topology.num_params} parameters to {path}")


def load_checkpoint(path: str | Path) -> ParamSet:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: file too short for a checkpoint header")
    magic, version, num_layers = _HEADER.unpack_from(raw, 0)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")

    offset = _HEADER.size
    sizes = np.frombuffer(raw, dtype="<u4", count=num_layers + 1, offset=offset)
    topology = ModelTopology(tuple(int(s) for s in sizes))
    offset += 4 * (num_layers + 1)

    expected = offset + 8 * topology.num_params
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")

    weights, biases = [], []
    for l in range(num_layers):
        fan_in, width = topology.fan_in(l), topology.width(l)
        w = np.frombuffer(raw, dtype="<f8", count=fan_in * width, offset=offset).reshape(fan_in, width)
        offset += 8 * fan_in * width
        b = np.frombuffer(raw, dtype="<f8", count=width, offset=offset)
        offset += 8 * width
        weights.append(torch.from_numpy(w.astype(np.float64)))
        biases.append(torch.from_numpy(b.astype(np.float64)))

    return ParamSet(tuple(weights), tuple(biases))
