from dataclasses import dataclass, field

import numpy as np
import torch

from clog import get_logger
from fedplt.errors import ShapeMismatchError


logger = get_logger(__name__)


@dataclass(frozen=True)
class Dataset:
    """Labeled samples held by one party (the whole pool, a validation split, or a client shard).

    Attributes:
        features: float64 array of shape (n, dim).
        labels: int64 array of shape (n,), values in [0, num_classes).
        num_classes: number of classes C.
    """
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    _tensors: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise ShapeMismatchError(f"features must be 2-D, got shape {features.shape}")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise ShapeMismatchError(f"{labels.shape[0]} labels for {features.shape[0]} feature rows")
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices: np.ndarray) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[indices], self.labels[indices], self.num_classes)

    def split(self, holdout_fraction: float, rng: np.random.Generator) -> tuple["Dataset", "Dataset"]:
        """Random (train, holdout) split; the holdout gets round(fraction * n) samples."""
        n_holdout = int(round(holdout_fraction * len(self)))
        order = rng.permutation(len(self))
        holdout_idx = np.sort(order[:n_holdout])
        train_idx = np.sort(order[n_holdout:])
        return self.subset(train_idx), self.subset(holdout_idx)

    def label_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def as_tensors(self) -> tuple[torch.Tensor, torch.Tensor]:
        if not self._tensors:
            self._tensors["x"] = torch.from_numpy(self.features)
            self._tensors["y"] = torch.from_numpy(self.labels)
        return self._tensors["x"], self._tensors["y"]

    def equals(self, other: "Dataset") -> bool:
        return (
            self.num_classes == other.num_classes
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )


def empty_like(dataset: Dataset) -> Dataset:
    return Dataset(np.zeros((0, dataset.feature_dim)), np.zeros(0, dtype=np.int64), dataset.num_classes)


def generate_synthetic(
    num_samples: int,
    feature_dim: int,
    num_classes: int,
    class_separation: float,
    seed: int,
) -> Dataset:
    """
    Class-conditional Gaussian blobs with unit covariance.

    Class means sit at `class_separation / sqrt(2)` along distinct coordinate axes, so every pair
    of means is exactly `class_separation` apart. When there are more classes than feature
    dimensions the means are random unit directions scaled by `class_separation / 2`.
    Labels are balanced: each class holds floor(n/C) or ceil(n/C) samples.

    Args:
        num_samples: total n, at least num_classes.
        feature_dim: dimension of each feature vector.
        num_classes: C >= 2.
        class_separation: distance between class means, >= 0.
        seed: generator seed; equal seeds give identical datasets.
    """
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    if num_samples < num_classes:
        raise ValueError(f"num_samples ({num_samples}) must be >= num_classes ({num_classes})")
    if feature_dim < 1:
        raise ValueError(f"feature_dim must be >= 1, got {feature_dim}")
    if class_separation < 0:
        raise ValueError(f"class_separation must be >= 0, got {class_separation}")

    rng = np.random.default_rng(seed)
    if feature_dim >= num_classes:
        means = np.zeros((num_classes, feature_dim))
        means[np.arange(num_classes), np.arange(num_classes)] = class_separation / np.sqrt(2.0)
    else:
        directions = rng.standard_normal((num_classes, feature_dim))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        means = directions * (class_separation / 2.0)

    labels = rng.permutation(np.arange(num_samples) % num_classes)
    features = means[labels] + rng.standard_normal((num_samples, feature_dim))

    logger.debug(f"Generated {num_samples} samples, dim={feature_dim}, C={num_classes}, sep={class_separation}")
    return Dataset(features, labels, num_classes)
