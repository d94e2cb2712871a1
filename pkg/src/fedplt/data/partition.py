from dataclasses import dataclass

import numpy as np
import pandas as pd

from clog import get_logger
from fedplt.data.dataset import Dataset


logger = get_logger(__name__)


@dataclass(frozen=True)
class PartitionSpec:
    num_clients: int
    concentration: float
    seed: int

    def __post_init__(self):
        if self.num_clients < 1:
            raise ValueError(f"num_clients must be >= 1, got {self.num_clients}")
        if not self.concentration > 0:
            raise ValueError(f"Dirichlet concentration must be > 0, got {self.concentration}")


def partition_dirichlet(dataset: Dataset, spec: PartitionSpec) -> list[Dataset]:
    """
    Label-skewed split of `dataset` over `spec.num_clients` clients.

    For every class the class's samples are shuffled, proportions are drawn from
    Dirichlet(alpha, ..., alpha) over the clients and the samples are dealt out with a
    multinomial draw on those proportions. Each shard keeps the original sample order, so a
    single client receives the input unchanged.
    """
    if len(dataset) == 0:
        raise ValueError("Cannot partition an empty dataset")

    rng = np.random.default_rng(spec.seed)
    num_clients = spec.num_clients
    client_indices: list[list[np.ndarray]] = [[] for _ in range(num_clients)]

    for cls in range(dataset.num_classes):
        idx_cls = np.flatnonzero(dataset.labels == cls)
        if idx_cls.size == 0:
            continue
        idx_cls = rng.permutation(idx_cls)
        proportions = rng.dirichlet(np.full(num_clients, spec.concentration))
        # dirichlet can return a vector summing to 1 +- eps; multinomial wants sum <= 1
        proportions = proportions / proportions.sum()
        counts = rng.multinomial(idx_cls.size, proportions)
        for client_id, chunk in enumerate(np.split(idx_cls, np.cumsum(counts)[:-1])):
            client_indices[client_id].append(chunk)

    shards = []
    for chunks in client_indices:
        indices = np.sort(np.concatenate(chunks)) if chunks else np.zeros(0, dtype=np.int64)
        shards.append(dataset.subset(indices))

    empty = [k for k, shard in enumerate(shards) if len(shard) == 0]
    if empty:
        logger.warning(f"{len(empty)} of {num_clients} clients received no samples (alpha={spec.concentration}): {empty}")

    return shards


def partition_summary(shards: list[Dataset]) -> pd.DataFrame:
    """Per-client label histogram with n_k and the share of the dominant class."""
    rows = []
    for client_id, shard in enumerate(shards):
        histogram = shard.label_histogram()
        n_k = len(shard)
        row = {"client": client_id, "n_k": n_k}
        row.update({f"class_{c}": int(count) for c, count in enumerate(histogram)})
        row["dominant_share"] = float(histogram.max() / n_k) if n_k else 0.0
        rows.append(row)

    return pd.DataFrame(rows)
