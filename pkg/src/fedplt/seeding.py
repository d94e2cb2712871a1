import zlib

import numpy as np
import torch


# Named sub-streams of the master seed. Toggling one feature (e.g. client sampling) must not
# move the draws of another (e.g. mini-batch order).
DATA_STREAM = "data"
PARTITION_STREAM = "partition"
INIT_STREAM = "init"
BATCH_STREAM = "batches"
MASK_STREAM = "masks"
SAMPLING_STREAM = "sampling"


def derive_seed(master_seed: int, stream: str, *keys: int) -> int:
    """Stable 63-bit seed for `(master_seed, stream, *keys)`; independent of PYTHONHASHSEED."""
    entropy = [int(master_seed) & 0xFFFFFFFF, zlib.crc32(stream.encode("utf-8"))]
    entropy.extend(int(k) & 0xFFFFFFFF for k in keys)
    state = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0]
    return int(state) & ((1 << 63) - 1)


def numpy_rng(master_seed: int, stream: str, *keys: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, stream, *keys))


def torch_generator(master_seed: int, stream: str, *keys: int) -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed(derive_seed(master_seed, stream, *keys))
    return generator
