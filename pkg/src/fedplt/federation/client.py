import math
from typing import Iterator

import numpy as np
import torch

from clog import get_logger
from fedplt.config.experiment import LocalUnit
from fedplt.errors import NumericalError
from fedplt.federation.data_model import ClientState, LocalResult
from fedplt.model.mlp import ParamSet, loss_and_gradient, masked_sgd_step
from fedplt.seeding import BATCH_STREAM, numpy_rng


logger = get_logger(__name__)


def batch_schedule(
    num_samples: int,
    batch_size: int,
    local_steps: int,
    unit: LocalUnit,
    rng: np.random.Generator,
) -> Iterator[np.ndarray]:
    """
    Mini-batch indices for one round of local training.

    The shard is visited in a fresh shuffled order per pass; one epoch is ceil(n / batch) steps.
    In iteration mode exactly `local_steps` batches are produced, reshuffling whenever a pass ends.
    Indices inside a batch are sorted, so a batch covering the whole shard is the shard itself.
    """
    if num_samples == 0:
        return
    if unit == LocalUnit.EPOCHS:
        for _ in range(local_steps):
            order = rng.permutation(num_samples)
            for start in range(0, num_samples, batch_size):
                yield np.sort(order[start:start + batch_size])
        return

    order = rng.permutation(num_samples)
    position = 0
    for _ in range(local_steps):
        if position >= num_samples:
            order = rng.permutation(num_samples)
            position = 0
        yield np.sort(order[position:position + batch_size])
        position += batch_size


def steps_per_round(client: ClientState) -> int:
    if client.n_k == 0:
        return 0
    if client.local_unit == LocalUnit.EPOCHS:
        return client.local_steps * math.ceil(client.n_k / client.batch_size)
    return client.local_steps


def local_train(global_params: ParamSet, client: ClientState, round_idx: int) -> LocalResult:
    """
    Masked local SGD from the broadcast model.

    Only parameters inside the client's mask for this round move; the returned update
    W_k − W^t is exactly zero elsewhere. Clients with an empty shard or an empty mask return
    the broadcast model and a zero update.
    """
    topology = global_params.topology
    mask = client.masks.mask_for_round(round_idx)
    mask.check_topology(topology)
    trained_params = mask.trained_param_count(topology)

    if client.n_k == 0 or mask.is_empty():
        return LocalResult(
            client_id=client.client_id,
            params=global_params,
            update=global_params.zeros_like(),
            mask=mask,
            n_k=client.n_k,
            trained_params=trained_params,
            samples_processed=0,
            steps=0,
            final_loss=None,
        )

    rng = numpy_rng(client.seed, BATCH_STREAM, client.client_id, round_idx)
    x, y = client.shard.as_tensors()
    params = global_params
    steps, samples, loss = 0, 0, None
    for indices in batch_schedule(client.n_k, client.batch_size, client.local_steps, client.local_unit, rng):
        index = torch.from_numpy(indices)
        loss, gradient = loss_and_gradient(params, (x[index], y[index]))
        if not math.isfinite(loss):
            raise NumericalError(f"client {client.client_id}, round {round_idx}, step {steps}: loss is {loss}")
        params = masked_sgd_step(params, gradient, mask, client.lr)
        steps += 1
        samples += int(indices.size)

    return LocalResult(
        client_id=client.client_id,
        params=params,
        update=params - global_params,
        mask=mask,
        n_k=client.n_k,
        trained_params=trained_params,
        samples_processed=samples,
        steps=steps,
        final_loss=loss,
    )
