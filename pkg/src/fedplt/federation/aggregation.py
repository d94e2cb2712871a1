from typing import Sequence

import torch

from clog import get_logger
from fedplt.model.mlp import ParamMask, ParamSet


logger = get_logger(__name__)

# (client parameters after local training, client mask, sample count n_k)
Contribution = tuple[ParamSet, ParamMask, float]


def aggregate_masked(global_params: ParamSet, contributions: Sequence[Contribution]) -> ParamSet:
    """
    Per-unit weighted mean over the clients that trained each unit.

    For every output unit the new weights and bias are Σ n_k m_k W_k / Σ n_k m_k over the
    contributing clients; units nobody trained (or only clients with n_k = 0) keep the global value.
    """
    if not contributions:
        raise ValueError("aggregation needs at least one client")
    for params, mask, _ in contributions:
        global_params.check_compatible(params)
        mask.check_topology(global_params.topology)

    weights, biases = [], []
    for l, (w_global, b_global) in enumerate(global_params.layers()):
        numerator_w = torch.zeros_like(w_global)
        numerator_b = torch.zeros_like(b_global)
        denominator = torch.zeros_like(b_global)
        for params, mask, n_k in contributions:
            unit_weight = mask.units[l].to(w_global.dtype) * float(n_k)
            numerator_w = numerator_w + params.weights[l] * unit_weight.unsqueeze(0)
            numerator_b = numerator_b + params.biases[l] * unit_weight
            denominator = denominator + unit_weight

        trained = denominator > 0
        safe = torch.where(trained, denominator, torch.ones_like(denominator))
        weights.append(torch.where(trained.unsqueeze(0), numerator_w / safe.unsqueeze(0), w_global))
        biases.append(torch.where(trained, numerator_b / safe, b_global))

    return ParamSet(tuple(weights), tuple(biases))


def aggregate_fedavg(global_params: ParamSet, contributions: Sequence[Contribution]) -> ParamSet:
    """Plain n_k-weighted average of full client models."""
    if not contributions:
        raise ValueError("aggregation needs at least one client")
    total = float(sum(n_k for _, _, n_k in contributions))
    if total <= 0:
        logger.warning("All participating clients hold zero samples; global model unchanged")
        return global_params

    aggregate = global_params.zeros_like()
    for params, _, n_k in contributions:
        aggregate = aggregate + params * (float(n_k) / total)
    return aggregate
