from .mlp import (
    DTYPE,
    Gradient,
    LayerBlocks,
    ModelTopology,
    ParamMask,
    ParamSet,
    backward,
    evaluate,
    forward,
    init_params,
    loss_and_gradient,
    masked_sgd_step,
    params_from_arrays,
    sgd_step,
    zero_params,
)
from .checkpoint import load_checkpoint, save_checkpoint
