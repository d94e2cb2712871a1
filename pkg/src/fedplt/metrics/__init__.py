from .dynamics import (
    DEFAULT_EP_WINDOW,
    MODEL_SCOPE,
    DynamicsTracker,
    UpdateWindow,
    effective_perturbation,
    magnitude_gradient,
    parameter_delta,
)
