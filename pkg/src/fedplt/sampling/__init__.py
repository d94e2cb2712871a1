from .ocs import (
    SamplingDecision,
    SamplingInput,
    aggregate_unbiased,
    estimator_variance,
    ocs_plt_probabilities,
    ocs_probabilities,
    select_clients,
)
