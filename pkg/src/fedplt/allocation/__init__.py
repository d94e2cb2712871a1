from .core import (
    AllocationPlan,
    LayerCounts,
    balance_objective,
    balanced_allocation,
    balanced_contribution,
    contribution_caps,
    contribution_std,
    contribution_to_allocation,
    contribution_vector,
    imbalance_error,
    imbalance_table,
    layer_counts_mlp,
    training_ratio,
    water_level,
)
