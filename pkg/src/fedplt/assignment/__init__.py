from .sublayers import (
    SublayerAssignment,
    SublayerPartition,
    assign_rotational,
    coverage_report,
    coverage_table,
    default_sublayer_counts,
    materialize_mask,
    partition_layers,
    quantize_count,
    realized_allocation,
)
from .baselines import (
    BASELINE_STRATEGIES,
    BaselineSchedule,
    FixedMask,
    MaskProvider,
    Strategy,
    baseline_mask,
)
