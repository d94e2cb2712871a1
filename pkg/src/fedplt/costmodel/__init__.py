from .efficiency import (
    DeviceProfile,
    Equalization,
    RoundTimeSummary,
    Workload,
    communication_cost,
    computation_cost,
    efficiency_report,
    equalize_ratios,
    round_time,
    round_time_summary,
)
from .bounds import (
    ConvergenceConstants,
    StepSchedule,
    constant_step_limit,
    convergence_bound,
    finite_horizon_bound,
    geometric_envelope,
    partial_training_factor,
    rounds_to_reach,
    step_sizes,
    sublinear_envelope,
)
