from .data_model import ClientState, GlobalState, LocalResult, Participation, RoundRecord
from .client import batch_schedule, local_train, steps_per_round
from .aggregation import aggregate_fedavg, aggregate_masked
from .engine import (
    Accounting,
    AggregationRule,
    ExperimentResult,
    ExperimentSetup,
    Federation,
    build_clients,
    load_experiment_data,
    run_experiment,
    run_round,
    setup_experiment,
)
from .reports import (
    BudgetReport,
    TargetReport,
    budget_report,
    history_frame,
    target_report,
    write_metrics_csv,
)
