from .utils import deep_merge, flatten, parse_config, read_config_file
from .experiment import (
    DataConfig,
    ExperimentConfig,
    FleetConfig,
    FleetGroup,
    LocalUnit,
    NormSource,
    ParticipationMode,
    PartitionConfig,
    SamplingConfig,
    TrackingConfig,
    default_experiment_dict,
    largest_remainder_counts,
    load_experiment_config,
    resolve_threads,
)
