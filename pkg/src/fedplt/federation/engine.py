from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from clog import get_logger
from fedplt.allocation.core import balanced_allocation, layer_counts_mlp
from fedplt.assignment.baselines import BaselineSchedule, FixedMask, Strategy
from fedplt.assignment.sublayers import (
    SublayerAssignment,
    SublayerPartition,
    assign_rotational,
    materialize_mask,
    partition_layers,
    realized_allocation,
)
from fedplt.config.experiment import ExperimentConfig, NormSource, ParticipationMode, resolve_threads
from fedplt.config.utils import parse_config
from fedplt.costmodel.efficiency import Workload, computation_cost
from fedplt.data.dataset import Dataset, generate_synthetic
from fedplt.data.io import load_dataset
from fedplt.data.partition import PartitionSpec, partition_dirichlet
from fedplt.errors import ConfigError, InfeasibleBudgetError, NumericalError
from fedplt.federation.aggregation import aggregate_fedavg, aggregate_masked
from fedplt.federation.client import local_train
from fedplt.federation.data_model import ClientState, GlobalState, LocalResult, Participation, RoundRecord
from fedplt.metrics.dynamics import DEFAULT_EP_WINDOW, DynamicsTracker
from fedplt.model.mlp import ModelTopology, ParamMask, ParamSet, evaluate, init_params
from fedplt.sampling.ocs import SamplingInput, aggregate_unbiased, ocs_plt_probabilities, select_clients
from fedplt.seeding import DATA_STREAM, INIT_STREAM, PARTITION_STREAM, SAMPLING_STREAM, derive_seed, numpy_rng
from fedplt.tracking import RunTracker


logger = get_logger(__name__)


class AggregationRule(str, Enum):
    FEDAVG = "fedavg"
    MASKED = "masked"


@dataclass(frozen=True)
class Accounting:
    """Constants of the per-round cost bookkeeping: FLOPs per parameter per sample, bytes per parameter."""
    flops_alpha: float = 2.0
    flops_beta: float = 4.0
    bytes_per_param: int = 8

    @classmethod
    def from_defaults(cls) -> "Accounting":
        conf = parse_config("accounting") or {}
        return cls(
            flops_alpha=float(conf.get("flops_alpha", 2.0)),
            flops_beta=float(conf.get("flops_beta", 4.0)),
            bytes_per_param=int(conf.get("bytes_per_param", 8)),
        )


class Federation:
    """
    Server loop over a fixed set of clients.

    Every round broadcasts W^t, runs local training (concurrently, up to `threads` workers),
    then aggregates. With full participation absolute client models are aggregated per unit
    (or by plain weighted average for FedAvg); with sampled participation the unbiased estimate
    of the masked updates is added to W^t.
    """

    def __init__(
        self,
        clients: Sequence[ClientState],
        validation: Dataset,
        participation: Participation | None = None,
        aggregation: AggregationRule = AggregationRule.MASKED,
        seed: int = 0,
        threads: int = 1,
        ep_window: int = DEFAULT_EP_WINDOW,
        accounting: Accounting | None = None,
    ):
        if not clients:
            raise ValueError("a federation needs at least one client")
        if len(validation) == 0:
            raise ValueError("validation set is empty")
        self.clients = list(clients)
        self.validation = validation
        self.participation = participation or Participation()
        self.aggregation = aggregation
        self.seed = seed
        self.threads = max(1, threads)
        self.ep_window = ep_window
        self.accounting = accounting or Accounting()

        self.n = np.array([c.n_k for c in self.clients], dtype=np.float64)
        self.ratios = np.array([c.ratio for c in self.clients], dtype=np.float64)
        if self.participation.sampled:
            self._check_budget()

    def _budget_ratios(self) -> np.ndarray:
        if self.participation.mode == ParticipationMode.OCS:
            return np.ones_like(self.ratios)
        return self.ratios

    def _check_budget(self):
        kappa = self.participation.kappa
        capacity = float(self._budget_ratios().sum())
        if kappa is None or not 0 < kappa <= capacity + 1e-12:
            raise InfeasibleBudgetError(f"budget κ={kappa} must lie in (0, {capacity:.6g}] for mode '{self.participation.mode.value}'")

    def _train(self, params: ParamSet, clients: Sequence[ClientState], round_idx: int) -> list[LocalResult]:
        if self.threads == 1 or len(clients) == 1:
            return [local_train(params, client, round_idx) for client in clients]
        with ThreadPoolExecutor(max_workers=min(self.threads, len(clients))) as pool:
            return list(pool.map(lambda client: local_train(params, client, round_idx), clients))

    def _aggregate(self, params: ParamSet, results: Sequence[LocalResult]) -> ParamSet:
        contributions = [(res.params, res.mask, res.n_k) for res in results]
        if self.aggregation == AggregationRule.FEDAVG:
            return aggregate_fedavg(params, contributions)
        return aggregate_masked(params, contributions)

    def _stale_norms(self, state: GlobalState) -> np.ndarray:
        """Last known ‖U_k‖; clients never heard from borrow the mean of the known norms."""
        known = [state.last_norms[c.client_id] for c in self.clients if c.client_id in state.last_norms]
        fill = float(np.mean(known)) if known else 0.0
        return np.array([state.last_norms.get(c.client_id, fill) for c in self.clients])

    def _flops(self, results: Sequence[LocalResult], num_params: int) -> float:
        total = 0.0
        for res in results:
            if res.samples_processed == 0:
                continue
            workload = Workload(
                num_params=num_params,
                bytes_per_param=self.accounting.bytes_per_param,
                local_iters=res.samples_processed,
                alpha=self.accounting.flops_alpha,
                beta=self.accounting.flops_beta,
            )
            total += computation_cost(workload, res.trained_params / num_params)
        return total

    def run_round(self, state: GlobalState) -> GlobalState:
        t = state.round
        params = state.params
        topology = params.topology
        num_params = topology.num_params
        if state.dynamics is None:
            state.dynamics = DynamicsTracker(topology.num_layers, self.ep_window)
        pre_accuracy, pre_loss = state.last_eval or evaluate(params, self.validation)

        expected_clients = expected_mass = None
        if not self.participation.sampled:
            trained = self._train(params, self.clients, t)
            uploads = trained
            upload_positions = list(range(len(self.clients)))
            receivers = len(self.clients)
            new_params = self._aggregate(params, trained)
        else:
            probe = self.participation.norm_source == NormSource.PROBE
            trained = self._train(params, self.clients, t) if probe else []
            norms = np.array([res.update_norm for res in trained]) if probe else self._stale_norms(state)

            budget_ratios = self._budget_ratios()
            decision = ocs_plt_probabilities(SamplingInput(self.n, norms, budget_ratios, self.participation.kappa))
            selected = select_clients(decision.probabilities, numpy_rng(self.seed, SAMPLING_STREAM, t))
            upload_positions = list(selected)
            expected_clients = decision.expected_clients()
            expected_mass = decision.expected_ratio_mass(self.ratios)

            if probe:
                uploads = [trained[k] for k in selected]
                receivers = len(self.clients)
            else:
                uploads = self._train(params, [self.clients[k] for k in selected], t)
                trained = uploads
                receivers = len(selected)

            if uploads:
                updates = {k: res.update for k, res in zip(selected, uploads)}
                new_params = params + aggregate_unbiased(updates, decision.probabilities, self.n, params.zeros_like())
            else:
                logger.warning(f"Round {t}: no client selected, global model kept")
                new_params = params

        for res in trained:
            state.last_norms[res.client_id] = res.update_norm
        if not new_params.is_finite():
            raise NumericalError(f"round {t}: aggregated parameters are not finite")

        accuracy, loss = evaluate(new_params, self.validation)
        dynamics = state.dynamics.update(new_params, params)
        previous = state.history[-1] if state.history else None
        bytes_up = sum(res.trained_params for res in uploads) * self.accounting.bytes_per_param
        bytes_down = receivers * num_params * self.accounting.bytes_per_param
        round_flops = self._flops(trained, num_params)

        record = RoundRecord(
            round=t,
            pre_loss=pre_loss,
            pre_accuracy=pre_accuracy,
            loss=loss,
            accuracy=accuracy,
            mg=dynamics.pop("mg"),
            ep=dynamics.pop("ep"),
            layer_dynamics=dynamics,
            update_norms={res.client_id: res.update_norm for res in trained},
            bytes_up=bytes_up,
            bytes_down=bytes_down,
            participants=tuple(res.client_id for res in uploads),
            cumulative_bytes_up=bytes_up + (previous.cumulative_bytes_up if previous else 0),
            cumulative_bytes_down=bytes_down + (previous.cumulative_bytes_down if previous else 0),
            round_flops=round_flops,
            cumulative_flops=round_flops + (previous.cumulative_flops if previous else 0.0),
            expected_clients=expected_clients if expected_clients is not None else float(len(self.clients)),
            expected_ratio_mass=expected_mass if expected_mass is not None else float(self.ratios.sum()),
            comm_units=float(self.ratios[upload_positions].sum()),
        )

        state.history.append(record)
        state.params = new_params
        state.last_eval = (accuracy, loss)
        state.round = t + 1

        logger.info(
            f"Round {t}: loss {pre_loss:.4f} -> {loss:.4f}, accuracy {pre_accuracy:.4f} -> {accuracy:.4f}, "
            f"participants {len(uploads)}/{len(self.clients)}, up {bytes_up} B"
        )
        return state

    def run(self, state: GlobalState, rounds: int, tracker: RunTracker | None = None) -> GlobalState:
        for _ in range(rounds):
            state = self.run_round(state)
            if tracker is not None:
                record = state.history[-1]
                tracker.log_round(record.round, {k: v for k, v in record.to_row().items() if k != "round"})
        return state


def run_round(
    state: GlobalState,
    clients: Sequence[ClientState],
    participation: Participation | None = None,
    validation: Dataset | None = None,
    **options,
) -> GlobalState:
    """One round with a throwaway Federation; validation defaults to the union of the shards."""
    if validation is None:
        shards = [c.shard for c in clients if c.n_k > 0]
        validation = Dataset(
            np.concatenate([s.features for s in shards]),
            np.concatenate([s.labels for s in shards]),
            shards[0].num_classes,
        )
    return Federation(clients, validation, participation, **options).run_round(state)


@dataclass
class ExperimentSetup:
    config: ExperimentConfig
    topology: ModelTopology
    train: Dataset
    validation: Dataset
    shards: list[Dataset]
    clients: list[ClientState]
    partition: SublayerPartition
    assignments: list[SublayerAssignment]
    initial_params: ParamSet
    federation: Federation


@dataclass
class ExperimentResult:
    setup: ExperimentSetup
    state: GlobalState
    final_accuracy: float
    final_loss: float
    history: list[RoundRecord] = field(default_factory=list)


def load_experiment_data(config: ExperimentConfig) -> tuple[Dataset, Dataset]:
    """Training pool and validation split."""
    topology = config.model_topology
    if config.data.source == "file":
        dataset = load_dataset(config.data.path)
        if dataset.feature_dim != topology.input_dim:
            raise ConfigError("data.path", f"feature dim {dataset.feature_dim} != topology input {topology.input_dim}")
        if dataset.num_classes != topology.num_classes:
            raise ConfigError("data.path", f"{dataset.num_classes} classes != topology output {topology.num_classes}")
    else:
        if config.data.num_samples < topology.num_classes:
            raise ConfigError("data.num_samples", f"need at least {topology.num_classes} samples")
        dataset = generate_synthetic(
            num_samples=config.data.num_samples,
            feature_dim=topology.input_dim,
            num_classes=topology.num_classes,
            class_separation=config.data.class_separation,
            seed=derive_seed(config.seed, DATA_STREAM),
        )

    if config.data.validation_fraction == 0:
        return dataset, dataset
    return dataset.split(config.data.validation_fraction, numpy_rng(config.seed, DATA_STREAM, 1))


def build_clients(
    config: ExperimentConfig,
    shards: Sequence[Dataset],
    topology: ModelTopology,
) -> tuple[list[ClientState], SublayerPartition, list[SublayerAssignment]]:
    """Clients with the mask source of the configured strategy, plus the FedPLT sub-layer plan."""
    ratios = config.client_ratios()
    partition = partition_layers(topology, config.sublayers)
    assignments: list[SublayerAssignment] = []

    if config.strategy == Strategy.FEDPLT:
        H = layer_counts_mlp(topology)
        Qs = [balanced_allocation(r, H).q for r in ratios]
        assignments = assign_rotational(Qs, partition)
        providers = [FixedMask(materialize_mask(a, partition, topology)) for a in assignments]
        client_ratios = [realized_allocation(a, partition).r for a in assignments]
    elif config.strategy == Strategy.FEDAVG:
        providers = [FixedMask(ParamMask.full(topology)) for _ in ratios]
        client_ratios = [1.0 for _ in ratios]
    else:
        providers = [BaselineSchedule(config.strategy, k, r, topology, config.seed) for k, r in enumerate(ratios)]
        client_ratios = list(ratios)

    clients = [
        ClientState(
            client_id=k,
            shard=shard,
            masks=provider,
            lr=config.lr,
            local_steps=config.local_steps,
            local_unit=config.local_unit,
            batch_size=config.batch_size,
            ratio=ratio,
            seed=config.seed,
        )
        for k, (shard, provider, ratio) in enumerate(zip(shards, providers, client_ratios))
    ]
    return clients, partition, assignments


def setup_experiment(config: ExperimentConfig) -> ExperimentSetup:
    topology = config.model_topology
    train, validation = load_experiment_data(config)
    spec = PartitionSpec(config.partition.num_clients, config.partition.concentration, derive_seed(config.seed, PARTITION_STREAM))
    shards = partition_dirichlet(train, spec)
    clients, partition, assignments = build_clients(config, shards, topology)

    participation = Participation(config.sampling.mode, config.sampling.kappa, config.sampling.norm_source)
    federation = Federation(
        clients=clients,
        validation=validation,
        participation=participation,
        aggregation=AggregationRule.FEDAVG if config.strategy == Strategy.FEDAVG else AggregationRule.MASKED,
        seed=config.seed,
        threads=resolve_threads(config.threads),
        ep_window=config.ep_window,
        accounting=Accounting.from_defaults(),
    )
    initial = init_params(topology, derive_seed(config.seed, INIT_STREAM))
    return ExperimentSetup(config, topology, train, validation, shards, clients, partition, assignments, initial, federation)


def run_experiment(config: ExperimentConfig, tracker: RunTracker | None = None) -> ExperimentResult:
    """Build everything from the config and run `config.rounds` rounds; deterministic per seed."""
    setup = setup_experiment(config)
    logger.info(
        f"Running {config.strategy.value} on topology {list(config.topology)} with {len(setup.clients)} clients "
        f"for {config.rounds} rounds (sampling: {config.sampling.mode.value})"
    )
    state = GlobalState(round=0, params=setup.initial_params)
    state = setup.federation.run(state, config.rounds, tracker)
    accuracy, loss = state.last_eval or evaluate(state.params, setup.validation)
    logger.info(f"Final accuracy {accuracy:.4f}, loss {loss:.4f}")
    return ExperimentResult(setup, state, accuracy, loss, state.history)
