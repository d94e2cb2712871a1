import dataclasses
import math
import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Sequence

from clog import get_logger
from fedplt.assignment.baselines import Strategy
from fedplt.config.utils import deep_merge, parse_config, read_config_file
from fedplt.costmodel.efficiency import DeviceProfile, Workload, equalize_ratios
from fedplt.errors import ConfigError, TopologyError
from fedplt.model.mlp import ModelTopology


logger = get_logger(__name__)

THREADS_ENV = "FEDPLT_THREADS"


class LocalUnit(str, Enum):
    EPOCHS = "epochs"
    ITERATIONS = "iterations"


class ParticipationMode(str, Enum):
    FULL = "full"
    OCS = "ocs"
    OCS_PLT = "ocs_plt"


class NormSource(str, Enum):
    STALE = "stale"
    PROBE = "probe"


def _section(data: Any, path: str) -> dict:
    if not isinstance(data, Mapping):
        raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
    return dict(data)


def _check_keys(data: Mapping, allowed: Sequence[str], path: str):
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        prefix = f"{path}." if path else ""
        raise ConfigError(f"{prefix}{unknown[0]}", f"unknown field (allowed: {sorted(allowed)})")


def _field(data: Mapping, key: str, path: str) -> Any:
    if key not in data:
        raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
    return data[key]


def _as_int(value: Any, path: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise ConfigError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {value}")
    return int(value)


def _as_float(value: Any, path: str, low: float | None = None, high: float | None = None, low_open: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(path, f"must be finite, got {value}")
    if low is not None and (value <= low if low_open else value < low):
        raise ConfigError(path, f"must be {'>' if low_open else '>='} {low}, got {value}")
    if high is not None and value > high:
        raise ConfigError(path, f"must be <= {high}, got {value}")
    return value


def _as_ratio(value: Any, path: str) -> float:
    return _as_float(value, path, low=0.0, high=1.0, low_open=True)


def _as_enum(enum_cls: type[Enum], value: Any, path: str) -> Enum:
    try:
        return enum_cls(str(value).lower())
    except ValueError:
        raise ConfigError(path, f"'{value}' is not one of {[e.value for e in enum_cls]}")


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    path: str | None = None
    num_samples: int = 3000
    class_separation: float = 4.0
    validation_fraction: float = 0.2

    @classmethod
    def from_dict(cls, data: Any, path: str = "data") -> "DataConfig":
        data = _section(data, path)
        _check_keys(data, [f.name for f in dataclasses.fields(cls)], path)
        source = str(data.get("source", "synthetic"))
        if source not in ("synthetic", "file"):
            raise ConfigError(f"{path}.source", f"'{source}' is not one of ['file', 'synthetic']")
        file_path = data.get("path")
        if source == "file" and not file_path:
            raise ConfigError(f"{path}.path", "required when source is 'file'")
        return cls(
            source=source,
            path=str(file_path) if file_path else None,
            num_samples=_as_int(data.get("num_samples", 3000), f"{path}.num_samples", minimum=2),
            class_separation=_as_float(data.get("class_separation", 4.0), f"{path}.class_separation", low=0.0),
            validation_fraction=_as_float(data.get("validation_fraction", 0.2), f"{path}.validation_fraction", low=0.0, high=0.9),
        )


@dataclass(frozen=True)
class PartitionConfig:
    num_clients: int = 10
    concentration: float = 0.5

    @classmethod
    def from_dict(cls, data: Any, path: str = "partition") -> "PartitionConfig":
        data = _section(data, path)
        _check_keys(data, ["num_clients", "concentration"], path)
        return cls(
            num_clients=_as_int(_field(data, "num_clients", path), f"{path}.num_clients", minimum=1),
            concentration=_as_float(_field(data, "concentration", path), f"{path}.concentration", low=0.0, low_open=True),
        )


@dataclass(frozen=True)
class FleetGroup:
    """A share of the clients that trains with one ratio."""
    fraction: float
    ratio: float


def largest_remainder_counts(fractions: Sequence[float], total: int) -> list[int]:
    """Integer counts summing to `total`, proportional to `fractions`; ties go to earlier groups."""
    exact = [f * total for f in fractions]
    counts = [math.floor(e) for e in exact]
    leftover = total - sum(counts)
    by_remainder = sorted(range(len(exact)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in by_remainder[:leftover]:
        counts[i] += 1
    return counts


@dataclass(frozen=True)
class FleetConfig:
    """
    Per-client training ratios, given one of three ways: explicit `ratios`, a `template` of
    {fraction, ratio} groups, or device `profiles` with a `workload` (ratios equalize round times).
    Nothing given means every client trains the full model.
    """
    ratios: tuple[float, ...] | None = None
    template: tuple[FleetGroup, ...] | None = None
    profiles: tuple[DeviceProfile, ...] | None = None
    workload: Workload | None = None
    target_time: float | None = None

    @classmethod
    def from_dict(cls, data: Any, path: str = "fleet") -> "FleetConfig":
        data = _section(data or {}, path)
        _check_keys(data, ["ratios", "template", "profiles", "workload", "target_time"], path)
        given = [key for key in ("ratios", "template", "profiles") if data.get(key) is not None]
        if len(given) > 1:
            raise ConfigError(f"{path}.{given[1]}", f"only one of ratios/template/profiles may be set, found {given}")

        ratios = template = profiles = workload = None
        if data.get("ratios") is not None:
            raw = data["ratios"]
            if not isinstance(raw, (list, tuple)) or not raw:
                raise ConfigError(f"{path}.ratios", "expected a non-empty list")
            ratios = tuple(_as_ratio(r, f"{path}.ratios[{i}]") for i, r in enumerate(raw))

        if data.get("template") is not None:
            raw = data["template"]
            if not isinstance(raw, (list, tuple)) or not raw:
                raise ConfigError(f"{path}.template", "expected a non-empty list of {fraction, ratio}")
            groups = []
            for i, group in enumerate(raw):
                group_path = f"{path}.template[{i}]"
                group = _section(group, group_path)
                _check_keys(group, ["fraction", "ratio"], group_path)
                groups.append(FleetGroup(
                    fraction=_as_float(_field(group, "fraction", group_path), f"{group_path}.fraction", low=0.0, high=1.0),
                    ratio=_as_ratio(_field(group, "ratio", group_path), f"{group_path}.ratio"),
                ))
            if abs(sum(g.fraction for g in groups) - 1.0) > 1e-9:
                raise ConfigError(f"{path}.template", f"fractions sum to {sum(g.fraction for g in groups)}, expected 1")
            template = tuple(groups)

        if data.get("profiles") is not None:
            raw = data["profiles"]
            if not isinstance(raw, (list, tuple)) or not raw:
                raise ConfigError(f"{path}.profiles", "expected a non-empty list of device profiles")
            parsed = []
            for i, profile in enumerate(raw):
                try:
                    parsed.append(DeviceProfile.from_dict(_section(profile, f"{path}.profiles[{i}]")))
                except (KeyError, ValueError, TypeError) as e:
                    raise ConfigError(f"{path}.profiles[{i}]", f"bad device profile: {e}")
            profiles = tuple(parsed)
            if data.get("workload") is None:
                raise ConfigError(f"{path}.workload", "required together with profiles")

        if data.get("workload") is not None:
            try:
                workload = Workload.from_dict(_section(data["workload"], f"{path}.workload"))
            except (KeyError, ValueError, TypeError) as e:
                raise ConfigError(f"{path}.workload", f"bad workload: {e}")

        target = data.get("target_time")
        target = _as_float(target, f"{path}.target_time", low=0.0, low_open=True) if target is not None else None
        return cls(ratios=ratios, template=template, profiles=profiles, workload=workload, target_time=target)

    def resolve_ratios(self, num_clients: int, path: str = "fleet") -> tuple[float, ...]:
        if self.ratios is not None:
            if len(self.ratios) != num_clients:
                raise ConfigError(f"{path}.ratios", f"{len(self.ratios)} ratios for {num_clients} clients")
            return self.ratios

        if self.template is not None:
            counts = largest_remainder_counts([g.fraction for g in self.template], num_clients)
            return tuple(g.ratio for g, count in zip(self.template, counts) for _ in range(count))

        if self.profiles is not None:
            if len(self.profiles) != num_clients:
                raise ConfigError(f"{path}.profiles", f"{len(self.profiles)} profiles for {num_clients} clients")
            result = equalize_ratios(self.profiles, self.workload, self.target_time)
            if result.infeasible:
                raise ConfigError(f"{path}.profiles[{result.infeasible[0]}]", f"cannot meet target round time {result.target:.4f}s")
            return result.ratios

        return tuple(1.0 for _ in range(num_clients))

    def to_dict(self) -> dict:
        return {
            "ratios": list(self.ratios) if self.ratios is not None else None,
            "template": [dataclasses.asdict(g) for g in self.template] if self.template is not None else None,
            "profiles": [
                {"gamma": p.gamma, "b_down": p.b_down, "b_up": p.b_up, "delta": p.delta, "name": p.name}
                for p in self.profiles
            ] if self.profiles is not None else None,
            "workload": dataclasses.asdict(self.workload) if self.workload is not None else None,
            "target_time": self.target_time,
        }


@dataclass(frozen=True)
class SamplingConfig:
    mode: ParticipationMode = ParticipationMode.FULL
    kappa: float | None = None
    norm_source: NormSource = NormSource.STALE

    @classmethod
    def from_dict(cls, data: Any, path: str = "sampling") -> "SamplingConfig":
        data = _section(data or {}, path)
        _check_keys(data, ["mode", "kappa", "norm_source"], path)
        mode = _as_enum(ParticipationMode, data.get("mode", "full"), f"{path}.mode")
        kappa = data.get("kappa")
        if mode != ParticipationMode.FULL:
            if kappa is None:
                raise ConfigError(f"{path}.kappa", f"required for mode '{mode.value}'")
            kappa = _as_float(kappa, f"{path}.kappa", low=0.0, low_open=True)
        elif kappa is not None:
            kappa = _as_float(kappa, f"{path}.kappa", low=0.0, low_open=True)
        return cls(mode=mode, kappa=kappa, norm_source=_as_enum(NormSource, data.get("norm_source", "stale"), f"{path}.norm_source"))


@dataclass(frozen=True)
class TrackingConfig:
    mlflow: bool = False
    experiment: str = "fedplt"
    run_name: str | None = None

    @classmethod
    def from_dict(cls, data: Any, path: str = "tracking") -> "TrackingConfig":
        data = _section(data or {}, path)
        _check_keys(data, ["mlflow", "experiment", "run_name"], path)
        enabled = data.get("mlflow", False)
        if not isinstance(enabled, bool):
            raise ConfigError(f"{path}.mlflow", f"expected true/false, got {enabled!r}")
        run_name = data.get("run_name")
        return cls(mlflow=enabled, experiment=str(data.get("experiment", "fedplt")), run_name=str(run_name) if run_name else None)


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved settings of one simulation run."""
    topology: tuple[int, ...]
    data: DataConfig
    partition: PartitionConfig
    fleet: FleetConfig
    strategy: Strategy
    rounds: int
    local_steps: int
    local_unit: LocalUnit
    lr: float
    batch_size: int
    ep_window: int
    sublayers: tuple[int, ...] | None
    sampling: SamplingConfig
    seed: int
    output_dir: str
    threads: int | None
    tracking: TrackingConfig

    @property
    def model_topology(self) -> ModelTopology:
        return ModelTopology(self.topology)

    def client_ratios(self) -> tuple[float, ...]:
        ratios = self.fleet.resolve_ratios(self.partition.num_clients)
        if self.strategy == Strategy.FEDAVG and any(r < 1 for r in ratios):
            logger.warning("Strategy fedavg trains the full model; fleet ratios are ignored")
            return tuple(1.0 for _ in ratios)
        return ratios

    @classmethod
    def from_dict(cls, data: Any) -> "ExperimentConfig":
        data = _section(data, "experiment")
        _check_keys(data, [f.name for f in dataclasses.fields(cls)], "")

        raw_topology = _field(data, "topology", "")
        if isinstance(raw_topology, str):
            topology = ModelTopology.parse(raw_topology)
        else:
            if not isinstance(raw_topology, (list, tuple)):
                raise TopologyError(f"expected a list of layer sizes, got {raw_topology!r}")
            topology = ModelTopology(tuple(_as_int(s, f"topology[{i}]") for i, s in enumerate(raw_topology)))
        if topology.num_classes < 2:
            raise TopologyError(f"need at least 2 output classes, got {topology.num_classes}")

        sublayers = data.get("sublayers")
        if sublayers is not None:
            if not isinstance(sublayers, (list, tuple)) or len(sublayers) != topology.num_layers:
                raise ConfigError("sublayers", f"expected {topology.num_layers} per-layer counts, got {sublayers!r}")
            sublayers = tuple(_as_int(c, f"sublayers[{l}]", minimum=1) for l, c in enumerate(sublayers))
            for l, count in enumerate(sublayers):
                if count > topology.width(l):
                    raise ConfigError(f"sublayers[{l}]", f"{count} sub-layers exceed the {topology.width(l)} units of the layer")

        threads = data.get("threads")
        config = cls(
            topology=topology.layer_sizes,
            data=DataConfig.from_dict(_field(data, "data", ""), "data"),
            partition=PartitionConfig.from_dict(_field(data, "partition", ""), "partition"),
            fleet=FleetConfig.from_dict(data.get("fleet"), "fleet"),
            strategy=Strategy.parse(_field(data, "strategy", ""), "strategy"),
            rounds=_as_int(_field(data, "rounds", ""), "rounds", minimum=0),
            local_steps=_as_int(_field(data, "local_steps", ""), "local_steps", minimum=1),
            local_unit=_as_enum(LocalUnit, data.get("local_unit", "epochs"), "local_unit"),
            lr=_as_float(_field(data, "lr", ""), "lr", low=0.0, low_open=True),
            batch_size=_as_int(_field(data, "batch_size", ""), "batch_size", minimum=1),
            ep_window=_as_int(data.get("ep_window", 10), "ep_window", minimum=1),
            sublayers=sublayers,
            sampling=SamplingConfig.from_dict(data.get("sampling"), "sampling"),
            seed=_as_int(_field(data, "seed", ""), "seed", minimum=0),
            output_dir=str(data.get("output_dir") or "runs/default"),
            threads=_as_int(threads, "threads", minimum=1) if threads is not None else None,
            tracking=TrackingConfig.from_dict(data.get("tracking"), "tracking"),
        )
        # ratio sources are checked against the client count up front
        config.fleet.resolve_ratios(config.partition.num_clients)
        return config

    def to_dict(self) -> dict:
        return {
            "topology": list(self.topology),
            "data": dataclasses.asdict(self.data),
            "partition": dataclasses.asdict(self.partition),
            "fleet": self.fleet.to_dict(),
            "strategy": self.strategy.value,
            "rounds": self.rounds,
            "local_steps": self.local_steps,
            "local_unit": self.local_unit.value,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "ep_window": self.ep_window,
            "sublayers": list(self.sublayers) if self.sublayers is not None else None,
            "sampling": {
                "mode": self.sampling.mode.value,
                "kappa": self.sampling.kappa,
                "norm_source": self.sampling.norm_source.value,
            },
            "seed": self.seed,
            "output_dir": self.output_dir,
            "threads": self.threads,
            "tracking": dataclasses.asdict(self.tracking),
        }


def default_experiment_dict() -> dict:
    return parse_config("experiment")


def load_experiment_config(path: str | Path | None = None, overrides: Mapping | None = None) -> ExperimentConfig:
    """Packaged defaults, then the user file (YAML or JSON), then `overrides`, validated."""
    data = default_experiment_dict()
    if path is not None:
        user = read_config_file(path)
        data = deep_merge(data, user.get("experiment", user))
    if overrides:
        data = deep_merge(data, overrides)
    return ExperimentConfig.from_dict(data)


def resolve_threads(configured: int | None) -> int:
    """Worker cap: explicit config value, else env FEDPLT_THREADS, else 1."""
    if configured is not None:
        return configured
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        threads = int(raw)
    except ValueError:
        raise ConfigError(THREADS_ENV, f"expected an integer, got '{raw}'")
    if threads < 1:
        raise ConfigError(THREADS_ENV, f"must be >= 1, got {threads}")
    return threads
