import argparse
import json
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from clog import attach_run_log, detach_run_log, get_logger
from fedplt import __version__
from fedplt.allocation import (
    balanced_allocation,
    balanced_contribution,
    contribution_caps,
    contribution_std,
    contribution_to_allocation,
    imbalance_error,
    imbalance_table,
    layer_counts_mlp,
    water_level,
)
from fedplt.assignment import (
    assign_rotational,
    coverage_report,
    coverage_table,
    partition_layers,
    realized_allocation,
)
from fedplt.config import FleetConfig, load_experiment_config, read_config_file
from fedplt.costmodel import (
    ConvergenceConstants,
    DeviceProfile,
    StepSchedule,
    Workload,
    constant_step_limit,
    convergence_bound,
    efficiency_report,
    equalize_ratios,
    finite_horizon_bound,
    geometric_envelope,
    round_time_summary,
    step_sizes,
    sublinear_envelope,
)
from fedplt.data import partition_summary
from fedplt.errors import ConfigError
from fedplt.federation import run_experiment, write_metrics_csv
from fedplt.model import ModelTopology, save_checkpoint
from fedplt.sampling import SamplingInput, estimator_variance, ocs_plt_probabilities
from fedplt.tracking import RunTracker


logger = get_logger(__name__, simple=True)

METRICS_FILE_NAME = "metrics.csv"
CHECKPOINT_FILE_NAME = "final_params.bin"
MANIFEST_FILE_NAME = "manifest.json"
PARTITION_FILE_NAME = "partition.csv"
EFFICIENCY_FILE_NAME = "efficiency.csv"
BOUNDS_FILE_NAME = "bounds.csv"
ROUND_TIME_FILE_NAME = "round_time.json"


def _emit(payload: Any, out: str | None = None):
    text = json.dumps(payload, indent=2)
    print(text)
    if out:
        Path(out).write_text(text + "\n")


def _parse_floats(text: str, field_path: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(field_path, f"expected comma-separated numbers, got '{text}'")


def _parse_ints(text: str, field_path: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(field_path, f"expected comma-separated integers, got '{text}'")


def _layer_counts(args: argparse.Namespace) -> tuple[int, ...]:
    if args.counts:
        return tuple(_parse_ints(args.counts, "--counts"))
    if args.layers:
        return layer_counts_mlp(ModelTopology.parse(args.layers))
    raise ConfigError("--layers", "either --layers or --counts is required")


def cmd_allocate(args: argparse.Namespace) -> int:
    """Balanced allocation Q*, X*, std and imbalance error for one training ratio."""
    H = _layer_counts(args)
    r = args.ratio
    balanced = balanced_contribution(r, H)
    plan = contribution_to_allocation(balanced, r, H)
    payload = {
        "H": list(H),
        "r": r,
        "realized_r": plan.r,
        "water_level": water_level(contribution_caps(r, H)),
        "Q": list(plan.q),
        "X": balanced.tolist(),
        "std": contribution_std(balanced),
        "E": imbalance_error(balanced, H, r),
    }

    if args.compare:
        configs = {"balanced": plan.q}
        for i, q_text in enumerate(args.compare):
            configs[f"compare_{i + 1}"] = tuple(_parse_floats(q_text, f"--compare[{i}]"))
        table = imbalance_table(configs, H)
        payload["comparison"] = table.to_dict(orient="records")
        logger.info("\n" + table.to_string(index=False, float_format=lambda v: f"{v:.4f}"))

    _emit(payload, args.out)
    return 0


def cmd_assign(args: argparse.Namespace) -> int:
    """Sub-layer partition, rotational assignment and coverage for a fleet of ratios."""
    topology = ModelTopology.parse(args.layers)
    if args.fleet:
        fleet = FleetConfig.from_dict(read_config_file(args.fleet).get("fleet", {}))
        ratios = fleet.resolve_ratios(args.clients)
    elif args.ratios:
        ratios = tuple(_parse_floats(args.ratios, "--ratios"))
    else:
        raise ConfigError("--ratios", "either --ratios or --fleet is required")

    sublayers = _parse_ints(args.sublayers, "--sublayers") if args.sublayers else None
    partition = partition_layers(topology, sublayers)
    H = layer_counts_mlp(topology)
    Qs = [balanced_allocation(r, H).q for r in ratios]
    assignments = assign_rotational(Qs, partition)
    coverage = coverage_report(assignments, partition)

    clients = []
    for assignment, r, q in zip(assignments, ratios, Qs):
        realized = realized_allocation(assignment, partition)
        clients.append({
            **assignment.to_dict(),
            "requested_r": r,
            "requested_q": list(q),
            "realized_r": realized.r,
            "realized_q": list(realized.q),
        })

    payload = {
        "topology": list(topology.layer_sizes),
        "sublayers": list(partition.counts),
        "block_sizes": [partition.block_sizes(l) for l in range(partition.num_layers)],
        "assignments": clients,
        "coverage": [c.tolist() for c in coverage],
        "min_coverage": int(min(c.min() for c in coverage)),
    }
    logger.info("\n" + coverage_table(coverage).to_string(index=False))
    _emit(payload, args.out)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    """Run a simulation; writes metrics CSV, final checkpoint, partition summary and a run manifest."""
    overrides: dict[str, Any] = {}
    if args.output_dir:
        overrides["output_dir"] = args.output_dir
    if args.rounds is not None:
        overrides["rounds"] = args.rounds
    if args.seed is not None:
        overrides["seed"] = args.seed
    config = load_experiment_config(args.config, overrides)

    run_dir = Path(config.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    log_path = attach_run_log(run_dir)
    try:
        tracking = config.tracking
        with RunTracker(tracking.mlflow, tracking.experiment, tracking.run_name) as tracker:
            tracker.log_config(config.to_dict())
            result = run_experiment(config, tracker)

            metrics_path = write_metrics_csv(result.history, run_dir / METRICS_FILE_NAME)
            checkpoint_path = run_dir / CHECKPOINT_FILE_NAME
            save_checkpoint(result.state.params, checkpoint_path)
            partition_path = run_dir / PARTITION_FILE_NAME
            partition_summary(result.setup.shards).to_csv(partition_path, index=False)

            manifest = {
                "version": __version__,
                "experiment": config.to_dict(),
                "rounds_completed": len(result.history),
                "final_accuracy": result.final_accuracy,
                "final_loss": result.final_loss,
                "client_ratios": [c.ratio for c in result.setup.clients],
                "client_sizes": [c.n_k for c in result.setup.clients],
                "assignments": [a.to_dict() for a in result.setup.assignments],
                "files": {
                    "metrics": metrics_path.name,
                    "checkpoint": checkpoint_path.name,
                    "partition": partition_path.name,
                    "log": log_path.name,
                },
            }
            manifest_path = run_dir / MANIFEST_FILE_NAME
            manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")

            for path in (metrics_path, manifest_path, checkpoint_path):
                tracker.log_artifact(path)
    finally:
        detach_run_log()

    logger.info(f"Run finished: accuracy {result.final_accuracy:.4f}, files in {run_dir}")
    return 0


def cmd_sample(args: argparse.Namespace) -> int:
    """Optimal inclusion probabilities for a JSON instance {n, norms, r, kappa}."""
    data = read_config_file(args.instance)
    try:
        instance = SamplingInput.from_dict(data)
    except KeyError as e:
        raise ConfigError(f"instance.{e.args[0]}", "missing required field")
    except ValueError as e:
        raise ConfigError("instance", str(e))
    decision = ocs_plt_probabilities(instance)
    payload = {
        **decision.to_dict(),
        "variance": estimator_variance(decision.probabilities, instance.n, instance.norms),
        "expected_clients": decision.expected_clients(),
        "expected_ratio_mass": decision.expected_ratio_mass(instance.r),
    }
    payload.pop("selected")
    _emit(payload, args.out)
    return 0


def _efficiency_inputs(path: str) -> tuple[list[DeviceProfile], Workload, float | None]:
    data = read_config_file(path)
    fleet = data.get("fleet", data)
    if "profiles" not in fleet or "workload" not in fleet:
        raise ConfigError("fleet", "efficiency needs 'profiles' and 'workload'")
    parsed = FleetConfig.from_dict({k: fleet.get(k) for k in ("profiles", "workload", "target_time")})
    return list(parsed.profiles), parsed.workload, parsed.target_time


def cmd_efficiency(args: argparse.Namespace) -> int:
    """Equalized ratios and the computation, communication, idle-time and round-time tables."""
    profiles, workload, target = _efficiency_inputs(args.fleet)
    if args.target is not None:
        target = args.target
    if args.ratios:
        ratios = _parse_floats(args.ratios, "--ratios")
        if len(ratios) != len(profiles):
            raise ConfigError("--ratios", f"{len(ratios)} ratios for {len(profiles)} devices")
    else:
        ratios = list(equalize_ratios(profiles, workload, target).ratios)

    report = efficiency_report(profiles, workload, ratios)
    summary = round_time_summary(profiles, workload, ratios)

    print(report.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    print(pd.Series(summary.to_dict()).to_string())
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report.to_csv(out_dir / EFFICIENCY_FILE_NAME, index=False, float_format="%.10g")
        (out_dir / ROUND_TIME_FILE_NAME).write_text(json.dumps(summary.to_dict(), indent=2) + "\n")
    return 0


def _bounds_inputs(args: argparse.Namespace) -> tuple[ConvergenceConstants, StepSchedule, float | None, int]:
    if args.config:
        data = read_config_file(args.config)
        try:
            constants = ConvergenceConstants.from_dict(data.get("constants", data))
        except KeyError as e:
            raise ConfigError(f"constants.{e.args[0]}", "missing required field")
        except ValueError as e:
            raise ConfigError("constants", str(e))
        schedule, eta, horizon = data.get("schedule", args.schedule), data.get("eta", args.eta), data.get("horizon", args.horizon)
    else:
        if args.z is None or args.B is None or args.D0 is None:
            raise ConfigError("--z", "give --config or all of --z, --B, --D0")
        try:
            constants = ConvergenceConstants(args.z, args.B, args.D0)
        except ValueError as e:
            raise ConfigError("--z", str(e))
        schedule, eta, horizon = args.schedule, args.eta, args.horizon

    try:
        schedule = StepSchedule(schedule)
    except ValueError:
        raise ConfigError("schedule", f"unknown schedule '{schedule}', expected one of {[s.value for s in StepSchedule]}")
    if int(horizon) < 0:
        raise ConfigError("horizon", f"must be >= 0, got {horizon}")
    if schedule == StepSchedule.CONSTANT and (eta is None or not 0 < float(eta) < 1 / constants.z):
        raise ConfigError("eta", f"constant step must lie in (0, 1/z) = (0, {1 / constants.z:.6g}), got {eta}")
    return constants, schedule, (float(eta) if eta is not None else None), int(horizon)


def cmd_bounds(args: argparse.Namespace) -> int:
    """Convergence-bound trajectory D^0..D^T and its closed-form envelope."""
    constants, schedule, eta, horizon = _bounds_inputs(args)

    trajectory = convergence_bound(constants, schedule, horizon, eta)
    etas = step_sizes(constants, schedule, horizon, eta)
    if schedule == StepSchedule.CONSTANT:
        envelope = geometric_envelope(constants, eta, horizon)
        limit = constant_step_limit(constants, eta)
    else:
        envelope = sublinear_envelope(constants, horizon)
        limit = 0.0

    payload = {
        "z": constants.z,
        "B": constants.B,
        "D0": constants.D0,
        "schedule": schedule.value,
        "eta": eta,
        "horizon": horizon,
        "final": float(trajectory[-1]),
        "finite_horizon": finite_horizon_bound(constants, etas),
        "limit": limit,
        "envelope_holds": bool(np.all(trajectory <= envelope * (1 + 1e-12) + 1e-15)),
    }
    if schedule == StepSchedule.DECAYING:
        payload["C"] = constants.sublinear_constant

    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame({"t": np.arange(horizon + 1), "bound": trajectory, "envelope": envelope})
        frame.to_csv(out_dir / BOUNDS_FILE_NAME, index=False, float_format="%.10g")

    _emit(payload)
    return 0
