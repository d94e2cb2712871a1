#!/usr/bin/env python3
"""
Strategy comparison for partial-layer federated training.

Runs every mask strategy at the same training ratio over a few seeds, then prints the final
accuracy, the rounds and traffic needed to reach a target accuracy, and the allocation table
of the balanced split against shallow- and deep-heavy alternatives.
"""

import os
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from clog import get_logger
from fedplt.allocation import balanced_allocation, imbalance_table, layer_counts_mlp
from fedplt.assignment import Strategy
from fedplt.config import ExperimentConfig, deep_merge, default_experiment_dict
from fedplt.federation import run_experiment, target_report
from fedplt.model import ModelTopology
from fedplt.tracking import RunTracker


# ============================================================================
# Configuration
# ============================================================================

load_dotenv()

logger = get_logger(__name__, simple=True)

TRAINING_RATIO = 0.25
TARGET_ACCURACY = 0.85
SEEDS = [0, 1, 2]
ROUNDS = 200

# MLflow logging is opt-in; point MLFLOW_TRACKING_URI at the server from infra/ first.
MLFLOW_ENABLED_ENV_VAR = "FEDPLT_EVAL_MLFLOW"

STRATEGIES = [
    Strategy.FEDAVG,
    Strategy.FEDPLT,
    Strategy.FEDDROP,
    Strategy.HETEROFL,
    Strategy.FEDROLEX,
    Strategy.FEDPMT,
]


# ============================================================================
# Evaluation Runner
# ============================================================================

@dataclass
class EvaluationResult:
    """Container for one strategy's results over all seeds."""
    strategy: str
    accuracies: List[float]
    target_rounds: List[Optional[int]]
    target_bytes: List[float]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std_accuracy(self) -> float:
        return float(np.std(self.accuracies))


def strategy_config(strategy: Strategy, seed: int) -> ExperimentConfig:
    overrides = {"strategy": strategy.value, "seed": seed, "rounds": ROUNDS}
    if strategy != Strategy.FEDAVG:
        num_clients = default_experiment_dict()["partition"]["num_clients"]
        overrides["fleet"] = {"ratios": [TRAINING_RATIO] * num_clients}
    overrides["tracking"] = {
        "mlflow": bool(os.environ.get(MLFLOW_ENABLED_ENV_VAR)),
        "experiment": "fedplt_strategy_comparison",
        "run_name": f"{strategy.value}_seed{seed}",
    }
    return ExperimentConfig.from_dict(deep_merge(default_experiment_dict(), overrides))


def run_evaluation(strategies: List[Strategy], seeds: List[int]) -> List[EvaluationResult]:
    results = []
    for strategy in strategies:
        accuracies, rounds, traffic = [], [], []
        for seed in seeds:
            config = strategy_config(strategy, seed)
            with RunTracker(config.tracking.mlflow, config.tracking.experiment, config.tracking.run_name) as tracker:
                tracker.log_config(config.to_dict())
                result = run_experiment(config, tracker)

            report = target_report(result.history, TARGET_ACCURACY)
            accuracies.append(result.final_accuracy)
            rounds.append(report.round)
            traffic.append(report.bytes_total)
            logger.info(f"{strategy.value} seed {seed}: accuracy {result.final_accuracy:.4f}, target round {report.round}")

        results.append(EvaluationResult(strategy.value, accuracies, rounds, traffic))
    return results


def results_frame(results: List[EvaluationResult]) -> pd.DataFrame:
    rows = []
    for result in results:
        reached = [r for r in result.target_rounds if r is not None]
        rows.append({
            "strategy": result.strategy,
            "accuracy_mean": result.mean_accuracy,
            "accuracy_std": result.std_accuracy,
            "reached_target": f"{len(reached)}/{len(result.target_rounds)}",
            "rounds_to_target": float(np.mean(reached)) if reached else np.nan,
            "mbytes_to_target": float(np.mean(result.target_bytes)) / 1e6,
        })
    return pd.DataFrame(rows)


def allocation_frame(layer_sizes: List[int], r: float) -> pd.DataFrame:
    """Balanced allocation next to a shallow-heavy and a deep-heavy split of the same size."""
    H = layer_counts_mlp(ModelTopology(tuple(layer_sizes)))
    balanced = balanced_allocation(r, H).q
    L = len(H)
    shallow = tuple(1.0 if l == 0 else 0.0 for l in range(L))
    deep = tuple(0.0 if l < L - 2 else 1.0 for l in range(L))
    return imbalance_table({"balanced": balanced, "shallow_only": shallow, "deep_only": deep}, H)


def print_results(results: List[EvaluationResult]) -> None:
    print("\n" + "=" * 80)
    print(f"Training ratio {TRAINING_RATIO}, target accuracy {TARGET_ACCURACY}, seeds {SEEDS}")
    print("-" * 40)
    print(results_frame(results).to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    print("=" * 80)


# ============================================================================
# Main Execution
# ============================================================================

def main():
    try:
        print(allocation_frame([784, 512, 256, 128, 10], 0.5).to_string(index=False, float_format=lambda v: f"{v:.4f}"))
        results = run_evaluation(STRATEGIES, SEEDS)
        print_results(results)
    except Exception as e:
        logger.error(f"Evaluation failed: {e}", exc_info=True)
        raise


if __name__ == "__main__":
    main()
