import argparse
import sys

from dotenv import load_dotenv

from clog import get_logger
from fedplt import __version__
from fedplt.errors import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL, FedPLTError
from .handlers import (
    cmd_allocate,
    cmd_assign,
    cmd_bounds,
    cmd_efficiency,
    cmd_sample,
    cmd_simulate,
)


logger = get_logger(__name__, simple=True)

EPILOG = f"""exit codes:
  0  success
  {EXIT_CONFIG}  invalid configuration or arguments
  {EXIT_INFEASIBLE}  infeasible allocation or sampling budget
  {EXIT_NUMERICAL}  numerical failure during training
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedplt",
        description="Federated partial-layer training: allocation, assignment, simulation and cost models.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    allocate = commands.add_parser("allocate", help="balanced per-layer allocation for a training ratio")
    allocate.add_argument("--layers", help="MLP topology, e.g. 20,32,16,3")
    allocate.add_argument("--counts", help="per-layer parameter counts H, e.g. 672,528,51")
    allocate.add_argument("--ratio", type=float, required=True, help="target training ratio r in (0, 1]")
    allocate.add_argument("--compare", action="append", help="another Q to tabulate against the balanced one, e.g. 1,0.5,1")
    allocate.add_argument("--out", help="also write the JSON result to this file")
    allocate.set_defaults(handler=cmd_allocate)

    assign = commands.add_parser("assign", help="sub-layer assignment and coverage for a fleet")
    assign.add_argument("--layers", required=True, help="MLP topology, e.g. 20,32,16,3")
    assign.add_argument("--ratios", help="per-client training ratios, e.g. 1,0.5,0.2")
    assign.add_argument("--fleet", help="YAML file with a fleet section")
    assign.add_argument("--clients", type=int, default=10, help="number of clients when --fleet holds a template")
    assign.add_argument("--sublayers", help="sub-layers per layer, e.g. 8,8,1")
    assign.add_argument("--out", help="also write the JSON result to this file")
    assign.set_defaults(handler=cmd_assign)

    simulate = commands.add_parser("simulate", help="run a federated training simulation")
    simulate.add_argument("--config", help="experiment YAML; defaults come from the packaged config")
    simulate.add_argument("--output-dir", help="override experiment.output_dir")
    simulate.add_argument("--rounds", type=int, help="override experiment.rounds")
    simulate.add_argument("--seed", type=int, help="override experiment.seed")
    simulate.set_defaults(handler=cmd_simulate)

    sample = commands.add_parser("sample", help="optimal client sampling probabilities")
    sample.add_argument("--instance", required=True, help="JSON or YAML file with n, norms, r and kappa")
    sample.add_argument("--out", help="also write the JSON result to this file")
    sample.set_defaults(handler=cmd_sample)

    efficiency = commands.add_parser("efficiency", help="round time, computation and communication tables for a device fleet")
    efficiency.add_argument("--fleet", required=True, help="YAML file with device profiles and a workload")
    efficiency.add_argument("--target", type=float, help="target round time in seconds")
    efficiency.add_argument("--ratios", help="use these ratios instead of equalizing, e.g. 0.7,1,0.2,0.08,0.03")
    efficiency.add_argument("--out-dir", help="write efficiency.csv and round_time.json here")
    efficiency.set_defaults(handler=cmd_efficiency)

    bounds = commands.add_parser("bounds", help="convergence bound trajectory")
    bounds.add_argument("--config", help="YAML file with constants, schedule, eta and horizon")
    bounds.add_argument("--z", type=float)
    bounds.add_argument("--B", type=float)
    bounds.add_argument("--D0", type=float)
    bounds.add_argument("--schedule", default="decaying", help="constant or decaying")
    bounds.add_argument("--eta", type=float, help="step size of the constant schedule")
    bounds.add_argument("--horizon", type=int, default=100)
    bounds.add_argument("--out-dir", help="write bounds.csv here")
    bounds.set_defaults(handler=cmd_bounds)

    return parser


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except FedPLTError as e:
        logger.error(f"{args.command} failed: {e.message}")
        print(f"error: {e.message}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
