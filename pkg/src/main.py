import argparse
import logging
import sys
from pathlib import Path

from rich.markup import escape

from data.models import CollectMode, EnvironmentKind, ExecutorKind, RunConfig
from training.commands import (
    DEFAULT_SNAPSHOT_STEPS,
    cmd_aggregate,
    cmd_bench_speedup,
    cmd_eval,
    cmd_gen_states,
    cmd_train,
)
from utils.config_io import load_config, log_level
from utils.display import console
from utils.logger import setup_logging

logger = logging.getLogger(__name__)


# === Argument parsing ===
def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def int_list(text: str) -> list[int]:
    try:
        values = [positive_int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e
    if not values:
        raise argparse.ArgumentTypeError("expected at least one value")
    return values


def mode_list(text: str) -> list[CollectMode]:
    try:
        return [CollectMode(part.strip()) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="Run configuration file (INI)")
    parser.add_argument("--seed", type=int, help="Base random seed")
    parser.add_argument("--out", type=Path, help="Output directory")
    parser.add_argument("--mode", choices=[m.value for m in CollectMode], help="Collection mode")
    parser.add_argument("--n-env", type=positive_int, help="Number of parallel environments")
    parser.add_argument("--env", choices=[e.value for e in EnvironmentKind], help="Environment")
    parser.add_argument(
        "--executor", choices=[e.value for e in ExecutorKind], help="Worker execution backend"
    )
    parser.add_argument("--log-level", help="Logging level (default: TRAINER_LOG_LEVEL or INFO)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="run-trainer",
        description="Parallel PPO with end-of-episode and partial-trajectory bootstrapping.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-states", help="Generate developed-film initial states")
    add_common_flags(gen)
    gen.add_argument("--count", type=positive_int, help="Number of snapshots (default: config)")
    gen.add_argument("--max-workers", type=positive_int, help="Concurrent samples")

    train = sub.add_parser("train", help="Train an agent")
    add_common_flags(train)
    train.add_argument("--total-transitions", type=positive_int)
    train.add_argument("--n-update", type=positive_int, help="Episodes per update")
    train.add_argument("--run-id", help="Run identifier (subdirectory of --out)")

    evaluate = sub.add_parser("eval", help="Deterministic rollout of a checkpoint")
    add_common_flags(evaluate)
    evaluate.add_argument("--checkpoint", type=Path, help="PPOB checkpoint file")
    evaluate.add_argument(
        "--snapshot-steps",
        type=lambda text: [int(v) for v in text.split(",") if v.strip()],
        default=list(DEFAULT_SNAPSHOT_STEPS),
        help="Action counts at which the film is dumped",
    )
    evaluate.add_argument(
        "--uncontrolled", action="store_true", help="Zero actions (uncontrolled baseline)"
    )

    bench = sub.add_parser("bench-speedup", help="Walltime speedup versus n_env")
    add_common_flags(bench)
    bench.add_argument("--env-counts", type=int_list, default=[1, 2, 4, 8])
    bench.add_argument("--modes", type=mode_list, default=[CollectMode.EOE_PT])
    bench.add_argument("--transitions", type=positive_int, default=20_000)

    aggregate = sub.add_parser("aggregate", help="Mean/min/max curves across runs")
    aggregate.add_argument("logs", nargs="+", type=Path, help="Training log files")
    aggregate.add_argument("--out", type=Path, default=Path("aggregate.csv"))
    aggregate.add_argument("--log-level")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Config file values overridden by the flags that were given."""
    overrides = {
        "run": {
            "seed": args.seed,
            "environment": args.env,
            "total_transitions": getattr(args, "total_transitions", None),
            "run_id": getattr(args, "run_id", None),
        },
        "collector": {
            "mode": args.mode,
            "n_env": args.n_env,
            "executor": args.executor,
            "n_update": getattr(args, "n_update", None),
        },
    }
    if args.out is not None:
        if args.command == "gen-states":
            overrides["shkadov"] = {"init_state_dir": str(args.out)}
        elif args.command == "train":
            overrides["run"]["output_dir"] = str(args.out)
    return load_config(args.config, overrides)


# === Entry point ===
def run_command(args: argparse.Namespace) -> None:
    if args.command == "aggregate":
        cmd_aggregate(args.logs, args.out)
        return

    config = resolve_config(args)
    if args.command == "gen-states":
        cmd_gen_states(config, args.count or config.shkadov.n_init_states, args.max_workers)
    elif args.command == "train":
        cmd_train(config)
    elif args.command == "eval":
        out_dir = args.out or (config.run_dir / "eval")
        cmd_eval(config, args.checkpoint, out_dir, tuple(args.snapshot_steps), args.uncontrolled)
    elif args.command == "bench-speedup":
        cmd_bench_speedup(
            config, args.env_counts, args.modes, args.transitions, args.out or Path("bench")
        )


def main(argv: list[str] | None = None) -> int:
    """Entry point for the run-trainer CLI."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(args.log_level or log_level())
    try:
        run_command(args)
        return 0

    except KeyboardInterrupt:
        console.print("\n[bold red]Interrupted by user[/bold red]")
        return 1
    except Exception as e:
        logger.debug("Command failed", exc_info=True)
        console.print(f"[bold red]Error:[/bold red] {escape(str(e))}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
