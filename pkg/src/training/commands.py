import logging
import time
from pathlib import Path

import numpy as np
import pandas as pd

from agent.checkpoint import load_checkpoint
from collector.workers import episode_rngs
from data.models import (
    CollectMode,
    ConfigurationError,
    EnvironmentKind,
    RunConfig,
    SpeedupRow,
    TrainingLogRow,
)
from envs.base import make_environment
from envs.initial_states import generate_initial_states
from solver.snapshot import read_snapshot, write_snapshot
from training.trainer import Trainer
from utils.display import (
    print_aggregate_summary,
    print_eval_summary,
    print_initial_states,
    print_run_summary,
    print_speedup_table,
)
from utils.metrics import aggregate_logs, read_training_log, speedup_frame, speedup_rows

logger = logging.getLogger(__name__)

DEFAULT_SNAPSHOT_STEPS = (0, 100, 200, 300, 400)


def cmd_gen_states(
    config: RunConfig, count: int, max_workers: int | None = None
) -> list[Path]:
    rng = np.random.default_rng(config.run.seed)
    paths = generate_initial_states(
        config.shkadov, config.solver, count, rng, max_workers=max_workers
    )
    print_initial_states(paths, [read_snapshot(p).t for p in paths])
    return paths


def cmd_train(config: RunConfig) -> list[TrainingLogRow]:
    rows = Trainer(config).run()
    print_run_summary(config, rows)
    return rows


def cmd_eval(
    config: RunConfig,
    checkpoint: Path | None,
    out_dir: Path,
    snapshot_steps: tuple[int, ...] = DEFAULT_SNAPSHOT_STEPS,
    uncontrolled: bool = False,
) -> tuple[list[float], list[Path]]:
    """Deterministic rollout (policy mean, or zero actions when uncontrolled).

    Raises:
        ConfigurationError: If the checkpoint does not fit the environment
    """
    env = make_environment(config)
    snapshot = None
    if not uncontrolled:
        if checkpoint is None:
            raise ConfigurationError("eval needs --checkpoint unless --uncontrolled is set")
        agent = load_checkpoint(checkpoint)
        if (agent.obs_dim, agent.act_dim) != (env.observation_dim, env.action_dim):
            raise ConfigurationError(
                f"Checkpoint expects obs/action dims {agent.obs_dim}/{agent.act_dim}, "
                f"environment has {env.observation_dim}/{env.action_dim}"
            )
        snapshot = agent.snapshot()

    out_dir.mkdir(parents=True, exist_ok=True)
    dump_fields = config.run.environment is EnvironmentKind.SHKADOV
    if not dump_fields and snapshot_steps:
        logger.warning("Field snapshots are only written for the shkadov environment")
    wanted = set(snapshot_steps)

    env_rng, _ = episode_rngs(config.run.seed, 0)
    obs = env.reset(env_rng)
    rewards: list[float] = []
    files: list[Path] = []

    def dump(step: int) -> None:
        if dump_fields and step in wanted:
            path = out_dir / f"field_{step:04d}.txt"
            files.append(write_snapshot(path, env.state, env.grid.dx, config.solver.delta))

    done = False
    while not done:
        dump(len(rewards))
        if snapshot is None:
            action = np.zeros(env.action_dim)
        else:
            action = snapshot.deterministic_action(obs)
        result = env.step(action)
        rewards.append(result.reward)
        obs = result.observation
        done = result.done
    dump(len(rewards))

    pd.DataFrame({"step": np.arange(1, len(rewards) + 1), "reward": rewards}).to_csv(
        out_dir / "rewards.csv", index=False
    )
    print_eval_summary(rewards, files, controlled=snapshot is not None)
    return rewards, files


def cmd_bench_speedup(
    config: RunConfig,
    env_counts: list[int],
    modes: list[CollectMode],
    transitions: int,
    out_dir: Path,
) -> list[SpeedupRow]:
    """Fixed-budget training runs per (mode, n_env), timed end to end."""
    walltimes: dict[tuple[CollectMode, int], float] = {}
    for mode in modes:
        for n_env in sorted(env_counts):
            cell = config.model_copy(deep=True)
            cell.collector.mode = mode
            cell.collector.n_env = n_env
            cell.collector.max_workers = n_env
            cell.run.total_transitions = transitions
            cell.run.output_dir = str(out_dir / "runs")
            cell.run.run_id = f"{mode.value}_{n_env:03d}"
            try:
                trainer = Trainer(cell)
            except ConfigurationError as e:
                logger.warning("Skipping %s with n_env=%d: %s", mode.value, n_env, e)
                continue
            start = time.perf_counter()
            trainer.run()
            walltimes[(mode, n_env)] = time.perf_counter() - start

    rows = speedup_rows(walltimes)
    out_dir.mkdir(parents=True, exist_ok=True)
    speedup_frame(rows).to_csv(out_dir / "speedup.csv", index=False)
    print_speedup_table(rows)
    return rows


def cmd_aggregate(log_paths: list[Path], out_path: Path) -> pd.DataFrame:
    frame = aggregate_logs([read_training_log(path) for path in log_paths])
    out_path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out_path, index=False)
    print_aggregate_summary(frame)
    return frame
