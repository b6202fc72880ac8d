import logging
from pathlib import Path

import numpy as np

from agent.checkpoint import save_checkpoint
from agent.ppo import PPOAgent
from collector.collect import UpdateBatch, run_collection_loop
from collector.planning import plan_segments
from collector.workers import WorkerPool, make_workers
from data.models import OnPolicyReport, RunConfig, TrainingLogRow, UpdateMetrics
from envs.base import make_environment
from utils.config_io import write_config
from utils.metrics import append_log_row, score_summary, write_log_header
from utils.timing import TimeSplit

logger = logging.getLogger(__name__)

LOG_FILE = "training_log.csv"
CONFIG_FILE = "config.ini"
CHECKPOINT_DIR = "checkpoints"


class Trainer:
    """Owns the agent, the workers and the run directory of one training run."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.ppo = config.ppo
        collector = config.collector
        self.plan = plan_segments(
            collector.n_env, collector.n_update, config.episode_length, collector.mode
        )

        envs = [make_environment(config) for _ in range(collector.n_env)]
        probe = envs[0]
        self.agent = PPOAgent(
            probe.observation_dim,
            probe.action_dim,
            config.ppo,
            config.network,
            np.random.default_rng(config.run.seed),
        )
        self.workers = make_workers(envs, config.run.seed)
        self.pool = WorkerPool(collector.executor, collector.max_workers or collector.n_env)

        self.run_dir = config.run_dir
        self.log_path = self.run_dir / LOG_FILE
        self.transitions = 0
        self.walltime = 0.0
        self.update_index = 0

    def checkpoint_path(self, label: str) -> Path:
        return self.run_dir / CHECKPOINT_DIR / f"{label}.ppob"

    def record_update(
        self,
        batch: UpdateBatch,
        metrics: UpdateMetrics,
        report: OnPolicyReport,
        timing: TimeSplit,
    ) -> TrainingLogRow:
        self.update_index += 1
        self.transitions += len(batch.buffer)
        self.walltime += timing.total_s
        score_mean, score_min, score_max = score_summary(batch.buffer.episodes())

        row = TrainingLogRow(
            run_id=self.config.run.run_id,
            update_index=self.update_index,
            transitions=self.transitions,
            walltime_s=self.walltime,
            policy_version=self.agent.version,
            score_mean=score_mean,
            score_min=score_min,
            score_max=score_max,
            policy_loss=metrics.policy_loss,
            value_loss=metrics.value_loss,
            mean_value_estimate=metrics.mean_value_estimate,
            entropy=metrics.entropy,
            offpolicy_fraction=report.offpolicy_fraction,
            env_time_s=timing.env_s,
            train_time_s=timing.train_s,
            other_time_s=timing.other_s,
        )
        append_log_row(self.log_path, row)

        if self.update_index % self.config.run.log_every == 0:
            logger.info(
                "update %d | %d transitions | score %.4f | pi %.4f | v %.4f | "
                "off-policy %.2f | env/train/other %.2f/%.2f/%.2f s",
                row.update_index,
                row.transitions,
                row.score_mean,
                row.policy_loss,
                row.value_loss,
                row.offpolicy_fraction,
                row.env_time_s,
                row.train_time_s,
                row.other_time_s,
            )
        if self.update_index % self.config.run.checkpoint_every == 0:
            save_checkpoint(self.agent, self.checkpoint_path(f"update_{self.update_index:05d}"))
        return row

    def run(self) -> list[TrainingLogRow]:
        """Train for the configured transition budget and write the run directory."""
        self.run_dir.mkdir(parents=True, exist_ok=True)
        write_config(self.config, self.run_dir / CONFIG_FILE)
        write_log_header(self.log_path)
        logger.info(
            "Run %s: %d updates of %d transitions (%s, n_env=%d)",
            self.config.run.run_id,
            self.plan.updates_for(self.config.run.total_transitions),
            self.plan.transitions_per_update,
            self.plan.mode.value,
            self.plan.n_env,
        )
        with self.pool:
            rows = run_collection_loop(
                self, self.config.run.total_transitions, self.config.collector.mode
            )
        save_checkpoint(self.agent, self.checkpoint_path("final"))
        return rows
