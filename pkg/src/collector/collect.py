import logging
import time
from collections.abc import Iterator
from dataclasses import dataclass, field
from typing import Protocol

from agent.ppo import PolicySnapshot, PPOAgent
from collector.planning import SegmentPlan, verify_on_policy
from collector.workers import WorkerOutput, WorkerPool, WorkerState
from data.models import CollectMode, OnPolicyReport, PpoConfig, TrainingLogRow, UpdateMetrics
from rollout.buffer import RolloutBuffer, TrajectoryGroup
from rollout.normalizer import RunningNormalizer
from rollout.returns import assemble_buffer
from utils.timing import TimeSplit

logger = logging.getLogger(__name__)


@dataclass
class SegmentResult:
    workers: list[WorkerState]
    buffer: RolloutBuffer
    observation_stats: list[tuple[int, RunningNormalizer]]  # (episode_id, stats)


@dataclass
class UpdateBatch:
    """One update's worth of transitions plus the raw-observation stats behind them."""

    buffer: RolloutBuffer
    observation_stats: list[tuple[int, RunningNormalizer]] = field(default_factory=list)
    env_time_s: float = 0.0


def _merge_outputs(outputs: list[WorkerOutput], strict: bool) -> SegmentResult:
    buffer = RolloutBuffer(strict=strict)
    stats: list[tuple[int, RunningNormalizer]] = []
    for output in outputs:
        buffer.extend(output.groups)
        stats.extend(output.observation_stats.items())
    return SegmentResult(
        workers=[output.state for output in outputs], buffer=buffer, observation_stats=stats
    )


def collect_segment(
    pool: WorkerPool,
    workers: list[WorkerState],
    snapshot: PolicySnapshot,
    plan: SegmentPlan,
) -> SegmentResult:
    """Run every worker once with the same snapshot and merge in env_id order.

    Segment mode unrolls steps_per_env transitions per worker; episode modes
    run one whole episode per worker.
    """
    if plan.mode.uses_segments:
        outputs = pool.run(workers, snapshot, n_steps=plan.steps_per_env)
    else:
        outputs = pool.run(workers, snapshot, n_episodes=1)
    return _merge_outputs(outputs, strict=plan.mode.uses_segments)


def iter_update_batches(
    pool: WorkerPool,
    workers: list[WorkerState],
    agent: PPOAgent,
    plan: SegmentPlan,
) -> Iterator[UpdateBatch]:
    """Yield update buffers forever; the caller updates the agent between yields.

    In segment mode each segment is one update. In episode modes whole
    episodes queue up ordered by episode_id and are sliced n_update at a
    time, so with n_env > n_update later slices were collected by an older
    policy version.
    """
    pending: list[tuple[TrajectoryGroup, RunningNormalizer]] = []
    env_time = 0.0
    while True:
        start = time.perf_counter()
        result = collect_segment(pool, workers, agent.snapshot(), plan)
        workers[:] = result.workers
        env_time += time.perf_counter() - start

        if plan.mode.uses_segments:
            yield UpdateBatch(
                buffer=result.buffer,
                observation_stats=result.observation_stats,
                env_time_s=env_time,
            )
            env_time = 0.0
            continue

        stats = dict(result.observation_stats)
        pending.extend((group, stats[group.episode_id]) for group in result.buffer.groups)
        pending.sort(key=lambda item: item[0].episode_id)
        while len(pending) >= plan.n_update:
            taken, pending = pending[: plan.n_update], pending[plan.n_update :]
            buffer = RolloutBuffer(strict=False)
            buffer.extend([group for group, _ in taken])
            yield UpdateBatch(
                buffer=buffer,
                observation_stats=[(group.episode_id, s) for group, s in taken],
                env_time_s=env_time,
            )
            # collection time since the last update is charged to the next one only
            env_time = 0.0


def merge_observation_stats(agent: PPOAgent, stats: list[tuple[int, RunningNormalizer]]) -> None:
    for _, normalizer in stats:
        agent.normalizer.merge(normalizer)


def train_on_batch(
    agent: PPOAgent, batch: UpdateBatch, ppo: PpoConfig, mode: CollectMode
) -> tuple[UpdateMetrics, OnPolicyReport]:
    """Assemble targets, run the PPO update, then fold in the observation stats."""
    report = verify_on_policy(batch.buffer, agent.version)
    assemble_buffer(batch.buffer, ppo.gamma, ppo.gae_lambda, mode.bootstraps_timeouts)
    metrics = agent.update(batch.buffer, allow_offpolicy=not mode.uses_segments)
    # statistics stay frozen during an update and change only between policy versions
    merge_observation_stats(agent, batch.observation_stats)
    return metrics, report


class CollectionHost(Protocol):
    """What the collection loop needs from its trainer."""

    agent: PPOAgent
    pool: WorkerPool
    workers: list[WorkerState]
    plan: SegmentPlan
    ppo: PpoConfig

    def record_update(
        self,
        batch: UpdateBatch,
        metrics: UpdateMetrics,
        report: OnPolicyReport,
        timing: TimeSplit,
    ) -> TrainingLogRow: ...


def run_collection_loop(
    trainer: CollectionHost, total_transitions: int, mode: CollectMode
) -> list[TrainingLogRow]:
    """Alternate collection and updates until the transition budget is spent."""
    plan = trainer.plan
    if plan.mode is not mode:
        raise ValueError(f"Plan was built for {plan.mode.value}, not {mode.value}")
    n_updates = plan.updates_for(total_transitions)
    if n_updates == 0:
        logger.warning(
            "Budget of %d transitions is below one update (%d)",
            total_transitions,
            plan.transitions_per_update,
        )
        return []

    rows: list[TrainingLogRow] = []
    batches = iter_update_batches(trainer.pool, trainer.workers, trainer.agent, plan)
    mark = time.perf_counter()
    for _ in range(n_updates):
        batch = next(batches)
        train_start = time.perf_counter()
        metrics, report = train_on_batch(trainer.agent, batch, trainer.ppo, mode)
        now = time.perf_counter()
        timing = TimeSplit.partition(
            total_s=now - mark, env_s=batch.env_time_s, train_s=now - train_start
        )
        mark = now
        rows.append(trainer.record_update(batch, metrics, report, timing))
    batches.close()
    return rows
