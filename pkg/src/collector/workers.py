"""Environment workers and the executors that run them.

A worker is a pure function of (WorkerState, PolicySnapshot): it returns its
advanced state with the trajectory groups it produced, so serial, thread and
process executors share one message-passing contract.
"""

import logging
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np

from agent.ppo import PolicySnapshot
from data.models import DoneReason, EpisodeSummary, ExecutorKind, TailKind
from envs.base import Environment
from rollout.buffer import (
    RolloutBuffer,
    TrajectoryGroup,
    Transition,
    append_transition,
    close_group,
)
from rollout.normalizer import RunningNormalizer

logger = logging.getLogger(__name__)

ENV_STREAM = 0
ACTION_STREAM = 1


class CollectionError(RuntimeError):
    """Raised when a worker fails; the original exception is chained."""


def episode_rngs(seed: int, episode_id: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Environment and action streams of one episode, independent of worker layout."""
    return (
        np.random.default_rng([seed, episode_id, ENV_STREAM]),
        np.random.default_rng([seed, episode_id, ACTION_STREAM]),
    )


@dataclass
class WorkerState:
    env_id: int
    n_env: int
    seed: int
    env: Environment
    episodes_started: int = 0
    episode_id: int = -1
    step_index: int = 0
    episode_return: float = 0.0
    observation: np.ndarray | None = None  # raw
    action_rng: np.random.Generator | None = None
    needs_reset: bool = True

    def start_episode(self) -> None:
        self.episode_id = self.env_id + self.episodes_started * self.n_env
        self.episodes_started += 1
        env_rng, self.action_rng = episode_rngs(self.seed, self.episode_id)
        self.observation = self.env.reset(env_rng)
        self.step_index = 0
        self.episode_return = 0.0
        self.needs_reset = False


@dataclass
class WorkerOutput:
    state: WorkerState
    groups: list[TrajectoryGroup]
    # raw-observation statistics of this call, per episode_id
    observation_stats: dict[int, RunningNormalizer] = field(default_factory=dict)


def _tail_kind(done_reason: DoneReason) -> TailKind:
    if done_reason is DoneReason.TERMINAL:
        return TailKind.TRUE_TERMINAL
    if done_reason is DoneReason.TIME_OUT:
        return TailKind.TIME_OUT_BOOTSTRAP
    return TailKind.PARTIAL_BOOTSTRAP


def run_worker(
    state: WorkerState,
    snapshot: PolicySnapshot,
    n_steps: int | None = None,
    n_episodes: int | None = None,
) -> WorkerOutput:
    """Unroll exactly n_steps transitions, or n_episodes whole episodes.

    Episodes that end inside a segment reset immediately. A segment that stops
    mid-episode is closed with a partial bootstrap on critic(next observation)
    and the episode resumes on the next call.
    """
    if (n_steps is None) == (n_episodes is None):
        raise ValueError("Exactly one of n_steps and n_episodes must be given")

    buffer = RolloutBuffer(strict=True)
    stats: dict[int, RunningNormalizer] = {}
    steps = 0
    finished = 0

    def more() -> bool:
        return steps < n_steps if n_steps is not None else finished < n_episodes

    while more():
        if state.needs_reset:
            state.start_episode()
        obs_stats = stats.setdefault(state.episode_id, RunningNormalizer(state.env.observation_dim))
        obs_stats.update(state.observation)

        choice = snapshot.act(state.observation, state.action_rng)
        result = state.env.step(choice.action)
        append_transition(
            buffer,
            Transition(
                observation=choice.observation,
                raw_action=choice.raw_action,
                log_prob=choice.log_prob,
                reward=float(result.reward),
                value=choice.value,
                done_reason=result.done_reason,
                policy_version=snapshot.version,
                env_id=state.env_id,
                episode_id=state.episode_id,
                step_index=state.step_index,
            ),
        )
        steps += 1
        state.step_index += 1
        state.episode_return += float(result.reward)

        if result.done:
            tail = _tail_kind(result.done_reason)
            tail_value = (
                None if tail is TailKind.TRUE_TERMINAL else snapshot.value(result.observation)
            )
            close_group(
                buffer,
                state.env_id,
                tail,
                tail_value,
                EpisodeSummary(
                    episode_id=state.episode_id,
                    env_id=state.env_id,
                    total_reward=state.episode_return,
                    length=state.step_index,
                    done_reason=result.done_reason,
                ),
            )
            if result.done_reason is DoneReason.TERMINAL:
                logger.warning(
                    "env %d episode %d terminated at step %d",
                    state.env_id,
                    state.episode_id,
                    state.step_index,
                )
            state.needs_reset = True
            finished += 1
        else:
            state.observation = result.observation

    if buffer.open_group(state.env_id) is not None:
        close_group(
            buffer,
            state.env_id,
            TailKind.PARTIAL_BOOTSTRAP,
            snapshot.value(state.observation),
        )

    return WorkerOutput(state=state, groups=buffer.groups, observation_stats=stats)


class WorkerPool:
    """Runs one worker call per environment and returns outputs in env_id order."""

    def __init__(self, kind: ExecutorKind = ExecutorKind.SERIAL, max_workers: int | None = None):
        self.kind = ExecutorKind(kind)
        self.max_workers = max_workers
        self._executor: Executor | None = None

    def __enter__(self) -> "WorkerPool":
        if self.kind is ExecutorKind.THREAD:
            self._executor = ThreadPoolExecutor(max_workers=self.max_workers)
        elif self.kind is ExecutorKind.PROCESS:
            self._executor = ProcessPoolExecutor(max_workers=self.max_workers)
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True, cancel_futures=True)
            self._executor = None

    def run(
        self,
        states: list[WorkerState],
        snapshot: PolicySnapshot,
        n_steps: int | None = None,
        n_episodes: int | None = None,
    ) -> list[WorkerOutput]:
        """Raises CollectionError naming the env_id of the first failing worker."""
        if self.kind is ExecutorKind.SERIAL or self._executor is None:
            outputs = []
            for state in states:
                try:
                    outputs.append(run_worker(state, snapshot, n_steps, n_episodes))
                except Exception as e:
                    raise CollectionError(f"Worker for env {state.env_id} failed: {e}") from e
            return outputs

        results: dict[int, WorkerOutput] = {}
        futures = {
            self._executor.submit(run_worker, state, snapshot, n_steps, n_episodes): state.env_id
            for state in states
        }
        for future in as_completed(futures):
            env_id = futures[future]
            try:
                results[env_id] = future.result()
            except Exception as e:
                for pending in futures:
                    pending.cancel()
                raise CollectionError(f"Worker for env {env_id} failed: {e}") from e
        return [results[state.env_id] for state in states]


def make_workers(envs: list[Environment], seed: int) -> list[WorkerState]:
    n_env = len(envs)
    return [WorkerState(env_id=i, n_env=n_env, seed=seed, env=env) for i, env in enumerate(envs)]
