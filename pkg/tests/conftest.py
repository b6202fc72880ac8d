"""
Pytest configuration and shared fixtures for all tests.
"""

import numpy as np
import pytest

from agent.ppo import PPOAgent
from data.models import (
    DoneReason,
    NetworkConfig,
    PpoConfig,
    ShkadovEnvConfig,
    SolverConfig,
    TailKind,
)
from envs.base import EnvironmentUsageError, StepResult
from rollout.buffer import RolloutBuffer, Transition, append_transition, close_group
from solver.shkadov import FilmState, Grid
from solver.snapshot import write_snapshot

# ============================================================================
# Stub Environment
# ============================================================================


class StubEnv:
    """Cheap deterministic environment: a drifting scalar pushed by the action.

    terminate_at makes the episode end as a true terminal at that step.
    """

    observation_dim = 2
    action_dim = 1

    def __init__(self, episode_length: int = 4, terminate_at: int | None = None):
        self._episode_length = episode_length
        self.terminate_at = terminate_at
        self.x = 0.0
        self.steps = 0
        self.done = True

    @property
    def episode_length(self) -> int:
        return self._episode_length

    def _obs(self) -> np.ndarray:
        return np.array([self.x, self.steps / self._episode_length])

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.x = float(rng.uniform(-1.0, 1.0))
        self.steps = 0
        self.done = False
        return self._obs()

    def step(self, action: np.ndarray) -> StepResult:
        if self.done:
            raise EnvironmentUsageError("episode finished")
        self.x += 0.1 * float(np.asarray(action).reshape(-1)[0])
        self.steps += 1
        if self.terminate_at is not None and self.steps >= self.terminate_at:
            reason = DoneReason.TERMINAL
        elif self.steps >= self._episode_length:
            reason = DoneReason.TIME_OUT
        else:
            reason = DoneReason.RUNNING
        self.done = reason is not DoneReason.RUNNING
        return StepResult(observation=self._obs(), reward=-self.x * self.x, done_reason=reason)


@pytest.fixture
def stub_env_factory():
    """Factory for stub environments."""

    def make(n: int = 1, episode_length: int = 4, terminate_at: int | None = None):
        return [StubEnv(episode_length, terminate_at) for _ in range(n)]

    return make


# ============================================================================
# Agent Fixtures
# ============================================================================


@pytest.fixture
def small_network_config():
    """Tiny network so tests stay fast."""
    return NetworkConfig(hidden=8)


@pytest.fixture
def small_ppo_config():
    """PPO settings for small synthetic buffers."""
    return PpoConfig(epochs=2, minibatch_size=16)


@pytest.fixture
def stub_agent(small_ppo_config, small_network_config):
    """Agent sized for the stub environment."""
    return PPOAgent(
        StubEnv.observation_dim,
        StubEnv.action_dim,
        small_ppo_config,
        small_network_config,
        np.random.default_rng(0),
    )


# ============================================================================
# Solver / Environment Fixtures
# ============================================================================


@pytest.fixture
def solver_config():
    """Default solver settings without inlet noise."""
    return SolverConfig(eps=0.0)


@pytest.fixture
def shkadov_config(tmp_path):
    """Single-jet configuration pointing at a temporary state directory."""
    return ShkadovEnvConfig(init_state_dir=str(tmp_path / "states"))


@pytest.fixture
def flat_state_dir(shkadov_config, solver_config):
    """State directory holding one flat-film snapshot."""
    grid = Grid.from_length(shkadov_config.domain_length, solver_config.dx)
    write_snapshot(
        f"{shkadov_config.init_state_dir}/state_0000.txt",
        FilmState.flat(grid),
        grid.dx,
        solver_config.delta,
        t=0.0,
    )
    return shkadov_config.init_state_dir


# ============================================================================
# Buffer Fixtures
# ============================================================================


@pytest.fixture
def buffer_factory():
    """Build a closed single-group buffer from rewards and values."""

    def make(
        rewards,
        values=None,
        tail_kind=TailKind.TRUE_TERMINAL,
        tail_value=None,
        env_id=0,
        episode_id=0,
        version=0,
        obs_dim=2,
        buffer=None,
    ):
        buffer = buffer if buffer is not None else RolloutBuffer()
        values = values if values is not None else [0.0] * len(rewards)
        last_reason = {
            TailKind.TRUE_TERMINAL: DoneReason.TERMINAL,
            TailKind.TIME_OUT_BOOTSTRAP: DoneReason.TIME_OUT,
            TailKind.PARTIAL_BOOTSTRAP: DoneReason.RUNNING,
        }[tail_kind]
        rng = np.random.default_rng(episode_id)
        for i, (r, v) in enumerate(zip(rewards, values, strict=True)):
            append_transition(
                buffer,
                Transition(
                    observation=rng.standard_normal(obs_dim),
                    raw_action=rng.uniform(-1.0, 1.0, size=1),
                    log_prob=-0.9,
                    reward=float(r),
                    value=float(v),
                    done_reason=last_reason if i == len(rewards) - 1 else DoneReason.RUNNING,
                    policy_version=version,
                    env_id=env_id,
                    episode_id=episode_id,
                    step_index=i,
                ),
            )
        close_group(buffer, env_id, tail_kind, tail_value)
        return buffer

    return make
