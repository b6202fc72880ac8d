from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from data.models import DoneReason, EnvironmentKind, RunConfig


class EnvironmentUsageError(RuntimeError):
    """Raised when an environment is driven outside its episode contract."""


@dataclass(frozen=True)
class StepResult:
    observation: np.ndarray
    reward: float
    done_reason: DoneReason

    @property
    def done(self) -> bool:
        return self.done_reason is not DoneReason.RUNNING


@runtime_checkable
class Environment(Protocol):
    """Episode-level control interface shared by every environment."""

    @property
    def observation_dim(self) -> int: ...

    @property
    def action_dim(self) -> int: ...

    @property
    def episode_length(self) -> int: ...

    def reset(self, rng: np.random.Generator) -> np.ndarray: ...

    def step(self, action: np.ndarray) -> StepResult: ...


def make_environment(config: RunConfig) -> Environment:
    """Build the environment selected in the run configuration.

    Raises:
        ValueError: If the environment kind is unsupported
    """
    # Imported here so each worker only loads what it runs
    if config.run.environment == EnvironmentKind.SHKADOV:
        from envs.shkadov_env import ShkadovEnv

        return ShkadovEnv(config.shkadov, config.solver)

    elif config.run.environment == EnvironmentKind.PENDULUM:
        from envs.pendulum import PendulumEnv

        return PendulumEnv(config.pendulum)

    else:
        raise ValueError(f"Unsupported environment: {config.run.environment}")
