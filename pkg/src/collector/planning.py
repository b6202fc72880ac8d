from dataclasses import dataclass

import numpy as np

from data.models import CollectMode, ConfigurationError, OnPolicyReport
from rollout.buffer import RolloutBuffer


@dataclass(frozen=True)
class SegmentPlan:
    n_env: int
    n_update: int
    episode_length: int
    mode: CollectMode
    steps_per_env: int | None  # segment modes only

    @property
    def transitions_per_update(self) -> int:
        return self.n_update * self.episode_length

    def updates_for(self, total_transitions: int) -> int:
        """Whole updates that fit in the budget; a final partial update is dropped."""
        return total_transitions // self.transitions_per_update


def plan_segments(n_env: int, n_update: int, episode_length: int, mode: CollectMode) -> SegmentPlan:
    """Split the per-update transition budget across environments.

    Raises:
        ConfigurationError: If a count is not positive or, in segment mode,
            n_update * episode_length is not divisible by n_env
    """
    if n_env < 1 or n_update < 1 or episode_length < 1:
        raise ConfigurationError(
            f"n_env, n_update and episode length must be >= 1, got "
            f"{n_env}, {n_update}, {episode_length}"
        )
    steps_per_env = None
    if mode.uses_segments:
        total = n_update * episode_length
        if total % n_env:
            raise ConfigurationError(
                f"{total} transitions per update cannot be split evenly across {n_env} "
                f"environments in {mode.value} mode"
            )
        steps_per_env = total // n_env
    return SegmentPlan(
        n_env=n_env,
        n_update=n_update,
        episode_length=episode_length,
        mode=mode,
        steps_per_env=steps_per_env,
    )


def verify_on_policy(buffer: RolloutBuffer, current_version: int) -> OnPolicyReport:
    versions = buffer.versions()
    return OnPolicyReport(
        current_version=current_version,
        total=int(versions.size),
        offpolicy_count=int(np.count_nonzero(versions != current_version)),
    )
