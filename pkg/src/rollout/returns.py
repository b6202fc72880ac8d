"""Return targets and generalized advantage estimates over trajectory groups.

Each group is processed backwards from its tail. The value that follows the
last stored transition is ``b * tail_value`` where b is 0 for a true terminal,
1 for a partial-trajectory cut, and 1 for a time-out only when end-of-episode
bootstrapping is on.
"""

import numpy as np

from data.models import TailKind
from rollout.buffer import RolloutBuffer, TrajectoryGroup

ADVANTAGE_EPS = 1e-8


class AssemblyError(ValueError):
    """Raised when a group cannot be assembled (open group or missing tail value)."""


def bootstrap_flag(tail_kind: TailKind, eoe_bootstrap: bool) -> float:
    if tail_kind is TailKind.TRUE_TERMINAL:
        return 0.0
    if tail_kind is TailKind.PARTIAL_BOOTSTRAP:
        return 1.0
    return 1.0 if eoe_bootstrap else 0.0


def _tail_bootstrap(group: TrajectoryGroup, eoe_bootstrap: bool) -> float:
    if group.tail_kind is None:
        raise AssemblyError(
            f"env {group.env_id} episode {group.episode_id}: group has no tail"
        )
    b = bootstrap_flag(group.tail_kind, eoe_bootstrap)
    if b == 0.0:
        return 0.0
    if group.tail_value is None or not np.isfinite(group.tail_value):
        raise AssemblyError(
            f"env {group.env_id} episode {group.episode_id}: {group.tail_kind.value} "
            f"tail needs a bootstrap value"
        )
    return float(group.tail_value)


def assemble_targets(buffer: RolloutBuffer, gamma: float, eoe_bootstrap: bool) -> np.ndarray:
    """Discounted return targets y_t = r_t + gamma * y_{t+1}, closed by the bootstrapped tail."""
    targets = []
    for group in buffer.groups:
        next_return = _tail_bootstrap(group, eoe_bootstrap)
        rewards = np.array([t.reward for t in group.transitions])
        y = np.empty_like(rewards)
        for i in range(len(rewards) - 1, -1, -1):
            next_return = rewards[i] + gamma * next_return
            y[i] = next_return
        targets.append(y)
    return np.concatenate(targets) if targets else np.zeros(0)


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    if advantages.size == 0:
        return advantages
    return (advantages - advantages.mean()) / max(float(advantages.std()), ADVANTAGE_EPS)


def gae_advantages(
    buffer: RolloutBuffer,
    gamma: float,
    lam: float,
    eoe_bootstrap: bool,
    normalize: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """GAE advantages and value targets (y = A + v computed before normalization)."""
    advantages, targets = [], []
    for group in buffer.groups:
        next_value = _tail_bootstrap(group, eoe_bootstrap)
        rewards = np.array([t.reward for t in group.transitions])
        values = np.array([t.value for t in group.transitions])
        adv = np.empty_like(rewards)
        running = 0.0
        for i in range(len(rewards) - 1, -1, -1):
            delta = rewards[i] + gamma * next_value - values[i]
            running = delta + gamma * lam * running
            adv[i] = running
            next_value = values[i]
        advantages.append(adv)
        targets.append(adv + values)

    if not advantages:
        return np.zeros(0), np.zeros(0)
    adv = np.concatenate(advantages)
    y = np.concatenate(targets)
    return (normalize_advantages(adv) if normalize else adv), y


def assemble_buffer(
    buffer: RolloutBuffer, gamma: float, lam: float, eoe_bootstrap: bool
) -> RolloutBuffer:
    """Fill buffer.advantages (normalized) and buffer.targets in place."""
    buffer.advantages, buffer.targets = gae_advantages(buffer, gamma, lam, eoe_bootstrap)
    return buffer
