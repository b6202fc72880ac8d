from collections.abc import Iterator
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from data.models import DoneReason, EpisodeSummary, TailKind


class OnPolicyViolationError(RuntimeError):
    """Raised when transitions from different policy versions are mixed in strict mode."""


@dataclass(frozen=True)
class Transition:
    observation: np.ndarray  # normalized
    raw_action: np.ndarray  # pre-clip sample
    log_prob: float
    reward: float
    value: float
    done_reason: DoneReason
    policy_version: int
    env_id: int
    episode_id: int
    step_index: int


@dataclass
class TrajectoryGroup:
    """Contiguous steps of one episode on one environment."""

    env_id: int
    episode_id: int
    transitions: list[Transition] = field(default_factory=list)
    tail_kind: TailKind | None = None
    tail_value: float | None = None
    episode: EpisodeSummary | None = None

    @property
    def closed(self) -> bool:
        return self.tail_kind is not None

    def __len__(self) -> int:
        return len(self.transitions)


@dataclass
class RolloutBuffer:
    groups: list[TrajectoryGroup] = field(default_factory=list)
    strict: bool = True
    advantages: np.ndarray | None = None
    targets: np.ndarray | None = None

    def __len__(self) -> int:
        return sum(len(g) for g in self.groups)

    def transitions(self) -> Iterator[Transition]:
        for group in self.groups:
            yield from group.transitions

    def open_group(self, env_id: int) -> TrajectoryGroup | None:
        for group in reversed(self.groups):
            if group.env_id == env_id:
                return None if group.closed else group
        return None

    def episodes(self) -> list[EpisodeSummary]:
        """Summaries of episodes whose final transition is in this buffer."""
        return [g.episode for g in self.groups if g.episode is not None]

    def extend(self, groups: list[TrajectoryGroup]) -> None:
        self.groups.extend(groups)
        self.advantages = self.targets = None

    # Batched views for the update
    def observations(self) -> np.ndarray:
        return np.stack([t.observation for t in self.transitions()])

    def actions(self) -> np.ndarray:
        return np.stack([t.raw_action for t in self.transitions()])

    def log_probs(self) -> np.ndarray:
        return np.array([t.log_prob for t in self.transitions()])

    def values(self) -> np.ndarray:
        return np.array([t.value for t in self.transitions()])

    def versions(self) -> np.ndarray:
        return np.array([t.policy_version for t in self.transitions()], dtype=np.int64)


def append_transition(buffer: RolloutBuffer, transition: Transition) -> None:
    """Store a transition in the open group of its env_id, starting a group if needed.

    Raises:
        ValueError: If the step index does not continue the open group
        OnPolicyViolationError: If the policy version changes inside a group in strict mode
    """
    group = buffer.open_group(transition.env_id)
    if group is not None and group.episode_id != transition.episode_id:
        raise ValueError(
            f"env {transition.env_id}: episode {transition.episode_id} started while "
            f"episode {group.episode_id} is still open"
        )
    if group is None:
        group = TrajectoryGroup(env_id=transition.env_id, episode_id=transition.episode_id)
        buffer.groups.append(group)
    elif group.transitions:
        last = group.transitions[-1]
        if transition.step_index != last.step_index + 1:
            raise ValueError(
                f"env {transition.env_id}: step {transition.step_index} does not follow "
                f"step {last.step_index}"
            )
        if buffer.strict and transition.policy_version != last.policy_version:
            raise OnPolicyViolationError(
                f"env {transition.env_id}: policy version {transition.policy_version} "
                f"mixed with {last.policy_version} in one group"
            )
    group.transitions.append(transition)
    buffer.advantages = buffer.targets = None


def close_group(
    buffer: RolloutBuffer,
    env_id: int,
    tail_kind: TailKind,
    tail_value: float | None = None,
    episode: EpisodeSummary | None = None,
) -> TrajectoryGroup:
    group = buffer.open_group(env_id)
    if group is None or not group.transitions:
        raise ValueError(f"env {env_id}: no open group to close")
    terminal = group.transitions[-1].done_reason is DoneReason.TERMINAL
    if terminal != (tail_kind is TailKind.TRUE_TERMINAL):
        raise ValueError(
            f"env {env_id}: tail kind {tail_kind.value} does not match final done "
            f"reason {group.transitions[-1].done_reason.value}"
        )
    group.tail_kind = tail_kind
    group.tail_value = tail_value
    group.episode = episode
    return group


def dump_buffer(buffer: RolloutBuffer, path: str | Path | None = None) -> str:
    """One line per transition: env_id episode_id step reward value done_reason version."""
    lines = [
        f"{t.env_id} {t.episode_id} {t.step_index} {float(t.reward)!r} {float(t.value)!r} "
        f"{t.done_reason.value} {t.policy_version}"
        for t in buffer.transitions()
    ]
    text = "\n".join(lines) + ("\n" if lines else "")
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
