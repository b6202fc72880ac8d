"""Rigid pendulum swing-up benchmark with a 200-step time-out."""

from dataclasses import dataclass

import numpy as np

from data.models import DoneReason, PendulumConfig
from envs.base import EnvironmentUsageError, StepResult


@dataclass(frozen=True)
class PendulumState:
    th: float
    thdot: float
    step_count: int = 0


def angle_normalize(x: float) -> float:
    return ((x + np.pi) % (2 * np.pi)) - np.pi


def pendulum_observation(state: PendulumState) -> np.ndarray:
    return np.array([np.cos(state.th), np.sin(state.th), state.thdot])


def pendulum_energy(state: PendulumState, config: PendulumConfig) -> float:
    """Conserved quantity of the torque-free dynamics (per unit inertia)."""
    return 0.5 * state.thdot**2 + 1.5 * config.g / config.length * np.cos(state.th)


def pendulum_step(
    state: PendulumState, torque: float, config: PendulumConfig
) -> tuple[PendulumState, StepResult]:
    """Advance one semi-implicit Euler step; torque in [-1, 1] is scaled to max_torque."""
    u = float(np.clip(torque, -1.0, 1.0)) * config.max_torque
    th, thdot = state.th, state.thdot
    g, m, length, dt = config.g, config.m, config.length, config.dt

    cost = angle_normalize(th) ** 2 + 0.1 * thdot**2 + 0.001 * u**2

    new_thdot = thdot + (3.0 * g / (2.0 * length) * np.sin(th) + 3.0 / (m * length**2) * u) * dt
    new_thdot = float(np.clip(new_thdot, -config.max_speed, config.max_speed))
    new_th = float(th + new_thdot * dt)

    new_state = PendulumState(th=new_th, thdot=new_thdot, step_count=state.step_count + 1)
    done_reason = (
        DoneReason.TIME_OUT if new_state.step_count >= config.max_steps else DoneReason.RUNNING
    )
    return new_state, StepResult(
        observation=pendulum_observation(new_state),
        reward=-float(cost),
        done_reason=done_reason,
    )


class PendulumEnv:
    observation_dim = 3
    action_dim = 1

    def __init__(self, config: PendulumConfig):
        self.config = config
        self.state: PendulumState | None = None
        self.done = True

    @property
    def episode_length(self) -> int:
        return self.config.max_steps

    def load_state(self, state: PendulumState) -> np.ndarray:
        self.state = state
        self.done = False
        return pendulum_observation(state)

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        th = float(rng.uniform(-np.pi, np.pi))
        thdot = float(rng.uniform(-1.0, 1.0))
        return self.load_state(PendulumState(th=th, thdot=thdot))

    def step(self, action: np.ndarray) -> StepResult:
        if self.done or self.state is None:
            raise EnvironmentUsageError("Cannot step a finished episode; call reset()")
        torque = float(np.asarray(action, dtype=np.float64).reshape(-1)[0])
        self.state, result = pendulum_step(self.state, torque, self.config)
        self.done = result.done
        return result
