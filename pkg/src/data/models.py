from enum import Enum
from pathlib import Path
from typing import Annotated

from pydantic import BaseModel, ConfigDict, Field, model_validator


# === Episode Models ===
class DoneReason(str, Enum):
    RUNNING = "running"
    TIME_OUT = "timeout"
    TERMINAL = "terminal"


class TailKind(str, Enum):
    TRUE_TERMINAL = "true_terminal"
    TIME_OUT_BOOTSTRAP = "timeout_bootstrap"
    PARTIAL_BOOTSTRAP = "partial_bootstrap"


class CollectMode(str, Enum):
    REGULAR = "regular"  # full episodes, no bootstrapping
    EOE = "eoe"  # full episodes, time-out bootstrap
    EOE_PT = "eoe_pt"  # fixed-length segments, time-out + partial bootstrap

    @property
    def bootstraps_timeouts(self) -> bool:
        return self is not CollectMode.REGULAR

    @property
    def uses_segments(self) -> bool:
        return self is CollectMode.EOE_PT


class EnvironmentKind(str, Enum):
    SHKADOV = "shkadov"
    PENDULUM = "pendulum"


class ExecutorKind(str, Enum):
    SERIAL = "serial"
    THREAD = "thread"
    PROCESS = "process"


class Activation(str, Enum):
    RELU = "relu"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    LINEAR = "linear"


class ConfigurationError(ValueError):
    """Raised when configuration or input files are inconsistent."""


class ConfigModel(BaseModel):
    """Base for every configuration block: unknown keys are hard errors."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)


# === Solver / Environment Configuration ===
class SolverConfig(ConfigModel):
    delta: float = Field(default=0.1, gt=0, description="Shkadov parameter")
    dt: float = Field(default=0.005, gt=0, description="Numerical time step")
    dx: float = Field(default=0.5, gt=0, description="Spatial discretization step")
    eps: float = Field(default=5e-4, ge=0, description="Inlet noise amplitude")
    h_min: float = Field(
        default=1e-6, gt=0, description="Positivity floor triggering divergence"
    )


class ShkadovEnvConfig(ConfigModel):
    n_jets: int = Field(default=1, ge=1, description="Number of actuation jets")
    x0: float = Field(default=150.0, gt=0, description="Position of the first jet")
    jet_spacing: float = Field(default=10.0, gt=0, description="Distance between jets")
    L0: float = Field(default=150.0, gt=0, description="Base domain length")
    jet_width: float = Field(default=4.0, gt=0, description="Jet width x_r - x_l")
    amplitude: float = Field(default=5.0, gt=0, description="Jet amplitude factor A")
    l_obs: float = Field(default=10.0, gt=0, description="Observation region length")
    l_rwd: float = Field(default=10.0, gt=0, description="Reward region length")
    dt_int: float = Field(default=0.01, ge=0, description="Action ramp duration")
    dt_const: float = Field(default=0.04, ge=0, description="Action hold duration")
    actions_per_episode: int = Field(default=400, ge=1, description="Episode length")
    init_state_dir: str = Field(
        default="init_states", description="Directory of initial-state snapshots"
    )
    n_init_states: int = Field(
        default=100, ge=1, description="Size of the generated initial-state set"
    )
    t_init_min: float = Field(default=200.0, gt=0, description="Shortest warm-up time")
    t_init_max: float = Field(default=220.0, gt=0, description="Longest warm-up time")

    @property
    def domain_length(self) -> float:
        return self.L0 + (self.n_jets + 2) * self.jet_spacing

    @property
    def dt_act(self) -> float:
        return self.dt_int + self.dt_const

    def jet_positions(self) -> list[float]:
        return [self.x0 + j * self.jet_spacing for j in range(self.n_jets)]

    @model_validator(mode="after")
    def check_geometry(self) -> "ShkadovEnvConfig":
        if self.jet_spacing < self.jet_width:
            raise ValueError(
                f"Jet supports overlap: spacing {self.jet_spacing} < width {self.jet_width}"
            )
        if self.x0 - self.l_obs < 0:
            raise ValueError("Observation region of the first jet leaves the domain")
        last = self.x0 + (self.n_jets - 1) * self.jet_spacing
        if last + max(self.l_rwd, self.jet_width / 2) > self.domain_length:
            raise ValueError("Reward region of the last jet leaves the domain")
        if self.t_init_max < self.t_init_min:
            raise ValueError("t_init_max must be >= t_init_min")
        if self.dt_act <= 0:
            raise ValueError("dt_int + dt_const must be positive")
        return self


class PendulumConfig(ConfigModel):
    max_speed: float = Field(default=8.0, gt=0)
    max_torque: float = Field(default=2.0, gt=0)
    dt: float = Field(default=0.05, gt=0)
    g: float = Field(default=10.0, gt=0)
    m: float = Field(default=1.0, gt=0)
    length: float = Field(default=1.0, gt=0)
    max_steps: int = Field(default=200, ge=1, description="Time-out step cap")


# === Agent Configuration ===
class NetworkConfig(ConfigModel):
    hidden: int = Field(default=64, ge=1, description="Width of every hidden layer")
    mean_head_gain: float = Field(
        default=0.01, gt=0, description="Orthogonal gain of the actor mean head"
    )
    std_floor: float = Field(default=1e-4, gt=0, description="Lower bound on std")


class PpoConfig(ConfigModel):
    clip_eps: float = Field(default=0.2, gt=0, lt=1, description="PPO clip value")
    entropy_coef: float = Field(default=0.01, ge=0, description="Entropy bonus")
    gamma: float = Field(default=0.99, gt=0, le=1, description="Discount factor")
    gae_lambda: float = Field(default=0.99, ge=0, le=1, description="GAE lambda")
    epochs: int = Field(default=4, ge=1)
    minibatch_size: int = Field(default=256, ge=1)
    actor_lr: float = Field(default=5e-4, gt=0)
    critic_lr: float = Field(default=2e-3, gt=0)
    max_grad_norm: float = Field(default=0.1, gt=0, description="Gradient clipping")
    adam_beta1: float = Field(default=0.9, ge=0, lt=1)
    adam_beta2: float = Field(default=0.999, ge=0, lt=1)
    adam_eps: float = Field(default=1e-8, gt=0)


# === Run Configuration ===
class CollectorConfig(ConfigModel):
    n_env: int = Field(default=1, ge=1, description="Parallel environments")
    n_update: int = Field(default=8, ge=1, description="Episodes per agent update")
    mode: CollectMode = Field(default=CollectMode.EOE_PT)
    executor: ExecutorKind = Field(default=ExecutorKind.PROCESS)
    max_workers: int | None = Field(default=None, ge=1)


class RunSettings(ConfigModel):
    environment: EnvironmentKind = Field(default=EnvironmentKind.SHKADOV)
    total_transitions: int = Field(default=200_000, ge=1)
    seed: int = Field(default=0, ge=0)
    run_id: str = Field(default="run", min_length=1)
    output_dir: str = Field(default="runs")
    checkpoint_every: int = Field(default=10, ge=1, description="Updates between checkpoints")
    log_every: int = Field(default=1, ge=1, description="Updates between console lines")


class RunConfig(ConfigModel):
    run: RunSettings = Field(default_factory=RunSettings)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    shkadov: ShkadovEnvConfig = Field(default_factory=ShkadovEnvConfig)
    pendulum: PendulumConfig = Field(default_factory=PendulumConfig)
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    ppo: PpoConfig = Field(default_factory=PpoConfig)
    collector: CollectorConfig = Field(default_factory=CollectorConfig)

    @model_validator(mode="after")
    def check_action_timing(self) -> "RunConfig":
        if self.run.environment is EnvironmentKind.SHKADOV:
            dt = self.solver.dt
            for name in ("dt_int", "dt_const"):
                ratio = getattr(self.shkadov, name) / dt
                if abs(ratio - round(ratio)) > 1e-6:
                    raise ValueError(f"shkadov.{name} must be a multiple of solver.dt={dt}")
        return self

    @property
    def episode_length(self) -> int:
        if self.run.environment is EnvironmentKind.SHKADOV:
            return self.shkadov.actions_per_episode
        return self.pendulum.max_steps

    @property
    def run_dir(self) -> Path:
        return Path(self.run.output_dir) / self.run.run_id


# === Reporting Models ===
class EpisodeSummary(BaseModel):
    episode_id: int
    env_id: int
    total_reward: float
    length: int
    done_reason: DoneReason

    @property
    def mean_reward(self) -> float:
        return self.total_reward / self.length if self.length else 0.0


class OnPolicyReport(BaseModel):
    current_version: int
    total: int
    offpolicy_count: int

    @property
    def offpolicy_fraction(self) -> float:
        return self.offpolicy_count / self.total if self.total else 0.0


class UpdateMetrics(BaseModel):
    policy_loss: float
    value_loss: float
    entropy: float
    mean_value_estimate: float
    clip_fraction: float = 0.0
    approx_kl: float = 0.0


LOG_SCHEMA_VERSION = 1


class TrainingLogRow(BaseModel):
    """One row of the training log; field order is the column order."""

    run_id: str
    update_index: int
    transitions: int
    walltime_s: float
    policy_version: int
    score_mean: Annotated[float, "Mean per-step reward of completed episodes"]
    score_min: float
    score_max: float
    policy_loss: float
    value_loss: float
    mean_value_estimate: float
    entropy: float
    offpolicy_fraction: float
    env_time_s: float
    train_time_s: float
    other_time_s: float

    @classmethod
    def columns(cls) -> list[str]:
        return list(cls.model_fields)


class SpeedupRow(BaseModel):
    mode: CollectMode
    n_env: int
    walltime_s: float
    speedup: float
    perfect_speedup: float
    reference_speedup: float | None = None
