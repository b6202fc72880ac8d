import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from data.models import ConfigurationError, DoneReason, ShkadovEnvConfig, SolverConfig
from envs.base import EnvironmentUsageError, StepResult
from solver.shkadov import DivergenceError, FilmState, Grid, ab2_step, steps_for
from solver.snapshot import Snapshot, SnapshotFormatError, read_snapshot

logger = logging.getLogger(__name__)

SNAPSHOT_GLOB = "*.txt"
RAMP_RTOL = 1e-9


@dataclass
class ActionSchedule:
    u_prev: np.ndarray
    u_new: np.ndarray
    t_n: float = 0.0

    @classmethod
    def at_rest(cls, n_jets: int) -> "ActionSchedule":
        return cls(u_prev=np.zeros(n_jets), u_new=np.zeros(n_jets), t_n=0.0)


# === Geometry ===
def region_indices(grid: Grid, lo: float, hi: float, closed: str) -> np.ndarray:
    """Grid indices with x in [lo, hi) for closed="left", (lo, hi] for closed="right"."""
    x = grid.x
    tol = 1e-9 * grid.dx
    if closed == "left":
        mask = (x >= lo - tol) & (x < hi - tol)
    elif closed == "right":
        mask = (x > lo + tol) & (x <= hi + tol)
    else:
        raise ValueError(f"closed must be 'left' or 'right', got {closed!r}")
    return np.flatnonzero(mask)


def observation_indices(grid: Grid, config: ShkadovEnvConfig) -> np.ndarray:
    blocks = [
        region_indices(grid, x_j - config.l_obs, x_j, closed="left")
        for x_j in config.jet_positions()
    ]
    return np.concatenate(blocks)


def reward_indices(grid: Grid, config: ShkadovEnvConfig) -> np.ndarray:
    blocks = [
        region_indices(grid, x_j, x_j + config.l_rwd, closed="right")
        for x_j in config.jet_positions()
    ]
    return np.concatenate(blocks)


def jet_profiles(grid: Grid, config: ShkadovEnvConfig) -> np.ndarray:
    """Unit parabolic profile of each jet, shape (n_jets, n)."""
    x = grid.x
    width = config.jet_width
    profiles = np.zeros((config.n_jets, grid.n))
    for j, x_j in enumerate(config.jet_positions()):
        x_l, x_r = x_j - width / 2, x_j + width / 2
        inside = (x >= x_l) & (x <= x_r)
        profiles[j, inside] = 4.0 * (x[inside] - x_l) * (x_r - x[inside]) / width**2
    if np.any(profiles.astype(bool).sum(axis=0) > 1):
        raise ConfigurationError("Jet supports overlap on the grid")
    return profiles


# === Operations ===
def jet_forcing(
    u: np.ndarray,
    grid: Grid,
    config: ShkadovEnvConfig,
    profiles: np.ndarray | None = None,
) -> np.ndarray:
    if profiles is None:
        profiles = jet_profiles(grid, config)
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (config.n_jets,):
        raise ValueError(f"Expected {config.n_jets} jet actions, got shape {u.shape}")
    return config.amplitude * (u @ profiles)


def interpolate_action(
    schedule: ActionSchedule, t: float, config: ShkadovEnvConfig
) -> np.ndarray:
    elapsed = t - schedule.t_n
    # a ramp that ends within rounding of t counts as finished
    if config.dt_int <= 0 or elapsed >= config.dt_int * (1.0 - RAMP_RTOL):
        return schedule.u_new.copy()
    alpha = elapsed / config.dt_int
    return (1.0 - alpha) * schedule.u_prev + alpha * schedule.u_new


def ramp_action(schedule: ActionSchedule, substep: int, ramp_steps: int) -> np.ndarray:
    """Action applied at solver sub-step `substep` of the current action.

    Exactly u_new from sub-step ramp_steps on.
    """
    if ramp_steps <= 0 or substep >= ramp_steps:
        return schedule.u_new.copy()
    alpha = substep / ramp_steps
    return (1.0 - alpha) * schedule.u_prev + alpha * schedule.u_new


def observe(state: FilmState, obs_idx: np.ndarray) -> np.ndarray:
    return state.h[obs_idx].copy()


def compute_reward(state: FilmState, rwd_idx: np.ndarray, config: ShkadovEnvConfig) -> float:
    deviation = state.h[rwd_idx] - 1.0
    return -float(np.sum(deviation * deviation)) / (config.l_rwd * config.n_jets)


# === Initial states ===
def _directory_signature(directory: Path) -> tuple:
    return tuple(
        (p.name, p.stat().st_mtime_ns, p.stat().st_size)
        for p in sorted(directory.glob(SNAPSHOT_GLOB))
    )


@lru_cache(maxsize=8)
def _load_snapshot_set_cached(directory: str, signature: tuple) -> tuple[Snapshot, ...]:
    return tuple(read_snapshot(Path(directory) / name) for name, _, _ in signature)


def load_snapshot_set(directory: str | Path, grid: Grid, solver: SolverConfig) -> tuple[Snapshot, ...]:
    """Load and validate every snapshot of an initial-state directory.

    Raises:
        ConfigurationError: If the set is empty or a file does not match the grid
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigurationError(f"Initial-state directory not found: {directory}")
    try:
        snapshots = _load_snapshot_set_cached(
            str(directory.resolve()), _directory_signature(directory)
        )
    except SnapshotFormatError as e:
        raise ConfigurationError(str(e)) from e

    if not snapshots:
        raise ConfigurationError(f"No initial-state snapshots in {directory}")
    for snap in snapshots:
        if snap.n != grid.n:
            raise ConfigurationError(
                f"Snapshot {snap.path} has n={snap.n}, expected {grid.n}"
            )
        if not np.isclose(snap.dx, grid.dx) or not np.isclose(snap.delta, solver.delta):
            raise ConfigurationError(
                f"Snapshot {snap.path} has dx={snap.dx}, delta={snap.delta}; "
                f"expected dx={grid.dx}, delta={solver.delta}"
            )
    return snapshots


# === Environment ===
class ShkadovEnv:
    """Falling-film control: n_jets parabolic jets driven by the agent."""

    def __init__(self, config: ShkadovEnvConfig, solver: SolverConfig):
        self.config = config
        self.solver = solver
        self.grid = Grid.from_length(config.domain_length, solver.dx)
        if abs(self.grid.length - config.domain_length) > solver.dx:
            raise ConfigurationError(
                f"Grid length {self.grid.length} does not match domain {config.domain_length}"
            )
        try:
            self.substeps = steps_for(config.dt_act, solver.dt)
            self.ramp_steps = steps_for(config.dt_int, solver.dt)
        except ValueError as e:
            raise ConfigurationError(str(e)) from e

        self.profiles = jet_profiles(self.grid, config)
        self.obs_idx = observation_indices(self.grid, config)
        self.rwd_idx = reward_indices(self.grid, config)

        self.state: FilmState | None = None
        self.schedule = ActionSchedule.at_rest(config.n_jets)
        self.step_count = 0
        self.done = True
        self._rng: np.random.Generator | None = None

    @property
    def observation_dim(self) -> int:
        return int(self.obs_idx.size)

    @property
    def action_dim(self) -> int:
        return self.config.n_jets

    @property
    def episode_length(self) -> int:
        return self.config.actions_per_episode

    def load_state(self, state: FilmState, rng: np.random.Generator | None = None) -> np.ndarray:
        """Start an episode from an explicit state (used by reset and evaluation)."""
        self.state = state
        self.schedule = ActionSchedule.at_rest(self.config.n_jets)
        self.step_count = 0
        self.done = False
        self._rng = rng
        return observe(self.state, self.obs_idx)

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        snapshots = load_snapshot_set(self.config.init_state_dir, self.grid, self.solver)
        choice = int(rng.integers(len(snapshots)))
        return self.load_state(snapshots[choice].to_state(), rng)

    def step(self, action: np.ndarray) -> StepResult:
        if self.done or self.state is None:
            raise EnvironmentUsageError("Cannot step a finished episode; call reset()")

        u_new = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        self.schedule.u_new = u_new
        state = self.state
        done_reason = DoneReason.RUNNING
        try:
            for k in range(self.substeps):
                u = ramp_action(self.schedule, k, self.ramp_steps)
                forcing = jet_forcing(u, self.grid, self.config, self.profiles)
                state = ab2_step(state, forcing, self.solver, self.grid, self._rng)
        except DivergenceError as e:
            logger.warning("Solver diverged at t=%.3f (step %d): %s", e.t, e.step_index, e)
            done_reason = DoneReason.TERMINAL

        self.state = state
        self.step_count += 1
        self.schedule = ActionSchedule(
            u_prev=u_new, u_new=u_new, t_n=self.step_count * self.config.dt_act
        )
        if done_reason is DoneReason.RUNNING and self.step_count >= self.episode_length:
            done_reason = DoneReason.TIME_OUT
        self.done = done_reason is not DoneReason.RUNNING

        return StepResult(
            observation=observe(state, self.obs_idx),
            reward=compute_reward(state, self.rwd_idx, self.config),
            done_reason=done_reason,
        )
