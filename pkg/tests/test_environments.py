"""
Tests for the Shkadov control environment and initial-state generation.
"""

import numpy as np
import pytest
from pydantic import ValidationError

from data.models import (
    ConfigurationError,
    DoneReason,
    EnvironmentKind,
    RunConfig,
    RunSettings,
    ShkadovEnvConfig,
    SolverConfig,
)
from envs.base import Environment, EnvironmentUsageError, make_environment
from envs.initial_states import generate_initial_states
from envs.pendulum import PendulumEnv
from envs.shkadov_env import (
    ActionSchedule,
    ShkadovEnv,
    compute_reward,
    interpolate_action,
    jet_forcing,
    jet_profiles,
    observation_indices,
    observe,
    ramp_action,
    reward_indices,
)
from solver.shkadov import FilmState, Grid
from solver.snapshot import read_snapshot, write_snapshot


@pytest.fixture
def grid():
    return Grid.from_length(ShkadovEnvConfig().domain_length, 0.5)


# ============================================================================
# Geometry and Forcing
# ============================================================================


@pytest.mark.unit
class TestGeometry:
    """Tests for domain size and region indices."""

    def test_domain_length(self):
        """Test L = L0 + (n_jets + 2) * spacing."""
        assert ShkadovEnvConfig().domain_length == 180.0
        assert ShkadovEnvConfig(n_jets=5).domain_length == 220.0

    def test_observation_indices_single_jet(self, grid):
        """Test the observation region [140, 150) maps to indices 280..299."""
        idx = observation_indices(grid, ShkadovEnvConfig())
        np.testing.assert_array_equal(idx, np.arange(280, 300))

    def test_reward_indices_single_jet(self, grid):
        """Test the reward region (150, 160] maps to indices 301..320."""
        idx = reward_indices(grid, ShkadovEnvConfig())
        np.testing.assert_array_equal(idx, np.arange(301, 321))

    def test_observation_blocks_follow_jets(self):
        """Test five jets give five 20-point blocks in jet order."""
        config = ShkadovEnvConfig(n_jets=5)
        grid = Grid.from_length(config.domain_length, 0.5)
        idx = observation_indices(grid, config)
        assert idx.size == 100
        for j in range(5):
            assert idx[20 * j] == 280 + 20 * j

    def test_overlapping_jets_rejected(self):
        """Test jets closer than their width fail validation."""
        with pytest.raises(ValidationError, match="overlap"):
            ShkadovEnvConfig(n_jets=2, jet_spacing=3.0)


@pytest.mark.unit
class TestJetForcing:
    """Tests for the parabolic jet profile."""

    def test_peak_at_center(self, grid):
        """Test u = 0.5, A = 5 gives 2.5 at the jet center."""
        forcing = jet_forcing(np.array([0.5]), grid, ShkadovEnvConfig())
        assert forcing[300] == pytest.approx(2.5)

    def test_zero_at_edges_and_outside(self, grid):
        """Test the profile vanishes at x_l, x_r and outside the support."""
        forcing = jet_forcing(np.array([1.0]), grid, ShkadovEnvConfig())
        assert forcing[296] == pytest.approx(0.0)
        assert forcing[304] == pytest.approx(0.0)
        assert np.all(forcing[:296] == 0.0)
        assert np.all(forcing[305:] == 0.0)

    def test_quarter_width(self, grid):
        """Test the profile factor is 0.75 at a quarter of the width."""
        forcing = jet_forcing(np.array([1.0]), grid, ShkadovEnvConfig())
        assert forcing[298] == pytest.approx(3.75)

    def test_wrong_action_shape(self, grid):
        """Test an action of the wrong length is rejected."""
        with pytest.raises(ValueError, match="jet actions"):
            jet_forcing(np.array([0.1, 0.2]), grid, ShkadovEnvConfig())

    def test_profiles_do_not_overlap(self):
        """Test each grid point belongs to at most one jet."""
        config = ShkadovEnvConfig(n_jets=5)
        profiles = jet_profiles(Grid.from_length(config.domain_length, 0.5), config)
        assert np.all((profiles > 0).sum(axis=0) <= 1)


@pytest.mark.unit
class TestInterpolateAction:
    """Tests for the saturated linear action ramp."""

    def setup_method(self):
        self.config = ShkadovEnvConfig()
        self.schedule = ActionSchedule(u_prev=np.array([-1.0]), u_new=np.array([1.0]), t_n=2.0)

    def test_start(self):
        """Test t = t_n returns u_prev."""
        np.testing.assert_allclose(interpolate_action(self.schedule, 2.0, self.config), [-1.0])

    def test_midpoint(self):
        """Test half the ramp returns the average."""
        np.testing.assert_allclose(
            interpolate_action(self.schedule, 2.005, self.config), [0.0], atol=1e-12
        )

    def test_saturates(self):
        """Test after the ramp the new action holds exactly."""
        np.testing.assert_array_equal(interpolate_action(self.schedule, 2.03, self.config), [1.0])

    def test_no_ramp(self):
        """Test dt_int = 0 jumps straight to u_new."""
        config = ShkadovEnvConfig(dt_int=0.0, dt_const=0.05)
        np.testing.assert_array_equal(interpolate_action(self.schedule, 2.0, config), [1.0])

    def test_saturates_with_accumulated_time(self):
        """Test the hold is exact when t_n is a long running sum of dt_act."""
        t_n = 0.0
        misses = 0
        for _ in range(400):
            schedule = ActionSchedule(u_prev=np.array([-1.0]), u_new=np.array([1.0]), t_n=t_n)
            for k in range(2, 10):
                misses += interpolate_action(schedule, t_n + k * 0.005, self.config)[0] != 1.0
            t_n += self.config.dt_act
        assert misses == 0


@pytest.mark.unit
class TestRampAction:
    """Tests for the sub-step indexed action ramp."""

    def setup_method(self):
        self.schedule = ActionSchedule(u_prev=np.array([-1.0]), u_new=np.array([0.3]), t_n=7.35)

    def test_start(self):
        """Test sub-step 0 applies u_prev."""
        np.testing.assert_array_equal(ramp_action(self.schedule, 0, 2), [-1.0])

    def test_midpoint(self):
        """Test sub-step 1 of 2 applies the average."""
        np.testing.assert_allclose(ramp_action(self.schedule, 1, 2), [-0.35])

    def test_hold_exact(self):
        """Test every sub-step after the ramp applies u_new exactly."""
        for k in range(2, 10):
            np.testing.assert_array_equal(ramp_action(self.schedule, k, 2), [0.3])

    def test_no_ramp(self):
        """Test zero ramp steps apply u_new from the first sub-step."""
        np.testing.assert_array_equal(ramp_action(self.schedule, 0, 0), [0.3])


@pytest.mark.unit
class TestObservationReward:
    """Tests for observe and compute_reward."""

    def test_flat_film(self, grid):
        """Test a flat film observes ones and earns zero reward."""
        config = ShkadovEnvConfig()
        state = FilmState.flat(grid)
        np.testing.assert_array_equal(observe(state, observation_indices(grid, config)), np.ones(20))
        assert compute_reward(state, reward_indices(grid, config), config) == 0.0

    def test_uniform_deviation(self, grid):
        """Test h - 1 = 0.1 on the reward region gives -0.02."""
        config = ShkadovEnvConfig()
        state = FilmState.flat(grid)
        idx = reward_indices(grid, config)
        state.h[idx] = 1.1
        expected = -sum((state.h[i] - 1.0) ** 2 for i in idx) / 10.0
        assert compute_reward(state, idx, config) == pytest.approx(expected)
        assert compute_reward(state, idx, config) == pytest.approx(-0.02)

    def test_normalized_by_jets(self):
        """Test doubling the jets with equal deviations keeps the reward."""
        one, two = ShkadovEnvConfig(n_jets=1), ShkadovEnvConfig(n_jets=2)
        rewards = []
        for config in (one, two):
            g = Grid.from_length(config.domain_length, 0.5)
            state = FilmState.flat(g)
            idx = reward_indices(g, config)
            state.h[idx] = 0.8
            rewards.append(compute_reward(state, idx, config))
        assert rewards[0] == pytest.approx(rewards[1])


# ============================================================================
# Environment
# ============================================================================


@pytest.mark.unit
class TestShkadovEnv:
    """Tests for reset/step of the Shkadov environment."""

    def test_protocol(self, shkadov_config, solver_config):
        """Test the environment satisfies the Environment protocol."""
        env = ShkadovEnv(shkadov_config, solver_config)
        assert isinstance(env, Environment)
        assert env.observation_dim == 20
        assert env.action_dim == 1
        assert env.substeps == 10

    def test_flat_fixed_point(self, shkadov_config, solver_config, flat_state_dir):
        """Test zero action on a flat film without noise keeps reward 0."""
        env = ShkadovEnv(shkadov_config, solver_config)
        obs = env.reset(np.random.default_rng(0))
        np.testing.assert_array_equal(obs, np.ones(20))
        result = env.step(np.zeros(1))
        assert result.reward == pytest.approx(0.0, abs=1e-20)
        np.testing.assert_allclose(result.observation, np.ones(20), atol=1e-14)
        assert result.done_reason is DoneReason.RUNNING
        assert env.state.t == pytest.approx(0.05)

    def test_time_out_at_episode_length(self, tmp_path, solver_config, flat_state_dir):
        """Test the last action of an episode reports TimeOut."""
        config = ShkadovEnvConfig(init_state_dir=flat_state_dir, actions_per_episode=5)
        env = ShkadovEnv(config, solver_config)
        env.reset(np.random.default_rng(0))
        reasons = [env.step(np.array([0.3])).done_reason for _ in range(5)]
        assert reasons[:4] == [DoneReason.RUNNING] * 4
        assert reasons[4] is DoneReason.TIME_OUT

    def test_step_after_done(self, solver_config, flat_state_dir):
        """Test stepping a finished episode raises a usage error."""
        config = ShkadovEnvConfig(init_state_dir=flat_state_dir, actions_per_episode=1)
        env = ShkadovEnv(config, solver_config)
        env.reset(np.random.default_rng(0))
        env.step(np.zeros(1))
        with pytest.raises(EnvironmentUsageError):
            env.step(np.zeros(1))

    def test_held_action_exact_over_episode(self, shkadov_config, solver_config, flat_state_dir, mocker):
        """Test a full episode ramps from u_prev and then holds u_new exactly."""
        mocker.patch("envs.shkadov_env.ab2_step", side_effect=lambda state, *args: state)
        forcing = mocker.patch("envs.shkadov_env.jet_forcing", wraps=jet_forcing)
        env = ShkadovEnv(shkadov_config, solver_config)
        env.reset(np.random.default_rng(0))

        actions = [np.array([(1.0, -1.0, 0.37)[i % 3]]) for i in range(env.episode_length)]
        for action in actions:
            env.step(action)

        applied = [call.args[0] for call in forcing.call_args_list]
        assert len(applied) == env.episode_length * env.substeps
        previous = np.zeros(1)
        for i, action in enumerate(actions):
            block = applied[i * env.substeps : (i + 1) * env.substeps]
            np.testing.assert_array_equal(block[0], previous)
            for u in block[env.ramp_steps :]:
                np.testing.assert_array_equal(u, action)
            previous = action
        assert env.schedule.t_n == env.episode_length * shkadov_config.dt_act

    def test_divergence_is_terminal(self, shkadov_config, flat_state_dir, mocker):
        """Test a solver divergence ends the episode as Terminal."""
        from solver.shkadov import DivergenceError

        env = ShkadovEnv(shkadov_config, SolverConfig(eps=0.0))
        env.reset(np.random.default_rng(0))
        mocker.patch(
            "envs.shkadov_env.ab2_step", side_effect=DivergenceError("boom", step_index=3, t=0.015)
        )
        result = env.step(np.ones(1))
        assert result.done_reason is DoneReason.TERMINAL
        assert result.reward == pytest.approx(0.0)
        assert env.done

    def test_reset_same_seed_same_snapshot(self, shkadov_config, solver_config):
        """Test a fixed seed reproduces the snapshot choice."""
        grid = Grid.from_length(shkadov_config.domain_length, solver_config.dx)
        for k in range(3):
            state = FilmState(h=np.full(grid.n, 1.0 + 0.01 * k), q=np.ones(grid.n))
            write_snapshot(
                f"{shkadov_config.init_state_dir}/state_{k:04d}.txt",
                state,
                grid.dx,
                solver_config.delta,
            )
        env = ShkadovEnv(shkadov_config, solver_config)
        first = [env.reset(np.random.default_rng(s))[0] for s in range(5)]
        second = [env.reset(np.random.default_rng(s))[0] for s in range(5)]
        assert first == second

    def test_mismatched_snapshot(self, shkadov_config, solver_config):
        """Test a snapshot of the wrong size is a configuration error naming the file."""
        write_snapshot(
            f"{shkadov_config.init_state_dir}/bad.txt",
            FilmState(h=np.ones(50), q=np.ones(50)),
            solver_config.dx,
            solver_config.delta,
        )
        env = ShkadovEnv(shkadov_config, solver_config)
        with pytest.raises(ConfigurationError, match="bad.txt"):
            env.reset(np.random.default_rng(0))

    def test_missing_directory(self, shkadov_config, solver_config):
        """Test an absent state directory is a configuration error."""
        env = ShkadovEnv(shkadov_config, solver_config)
        with pytest.raises(ConfigurationError, match="not found"):
            env.reset(np.random.default_rng(0))


@pytest.mark.unit
class TestMakeEnvironment:
    """Tests for environment selection."""

    def test_pendulum(self):
        """Test the pendulum is built from its config block."""
        config = RunConfig(run=RunSettings(environment=EnvironmentKind.PENDULUM))
        assert isinstance(make_environment(config), PendulumEnv)

    def test_shkadov(self):
        """Test the Shkadov environment is the default."""
        assert isinstance(make_environment(RunConfig()), ShkadovEnv)


@pytest.mark.integration
class TestGenerateInitialStates:
    """Tests for initial-state generation (short warm-up times)."""

    def test_flat_without_noise(self, tmp_path):
        """Test eps = 0 gives the flat film back."""
        config = ShkadovEnvConfig(t_init_min=1.0, t_init_max=1.0)
        paths = generate_initial_states(
            config, SolverConfig(eps=0.0), 1, np.random.default_rng(0), tmp_path
        )
        snap = read_snapshot(paths[0])
        np.testing.assert_allclose(snap.h, 1.0, atol=1e-12)
        assert snap.t == pytest.approx(1.0)

    def test_count_and_time_range(self, tmp_path):
        """Test every file carries a warm-up time in the configured range."""
        config = ShkadovEnvConfig(t_init_min=0.5, t_init_max=1.0)
        paths = generate_initial_states(
            config, SolverConfig(), 4, np.random.default_rng(1), tmp_path, max_workers=2
        )
        assert [p.name for p in paths] == [f"state_{k:04d}.txt" for k in range(4)]
        for path in paths:
            assert 0.5 - 1e-9 <= read_snapshot(path).t <= 1.0 + 1e-9

    def test_deterministic(self, tmp_path):
        """Test the same seed writes identical files regardless of threads."""
        config = ShkadovEnvConfig(t_init_min=0.5, t_init_max=0.6)
        a = generate_initial_states(
            config, SolverConfig(), 3, np.random.default_rng(7), tmp_path / "a", max_workers=1
        )
        b = generate_initial_states(
            config, SolverConfig(), 3, np.random.default_rng(7), tmp_path / "b", max_workers=3
        )
        for pa, pb in zip(a, b, strict=True):
            assert pa.read_bytes() == pb.read_bytes()

    def test_reload_through_reset(self, tmp_path):
        """Test a generated state is what reset loads."""
        config = ShkadovEnvConfig(init_state_dir=str(tmp_path), t_init_min=0.5, t_init_max=0.5)
        solver = SolverConfig()
        (path,) = generate_initial_states(config, solver, 1, np.random.default_rng(0))
        env = ShkadovEnv(config, solver)
        obs = env.reset(np.random.default_rng(0))
        np.testing.assert_array_equal(obs, read_snapshot(path).h[280:300])

    def test_rejects_zero_count(self, tmp_path):
        """Test count must be positive."""
        with pytest.raises(ValueError, match="count"):
            generate_initial_states(
                ShkadovEnvConfig(), SolverConfig(), 0, np.random.default_rng(0), tmp_path
            )
