"""
Tests for the pendulum swing-up environment.
"""

import numpy as np
import pytest

from data.models import DoneReason, PendulumConfig
from envs.base import Environment, EnvironmentUsageError
from envs.pendulum import (
    PendulumEnv,
    PendulumState,
    angle_normalize,
    pendulum_energy,
    pendulum_observation,
    pendulum_step,
)


@pytest.mark.unit
class TestPendulumDynamics:
    """Tests for the pure step function."""

    def test_angle_normalize(self):
        """Test angles wrap into [-pi, pi)."""
        assert angle_normalize(0.0) == pytest.approx(0.0)
        assert angle_normalize(2 * np.pi + 0.5) == pytest.approx(0.5)
        assert angle_normalize(-np.pi - 0.5) == pytest.approx(np.pi - 0.5)

    def test_upright_at_rest_is_free(self):
        """Test the upright rest state costs nothing and stays put."""
        config = PendulumConfig()
        state, result = pendulum_step(PendulumState(th=0.0, thdot=0.0), 0.0, config)
        assert result.reward == 0.0
        assert state.th == 0.0
        assert state.thdot == 0.0

    def test_cost_uses_pre_step_state(self):
        """Test the reward penalizes the state the action was taken in."""
        config = PendulumConfig()
        start = PendulumState(th=1.0, thdot=2.0)
        _, result = pendulum_step(start, 0.5, config)
        expected = 1.0 + 0.1 * 4.0 + 0.001 * 1.0**2
        assert result.reward == pytest.approx(-expected)

    def test_torque_is_clipped(self):
        """Test torques beyond [-1, 1] act like the bound."""
        config = PendulumConfig()
        start = PendulumState(th=0.3, thdot=0.0)
        over, _ = pendulum_step(start, 5.0, config)
        at, _ = pendulum_step(start, 1.0, config)
        assert over == at

    def test_speed_is_clipped(self):
        """Test angular velocity never exceeds max_speed."""
        config = PendulumConfig()
        state, _ = pendulum_step(PendulumState(th=np.pi / 2, thdot=7.9), 1.0, config)
        assert state.thdot == config.max_speed

    def test_time_out(self):
        """Test the step reaching max_steps reports TimeOut."""
        config = PendulumConfig(max_steps=3)
        _, result = pendulum_step(PendulumState(th=1.0, thdot=0.0, step_count=2), 0.0, config)
        assert result.done_reason is DoneReason.TIME_OUT

    def test_observation(self):
        """Test the observation is (cos, sin, thdot)."""
        obs = pendulum_observation(PendulumState(th=np.pi / 2, thdot=0.7))
        np.testing.assert_allclose(obs, [0.0, 1.0, 0.7], atol=1e-15)

    def test_energy_is_nearly_conserved(self):
        """Test zero torque with a small step keeps the energy close to its start."""
        config = PendulumConfig(dt=0.001, max_steps=10_000)
        state = PendulumState(th=2.0, thdot=0.0)
        e0 = pendulum_energy(state, config)
        for _ in range(2000):
            state, _ = pendulum_step(state, 0.0, config)
        assert pendulum_energy(state, config) == pytest.approx(e0, abs=0.1)


@pytest.mark.unit
class TestPendulumEnv:
    """Tests for the stateful wrapper."""

    def test_protocol(self):
        """Test the pendulum satisfies the Environment protocol."""
        env = PendulumEnv(PendulumConfig())
        assert isinstance(env, Environment)
        assert env.episode_length == 200

    def test_reset_ranges(self):
        """Test reset draws angle and velocity in their ranges."""
        env = PendulumEnv(PendulumConfig())
        rng = np.random.default_rng(0)
        for _ in range(50):
            env.reset(rng)
            assert -np.pi <= env.state.th <= np.pi
            assert -1.0 <= env.state.thdot <= 1.0

    def test_reset_is_seeded(self):
        """Test the same seed gives the same first observation."""
        env = PendulumEnv(PendulumConfig())
        a = env.reset(np.random.default_rng(5))
        b = env.reset(np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)

    def test_full_episode(self):
        """Test an episode runs exactly max_steps then refuses more steps."""
        env = PendulumEnv(PendulumConfig(max_steps=10))
        env.reset(np.random.default_rng(0))
        results = [env.step(np.array([0.1])) for _ in range(10)]
        assert all(r.done_reason is DoneReason.RUNNING for r in results[:-1])
        assert results[-1].done_reason is DoneReason.TIME_OUT
        with pytest.raises(EnvironmentUsageError):
            env.step(np.array([0.1]))
