"""
Tests for the training run driver and the command functions.
"""

import numpy as np
import pandas as pd
import pytest

from agent.checkpoint import load_checkpoint
from data.models import CollectMode, ConfigurationError, RunConfig
from training.commands import cmd_aggregate, cmd_eval, cmd_train
from training.trainer import CONFIG_FILE, LOG_FILE, Trainer
from utils.config_io import load_config
from utils.metrics import read_training_log


def _config(tmp_path, mode: str = "eoe_pt", n_env: int = 2, n_update: int = 2, **run) -> RunConfig:
    return RunConfig.model_validate(
        {
            "run": {
                "environment": "pendulum",
                "total_transitions": 60,
                "output_dir": str(tmp_path / "runs"),
                "run_id": "test",
                **run,
            },
            "pendulum": {"max_steps": 10},
            "network": {"hidden": 8},
            "ppo": {"epochs": 1, "minibatch_size": 16},
            "collector": {"mode": mode, "n_env": n_env, "n_update": n_update, "executor": "serial"},
        }
    )


# ============================================================================
# Trainer Tests
# ============================================================================


@pytest.mark.integration
class TestTrainer:
    """Tests for Trainer.run."""

    def test_run_directory(self, tmp_path):
        """Test a run writes its config, log and checkpoints."""
        config = _config(tmp_path, checkpoint_every=2)
        rows = Trainer(config).run()

        run_dir = tmp_path / "runs" / "test"
        assert len(rows) == 3
        assert (run_dir / CONFIG_FILE).is_file()
        assert (run_dir / "checkpoints" / "final.ppob").is_file()
        assert (run_dir / "checkpoints" / "update_00002.ppob").is_file()
        assert not (run_dir / "checkpoints" / "update_00003.ppob").exists()
        assert load_config(run_dir / CONFIG_FILE) == config

        frame = read_training_log(run_dir / LOG_FILE)
        assert list(frame["update_index"]) == [1, 2, 3]
        assert list(frame["transitions"]) == [20, 40, 60]
        assert list(frame["policy_version"]) == [1, 2, 3]

    def test_rows(self, tmp_path):
        """Test log rows are monotone and fully on-policy in segment mode."""
        rows = Trainer(_config(tmp_path)).run()

        assert all(row.offpolicy_fraction == 0 for row in rows)
        walltimes = [row.walltime_s for row in rows]
        assert walltimes == sorted(walltimes)
        for row in rows:
            assert np.isfinite(row.score_mean)
            assert row.score_min <= row.score_mean <= row.score_max
            assert row.env_time_s >= 0 and row.train_time_s >= 0 and row.other_time_s >= 0

    def test_final_checkpoint_version(self, tmp_path):
        """Test the final checkpoint holds the last policy version."""
        Trainer(_config(tmp_path)).run()
        agent = load_checkpoint(tmp_path / "runs" / "test" / "checkpoints" / "final.ppob")
        assert agent.version == 3
        assert (agent.obs_dim, agent.act_dim) == (3, 1)

    def test_regular_mode_offpolicy_slices(self, tmp_path):
        """Test episodes beyond the first slice of a round are trained off-policy."""
        config = _config(tmp_path, mode="regular", n_env=4, total_transitions=80)
        rows = Trainer(config).run()
        assert [row.offpolicy_fraction for row in rows] == [0.0, 1.0, 0.0, 1.0]

    def test_budget_below_one_update(self, tmp_path):
        """Test a budget below one update still writes the final checkpoint."""
        rows = Trainer(_config(tmp_path, total_transitions=10)).run()
        assert rows == []
        assert (tmp_path / "runs" / "test" / "checkpoints" / "final.ppob").is_file()

    def test_indivisible_segments(self, tmp_path):
        """Test segment mode refuses an uneven split across environments."""
        config = _config(tmp_path, n_env=3)
        with pytest.raises(ConfigurationError, match="evenly"):
            Trainer(config)

    def test_deterministic(self, tmp_path):
        """Test two runs with the same seed log the same losses."""
        first = Trainer(_config(tmp_path / "a")).run()
        second = Trainer(_config(tmp_path / "b")).run()
        assert [r.value_loss for r in first] == [r.value_loss for r in second]
        assert [r.score_mean for r in first] == [r.score_mean for r in second]


# ============================================================================
# Command Tests
# ============================================================================


@pytest.mark.integration
class TestCommands:
    """Tests for the command functions behind the CLI."""

    def test_train_and_eval(self, tmp_path):
        """Test a trained checkpoint evaluates deterministically."""
        config = _config(tmp_path)
        cmd_train(config)
        checkpoint = config.run_dir / "checkpoints" / "final.ppob"

        rewards, files = cmd_eval(config, checkpoint, tmp_path / "eval")
        again, _ = cmd_eval(config, checkpoint, tmp_path / "eval2")

        assert len(rewards) == 10
        assert rewards == again
        assert files == []
        saved = pd.read_csv(tmp_path / "eval" / "rewards.csv")
        assert list(saved["step"]) == list(range(1, 11))

    def test_uncontrolled_eval(self, tmp_path):
        """Test the baseline runs without a checkpoint."""
        rewards, _ = cmd_eval(_config(tmp_path), None, tmp_path / "eval", uncontrolled=True)
        assert len(rewards) == 10
        assert all(r <= 0 for r in rewards)

    def test_eval_needs_checkpoint(self, tmp_path):
        """Test a controlled evaluation without a checkpoint is refused."""
        with pytest.raises(ConfigurationError, match="checkpoint"):
            cmd_eval(_config(tmp_path), None, tmp_path / "eval")

    def test_aggregate(self, tmp_path):
        """Test two runs aggregate into one frame."""
        for run_id in ("a", "b"):
            cmd_train(_config(tmp_path, run_id=run_id))
        logs = [tmp_path / "runs" / run_id / LOG_FILE for run_id in ("a", "b")]

        frame = cmd_aggregate(logs, tmp_path / "agg" / "aggregate.csv")

        assert len(frame) == 3
        assert list(frame["runs"]) == [2, 2, 2]
        assert (tmp_path / "agg" / "aggregate.csv").is_file()
        assert list(frame["score_mean_mean"]) == pytest.approx(list(frame["score_mean_min"]))

    def test_mode_switch(self, tmp_path):
        """Test the same settings run in every mode."""
        for mode in CollectMode:
            rows = cmd_train(_config(tmp_path / mode.value, mode=mode.value))
            assert len(rows) == 3
