from pathlib import Path

import numpy as np
import pandas as pd

from data.models import (
    LOG_SCHEMA_VERSION,
    CollectMode,
    ConfigurationError,
    EpisodeSummary,
    SpeedupRow,
    TrainingLogRow,
)

LOG_HEADER = f"# training-log v{LOG_SCHEMA_VERSION}"
AGGREGATED_COLUMNS = ["score_mean", "policy_loss", "value_loss", "mean_value_estimate", "entropy"]

# Reference walltime speedups s_{1->m} at 8, 32 and 64 environments
REFERENCE_SPEEDUPS: dict[CollectMode, dict[int, float]] = {
    CollectMode.EOE_PT: {8: 7.6, 32: 25.4, 64: 42.4},
    CollectMode.REGULAR: {8: 6.9, 32: 17.7, 64: 18.4},
}


def score_summary(episodes: list[EpisodeSummary]) -> tuple[float, float, float]:
    """Mean, min and max of the per-step mean reward of each episode (NaN if none)."""
    if not episodes:
        return float("nan"), float("nan"), float("nan")
    scores = np.array([e.mean_reward for e in episodes])
    return float(scores.mean()), float(scores.min()), float(scores.max())


# === Training logs ===
def write_log_header(path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(f"{LOG_HEADER}\n{','.join(TrainingLogRow.columns())}\n", encoding="utf-8")
    return path


def append_log_row(path: str | Path, row: TrainingLogRow) -> None:
    frame = pd.DataFrame([row.model_dump()], columns=TrainingLogRow.columns())
    frame.to_csv(path, mode="a", header=False, index=False, float_format="%.10g")


def read_training_log(path: str | Path) -> pd.DataFrame:
    """Read a training log, checking the schema header and column set.

    Raises:
        ConfigurationError: If the header or columns do not match the schema
    """
    path = Path(path)
    with path.open(encoding="utf-8") as f:
        first = f.readline().strip()
    if first != LOG_HEADER:
        raise ConfigurationError(f"{path}: expected header {LOG_HEADER!r}, found {first!r}")
    frame = pd.read_csv(path, comment="#")
    if list(frame.columns) != TrainingLogRow.columns():
        raise ConfigurationError(f"{path}: columns do not match training-log v{LOG_SCHEMA_VERSION}")
    return frame


def aggregate_logs(frames: list[pd.DataFrame]) -> pd.DataFrame:
    """Per-update mean/min/max across runs of score and losses.

    Raises:
        ConfigurationError: If no logs are given or their update grids differ
    """
    if not frames:
        raise ConfigurationError("Need at least one training log to aggregate")
    grid = frames[0][["update_index", "transitions"]].reset_index(drop=True)
    for i, frame in enumerate(frames[1:], start=1):
        other = frame[["update_index", "transitions"]].reset_index(drop=True)
        if not grid.equals(other):
            raise ConfigurationError(f"Log {i} has a different update grid than log 0")

    stacked = pd.concat(
        [frame[["update_index", "transitions", *AGGREGATED_COLUMNS]] for frame in frames],
        ignore_index=True,
    )
    grouped = stacked.groupby(["update_index", "transitions"], sort=True)[AGGREGATED_COLUMNS]
    result = grouped.agg(["mean", "min", "max"])
    result.columns = [f"{col}_{stat}" for col, stat in result.columns]
    result = result.reset_index()
    result.insert(2, "runs", len(frames))
    return result


# === Speedup ===
def speedup_rows(walltimes: dict[tuple[CollectMode, int], float]) -> list[SpeedupRow]:
    """s_{n->m} = T_n / T_m against the smallest n_env measured for each mode."""
    rows: list[SpeedupRow] = []
    for mode in CollectMode:
        counts = sorted(n for (m, n) in walltimes if m is mode)
        if not counts:
            continue
        base_n = counts[0]
        base_t = walltimes[(mode, base_n)]
        for n_env in counts:
            walltime = walltimes[(mode, n_env)]
            rows.append(
                SpeedupRow(
                    mode=mode,
                    n_env=n_env,
                    walltime_s=walltime,
                    speedup=base_t / walltime if walltime > 0 else float("nan"),
                    perfect_speedup=n_env / base_n,
                    reference_speedup=(
                        REFERENCE_SPEEDUPS.get(mode, {}).get(n_env) if base_n == 1 else None
                    ),
                )
            )
    return rows


def speedup_frame(rows: list[SpeedupRow]) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump(mode="json") for row in rows], columns=list(SpeedupRow.model_fields))
