from dataclasses import dataclass

import numpy as np

NORMALIZER_EPS = 1e-8


@dataclass(frozen=True)
class NormalizerStats:
    """Read-only copy of normalizer statistics handed to workers."""

    mean: np.ndarray
    var: np.ndarray
    count: float

    def normalize(self, obs: np.ndarray) -> np.ndarray:
        return (np.asarray(obs, dtype=np.float64) - self.mean) / np.sqrt(self.var + NORMALIZER_EPS)


class RunningNormalizer:
    """Per-component running mean and (population) variance.

    Batches and independent accumulators are combined with the parallel
    merge formula, so statistics do not depend on how a stream was split.
    """

    def __init__(self, dim: int):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 0.0

    @property
    def dim(self) -> int:
        return self.mean.size

    def update(self, obs: np.ndarray) -> None:
        batch = np.asarray(obs, dtype=np.float64)
        if batch.ndim == 1:
            batch = batch[None, :]
        if batch.shape[1] != self.dim:
            raise ValueError(f"Expected observation dimension {self.dim}, got {batch.shape[1]}")
        self._combine(batch.mean(axis=0), batch.var(axis=0), float(batch.shape[0]))

    def merge(self, other: "RunningNormalizer") -> None:
        if other.dim != self.dim:
            raise ValueError(f"Cannot merge dimension {other.dim} into {self.dim}")
        if other.count > 0:
            self._combine(other.mean, other.var, other.count)

    def _combine(self, mean_b: np.ndarray, var_b: np.ndarray, count_b: float) -> None:
        count_a = self.count
        total = count_a + count_b
        if count_a == 0:
            self.mean, self.var, self.count = mean_b.copy(), var_b.copy(), count_b
            return
        delta = mean_b - self.mean
        m2 = self.var * count_a + var_b * count_b + delta * delta * count_a * count_b / total
        self.mean = self.mean + delta * count_b / total
        self.var = m2 / total
        self.count = total

    def normalize(self, obs: np.ndarray) -> np.ndarray:
        return (np.asarray(obs, dtype=np.float64) - self.mean) / np.sqrt(self.var + NORMALIZER_EPS)

    def stats(self) -> NormalizerStats:
        return NormalizerStats(mean=self.mean.copy(), var=self.var.copy(), count=self.count)

    @classmethod
    def from_stats(cls, stats: NormalizerStats) -> "RunningNormalizer":
        normalizer = cls(stats.mean.size)
        normalizer.mean = stats.mean.copy()
        normalizer.var = stats.var.copy()
        normalizer.count = float(stats.count)
        return normalizer


def normalize_observation(
    normalizer: RunningNormalizer, obs: np.ndarray, update: bool = False
) -> np.ndarray:
    if update:
        normalizer.update(obs)
    return normalizer.normalize(obs)
