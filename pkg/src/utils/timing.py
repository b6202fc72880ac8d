from dataclasses import dataclass


@dataclass(frozen=True)
class TimeSplit:
    """Wall time of one update split into environment, training and other."""

    env_s: float
    train_s: float
    other_s: float

    @classmethod
    def partition(cls, total_s: float, env_s: float, train_s: float) -> "TimeSplit":
        other = max(total_s - env_s - train_s, 0.0)
        return cls(env_s=env_s, train_s=train_s, other_s=other)

    @property
    def total_s(self) -> float:
        return self.env_s + self.train_s + self.other_s

    def fractions(self) -> tuple[float, float, float]:
        total = self.total_s
        if total <= 0:
            return 0.0, 0.0, 0.0
        return self.env_s / total, self.train_s / total, self.other_s / total
