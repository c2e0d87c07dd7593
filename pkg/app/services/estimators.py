"""
Mergeable Monte Carlo estimators.

RunningStat keeps count, sum and sum of squares; partial results from
workers are merged in replicate order so floating-point totals do not depend
on scheduling.
"""

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np

from app.errors import InsufficientSamples


@dataclass
class RunningStat:
    """Average, variance and standard error of a stream of values."""

    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    def add(self, value: float) -> None:
        self.count += 1
        self.total += value
        self.total_sq += value * value

    def add_many(self, values: Iterable[float]) -> None:
        for value in values:
            self.add(float(value))

    def add_weighted(self, value: float, times: int) -> None:
        """Add the same value `times` times."""
        self.count += times
        self.total += value * times
        self.total_sq += value * value * times

    def merge(self, other: "RunningStat") -> "RunningStat":
        self.count += other.count
        self.total += other.total
        self.total_sq += other.total_sq
        return self

    @property
    def mean(self) -> float:
        if self.count == 0:
            return 0.0
        return self.total / self.count

    @property
    def variance(self) -> float:
        if self.count == 0:
            return 0.0
        return max(self.total_sq / self.count - self.mean**2, 0.0)

    @property
    def std_error(self) -> float:
        if self.count < 2:
            return 0.0
        return math.sqrt(self.variance / (self.count - 1))

    def require(self, minimum: int = 2) -> "RunningStat":
        if self.count < minimum:
            raise InsufficientSamples(f"Need at least {minimum} samples, have {self.count}")
        return self


@dataclass
class DriftEstimate:
    """A normalised Monte Carlo estimate."""

    value: float
    std_error: float
    samples: int
    horizon: float
    log_power: int = 0
    name: str = ""

    @classmethod
    def from_stat(cls, stat: RunningStat, horizon: float, log_power: int = 0, scale: float = 1.0, name: str = ""):
        return cls(
            value=stat.mean * scale,
            std_error=stat.std_error * abs(scale),
            samples=stat.count,
            horizon=horizon,
            log_power=log_power,
            name=name,
        )

    @classmethod
    def from_bernoulli(cls, hits: int, samples: int, horizon: float, log_power: int, name: str = ""):
        """(log t)^k * hits / samples with the binomial standard error."""
        if samples < 2:
            raise InsufficientSamples(f"Need at least 2 samples, have {samples}")
        scale = math.log(horizon) ** log_power if log_power else 1.0
        p = hits / samples
        return cls(
            value=scale * p,
            std_error=scale * math.sqrt(p * (1.0 - p) / samples),
            samples=samples,
            horizon=horizon,
            log_power=log_power,
            name=name,
        )

    def z_score(self, reference: float = 0.0) -> float:
        if self.std_error == 0:
            return math.inf if self.value != reference else 0.0
        return (self.value - reference) / self.std_error

    def as_dict(self) -> dict:
        return asdict(self)


def merge_ordered(parts: Iterable[Optional[RunningStat]]) -> RunningStat:
    """Merge partial stats in the given (replicate) order."""
    merged = RunningStat()
    for part in parts:
        if part is not None:
            merged.merge(part)
    return merged


def histogram_moments(values: np.ndarray, counts: np.ndarray) -> RunningStat:
    """RunningStat of a sample given as distinct values with multiplicities."""
    values = np.asarray(values, dtype=float)
    counts = np.asarray(counts, dtype=np.int64)
    return RunningStat(
        count=int(counts.sum()),
        total=float(np.dot(values, counts)),
        total_sq=float(np.dot(values * values, counts)),
    )
