"""Running Gaussian summary of reconstruction errors for one autoencoder."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateNormalizerError, InvalidInputError

DEFAULT_COEFFICIENT = 0.8
# substituted for sigma when a normalizer cannot standardize
DEGENERATE_SIGMA = 1e-6


@dataclass
class Normalizer:
    """Sample count, sum and sum of squares of the raw REs seen so far.

    ``coefficient`` is the extra divisor applied after standardization.
    """

    count: int = 0
    sum: float = 0.0
    sum_sq: float = 0.0
    coefficient: float = DEFAULT_COEFFICIENT

    @property
    def mean(self) -> float:
        if self.count == 0:
            raise DegenerateNormalizerError("mean of an empty normalizer")
        return self.sum / self.count

    @property
    def variance(self) -> float:
        if self.count == 0:
            raise DegenerateNormalizerError("variance of an empty normalizer")
        mu = self.sum / self.count
        # population variance; clip the tiny negatives cancellation can leave
        return max(self.sum_sq / self.count - mu * mu, 0.0)

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def copy(self) -> Normalizer:
        return Normalizer(self.count, self.sum, self.sum_sq, self.coefficient)

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "sum": self.sum,
            "sum_sq": self.sum_sq,
            "coefficient": self.coefficient,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Normalizer:
        return cls(int(d["count"]), float(d["sum"]), float(d["sum_sq"]), float(d["coefficient"]))


def normalizer_update(n: Normalizer, v: float) -> Normalizer:
    """Return a new normalizer with ``v`` folded in."""
    v = float(v)
    if not math.isfinite(v) or v < 0:
        raise InvalidInputError(f"RE sample must be finite and nonnegative, got {v}")
    return Normalizer(n.count + 1, n.sum + v, n.sum_sq + v * v, n.coefficient)


def normalizer_fit(values, coefficient: float = DEFAULT_COEFFICIENT) -> Normalizer:
    n = Normalizer(coefficient=coefficient)
    for v in values:
        n = normalizer_update(n, v)
    return n


def normalize(n: Normalizer, v: float) -> float:
    """Standardize ``v``: ``(v - mean) / (std * coefficient)``.

    Raises DegenerateNormalizerError with fewer than two samples or zero spread.
    """
    if n.count < 2:
        raise DegenerateNormalizerError(f"normalizer has {n.count} sample(s), need 2")
    sigma = n.std
    if sigma == 0.0:
        raise DegenerateNormalizerError("normalizer has zero spread")
    return (v - n.mean) / (sigma * n.coefficient)


def effective_sigma(n: Normalizer) -> float:
    """Standard deviation, or DEGENERATE_SIGMA when it is undefined or zero."""
    if n.count < 2:
        return DEGENERATE_SIGMA
    sigma = n.std
    return sigma if sigma > 0.0 else DEGENERATE_SIGMA


def normalize_or_fallback(n: Normalizer, v: float) -> float:
    """Like :func:`normalize`, substituting DEGENERATE_SIGMA for a bad sigma."""
    try:
        return normalize(n, v)
    except DegenerateNormalizerError:
        mu = n.sum / n.count if n.count else 0.0
        return (v - mu) / (DEGENERATE_SIGMA * n.coefficient)
