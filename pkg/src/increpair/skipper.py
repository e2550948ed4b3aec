"""Retraining decisions driven by drift in pairwise joint value distributions.

When a model is (re)trained, the joint distributions of its attribute with
every other attribute are saved.  Before the next training opportunity the
divergence of the current joints from the saved ones decides whether the
model is stale: either any single pairwise divergence exceeds the threshold
(the per-pair rule) or the correlation-weighted mean over the pairs does
(the weighted rule).  The weighted mean never exceeds the per-pair maximum,
so on the same saved state the weighted rule fires no more often.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .errors import DataError

DEFAULT_KL_FLOOR = 1e-6

JointDist = dict[tuple[int, int], float]


@dataclass
class SkipperState:
    """Last-trained batch ordinal and saved joint distributions, per attribute."""

    last_trained: dict[int, int] = field(default_factory=dict)
    saved: dict[int, dict[int, JointDist]] = field(default_factory=dict)

    def trained_batch(self, attr: int) -> int:
        """Batch at which the attribute's model last trained; 0 means never."""
        return self.last_trained.get(attr, 0)

    def to_dict(self) -> dict:
        return {
            "last_trained": sorted([attr, k] for attr, k in self.last_trained.items()),
            "saved": [
                [
                    attr,
                    [
                        [other, sorted([va, vb, p] for (va, vb), p in dist.items())]
                        for other, dist in sorted(dists.items())
                    ],
                ]
                for attr, dists in sorted(self.saved.items())
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SkipperState":
        state = cls()
        state.last_trained = {attr: k for attr, k in payload["last_trained"]}
        for attr, dists in payload["saved"]:
            state.saved[attr] = {
                other: {(va, vb): p for va, vb, p in entries} for other, entries in dists
            }
        return state


def kl_divergence(
    current: Mapping[tuple[int, int], float],
    saved: Mapping[tuple[int, int], float],
    floor: float = DEFAULT_KL_FLOOR,
) -> float:
    """Divergence of `current` from `saved` over the support of `current`.

    Saved masses below `floor` are lifted to it so unseen atoms stay finite.
    The sum is clamped at zero: flooring can push it a hair negative.
    """
    if floor <= 0:
        raise DataError(f"probability floor must be positive, got {floor}")
    total = 0.0
    for key, p in current.items():
        if p > 0:
            total += p * math.log(p / max(saved.get(key, 0.0), floor))
    return max(0.0, total)


def should_retrain_ikl(
    state: SkipperState,
    attr: int,
    current: Mapping[int, JointDist],
    epsilon: float,
    floor: float = DEFAULT_KL_FLOOR,
) -> tuple[bool, int | None]:
    """Per-pair rule: retrain when any pairwise divergence exceeds epsilon.

    A never-trained attribute always trains.  Returns the first offending
    partner attribute (lowest index) when the rule fires.
    """
    if epsilon < 0:
        raise DataError(f"epsilon must be >= 0, got {epsilon}")
    if state.trained_batch(attr) == 0:
        return True, None
    saved = state.saved.get(attr, {})
    for other in sorted(current):
        if kl_divergence(current[other], saved.get(other, {}), floor) > epsilon:
            return True, other
    return False, None


def should_retrain_wkl(
    state: SkipperState,
    attr: int,
    current: Mapping[int, JointDist],
    correlations: Sequence[Sequence[float]],
    epsilon: float,
    floor: float = DEFAULT_KL_FLOOR,
) -> tuple[bool, float]:
    """Weighted rule: retrain when the correlation-weighted mean divergence
    exceeds epsilon.  Returns the weighted value (inf for a never-trained
    attribute, which always trains)."""
    if epsilon < 0:
        raise DataError(f"epsilon must be >= 0, got {epsilon}")
    if state.trained_batch(attr) == 0:
        return True, math.inf
    n_attrs = len(correlations)
    if n_attrs < 2:
        raise DataError("weighted divergence needs at least two attributes")
    saved = state.saved.get(attr, {})
    total = 0.0
    for other in sorted(current):
        divergence = kl_divergence(current[other], saved.get(other, {}), floor)
        total += divergence * correlations[attr][other]
    weighted = total / (n_attrs - 1)
    return weighted > epsilon, weighted


def record_training(
    state: SkipperState,
    attr: int,
    current: Mapping[int, JointDist],
    batch: int,
) -> None:
    """Save the joint distributions that the attribute's model was trained on."""
    if batch < 1:
        raise DataError(f"batch ordinal must be >= 1, got {batch}")
    state.last_trained[attr] = batch
    state.saved[attr] = {other: dict(dist) for other, dist in current.items()}
