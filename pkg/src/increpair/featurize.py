"""Candidate domains and co-occurrence feature tensors for individual cells.

A cell's candidate domain is its observed value plus every value of its
attribute that co-occurs, anywhere in the data counted so far, with this
tuple's value in some sufficiently correlated other attribute.  The feature
tensor prices each candidate against each context attribute as the ratio
`co_occurrences(candidate, context value) / frequency(context value)`, which
by construction lies in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError
from .relation import NULL_ID, CellRef
from .stats import StatsStore

DEFAULT_OMEGA = 0.05
DEFAULT_DOMAIN_CAP = 50


@dataclass(frozen=True)
class CellDomain:
    """Candidate repair values for one cell, in ascending value-id order."""

    cell: CellRef
    candidates: tuple[int, ...]
    observed_index: int

    @property
    def size(self) -> int:
        return len(self.candidates)

    @property
    def observed(self) -> int:
        return self.candidates[self.observed_index]


@dataclass(frozen=True)
class FeatureTensor:
    """Per-cell feature matrix: one row per candidate slot, one column per attribute.

    Rows beyond the domain size are dead slots excluded by `mask`; the cell's
    own attribute column is structurally zero.
    """

    values: np.ndarray
    mask: np.ndarray
    domain: CellDomain


def tensor_slots(stats: StatsStore, attr: int, cap: int = DEFAULT_DOMAIN_CAP) -> int:
    """Row allocation for an attribute's tensors: its distinct-value count, capped."""
    return max(1, min(stats.distinct_count(attr), cap))


def generate_domain(
    cell: CellRef,
    tuple_values: Sequence[int],
    stats: StatsStore,
    correlations: Sequence[Sequence[float]],
    omega: float = DEFAULT_OMEGA,
    cap: int = DEFAULT_DOMAIN_CAP,
) -> CellDomain:
    """Candidate domain of one cell given its tuple's current values.

    A context attribute qualifies when the cell's attribute is sufficiently
    predictable from it, i.e. their correlation (normalized over the cell
    attribute's domain) exceeds omega.  Null is never proposed as a candidate,
    though a null observed value stays in its own domain.  When the union
    exceeds `cap`, the candidates with the highest summed co-occurrence counts
    are kept (observed value always retained; ties broken toward lower value
    ids).
    """
    if not 0.0 <= omega < 1.0:
        raise DataError(f"omega must lie in [0, 1), got {omega}")
    if cap < 1:
        raise DataError(f"domain cap must be >= 1, got {cap}")
    attr = cell.attr
    observed = tuple_values[attr]
    weights: dict[int, int] = {}
    for context_attr, context_vid in enumerate(tuple_values):
        if context_attr == attr or correlations[attr][context_attr] <= omega:
            continue
        for vid, count in stats.cooccurring(attr, context_attr, context_vid).items():
            if vid != NULL_ID:
                weights[vid] = weights.get(vid, 0) + count
    weights.pop(observed, None)
    if len(weights) + 1 > cap:
        ranked = sorted(weights.items(), key=lambda item: (-item[1], item[0]))
        chosen = {vid for vid, _ in ranked[: cap - 1]}
    else:
        chosen = set(weights)
    chosen.add(observed)
    candidates = tuple(sorted(chosen))
    return CellDomain(cell, candidates, candidates.index(observed))


def generate_feature_vector(
    domain: CellDomain,
    tuple_values: Sequence[int],
    stats: StatsStore,
    slots: int | None = None,
) -> FeatureTensor:
    """Feature tensor for one cell over its candidate domain."""
    attr = domain.cell.attr
    n_attrs = stats.n_attrs
    if slots is None:
        slots = domain.size
    if domain.size > slots:
        raise DataError(
            f"domain of size {domain.size} does not fit {slots} tensor slots"
        )
    values = np.zeros((slots, n_attrs), dtype=np.float64)
    mask = np.zeros(slots, dtype=bool)
    mask[: domain.size] = True
    for context_attr, context_vid in enumerate(tuple_values):
        if context_attr == attr:
            continue
        frequency = stats.frequency(context_attr, context_vid)
        if frequency <= 0:
            raise DataError(
                f"statistics hold no count for attribute {context_attr}"
                f" value id {context_vid}; counts are out of step with the store"
            )
        cooccurrences = stats.cooccurring(attr, context_attr, context_vid)
        for row, candidate in enumerate(domain.candidates):
            count = cooccurrences.get(candidate, 0)
            if count:
                values[row, context_attr] = count / frequency
    return FeatureTensor(values, mask, domain)


class Featurizer:
    """One batch's statistics snapshot plus the thresholds for domains and tensors."""

    def __init__(
        self,
        stats: StatsStore,
        correlations: Sequence[Sequence[float]],
        omega: float = DEFAULT_OMEGA,
        cap: int = DEFAULT_DOMAIN_CAP,
    ):
        self.stats = stats
        self.correlations = correlations
        self.omega = omega
        self.cap = cap

    def domain(self, cell: CellRef, tuple_values: Sequence[int]) -> CellDomain:
        return generate_domain(
            cell, tuple_values, self.stats, self.correlations, self.omega, self.cap
        )

    def tensor(self, domain: CellDomain, tuple_values: Sequence[int]) -> FeatureTensor:
        slots = tensor_slots(self.stats, domain.cell.attr, self.cap)
        return generate_feature_vector(domain, tuple_values, self.stats, slots)
