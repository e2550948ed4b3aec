"""Shared fixtures: tiny hand-checkable relations used across test modules."""

from __future__ import annotations

import pytest

from increpair.relation import RawBatch, RelationStore, Schema

# Four rows over (region, code).  Region h appears three times and co-occurs
# with codes b, c, e; region i appears once with code d.  Every frozen number
# in the statistics and featurization tests is derived from this table by
# hand: freq(region) = {h: 3, i: 1}, H(code|region) = (3/4)*ln 3, and
# H(region|code) = 0 because each code determines its region.
GOLDEN_ROWS = [
    ("h", "b"),
    ("h", "c"),
    ("i", "d"),
    ("h", "e"),
]
GOLDEN_ATTRS = ("region", "code")


def build_store(rows, attrs, null_tokens=("", "NULL", "empty")) -> RelationStore:
    """Store with all rows appended as one batch."""
    store = RelationStore(Schema(tuple(attrs)), null_tokens)
    store.append_batch(RawBatch(1, tuple(tuple(row) for row in rows)))
    return store


@pytest.fixture
def golden_store() -> RelationStore:
    return build_store(GOLDEN_ROWS, GOLDEN_ATTRS)
