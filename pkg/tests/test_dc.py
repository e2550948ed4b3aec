"""Constraint language: parsing with positions, evaluation against a brute-force oracle."""

from __future__ import annotations

import itertools
import random

import pytest

from increpair.dc import (
    Const,
    DenialConstraint,
    Predicate,
    TupleRef,
    parse_dc,
    parse_dc_file,
    violations,
    _satisfies,
)
from increpair.errors import DataError, ParseError
from increpair.relation import CellRef, Schema

from conftest import build_store

SCHEMA = Schema(("hospital_name", "zip_code", "facility_type"))


class TestParsing:
    def test_pair_constraint(self):
        dc = parse_dc("EQ(t1.hospital_name,t2.hospital_name)&NEQ(t1.zip_code,t2.zip_code)", SCHEMA)
        assert dc.arity == 2
        assert len(dc.predicates) == 2
        assert dc.predicates[0].op == "EQ"
        assert dc.predicates[0].lhs == TupleRef(0, 0)
        assert dc.predicates[0].rhs == TupleRef(1, 0)
        assert dc.var_attrs == ((0, 1), (0, 1))
        assert dc.join_keys == ((0, 0),)

    def test_single_tuple_constraint_with_constant(self):
        dc = parse_dc('EQ(t1.facility_type,"empty")', SCHEMA)
        assert dc.arity == 1
        assert dc.predicates[0].rhs == Const("empty")
        assert dc.var_attrs == ((2,), ())

    def test_constant_normalized_to_rhs(self):
        dc = parse_dc('EQ("empty",t1.facility_type)', SCHEMA)
        assert dc.predicates[0].lhs == TupleRef(0, 2)
        assert dc.predicates[0].rhs == Const("empty")

    def test_whitespace_tolerated(self):
        dc = parse_dc('  NEQ( t1.zip_code , "123" )  &  EQ(t1.hospital_name, t2.hospital_name) ', SCHEMA)
        assert dc.arity == 2

    def test_malformed_predicate(self):
        with pytest.raises(ParseError):
            parse_dc("EQ(t1.zip_code)", SCHEMA)

    def test_unknown_operator(self):
        with pytest.raises(ParseError, match="EQ or NEQ"):
            parse_dc("LT(t1.zip_code,t2.zip_code)", SCHEMA)

    def test_unknown_attribute_reports_offset(self):
        bad = "EQ(t1.nonsense,t2.zip_code)"
        with pytest.raises(ParseError) as info:
            parse_dc(bad, SCHEMA)
        assert "nonsense" in str(info.value)
        assert info.value.offset == bad.index("nonsense")

    def test_constant_only_predicate_rejected(self):
        with pytest.raises(ParseError):
            parse_dc('EQ("a","b")', SCHEMA)

    def test_t2_without_t1_rejected(self):
        with pytest.raises(ParseError, match="never t1"):
            parse_dc('EQ(t2.zip_code,"123")', SCHEMA)

    def test_unterminated_constant(self):
        with pytest.raises(ParseError, match="unterminated"):
            parse_dc('EQ(t1.zip_code,"123', SCHEMA)

    def test_trailing_garbage(self):
        with pytest.raises(ParseError):
            parse_dc('EQ(t1.zip_code,"1") extra', SCHEMA)


class TestParseFile:
    def test_ids_comments_and_line_numbers(self, tmp_path):
        path = tmp_path / "rules.txt"
        path.write_text(
            "# header comment\n"
            "\n"
            'EQ(t1.facility_type,"empty")\n'
            "EQ(t1.hospital_name,t2.hospital_name)&NEQ(t1.zip_code,t2.zip_code)  # trailing\n"
        )
        dcs = parse_dc_file(path, SCHEMA)
        assert [dc.dc_id for dc in dcs] == ["dc_1", "dc_2"]
        assert [dc.arity for dc in dcs] == [1, 2]

    def test_error_carries_line_number(self, tmp_path):
        path = tmp_path / "rules.txt"
        path.write_text("# fine\nEQ(t1.bogus,t2.bogus)\n")
        with pytest.raises(ParseError, match="line 2"):
            parse_dc_file(path, SCHEMA)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            parse_dc_file(tmp_path / "absent.txt", SCHEMA)


def brute_force(dc: DenialConstraint, store, probe, reference=()):
    """O(n^2) oracle: try every ordered pair touching the probe set."""
    probe = sorted(set(probe))
    pool = sorted(set(probe) | set(reference))
    groups = set()
    if dc.arity == 1:
        for tid in probe:
            if _satisfies(dc, store, tid, None):
                groups.add(frozenset(CellRef(tid, a) for a in dc.var_attrs[0]))
        return groups
    for t, u in itertools.permutations(pool, 2):
        if t not in probe and u not in probe:
            continue
        if _satisfies(dc, store, t, u):
            cells = {CellRef(t, a) for a in dc.var_attrs[0]}
            cells.update(CellRef(u, a) for a in dc.var_attrs[1])
            groups.add(frozenset(cells))
    return groups


FIXTURE_ROWS = [
    ("mercy", "10001", "clinic"),
    ("mercy", "10002", "clinic"),   # same name, different zip -> violates the pair rule
    ("grace", "10003", "hospital"),
    ("grace", "10003", None),
    ("mercy", "10001", "empty-ish"),
]


class TestViolations:
    def setup_method(self):
        self.store = build_store(FIXTURE_ROWS, SCHEMA.attributes)
        self.pair_dc = parse_dc(
            "EQ(t1.hospital_name,t2.hospital_name)&NEQ(t1.zip_code,t2.zip_code)", SCHEMA
        )

    def test_pair_violation_flags_four_cells(self):
        groups = violations(self.pair_dc, self.store, range(self.store.n_tuples))
        expected_pairs = {(0, 1), (1, 4)}  # tuples 0 and 4 share name AND zip: no violation
        assert len(groups) == len(expected_pairs)
        for group in groups:
            assert len(group) == 4  # name + zip in both tuples
        assert groups == brute_force(self.pair_dc, self.store, range(self.store.n_tuples))

    def test_empty_probe_empty_result(self):
        assert violations(self.pair_dc, self.store, []) == set()

    def test_null_constant_flags_single_cell(self):
        dc = parse_dc('EQ(t1.facility_type,"empty")', SCHEMA)
        groups = violations(dc, self.store, range(self.store.n_tuples))
        assert groups == {frozenset({CellRef(3, 2)})}

    def test_null_never_joins_across_tuples(self):
        dc = parse_dc("EQ(t1.facility_type,t2.facility_type)&NEQ(t1.zip_code,t2.zip_code)", SCHEMA)
        store = build_store(
            [("a", "1", None), ("b", "2", None), ("c", "3", "x")],
            SCHEMA.attributes,
        )
        assert violations(dc, store, range(3)) == set()

    def test_neq_on_null_cell_is_false(self):
        dc = parse_dc('NEQ(t1.facility_type,"clinic")', SCHEMA)
        groups = violations(dc, self.store, range(self.store.n_tuples))
        flagged_tids = {next(iter(g)).tid for g in groups}
        assert 3 not in flagged_tids  # the NULL cell abstains
        assert flagged_tids == {2, 4}

    def test_probe_scoping_matches_filtered_global(self):
        probe = [1]
        reference = [0, 2, 3, 4]
        scoped = violations(self.pair_dc, self.store, probe, reference)
        assert scoped == brute_force(self.pair_dc, self.store, probe, reference)
        # every group touches the probe tuple
        for group in scoped:
            assert any(cell.tid == 1 for cell in group)

    def test_probe_tuple_may_take_either_role(self):
        # constraint is asymmetric: only (t1=0-ish, t2=1-ish) ordering satisfies it
        dc = parse_dc('EQ(t1.facility_type,"clinic")&NEQ(t1.zip_code,t2.zip_code)&EQ(t1.hospital_name,t2.hospital_name)', SCHEMA)
        all_groups = violations(dc, self.store, range(self.store.n_tuples))
        probe_only = violations(dc, self.store, [1], reference=[0, 2, 3, 4])
        assert probe_only == {g for g in all_groups if any(c.tid == 1 for c in g)}

    def test_out_of_range_probe(self):
        with pytest.raises(DataError):
            violations(self.pair_dc, self.store, [99])
        with pytest.raises(DataError):
            violations(self.pair_dc, self.store, [0], reference=[99])

    def test_constraint_without_join_key(self):
        dc = parse_dc("NEQ(t1.zip_code,t2.zip_code)", SCHEMA)
        groups = violations(dc, self.store, range(self.store.n_tuples))
        assert groups == brute_force(dc, self.store, range(self.store.n_tuples))


class TestRandomizedOracle:
    def test_matches_brute_force_on_random_fixtures(self):
        rng = random.Random(20260814)
        schema = Schema(("p", "q", "r"))
        rules = [
            parse_dc("EQ(t1.p,t2.p)&NEQ(t1.q,t2.q)", schema),
            parse_dc("EQ(t1.p,t2.p)&EQ(t1.q,t2.q)&NEQ(t1.r,t2.r)", schema),
            parse_dc('EQ(t1.r,"v0")&NEQ(t1.q,t2.q)', schema),
            parse_dc('NEQ(t1.p,t2.q)', schema),
            parse_dc('EQ(t1.q,"v1")', schema),
        ]
        for trial in range(40):
            n = rng.randint(2, 24)
            rows = [
                tuple(
                    None if rng.random() < 0.1 else f"v{rng.randint(0, 3)}"
                    for _ in range(3)
                )
                for _ in range(n)
            ]
            store = build_store(rows, schema.attributes)
            tids = list(range(n))
            split = rng.randint(0, n)
            probe, reference = tids[split:], tids[:split]
            for dc in rules:
                got = violations(dc, store, probe, reference)
                want = brute_force(dc, store, probe, reference)
                assert got == want, (trial, dc.dc_id, rows)


def test_symmetric_constraint_is_role_invariant():
    schema = Schema(("p", "q"))
    dc = parse_dc("EQ(t1.p,t2.p)&NEQ(t1.q,t2.q)", schema)
    rng = random.Random(7)
    rows = [(f"a{rng.randint(0,2)}", f"b{rng.randint(0,2)}") for _ in range(30)]
    store = build_store(rows, schema.attributes)
    full = violations(dc, store, range(30))
    # evaluating per-tuple probes and unioning must reproduce the global view
    union = set()
    for tid in range(30):
        union |= violations(dc, store, [tid], reference=set(range(30)) - {tid})
    assert union == full
