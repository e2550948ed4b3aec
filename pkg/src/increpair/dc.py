"""Denial constraints: a small conjunction language of EQ/NEQ predicates over
one or two tuples, plus an evaluator that finds every violating tuple group.

A constraint is violated when ALL of its predicates hold simultaneously for
some tuple (single-tuple constraints) or some tuple pair.  Null cells never
satisfy a comparison against another cell; the only predicate a null cell can
satisfy is EQ against a constant that is itself a configured null token.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError, ParseError
from .relation import NULL_ID, CellRef, RelationStore, Schema

T1 = 0
T2 = 1
_VAR_NAMES = {"t1": T1, "t2": T2}


@dataclass(frozen=True)
class TupleRef:
    var: int
    attr: int


@dataclass(frozen=True)
class Const:
    text: str


@dataclass(frozen=True)
class Predicate:
    op: str  # "EQ" or "NEQ"
    lhs: TupleRef
    rhs: TupleRef | Const


@dataclass(frozen=True)
class DenialConstraint:
    dc_id: str
    predicates: tuple[Predicate, ...]

    @cached_property
    def arity(self) -> int:
        for pred in self.predicates:
            if pred.lhs.var == T2 or (isinstance(pred.rhs, TupleRef) and pred.rhs.var == T2):
                return 2
        return 1

    @cached_property
    def var_attrs(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """Attributes referenced through t1 and through t2, sorted."""
        attrs: tuple[set[int], set[int]] = (set(), set())
        for pred in self.predicates:
            attrs[pred.lhs.var].add(pred.lhs.attr)
            if isinstance(pred.rhs, TupleRef):
                attrs[pred.rhs.var].add(pred.rhs.attr)
        return tuple(sorted(attrs[T1])), tuple(sorted(attrs[T2]))

    @cached_property
    def join_keys(self) -> tuple[tuple[int, int], ...]:
        """(t1 attr, t2 attr) pairs from cross-tuple EQ predicates, for hash joining."""
        keys = []
        for pred in self.predicates:
            if (
                pred.op == "EQ"
                and isinstance(pred.rhs, TupleRef)
                and pred.lhs.var != pred.rhs.var
            ):
                first, second = pred.lhs, pred.rhs
                if first.var == T2:
                    first, second = second, first
                keys.append((first.attr, second.attr))
        return tuple(sorted(set(keys)))


class _Scanner:
    def __init__(self, text: str, line: int | None = None):
        self.text = text
        self.pos = 0
        self.line = line

    def fail(self, message: str) -> ParseError:
        return ParseError(message, offset=self.pos, line=self.line)

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def expect(self, literal: str) -> None:
        self.skip_ws()
        if not self.text.startswith(literal, self.pos):
            raise self.fail(f"expected {literal!r}")
        self.pos += len(literal)

    def take_until(self, stops: str) -> str:
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] not in stops:
            self.pos += 1
        return self.text[start : self.pos]


def _parse_ref(scanner: _Scanner, schema: Schema) -> TupleRef | Const:
    scanner.skip_ws()
    if scanner.pos >= len(scanner.text):
        raise scanner.fail("expected a tuple reference or constant")
    if scanner.text[scanner.pos] == '"':
        scanner.pos += 1
        start = scanner.pos
        end = scanner.text.find('"', start)
        if end < 0:
            raise scanner.fail("unterminated constant")
        scanner.pos = end + 1
        return Const(scanner.text[start:end])
    word = scanner.take_until(".,)&")
    var = _VAR_NAMES.get(word.strip())
    if var is None:
        raise scanner.fail(f"expected t1, t2, or a quoted constant, got {word.strip()!r}")
    scanner.expect(".")
    name_start = scanner.pos
    name = scanner.take_until(",)&").strip()
    if not name:
        raise scanner.fail("expected an attribute name")
    try:
        attr = schema.index_of(name)
    except Exception:
        scanner.pos = name_start
        raise scanner.fail(f"unknown attribute {name!r}") from None
    return TupleRef(var, attr)


def _parse_predicate(scanner: _Scanner, schema: Schema) -> Predicate:
    scanner.skip_ws()
    op_start = scanner.pos
    op = scanner.take_until("(").strip()
    if op not in ("EQ", "NEQ"):
        scanner.pos = op_start
        raise scanner.fail(f"expected EQ or NEQ, got {op!r}")
    scanner.expect("(")
    lhs = _parse_ref(scanner, schema)
    scanner.expect(",")
    rhs = _parse_ref(scanner, schema)
    scanner.expect(")")
    if isinstance(lhs, Const):
        if isinstance(rhs, Const):
            raise scanner.fail("predicate must reference at least one tuple")
        lhs, rhs = rhs, lhs  # normalize: the tuple reference goes on the left
    return Predicate(op, lhs, rhs)


def parse_dc(line: str, schema: Schema, dc_id: str = "dc", lineno: int | None = None) -> DenialConstraint:
    """Parse one constraint: `pred ("&" pred)*` with EQ/NEQ predicates."""
    scanner = _Scanner(line, line=lineno)
    predicates = [_parse_predicate(scanner, schema)]
    while not scanner.at_end():
        scanner.expect("&")
        predicates.append(_parse_predicate(scanner, schema))
    dc = DenialConstraint(dc_id, tuple(predicates))
    uses_t2 = dc.arity == 2
    uses_t1 = bool(dc.var_attrs[T1])
    if uses_t2 and not uses_t1:
        raise scanner.fail("constraint references t2 but never t1")
    return dc


def parse_dc_file(path, schema: Schema) -> list[DenialConstraint]:
    """Read constraints one per line; `#` starts a comment, blank lines are skipped."""
    constraints: list[DenialConstraint] = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot open constraint file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        dc_id = f"dc_{len(constraints) + 1}"
        constraints.append(parse_dc(line, schema, dc_id=dc_id, lineno=lineno))
    return constraints


def _eval_predicate(
    pred: Predicate,
    row1: Sequence[int],
    row2: Sequence[int] | None,
    store: RelationStore,
) -> bool:
    lhs_row = row1 if pred.lhs.var == T1 else row2
    lv = lhs_row[pred.lhs.attr]
    if isinstance(pred.rhs, Const):
        if lv == NULL_ID:
            # a null cell only ever matches EQ against a null-token constant
            return pred.op == "EQ" and pred.rhs.text in store.null_tokens
        equal = store.interner.resolve(pred.lhs.attr, lv) == pred.rhs.text
    else:
        rhs_row = row1 if pred.rhs.var == T1 else row2
        rv = rhs_row[pred.rhs.attr]
        if lv == NULL_ID or rv == NULL_ID:
            return False
        if pred.lhs.attr == pred.rhs.attr:
            equal = lv == rv
        else:
            equal = store.interner.resolve(pred.lhs.attr, lv) == store.interner.resolve(
                pred.rhs.attr, rv
            )
    return equal if pred.op == "EQ" else not equal


def _satisfies(dc: DenialConstraint, store: RelationStore, t1: int, t2: int | None) -> bool:
    row1 = store.tuple_values(t1)
    row2 = None if t2 is None else store.tuple_values(t2)
    return all(_eval_predicate(pred, row1, row2, store) for pred in dc.predicates)


def _group(dc: DenialConstraint, t1: int, t2: int | None) -> frozenset[CellRef]:
    cells = {CellRef(t1, attr) for attr in dc.var_attrs[T1]}
    if t2 is not None:
        cells.update(CellRef(t2, attr) for attr in dc.var_attrs[T2])
    return frozenset(cells)


def violations(
    dc: DenialConstraint,
    store: RelationStore,
    probe: Iterable[int],
    reference: Iterable[int] = (),
) -> set[frozenset[CellRef]]:
    """Groups of cells jointly violating `dc`.

    Pair constraints consider every unordered pair with at least one tuple in
    `probe` and the other in `probe` or `reference`; the probe tuple may play
    either role.  Cross-tuple EQ predicates are used as hash-join keys, so the
    quadratic pair scan only happens within matching buckets.
    """
    probe_tids = sorted(set(probe))
    for tid in probe_tids:
        if not 0 <= tid < store.n_tuples:
            raise DataError(f"tuple id {tid} is out of range")
    if dc.arity == 1:
        return {
            _group(dc, tid, None)
            for tid in probe_tids
            if _satisfies(dc, store, tid, None)
        }

    reference_tids = sorted(set(reference) - set(probe_tids))
    for tid in reference_tids:
        if not 0 <= tid < store.n_tuples:
            raise DataError(f"tuple id {tid} is out of range")
    groups: set[frozenset[CellRef]] = set()
    decided: set[tuple[int, int]] = set()

    def consider(t: int, u: int) -> None:
        key = (t, u) if t < u else (u, t)
        if key in decided:
            return
        decided.add(key)
        # both orderings can violate independently, with different cell groups
        if _satisfies(dc, store, t, u):
            groups.add(_group(dc, t, u))
        if _satisfies(dc, store, u, t):
            groups.add(_group(dc, u, t))

    keys = dc.join_keys
    if keys:
        t1_attrs = [pair[0] for pair in keys]
        t2_attrs = [pair[1] for pair in keys]

        def key_of(tid: int, attrs: list[int]) -> tuple[int, ...] | None:
            row = store.tuple_values(tid)
            values = tuple(row[attr] for attr in attrs)
            return None if NULL_ID in values else values

        # bucket everything by its key in the t2 role
        by_t2: dict[tuple[int, ...], list[int]] = {}
        for tid in probe_tids + reference_tids:
            key = key_of(tid, t2_attrs)
            if key is not None:
                by_t2.setdefault(key, []).append(tid)
        by_t1_ref: dict[tuple[int, ...], list[int]] = {}
        for tid in reference_tids:
            key = key_of(tid, t1_attrs)
            if key is not None:
                by_t1_ref.setdefault(key, []).append(tid)
        for tid in probe_tids:
            key = key_of(tid, t1_attrs)
            if key is not None:
                for other in by_t2.get(key, ()):
                    if other != tid:
                        consider(tid, other)
            # reference tuples may also take the t1 role against this probe tuple
            key = key_of(tid, t2_attrs)
            if key is not None:
                for other in by_t1_ref.get(key, ()):
                    consider(tid, other)
    else:
        everyone = probe_tids + reference_tids
        for tid in probe_tids:
            for other in everyone:
                if other != tid:
                    consider(tid, other)
    return groups
