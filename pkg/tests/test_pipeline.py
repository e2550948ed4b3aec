"""Strategy engine: scoping, repair pools, metrics, and cross-batch behavior."""

from __future__ import annotations

import io
import json

import pytest

from increpair.errors import ConfigError, DataError
from increpair.models import Hyperparams
from increpair.pipeline import (
    RunState,
    Strategy,
    StrategyKind,
    evaluate,
    run_batch,
    run_stream,
)
from increpair.relation import (
    CellRef,
    CellStatus,
    RawBatch,
    RelationStore,
    Schema,
    make_batches,
)

SCHEMA = Schema(("ctx", "val"))


def new_state(strategy, rows_truth=None, schema=SCHEMA):
    store = RelationStore(schema)
    return RunState(store, strategy, ground_truth=rows_truth)


def strategy_for(kind, **overrides):
    defaults = dict(
        kind=kind,
        detectors=("perfect",),
        omega=0.0,
        hyperparams=Hyperparams(epochs=100, learning_rate=0.5),
    )
    defaults.update(overrides)
    return Strategy(**defaults)


class TestStrategyConfig:
    def test_baselines_reject_skipping(self):
        for kind in (StrategyKind.HC_SEP, StrategyKind.HC_ACC):
            with pytest.raises(ConfigError):
                Strategy(kind=kind, skip="ikl")

    def test_unknown_names_rejected(self):
        with pytest.raises(ConfigError):
            Strategy(kind=StrategyKind.IHC, skip="sometimes")
        with pytest.raises(ConfigError):
            Strategy(kind=StrategyKind.IHC, detectors=("oracle",))

    def test_numeric_validation(self):
        with pytest.raises(ConfigError):
            Strategy(kind=StrategyKind.IHC, omega=1.0)
        with pytest.raises(ConfigError):
            Strategy(kind=StrategyKind.IHC, epsilon_kl=-0.1)
        with pytest.raises(ConfigError):
            Strategy(kind=StrategyKind.IHC, domain_cap=0)
        with pytest.raises(ConfigError):
            Strategy(kind=StrategyKind.IHC, train_limit=0)

    def test_round_trip(self):
        strategy = strategy_for(StrategyKind.IHC_RE, skip="wkl", epsilon_kl=0.2)
        assert Strategy.from_dict(strategy.to_dict()) == strategy

    def test_detector_companion_validation(self):
        with pytest.raises(ConfigError, match="ground truth"):
            new_state(Strategy(kind=StrategyKind.IHC, detectors=("perfect",)))
        with pytest.raises(ConfigError, match="constraints"):
            new_state(Strategy(kind=StrategyKind.IHC, detectors=("dc",)))

    def test_run_batch_rejects_foreign_strategy(self):
        strategy = Strategy(kind=StrategyKind.IHC)
        state = new_state(strategy)
        other = Strategy(kind=StrategyKind.IHC, seed=1)
        with pytest.raises(ConfigError, match="does not match"):
            run_batch(state, other, RawBatch(1, (("a", "b"),)))


# ground truth: ctx k always pairs with val v9 in row 0; later rows are clean
TRUTH = [
    ("k", "v9"),
    ("k", "v1"),
    ("k", "v1"),
    ("k", "v9"),
    ("k", "v9"),
    ("k", "v9"),
    ("k", "v9"),
]
DIRTY_ROWS = [
    ("k", "bad"),  # the one injected error
    ("k", "v1"),
    ("k", "v1"),
    ("k", "v9"),
    ("k", "v9"),
    ("k", "v9"),
    ("k", "v9"),
]
BATCHES = [
    RawBatch(1, tuple(tuple(r) for r in DIRTY_ROWS[:3])),
    RawBatch(2, tuple(tuple(r) for r in DIRTY_ROWS[3:])),
]


def run_two_batches(kind, **overrides):
    strategy = strategy_for(kind, **overrides)
    state = new_state(strategy, TRUTH)
    reports = run_stream(state, strategy, BATCHES)
    return state, reports


class TestStrategyContrast:
    def test_first_batch_repairs_with_what_it_has(self):
        # with only v1 in sight, every strategy repairs the bad cell to v1
        for kind in StrategyKind:
            state, reports = run_two_batches(kind)
            assert reports[0].cells_flagged == 1
            assert reports[0].repairs_changed == 1
            assert reports[0].remaining_errors == 1  # v1 is still not v9

    def test_hc_acc_revisits_and_corrects(self):
        state, reports = run_two_batches(StrategyKind.HC_ACC)
        # the wrongly repaired cell is re-flagged on the full rescan and fixed
        # once v9 dominates the rebuilt statistics
        assert reports[1].cells_flagged == 1
        assert reports[1].remaining_errors == 0
        assert state.store.canonical(0, 1) == "v9"
        assert state.store.original_canonical(0, 1) == "bad"

    def test_ihc_re_revisits_and_corrects(self):
        state, reports = run_two_batches(StrategyKind.IHC_RE)
        assert reports[1].remaining_errors == 0
        assert state.store.canonical(0, 1) == "v9"

    def test_ihc_leaves_prior_batches_alone(self):
        state, reports = run_two_batches(StrategyKind.IHC)
        assert reports[1].cells_flagged == 0  # incoming batch is clean
        assert reports[1].repairs_attempted == 0
        assert state.store.canonical(0, 1) == "v1"  # first repair stands
        assert reports[1].remaining_errors == 1

    def test_hc_sep_ignores_history(self):
        state, reports = run_two_batches(StrategyKind.HC_SEP)
        # batch 2 statistics must cover batch 2 alone
        assert state.stats.n == 4
        assert state.store.canonical(0, 1) == "v1"
        assert reports[1].remaining_errors == 1


class TestProbeAccounting:
    def test_probe_cells_by_strategy(self):
        rows = [(f"c{i % 2}", f"v{i % 3}") for i in range(6)]
        batches = make_batches(rows, count=3)
        expected = {
            StrategyKind.HC_SEP: [4, 4, 4],
            StrategyKind.IHC: [4, 4, 4],
            StrategyKind.HC_ACC: [4, 8, 12],
            StrategyKind.IHC_RE: [4, 8, 12],
        }
        for kind, probes in expected.items():
            strategy = Strategy(kind=kind, detectors=("null",), omega=0.0)
            state = new_state(strategy)
            reports = run_stream(state, strategy, batches)
            assert [r.probe_cells for r in reports] == probes, kind
            assert [r.cum_probe_cells for r in reports] == [
                sum(probes[: i + 1]) for i in range(3)
            ]

    def test_tuples_seen_accumulates(self):
        strategy = Strategy(kind=StrategyKind.IHC, detectors=("null",))
        state = new_state(strategy)
        reports = run_stream(
            state, strategy, make_batches([("a", "b")] * 5, count=2)
        )
        assert [r.tuples_seen for r in reports] == [3, 5]
        assert [r.batch for r in reports] == [1, 2]


class TestSkipperWiring:
    def test_no_recording_when_skip_disabled(self):
        state, _ = run_two_batches(StrategyKind.IHC)
        assert state.skipper.last_trained == {}

    def test_recording_follows_training(self):
        state, reports = run_two_batches(StrategyKind.IHC, skip="ikl", epsilon_kl=0.0)
        assert state.skipper.trained_batch(1) >= 1
        assert state.skipper.saved[1]  # joints snapshotted for the val attribute

    def test_infinite_epsilon_blocks_retraining(self):
        state, reports = run_two_batches(
            StrategyKind.IHC, skip="ikl", epsilon_kl=float("inf")
        )
        # the constant ctx column never yields training examples
        assert reports[0].attrs_retrained == ("val",)
        assert reports[1].attrs_retrained == ()


class TestMetricsStream:
    def test_jsonl_is_deterministic_and_timing_free(self):
        def capture(include_timings=False):
            strategy = strategy_for(StrategyKind.IHC)
            state = new_state(strategy, TRUTH)
            stream = io.StringIO()
            run_stream(state, strategy, BATCHES, stream, include_timings)
            return stream.getvalue()

        first, second = capture(), capture()
        assert first == second
        lines = [json.loads(line) for line in first.splitlines()]
        assert len(lines) == 2
        assert all("timings_s" not in line for line in lines)
        with_timings = json.loads(capture(include_timings=True).splitlines()[0])
        assert set(with_timings["timings_s"]) == {"detect", "stats", "train", "repair", "evaluate"}

    def test_ground_truth_fields_null_without_truth(self):
        strategy = Strategy(kind=StrategyKind.IHC, detectors=("null",))
        state = new_state(strategy)
        report = run_batch(state, strategy, RawBatch(1, (("a", None),)))
        assert report.repairs_correct is None
        assert report.remaining_errors is None
        assert report.true_errors_so_far is None
        assert report.cells_flagged == 1

    def test_report_counters_consistent(self):
        state, reports = run_two_batches(StrategyKind.IHC_RE)
        for report in reports:
            assert report.repairs_changed <= report.repairs_attempted
            assert report.dirty_pool >= report.repairs_attempted
        assert reports[-1].cum_repairs_changed == sum(r.repairs_changed for r in reports)
        assert reports[-1].true_errors_so_far == 1
        assert reports[-1].peak_live_bytes > 0


class TestEvaluate:
    def test_all_clean_gives_zeroes(self):
        store = RelationStore(SCHEMA)
        store.append_batch(RawBatch(1, (("a", "b"),)))
        metrics = evaluate(store, [("a", "b")])
        assert metrics == {
            "precision": 0.0,
            "recall": 0.0,
            "f1": 0.0,
            "true_errors": 0,
            "remaining_errors": 0,
            "repairs_changed": 0,
            "repairs_correct": 0,
        }

    def test_unrepaired_errors_hit_recall_only(self):
        store = RelationStore(SCHEMA)
        store.append_batch(RawBatch(1, (("a", "wrong"),)))
        metrics = evaluate(store, [("a", "right")])
        assert metrics["true_errors"] == 1
        assert metrics["remaining_errors"] == 1
        assert metrics["precision"] == 0.0
        assert metrics["recall"] == 0.0

    def test_mixed_outcome(self):
        store = RelationStore(SCHEMA)
        store.append_batch(
            RawBatch(1, (("a", "wrong"), ("b", "wrong"), ("c", "fine")))
        )
        truth = [("a", "right"), ("b", "right"), ("c", "fine")]
        store.mark_dirty([CellRef(0, 1), CellRef(1, 1)])
        right = store.interner.intern(1, "right")
        off = store.interner.intern(1, "off")
        store.apply_repairs([(CellRef(0, 1), right), (CellRef(1, 1), off)])
        metrics = evaluate(store, truth)
        assert metrics["repairs_changed"] == 2
        assert metrics["repairs_correct"] == 1
        assert metrics["precision"] == 0.5
        assert metrics["recall"] == 0.5
        assert metrics["f1"] == 0.5
        assert metrics["remaining_errors"] == 1

    def test_shape_validation(self):
        store = RelationStore(SCHEMA)
        store.append_batch(RawBatch(1, (("a", "b"),)))
        with pytest.raises(DataError):
            evaluate(store, [])
        with pytest.raises(DataError):
            evaluate(store, [("a",)])


class TestRepairedCellsBecomeTrainable:
    def test_repaired_cell_feeds_next_training(self):
        state, _ = run_two_batches(StrategyKind.IHC)
        # the repaired cell is Repaired, hence eligible again
        assert state.store.status(0, 1) is CellStatus.REPAIRED
        assert 0 in state.store.trainable_tids(1)
