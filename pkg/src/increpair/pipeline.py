"""Batch-strategy orchestration: detect, count, gate training, repair, report.

Four strategies share one engine and differ only in scoping:

* hc-sep   -- every batch is handled as a brand-new dataset: statistics and
              models are rebuilt from the batch alone, and only its tuples
              are detected and repaired.
* hc-acc   -- the batch is appended, then everything reruns from scratch over
              all data seen so far: full re-detection (prior repairs carried
              forward, prior flags reset), full statistics rebuild, full
              retraining, and repair of every currently flagged cell.
* ihc      -- the batch is appended, statistics advance incrementally, only
              incoming tuples are detected (prior tuples serve as reference
              witnesses) and repaired, and the drift skipper decides which
              attribute models actually retrain.
* ihc-re   -- like ihc, but detection probes every tuple seen so far and
              previously flagged-but-unrepaired cells re-enter inference.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import IO, Iterable, Sequence

from .dc import DenialConstraint
from .detectors import DETECTOR_NAMES, DetectionScope, run_detectors
from .errors import ConfigError, DataError
from .featurize import DEFAULT_DOMAIN_CAP, DEFAULT_OMEGA, Featurizer
from .models import (
    AttributeModel,
    Hyperparams,
    build_training_set,
    repair_cells,
    train,
)
from .relation import NULL_ID, RawBatch, RelationStore
from .skipper import (
    DEFAULT_KL_FLOOR,
    SkipperState,
    record_training,
    should_retrain_ikl,
    should_retrain_wkl,
)
from .stats import (
    EntropyAccumulator,
    StatsStore,
    apply_delta,
    correlation_matrix,
    joint_distribution,
    scratch_accumulator,
)

GroundTruth = Sequence[Sequence[str | None]]


class StrategyKind(str, Enum):
    HC_SEP = "hc-sep"
    HC_ACC = "hc-acc"
    IHC = "ihc"
    IHC_RE = "ihc-re"


SKIP_VARIANTS = ("none", "ikl", "wkl")


@dataclass(frozen=True)
class Strategy:
    """A strategy kind plus every knob the engine reads while running it."""

    kind: StrategyKind
    detectors: tuple[str, ...] = ("null",)
    skip: str = "none"
    epsilon_kl: float = 0.05
    omega: float = DEFAULT_OMEGA
    domain_cap: int = DEFAULT_DOMAIN_CAP
    train_limit: int = 1000
    hyperparams: Hyperparams = Hyperparams()
    seed: int = 0
    kl_floor: float = DEFAULT_KL_FLOOR

    def __post_init__(self) -> None:
        if self.skip not in SKIP_VARIANTS:
            raise ConfigError(f"unknown skip variant {self.skip!r}")
        if self.kind in (StrategyKind.HC_SEP, StrategyKind.HC_ACC) and self.skip != "none":
            raise ConfigError(
                f"{self.kind.value} always retrains; skip must be 'none'"
            )
        for name in self.detectors:
            if name not in DETECTOR_NAMES:
                raise ConfigError(f"unknown detector {name!r}")
        if not 0.0 <= self.omega < 1.0:
            raise ConfigError(f"omega must lie in [0, 1), got {self.omega}")
        if self.epsilon_kl < 0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon_kl}")
        if self.domain_cap < 1:
            raise ConfigError(f"domain cap must be >= 1, got {self.domain_cap}")
        if self.train_limit < 1:
            raise ConfigError(f"training limit must be >= 1, got {self.train_limit}")

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["kind"] = self.kind.value
        payload["detectors"] = list(self.detectors)
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "Strategy":
        data = dict(payload)
        data["kind"] = StrategyKind(data["kind"])
        data["detectors"] = tuple(data["detectors"])
        data["hyperparams"] = Hyperparams(**data["hyperparams"])
        return cls(**data)


@dataclass
class BatchReport:
    """Everything one processed batch reports to the metrics stream.

    Wall-clock timings stay out of the serialized line by default so that a
    fixed configuration and seed reproduce the stream byte for byte.
    """

    batch: int
    tuples_seen: int
    cells_flagged: int
    dirty_pool: int
    probe_cells: int
    cum_probe_cells: int
    repairs_attempted: int
    repairs_changed: int
    repairs_skipped_singleton: int
    repairs_correct: int | None
    cum_repairs_changed: int
    cum_repairs_correct: int | None
    true_errors_so_far: int | None
    remaining_errors: int | None
    attrs_retrained: tuple[str, ...]
    training_instances: int
    cum_training_instances: int
    peak_live_bytes: int
    timings_s: dict[str, float] = field(default_factory=dict)

    def to_json_line(self, include_timings: bool = False) -> str:
        payload = {key: value for key, value in asdict(self).items() if key != "timings_s"}
        payload["attrs_retrained"] = list(self.attrs_retrained)
        if include_timings:
            payload["timings_s"] = {k: round(v, 6) for k, v in self.timings_s.items()}
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


class RunState:
    """Everything a strategy carries from one batch to the next."""

    def __init__(
        self,
        store: RelationStore,
        strategy: Strategy,
        dcs: Sequence[DenialConstraint] = (),
        ground_truth: GroundTruth | None = None,
    ):
        self.store = store
        self.strategy = strategy
        self.dcs = tuple(dcs)
        self.ground_truth = ground_truth
        self._validate_inputs()
        n_attrs = store.schema.n_attrs
        self.stats = StatsStore(n_attrs)
        self.entropy = EntropyAccumulator(n_attrs)
        self.models = [AttributeModel.fresh(attr, n_attrs) for attr in range(n_attrs)]
        self.skipper = SkipperState()
        self.batches_done = 0
        self.cum_probe_cells = 0
        self.cum_training_instances = 0
        self.cum_repairs_changed = 0
        self.cum_repairs_correct = 0

    def _validate_inputs(self) -> None:
        if "dc" in self.strategy.detectors and not self.dcs:
            raise ConfigError("the dc detector is enabled but no constraints were provided")
        if "perfect" in self.strategy.detectors and self.ground_truth is None:
            raise ConfigError("the perfect detector is enabled but no ground truth was provided")

    def attach_inputs(
        self,
        dcs: Sequence[DenialConstraint] = (),
        ground_truth: GroundTruth | None = None,
    ) -> None:
        """Re-attach unserializable inputs after restoring from a snapshot."""
        self.dcs = tuple(dcs)
        self.ground_truth = ground_truth
        self._validate_inputs()


def _rebuild_stats(
    store: RelationStore, tids: Iterable[int]
) -> tuple[StatsStore, EntropyAccumulator]:
    """From-scratch statistics over the current (post-repair) values of `tids`."""
    stats = StatsStore(store.schema.n_attrs)
    stats.ingest([list(store.tuple_values(tid)) for tid in tids])
    return stats, scratch_accumulator(stats)


def _scope_for(kind: StrategyKind, incoming: range, everything: range) -> DetectionScope:
    if kind == StrategyKind.HC_SEP:
        return DetectionScope.over(incoming)
    if kind == StrategyKind.IHC:
        prior = range(everything.start, incoming.start)
        return DetectionScope.over(incoming, reference=prior)
    if kind == StrategyKind.IHC_RE:
        return DetectionScope.over(everything, flag_reference=True)
    return DetectionScope.over(everything)


def _training_rng(seed: int, batch: int, attr: int) -> random.Random:
    return random.Random(seed * 1_000_003 + batch * 1_009 + attr)


def _canonical_value(store: RelationStore, attr: int, vid: int) -> str | None:
    return None if vid == NULL_ID else store.interner.resolve(attr, vid)


def run_batch(state: RunState, strategy: Strategy, raw: RawBatch) -> BatchReport:
    """Process one batch under the given strategy and report what happened."""
    if strategy != state.strategy:
        raise ConfigError("strategy does not match the state it would resume")
    store = state.store
    kind = strategy.kind
    n_attrs = store.schema.n_attrs
    timings: dict[str, float] = {}

    batch = store.append_batch(raw)
    incoming = store.batch_tids(batch.k)
    everything = range(store.n_tuples)

    # -- detection -----------------------------------------------------------
    started = time.perf_counter()
    if kind == StrategyKind.HC_ACC:
        store.reset_dirty()
    scope = _scope_for(kind, incoming, everything)
    dirty = run_detectors(
        store, scope, strategy.detectors, dcs=state.dcs, ground_truth=state.ground_truth
    )
    cells_flagged = store.mark_dirty(dirty.cells())
    probe_cells = len(scope.probe) * n_attrs
    state.cum_probe_cells += probe_cells
    timings["detect"] = time.perf_counter() - started

    # -- statistics ----------------------------------------------------------
    started = time.perf_counter()
    if kind in (StrategyKind.IHC, StrategyKind.IHC_RE):
        delta = state.stats.ingest(batch.rows)
        apply_delta(state.entropy, state.stats, delta)
    else:
        stats_tids = incoming if kind == StrategyKind.HC_SEP else everything
        state.stats, state.entropy = _rebuild_stats(store, stats_tids)
    correlations = correlation_matrix(state.stats, state.entropy)
    featurizer = Featurizer(
        state.stats, correlations, strategy.omega, strategy.domain_cap
    )
    timings["stats"] = time.perf_counter() - started

    # -- training ------------------------------------------------------------
    started = time.perf_counter()
    if kind in (StrategyKind.HC_SEP, StrategyKind.HC_ACC):
        state.models = [AttributeModel.fresh(attr, n_attrs) for attr in range(n_attrs)]
    train_tids = incoming if kind == StrategyKind.HC_SEP else None

    use_skipper = (
        kind in (StrategyKind.IHC, StrategyKind.IHC_RE) and strategy.skip != "none"
    )
    current_joints: dict[int, dict[int, dict]] = {}
    if use_skipper:
        canonical = {
            (i, j): joint_distribution(state.stats, i, j)
            for i in range(n_attrs)
            for j in range(i + 1, n_attrs)
        }
        for attr in range(n_attrs):
            current_joints[attr] = {
                other: canonical[(attr, other) if attr < other else (other, attr)]
                for other in range(n_attrs)
                if other != attr
            }

    to_train: list[int] = []
    for attr in range(n_attrs):
        if not use_skipper:
            to_train.append(attr)
        elif strategy.skip == "ikl":
            fire, _ = should_retrain_ikl(
                state.skipper, attr, current_joints[attr], strategy.epsilon_kl, strategy.kl_floor
            )
            if fire:
                to_train.append(attr)
        else:
            fire, _ = should_retrain_wkl(
                state.skipper,
                attr,
                current_joints[attr],
                correlations,
                strategy.epsilon_kl,
                strategy.kl_floor,
            )
            if fire:
                to_train.append(attr)

    training_instances = 0
    peak_transient = 0
    retrained: list[int] = []
    for attr in to_train:
        rng = _training_rng(strategy.seed, batch.k, attr)
        examples = build_training_set(
            store, attr, featurizer, strategy.train_limit, rng, tids=train_tids
        )
        if not examples:
            continue
        transient = sum(
            example.tensor.values.nbytes + example.tensor.mask.nbytes
            for example in examples
        )
        peak_transient = max(peak_transient, transient)
        train(state.models[attr], examples, strategy.hyperparams)
        state.models[attr].trained_at_batch = batch.k
        training_instances += len(examples)
        retrained.append(attr)
        if use_skipper:
            record_training(state.skipper, attr, current_joints[attr], batch.k)
    state.cum_training_instances += training_instances
    timings["train"] = time.perf_counter() - started

    # -- repair ----------------------------------------------------------------
    started = time.perf_counter()
    if kind in (StrategyKind.HC_SEP, StrategyKind.IHC):
        pool = store.dirty_cells(incoming)
    else:
        pool = store.dirty_cells()
    proposals, skipped_singleton = repair_cells(state.models, pool, store, featurizer)

    repairs_correct: int | None = None
    if state.ground_truth is not None:
        repairs_correct = 0
        for cell, vid in proposals:
            if vid != store.value(cell.tid, cell.attr):
                truth = state.ground_truth[cell.tid][cell.attr]
                if _canonical_value(store, cell.attr, vid) == truth:
                    repairs_correct += 1
    repairs_changed = store.apply_repairs(proposals)
    state.cum_repairs_changed += repairs_changed
    if repairs_correct is not None:
        state.cum_repairs_correct += repairs_correct
    timings["repair"] = time.perf_counter() - started

    # -- evaluation against ground truth --------------------------------------
    started = time.perf_counter()
    remaining_errors: int | None = None
    true_errors: int | None = None
    if state.ground_truth is not None:
        remaining_errors = 0
        true_errors = 0
        for tid in everything:
            truth_row = state.ground_truth[tid]
            for attr in range(n_attrs):
                truth = truth_row[attr]
                if store.canonical(tid, attr) != truth:
                    remaining_errors += 1
                if store.original_canonical(tid, attr) != truth:
                    true_errors += 1
    timings["evaluate"] = time.perf_counter() - started

    state.batches_done = batch.k
    models_bytes = sum(model.weights.nbytes + 96 for model in state.models)
    skipper_bytes = 96 * sum(
        len(dist) for dists in state.skipper.saved.values() for dist in dists.values()
    )
    report = BatchReport(
        batch=batch.k,
        tuples_seen=store.n_tuples,
        cells_flagged=cells_flagged,
        dirty_pool=len(pool),
        probe_cells=probe_cells,
        cum_probe_cells=state.cum_probe_cells,
        repairs_attempted=len(proposals),
        repairs_changed=repairs_changed,
        repairs_skipped_singleton=skipped_singleton,
        repairs_correct=repairs_correct,
        cum_repairs_changed=state.cum_repairs_changed,
        cum_repairs_correct=(
            state.cum_repairs_correct if state.ground_truth is not None else None
        ),
        true_errors_so_far=true_errors,
        remaining_errors=remaining_errors,
        attrs_retrained=tuple(store.schema.attributes[attr] for attr in retrained),
        training_instances=training_instances,
        cum_training_instances=state.cum_training_instances,
        peak_live_bytes=state.stats.live_bytes()
        + models_bytes
        + skipper_bytes
        + peak_transient,
        timings_s=timings,
    )
    return report


def run_stream(
    state: RunState,
    strategy: Strategy,
    batches: Iterable[RawBatch],
    metrics_stream: IO[str] | None = None,
    include_timings: bool = False,
) -> list[BatchReport]:
    """Process batches in order, optionally writing one JSON line per batch."""
    reports = []
    for raw in batches:
        report = run_batch(state, strategy, raw)
        if metrics_stream is not None:
            metrics_stream.write(report.to_json_line(include_timings) + "\n")
        reports.append(report)
    return reports


def evaluate(store: RelationStore, ground_truth: GroundTruth) -> dict:
    """Net repair quality of the store's current contents against ground truth.

    A cell counts as a changed repair when its current value differs from its
    pre-repair original, and as correct when it now matches the truth.  Recall
    is measured against every cell whose original value was wrong.
    """
    if len(ground_truth) != store.n_tuples:
        raise DataError(
            f"ground truth has {len(ground_truth)} rows, store has {store.n_tuples}"
        )
    changed = correct = true_errors = remaining = 0
    for tid in range(store.n_tuples):
        truth_row = ground_truth[tid]
        if len(truth_row) != store.n_attrs:
            raise DataError(f"ground truth row {tid} has {len(truth_row)} fields")
        for attr in range(store.n_attrs):
            truth = truth_row[attr]
            current = store.canonical(tid, attr)
            original = store.original_canonical(tid, attr)
            if original != truth:
                true_errors += 1
            if current != truth:
                remaining += 1
            if current != original:
                changed += 1
                if current == truth:
                    correct += 1
    precision = correct / changed if changed else 0.0
    recall = correct / true_errors if true_errors else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "true_errors": true_errors,
        "remaining_errors": remaining,
        "repairs_changed": changed,
        "repairs_correct": correct,
    }
