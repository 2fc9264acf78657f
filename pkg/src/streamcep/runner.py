"""Planned execution of a whole pattern over an event stream.

One engine per conjunct runs the conjunct's plan; their candidate
batches are merged per arrival, ordered canonically, deduplicated, and
filtered by the pattern's selection strategy, so the reported match set
is identical for every plan and engine family.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

from .matching import (
    ArrivalClock,
    Candidate,
    EngineMetrics,
    SelectionReplay,
    make_report,
)
from .model import (
    PARTITION_CONTIGUITY,
    ContractError,
    Event,
    MatchReport,
    OrderPlan,
    Pattern,
    TreePlan,
)
from .nfa import DEFAULT_KL_CAP, NfaEngine
from .plangen import PlanBundle
from .transform import normalize_pattern
from .tree_engine import TreeEngine, tree_plan_from_order

ENGINE_KINDS = ("auto", "nfa", "tree")


@dataclass
class RunResult:
    """Outcome of one full stream run."""

    reports: list[MatchReport]
    events: int
    memory_peak: int
    engine_metrics: list[EngineMetrics]
    wall_time: float

    @property
    def matches(self) -> int:
        return len(self.reports)

    @property
    def throughput(self) -> float:
        if self.wall_time <= 0:
            return float("inf")
        return self.events / self.wall_time

    @property
    def mean_latency(self) -> float:
        samples = [s for m in self.engine_metrics for s in m.latency_samples]
        if not samples:
            return 0.0
        return sum(samples) / len(samples)

    @property
    def kl_overflows(self) -> int:
        return sum(m.kl_overflows for m in self.engine_metrics)


class PatternRunner:
    """Runs a pattern's plan bundle over events, one engine per conjunct."""

    def __init__(self, pattern: Pattern, bundle: PlanBundle,
                 engine: str = "auto", kl_cap: int = DEFAULT_KL_CAP,
                 measure_latency: bool = True):
        if engine not in ENGINE_KINDS:
            raise ContractError(f"unknown engine kind {engine!r}")
        self.pattern = pattern
        self.normalized = normalize_pattern(pattern)
        if len(bundle.conjuncts) != len(self.normalized.conjuncts):
            raise ContractError(
                "plan bundle does not cover the pattern's conjuncts"
            )
        self.engines = [
            self._build_engine(planned.plan, conjunct, engine, kl_cap)
            for planned, conjunct in zip(
                bundle.conjuncts, self.normalized.conjuncts
            )
        ]
        self.replay = SelectionReplay(pattern.strategy.kind)
        self.clock = ArrivalClock() if measure_latency else None
        self._needs_pserial = pattern.strategy.kind == PARTITION_CONTIGUITY
        self._partition_key = pattern.strategy.partition_key
        self._partition_counters: dict[object, int] = {}
        self.events_seen = 0
        self.memory_peak = 0
        self.max_serial = -1

    @staticmethod
    def _build_engine(plan, conjunct, engine: str, kl_cap: int):
        if isinstance(plan, OrderPlan):
            if engine == "tree":
                return TreeEngine(
                    tree_plan_from_order(plan, conjunct), conjunct, kl_cap
                )
            return NfaEngine(plan, conjunct, kl_cap)
        if isinstance(plan, TreePlan):
            if engine == "nfa":
                raise ContractError(
                    "the chain NFA cannot execute a tree plan; "
                    "use the tree engine"
                )
            return TreeEngine(plan, conjunct, kl_cap)
        raise ContractError(f"unsupported plan type {type(plan).__name__}")

    def _augment(self, event: Event) -> Event:
        if not self._needs_pserial or "pserial" in event.attrs:
            return event
        value = event.value(self._partition_key)
        index = self._partition_counters.get(value, 0)
        self._partition_counters[value] = index + 1
        return replace(event, attrs={**event.attrs, "pserial": index})

    def process(self, event: Event) -> list[MatchReport]:
        event = self._augment(event)
        self.events_seen += 1
        self.max_serial = max(self.max_serial, event.serial)
        if self.clock is not None:
            self.clock.stamp(event.serial)
        batch: list[Candidate] = []
        for index, engine in enumerate(self.engines):
            for candidate in engine.process_event(event):
                candidate.conjunct = index
                batch.append(candidate)
        reports = self._emit(batch)
        memory = sum(
            e.metrics.live_partials + e.metrics.buffered for e in self.engines
        )
        if memory > self.memory_peak:
            self.memory_peak = memory
        return reports

    def end(self) -> list[MatchReport]:
        batch: list[Candidate] = []
        for index, engine in enumerate(self.engines):
            for candidate in engine.end(self.max_serial):
                candidate.conjunct = index
                batch.append(candidate)
        return self._emit(batch)

    def _emit(self, batch: list[Candidate]) -> list[MatchReport]:
        reports = []
        for candidate in self.replay.offer(batch):
            metrics = self.engines[candidate.conjunct].metrics
            metrics.matches += 1
            latency = 0.0
            if self.clock is not None:
                latency = self.clock.latency_since(candidate.completion_serial)
                metrics.latency_samples.append(latency)
            reports.append(make_report(
                candidate,
                self.engines[candidate.conjunct].alias_order,
                detected_at=time.perf_counter(),
                latency=latency,
            ))
        return reports

    def run(self, events) -> RunResult:
        started = time.perf_counter()
        reports: list[MatchReport] = []
        for event in events:
            reports.extend(self.process(event))
        reports.extend(self.end())
        wall = time.perf_counter() - started
        return RunResult(
            reports=reports,
            events=self.events_seen,
            memory_peak=self.memory_peak,
            engine_metrics=[e.metrics for e in self.engines],
            wall_time=wall,
        )


def run_pattern(pattern: Pattern, bundle: PlanBundle, events,
                engine: str = "auto", kl_cap: int = DEFAULT_KL_CAP) -> RunResult:
    """One-shot convenience wrapper around :class:`PatternRunner`."""
    return PatternRunner(pattern, bundle, engine=engine, kl_cap=kl_cap).run(events)
