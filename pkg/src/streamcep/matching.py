"""Shared runtime semantics for the two evaluation engines.

Both engines reduce a conjunct to the same currency: a stream of candidate
full matches per processed event.  This module holds what must agree
between them so the engines themselves stay independent: candidate
identity and ordering, the absence test for negated positions, the
selection-strategy replay, and the metrics snapshot.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from .model import (
    ANY_MATCH,
    Event,
    MatchReport,
    evaluate_predicate,
)
from .transform import NegationSpec

Bindings = dict[str, object]  # alias -> Event | tuple[Event, ...]


def binding_events(bindings: Bindings) -> list[Event]:
    out: list[Event] = []
    for value in bindings.values():
        if isinstance(value, Event):
            out.append(value)
        else:
            out.extend(value)
    return out


def binding_serials(bindings: Bindings) -> tuple[int, ...]:
    return tuple(sorted(e.serial for e in binding_events(bindings)))


def binding_span(bindings: Bindings) -> tuple[float, float]:
    events = binding_events(bindings)
    ts = [e.timestamp for e in events]
    return min(ts), max(ts)


@dataclass
class Candidate:
    """A full match of one conjunct awaiting strategy replay.

    ``emission_serial`` is the stream serial at which the match may be
    reported: the completing event's serial, or, when absence of a
    negated type is only certain later, the serial of the first event
    whose timestamp passes the absence deadline.
    """

    bindings: Bindings
    serials: tuple[int, ...]
    completion_serial: int
    emission_serial: int
    conjunct: int = 0

    @property
    def sort_key(self) -> tuple:
        return (self.emission_serial, self.completion_serial, self.serials)


def make_candidate(bindings: Bindings, emission_serial: int | None = None,
                   conjunct: int = 0) -> Candidate:
    serials = binding_serials(bindings)
    completion = serials[-1]
    return Candidate(
        bindings=dict(bindings),
        serials=serials,
        completion_serial=completion,
        emission_serial=completion if emission_serial is None else emission_serial,
        conjunct=conjunct,
    )


def _alias_ts_bounds(value) -> tuple[float, float]:
    if isinstance(value, Event):
        return value.timestamp, value.timestamp
    ts = [e.timestamp for e in value]
    return min(ts), max(ts)


def blocks(spec: NegationSpec, blocker: Event, bindings: Bindings,
           window: float) -> bool:
    """True when ``blocker`` forbids the match held in ``bindings``.

    The blocker must satisfy the spec's predicates and fall inside the
    absence interval: strictly between the predecessor and successor for
    sequences (window edges when the position borders the pattern), or
    anywhere inside the match window for conjunctions.
    """
    lo, hi = binding_span(bindings)
    ts = blocker.timestamp
    if spec.mode == "seq":
        if spec.predecessor is not None:
            if ts <= _alias_ts_bounds(bindings[spec.predecessor])[1]:
                return False
        elif ts < hi - window:
            return False
        if spec.successor is not None:
            if ts >= _alias_ts_bounds(bindings[spec.successor])[0]:
                return False
        elif ts > lo + window:
            return False
    else:
        if ts < hi - window or ts > lo + window:
            return False
    probe = dict(bindings)
    probe[spec.alias] = blocker
    return all(evaluate_predicate(p, probe) for p in spec.predicates)


def absence_deadline(bindings: Bindings, window: float) -> float:
    """Timestamp after which no further blocker can invalidate the match."""
    lo, _ = binding_span(bindings)
    return lo + window


def final_at_checkpoint(spec: NegationSpec) -> bool:
    """Whether the absence test is already exact at the plan's checkpoint.

    That needs the blocker's interval pinned on both sides by members
    bound at the checkpoint: then neither window edge is ever the binding
    constraint, every qualifying blocker has arrived (timestamps are
    non-decreasing and the upper bound is strict), and the test gives the
    same answer as on the full match.  Everything else is decided once
    the match completes, where the window edges are known and the
    outcome cannot depend on plan order.
    """
    if spec.needs_pending:
        return False
    if spec.mode == "seq":
        if spec.predecessor is None or spec.successor is None:
            return False
        allowed = {spec.predecessor, spec.successor, spec.alias}
        return all(set(p.aliases()) <= allowed for p in spec.predicates)
    return spec.ts_confined


class SelectionReplay:
    """Turns per-arrival candidate batches into reported matches.

    Candidates inside a batch are ordered canonically (emission serial,
    completion serial, sorted member serials), which makes the outcome
    identical across plans and engines.  Under skip-till-any-match every
    distinct event set is reported once; the consuming strategies accept
    greedily, claim their events, and skip any candidate touching a
    claimed event.
    """

    def __init__(self, strategy_kind: str = ANY_MATCH):
        self.consume = strategy_kind != ANY_MATCH
        self._claimed: set[int] = set()
        self._seen: set[tuple[int, ...]] = set()

    def offer(self, batch: list[Candidate]) -> list[Candidate]:
        accepted = []
        for cand in sorted(batch, key=lambda c: c.sort_key):
            if cand.serials in self._seen:
                continue
            if self.consume and any(s in self._claimed for s in cand.serials):
                continue
            self._seen.add(cand.serials)
            if self.consume:
                self._claimed.update(cand.serials)
            accepted.append(cand)
        return accepted


def make_report(candidate: Candidate, alias_order: tuple[str, ...],
                detected_at: float = 0.0, latency: float = 0.0) -> MatchReport:
    groups = []
    for alias in alias_order:
        value = candidate.bindings.get(alias)
        if value is None:
            continue
        if isinstance(value, Event):
            groups.append((alias, (value.serial,)))
        else:
            groups.append((alias, tuple(sorted(e.serial for e in value))))
    lo, hi = binding_span(candidate.bindings)
    return MatchReport(
        serials=candidate.serials,
        groups=tuple(groups),
        ts_min=lo,
        ts_max=hi,
        emit_serial=candidate.emission_serial,
        completion_serial=candidate.completion_serial,
        detected_at=detected_at,
        latency=latency,
    )


@dataclass
class EngineMetrics:
    """Structure-count runtime metrics shared by both engines.

    ``memory_peak`` is the peak of live partial matches plus buffered
    events observed after any single arrival, the portable stand-in for
    byte-level memory measurements.
    """

    events: int = 0
    matches: int = 0
    live_partials: int = 0
    peak_partials: int = 0
    buffered: int = 0
    peak_buffered: int = 0
    memory_peak: int = 0
    instances_created: int = 0
    kl_overflows: int = 0
    latency_samples: list[float] = field(default_factory=list)
    per_node_peak: dict[str, int] = field(default_factory=dict)

    def note_usage(self) -> None:
        if self.live_partials > self.peak_partials:
            self.peak_partials = self.live_partials
        if self.buffered > self.peak_buffered:
            self.peak_buffered = self.buffered
        combined = self.live_partials + self.buffered
        if combined > self.memory_peak:
            self.memory_peak = combined

    def note_node(self, node_id: str, count: int) -> None:
        if count > self.per_node_peak.get(node_id, 0):
            self.per_node_peak[node_id] = count

    @property
    def mean_latency(self) -> float:
        if not self.latency_samples:
            return 0.0
        return sum(self.latency_samples) / len(self.latency_samples)


class ArrivalClock:
    """Wall-clock arrival times, for per-match detection latency."""

    def __init__(self):
        self._at: dict[int, float] = {}

    def stamp(self, serial: int) -> None:
        self._at[serial] = time.perf_counter()

    def latency_since(self, serial: int) -> float:
        start = self._at.get(serial)
        if start is None:
            return 0.0
        return time.perf_counter() - start

    def forget_before(self, serial: int) -> None:
        for s in [s for s in self._at if s < serial]:
            del self._at[s]
