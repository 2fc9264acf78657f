"""Lazy chain NFA executing an order plan.

A chain of n+1 states accepts the plan's n positive positions in plan
order, regardless of arrival order: events are buffered per type, a
partial match forks over the already-buffered backlog the moment it is
created, and is extended directly by later arrivals.  Each full match is
therefore materialized exactly once, at the arrival of its final (by
serial) contributing event.
"""
from __future__ import annotations

from itertools import combinations

from .matching import (
    Candidate,
    EngineMetrics,
    absence_deadline,
    blocks,
    final_at_checkpoint,
    make_candidate,
)
from .model import (
    AttrRef,
    ContractError,
    Event,
    OrderPlan,
    Pattern,
    Predicate,
    evaluate_predicate,
)
from .transform import NegationSpec, NormalizedConjunct, normalize_pattern

DEFAULT_KL_CAP = 8


class NfaChain:
    """Static structure of the chain: positions, conditions, checkpoints."""

    def __init__(self, plan: OrderPlan, conjunct: NormalizedConjunct):
        core = conjunct.core
        type_alias = {l.type_name: l.alias for l in core.leaves()}
        if set(plan.order) != set(type_alias):
            raise ContractError(
                "plan types do not match the pattern's positive types"
            )
        self.order = plan.order
        self.window = core.window
        self.alias_order = tuple(l.alias for l in core.leaves())
        self.aliases = tuple(type_alias[t] for t in plan.order)
        self.kl_positions = frozenset(
            i for i, t in enumerate(plan.order) if t in plan.kl_types
        )
        # Each predicate becomes a condition of the latest position among
        # its aliases; single-position predicates gate that position alone.
        position_of = {type_alias[t]: i for i, t in enumerate(plan.order)}
        self.conditions: list[list[Predicate]] = [[] for _ in plan.order]
        for pred in core.predicates:
            last = max(position_of[a] for a in pred.aliases())
            self.conditions[last].append(pred)
        # An absence test is exact at the checkpoint step only when the
        # interval and the predicates depend on nothing but the bound
        # neighbours; everything else is decided on the full match, where
        # the window edges are known and plan order cannot influence the
        # outcome.
        self.checkpoints: list[list[NegationSpec]] = [[] for _ in plan.order]
        checkpoint_position = {c.alias: c.position for c in plan.checkpoints}
        completion: list[NegationSpec] = []
        for spec in conjunct.negations:
            if spec.alias not in checkpoint_position:
                raise ContractError(
                    f"plan lacks a checkpoint for negated position {spec.alias!r}"
                )
            if final_at_checkpoint(spec):
                position = checkpoint_position[spec.alias]
                self.checkpoints[position - 1].append(spec)
            elif not spec.needs_pending:
                completion.append(spec)
        self.completion_specs = tuple(completion)
        self.pending_specs = tuple(
            s for s in conjunct.negations if s.needs_pending
        )
        self.blocker_types = frozenset(s.type_name for s in conjunct.negations)
        self.pending_blockers = frozenset(
            s.type_name for s in self.pending_specs
        )
        # When every consecutive pair of positions carries a strict
        # timestamp chain, a buffered event can never join a partial
        # created after it (stream timestamps are non-decreasing), so the
        # engine can run eagerly and keep nothing.  A full serial-adjacency
        # chain pins every next binding to the previous arrival, letting
        # stale partials be dropped immediately instead of at the window
        # edge.  Both flags are pure execution shortcuts; they change no
        # match set.
        pairs = list(zip(self.aliases, self.aliases[1:], range(1, len(self.order))))
        self.eager = (
            not self.kl_positions
            and not conjunct.negations
            and all(self._ts_chained(a, b, i) for a, b, i in pairs)
        )
        self.prune_stale = bool(pairs) and not self.kl_positions and all(
            self._serial_adjacent(a, b, i) for a, b, i in pairs
        )

    def _ts_chained(self, earlier: str, later: str, position: int) -> bool:
        for pred in self.conditions[position]:
            right = pred.right
            if not isinstance(right, AttrRef) or pred.right_offset != 0.0:
                continue
            if (pred.comparator == "<" and pred.left.alias == earlier
                    and pred.left.attribute == "ts"
                    and right.alias == later and right.attribute == "ts"):
                return True
            if (pred.comparator == ">" and pred.left.alias == later
                    and pred.left.attribute == "ts"
                    and right.alias == earlier and right.attribute == "ts"):
                return True
        return False

    def _serial_adjacent(self, earlier: str, later: str, position: int) -> bool:
        for pred in self.conditions[position]:
            right = pred.right
            if (isinstance(right, AttrRef) and pred.comparator == "="
                    and pred.left.alias == later
                    and pred.left.attribute == "serial"
                    and right.alias == earlier and right.attribute == "serial"
                    and pred.right_offset == 1.0):
                return True
        return False

    @property
    def states(self) -> int:
        return len(self.order) + 1


def build_nfa(plan: OrderPlan, pattern: Pattern) -> "NfaEngine":
    """Engine for a single-conjunct pattern under the given order plan."""
    norm = normalize_pattern(pattern)
    if len(norm.conjuncts) != 1:
        raise ContractError("the chain NFA executes one conjunct at a time")
    return NfaEngine(plan, norm.conjuncts[0])


class _Partial:
    __slots__ = ("bindings", "state", "min_ts", "max_ts", "max_serial")

    def __init__(self, bindings: dict, state: int, min_ts: float,
                 max_ts: float, max_serial: int = -1):
        self.bindings = bindings
        self.state = state
        self.min_ts = min_ts
        self.max_ts = max_ts
        self.max_serial = max_serial


class _PendingMatch:
    """A full match whose absence test stays open until its deadline.

    Blockers that could still invalidate it are applied as they arrive,
    so resolution itself needs no buffer scan.
    """

    __slots__ = ("bindings", "deadline")

    def __init__(self, bindings: dict, deadline: float):
        self.bindings = bindings
        self.deadline = deadline


class NfaEngine:
    def __init__(self, plan: OrderPlan, conjunct: NormalizedConjunct,
                 kl_cap: int = DEFAULT_KL_CAP):
        self.chain = NfaChain(plan, conjunct)
        self.kl_cap = kl_cap
        self.window = self.chain.window
        self.buffers: dict[str, list[Event]] = {
            t: [] for t in set(self.chain.order) | set(self.chain.blocker_types)
        }
        self.by_state: list[list[_Partial]] = [
            [] for _ in range(len(self.chain.order))
        ]
        self.pending: list[_PendingMatch] = []
        self.metrics = EngineMetrics()
        self._position_of = {t: i for i, t in enumerate(self.chain.order)}
        self._latest = float("-inf")

    @property
    def alias_order(self) -> tuple[str, ...]:
        return self.chain.alias_order

    # -- helpers -------------------------------------------------------------

    def _span_with(self, partial: _Partial, events) -> tuple[float, float]:
        lo, hi = partial.min_ts, partial.max_ts
        for e in events:
            lo = min(lo, e.timestamp)
            hi = max(hi, e.timestamp)
        return lo, hi

    def _conditions_hold(self, position: int, bindings: dict) -> bool:
        return all(
            evaluate_predicate(p, bindings)
            for p in self.chain.conditions[position]
        )

    def _blocked_at(self, position: int, bindings: dict) -> bool:
        for spec in self.chain.checkpoints[position]:
            for blocker in self.buffers.get(spec.type_name, ()):
                if blocks(spec, blocker, bindings, self.window):
                    return True
        return False

    def _blocked_on_completion(self, bindings: dict) -> bool:
        for spec in self.chain.completion_specs + self.chain.pending_specs:
            for blocker in self.buffers.get(spec.type_name, ()):
                if blocks(spec, blocker, bindings, self.window):
                    return True
        return False

    def _position_values(self, position: int, event: Event) -> list:
        """Direct-extension values for a position: the event itself, or every
        capped subset of qualifying backlog joined with it for Kleene."""
        if position not in self.chain.kl_positions:
            return [event]
        backlog = [
            e for e in self.buffers[event.type_name] if e.serial < event.serial
        ]
        room = self.kl_cap - 1
        if len(backlog) > room:
            self.metrics.kl_overflows += 1
        values = []
        for size in range(0, min(len(backlog), room) + 1):
            for combo in combinations(backlog, size):
                values.append(combo + (event,))
        return values

    def _backlog_values(self, position: int) -> list:
        """Creation-time fork values for a position, from buffered events."""
        pool = self.buffers.get(self.chain.order[position], ())
        if position not in self.chain.kl_positions:
            return list(pool)
        if len(pool) > self.kl_cap:
            self.metrics.kl_overflows += 1
        values = []
        for size in range(1, min(len(pool), self.kl_cap) + 1):
            for combo in combinations(pool, size):
                values.append(combo)
        return values

    def _try_extend(self, partial: _Partial, position: int, value,
                    out: list[Candidate], emission_serial: int) -> None:
        events = (value,) if isinstance(value, Event) else value
        lo, hi = self._span_with(partial, events)
        if hi - lo > self.window:
            return
        bindings = dict(partial.bindings)
        bindings[self.chain.aliases[position]] = value
        if not self._conditions_hold(position, bindings):
            return
        if self._blocked_at(position, bindings):
            return
        newest = max(partial.max_serial, max(e.serial for e in events))
        new = _Partial(bindings, position + 1, lo, hi, newest)
        self.metrics.instances_created += 1
        if new.state == len(self.chain.order):
            self._complete(new, out, emission_serial)
            return
        self.by_state[new.state].append(new)
        for value2 in self._backlog_values(new.state):
            self._try_extend(new, new.state, value2, out, emission_serial)

    def _complete(self, partial: _Partial, out: list[Candidate],
                  emission_serial: int) -> None:
        if self._blocked_on_completion(partial.bindings):
            return
        if self.chain.pending_specs:
            self.pending.append(_PendingMatch(
                partial.bindings,
                absence_deadline(partial.bindings, self.window),
            ))
            return
        out.append(make_candidate(partial.bindings, emission_serial))

    def _apply_blocker(self, event: Event) -> None:
        if event.type_name not in self.chain.pending_blockers or not self.pending:
            return
        survivors = []
        for entry in self.pending:
            dead = any(
                spec.type_name == event.type_name
                and blocks(spec, event, entry.bindings, self.window)
                for spec in self.chain.pending_specs
            )
            if not dead:
                survivors.append(entry)
        self.pending = survivors

    def _resolve_pending(self, now_ts: float, emission_serial: int,
                         out: list[Candidate]) -> None:
        if not self.pending:
            return
        keep = []
        for entry in self.pending:
            if now_ts > entry.deadline:
                out.append(make_candidate(entry.bindings, emission_serial))
            else:
                keep.append(entry)
        self.pending = keep

    # -- public protocol -----------------------------------------------------

    def process_event(self, event: Event) -> list[Candidate]:
        out: list[Candidate] = []
        self.metrics.events += 1
        self._latest = max(self._latest, event.timestamp)
        self._resolve_pending(event.timestamp, event.serial, out)
        self._apply_blocker(event)
        if event.type_name in self.buffers and not self.chain.eager:
            self.buffers[event.type_name].append(event)
        position = self._position_of.get(event.type_name)
        if position is not None:
            values = self._position_values(position, event)
            if position == 0:
                root = _Partial({}, 0, float("inf"), float("-inf"))
                for value in values:
                    self._try_extend(root, 0, value, out, event.serial)
            else:
                for partial in list(self.by_state[position]):
                    for value in values:
                        self._try_extend(partial, position, value, out, event.serial)
        if self.chain.prune_stale:
            serial = event.serial
            for state in range(1, len(self.by_state)):
                self.by_state[state] = [
                    p for p in self.by_state[state] if p.max_serial == serial
                ]
        self._evict(event.timestamp)
        self.metrics.live_partials = (
            sum(len(s) for s in self.by_state) + len(self.pending)
        )
        self.metrics.buffered = sum(len(b) for b in self.buffers.values())
        self.metrics.note_usage()
        return out

    def end(self, max_serial: int) -> list[Candidate]:
        out: list[Candidate] = []
        self._resolve_pending(float("inf"), max_serial + 1, out)
        return out

    def _evict(self, latest: float) -> None:
        horizon = latest - self.window
        for buffer in self.buffers.values():
            while buffer and buffer[0].timestamp < horizon:
                buffer.pop(0)
        for state, partials in enumerate(self.by_state):
            self.by_state[state] = [p for p in partials if p.min_ts >= horizon]
