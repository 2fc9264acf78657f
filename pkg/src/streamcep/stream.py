"""Event sources, statistics estimation, and the arrival-order profiler.

Sources materialize their events (desk scale) and guarantee the stream
contract: non-decreasing timestamps, strictly increasing serials.
"""
from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field

from .model import (
    DataError,
    Event,
    MatchReport,
    Pattern,
    StatisticsCatalog,
    UnsupportedPatternError,
    predicate_selectivity_key,
    evaluate_predicate,
)
from .transform import normalize_pattern

CSV_COLUMNS = ("identifier", "timestamp", "price")

DEFAULT_PAIR_SAMPLE = 100_000


@dataclass
class StreamSource:
    """A finite, replayable event stream."""

    events: tuple[Event, ...]
    duration: float
    origin: str = "memory"

    def __iter__(self):
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def type_names(self) -> tuple[str, ...]:
        return tuple(sorted({e.type_name for e in self.events}))


def _check_monotone(events: list[Event], origin: str) -> None:
    last = float("-inf")
    for event in events:
        if event.timestamp < last:
            raise DataError(
                f"{origin}: timestamps decrease at serial {event.serial}"
            )
        last = event.timestamp


def from_events(events, duration: float | None = None,
                origin: str = "memory") -> StreamSource:
    """Wrap an event list, validating the stream contract."""
    events = list(events)
    for serial, event in enumerate(events):
        if event.serial != serial:
            raise DataError(
                f"{origin}: serial {event.serial} at position {serial}"
            )
    _check_monotone(events, origin)
    if duration is None:
        duration = (
            events[-1].timestamp - events[0].timestamp if events else 0.0
        )
    return StreamSource(tuple(events), duration, origin)


# ---------------------------------------------------------------------------
# CSV ingestion


def ingest_csv(path: str, schema: set[str] | None = None) -> StreamSource:
    """Read an ``identifier,timestamp,price`` file into typed events.

    Each identifier becomes an event type; a ``difference`` attribute
    carries the price change against the previous event of the same
    identifier (0 for the first).  ``schema`` optionally restricts which
    identifiers are kept.
    """
    events: list[Event] = []
    last_price: dict[str, float] = {}
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        serial = 0
        for line, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if line == 1 and tuple(c.strip().lower() for c in row) == CSV_COLUMNS:
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{line}: expected 3 columns, got {len(row)}")
            identifier = row[0].strip()
            if not identifier:
                raise DataError(f"{path}:{line}: empty identifier")
            try:
                timestamp = float(row[1])
                price = float(row[2])
            except ValueError as exc:
                raise DataError(f"{path}:{line}: {exc}") from None
            if schema is not None and identifier not in schema:
                continue
            previous = last_price.get(identifier)
            difference = 0.0 if previous is None else price - previous
            last_price[identifier] = price
            events.append(Event(
                type_name=identifier,
                timestamp=timestamp,
                serial=serial,
                attrs={"price": price, "difference": difference},
            ))
            serial += 1
    _check_monotone(events, path)
    duration = events[-1].timestamp - events[0].timestamp if events else 0.0
    return StreamSource(tuple(events), duration, origin=path)


# ---------------------------------------------------------------------------
# Synthetic generation


@dataclass(frozen=True)
class SyntheticConfig:
    """Poisson arrivals per type with uniform attribute values.

    ``attributes`` maps attribute name to a uniform (low, high) range,
    shared by all types unless overridden per type in ``type_attributes``.
    """

    rates: dict[str, float]
    duration: float
    seed: int = 0
    attributes: dict[str, tuple[float, float]] = field(
        default_factory=lambda: {"x": (0.0, 1.0)}
    )
    type_attributes: dict[str, dict[str, tuple[float, float]]] = field(
        default_factory=dict
    )

    def __post_init__(self) -> None:
        for name, rate in self.rates.items():
            if not rate > 0:
                raise DataError(f"rate for {name!r} must be positive")
        if not self.duration > 0:
            raise DataError("duration must be positive")


def generate_synthetic(config: SyntheticConfig) -> StreamSource:
    """Merge independent Poisson processes into one stream."""
    rng = random.Random(config.seed)
    pending: list[tuple[float, str, dict]] = []
    for type_name in sorted(config.rates):
        rate = config.rates[type_name]
        specs = dict(config.attributes)
        specs.update(config.type_attributes.get(type_name, {}))
        ts = 0.0
        while True:
            ts += rng.expovariate(rate)
            if ts >= config.duration:
                break
            attrs = {
                name: rng.uniform(lo, hi)
                for name, (lo, hi) in sorted(specs.items())
            }
            pending.append((ts, type_name, attrs))
    pending.sort(key=lambda item: (item[0], item[1]))
    events = tuple(
        Event(type_name=name, timestamp=ts, serial=serial, attrs=attrs)
        for serial, (ts, name, attrs) in enumerate(pending)
    )
    return StreamSource(events, config.duration, origin="synthetic")


# ---------------------------------------------------------------------------
# Statistics estimation


def _pairs_within(events_a: list[Event], events_b: list[Event], window: float):
    """All (a, b) pairs whose timestamps differ by at most the window."""
    start = 0
    for a in events_a:
        while start < len(events_b) and events_b[start].timestamp < a.timestamp - window:
            start += 1
        i = start
        while i < len(events_b) and events_b[i].timestamp <= a.timestamp + window:
            b = events_b[i]
            if b.serial != a.serial:
                yield a, b
            i += 1


def estimate_statistics(
    source: StreamSource,
    patterns,
    max_pairs: int = DEFAULT_PAIR_SAMPLE,
    seed: int = 0,
) -> StatisticsCatalog:
    """Rates and per-predicate selectivities measured from a stream.

    The selectivity of a predicate is the satisfied fraction over sampled
    event pairs co-resident within the pattern's window (events of one
    type for single-position filters); predicates sharing a catalog key
    multiply, matching the catalog's combined-selectivity meaning.
    """
    if isinstance(patterns, Pattern):
        patterns = [patterns]
    events = list(source.events)
    by_type: dict[str, list[Event]] = {}
    for event in events:
        by_type.setdefault(event.type_name, []).append(event)

    if source.duration <= 0:
        raise DataError("stream duration is zero; rates are undefined")
    needed = sorted({
        l.type_name for pattern in patterns for l in pattern.leaves()
    })
    for name in needed:
        if not by_type.get(name):
            raise DataError(f"no events of type {name!r} in the stream")
    rates = {
        name: len(by_type[name]) / source.duration for name in needed
    }

    rng = random.Random(seed)
    sels: dict[tuple[str, ...], float] = {}
    for pattern in patterns:
        alias_types = pattern.alias_types()
        for predicate in pattern.predicates:
            key = predicate_selectivity_key(pattern, predicate)
            aliases = predicate.aliases()
            if len(aliases) == 1:
                alias = aliases[0]
                pool = by_type[alias_types[alias]]
                sample = pool
                if len(sample) > max_pairs:
                    sample = rng.sample(pool, max_pairs)
                hits = sum(
                    1 for e in sample if evaluate_predicate(predicate, {alias: e})
                )
                fraction = hits / len(sample)
            else:
                first, second = aliases[0], aliases[1]
                pairs = list(_pairs_within(
                    by_type[alias_types[first]],
                    by_type[alias_types[second]],
                    pattern.window,
                ))
                if not pairs:
                    continue
                if len(pairs) > max_pairs:
                    pairs = rng.sample(pairs, max_pairs)
                hits = sum(
                    1 for a, b in pairs
                    if evaluate_predicate(predicate, {first: a, second: b})
                )
                fraction = hits / len(pairs)
            sels[key] = sels.get(key, 1.0) * fraction
    return StatisticsCatalog(rates=rates, selectivities=sels)


# ---------------------------------------------------------------------------
# Output profiler


@dataclass(frozen=True)
class ArrivalOrderProfile:
    """Frequency of each temporal arrival order among full matches."""

    counts: dict[tuple[str, ...], int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def mode(self) -> tuple[str, ...] | None:
        """Most frequent arrival order; ties break lexicographically."""
        if not self.counts:
            return None
        return min(self.counts, key=lambda k: (-self.counts[k], k))

    @property
    def mode_last(self) -> str | None:
        mode = self.mode
        return mode[-1] if mode else None


def profile_output(reports: list[MatchReport], pattern: Pattern) -> ArrivalOrderProfile:
    """Count, per full match, the order in which its types arrived.

    Arrival order is serial order (the stream contract ties serials to
    non-decreasing time); a type appears at its first contributing event.
    """
    norm = normalize_pattern(pattern)
    if len(norm.conjuncts) != 1:
        raise UnsupportedPatternError(
            "arrival profiles are defined for conjunctive patterns"
        )
    alias_types = norm.conjuncts[0].core.alias_types()
    counts: dict[tuple[str, ...], int] = {}
    for report in reports:
        serial_alias: dict[int, str] = {}
        for alias, serials in report.groups:
            for serial in serials:
                serial_alias[serial] = alias
        order: list[str] = []
        for serial in sorted(serial_alias):
            name = alias_types.get(serial_alias[serial])
            if name is not None and name not in order:
                order.append(name)
        key = tuple(order)
        counts[key] = counts.get(key, 0) + 1
    return ArrivalOrderProfile(counts=counts)
