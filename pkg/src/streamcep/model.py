"""Core domain types: event schemas, patterns, predicates, statistics, plans.

Everything downstream (parsing, transformation, cost models, plan search and
the runtimes) is written against the value types in this module.  They are
plain frozen dataclasses so that plans and patterns can be shared freely
between threads without defensive copying.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping, Sequence, Union

SEQ = "SEQ"
AND = "AND"
OR = "OR"
NARY_OPERATORS = (SEQ, AND, OR)

NOT = "not"
KLEENE = "kl"

KIND_NUMBER = "number"
KIND_TEXT = "text"
KIND_TIMESTAMP = "timestamp"

COMPARATORS = ("<", "<=", "=", ">=", ">", "!=")
TEXT_COMPARATORS = ("=", "!=")

ANY_MATCH = "any-match"
NEXT_MATCH = "next-match"
STRICT_CONTIGUITY = "strict-contiguity"
PARTITION_CONTIGUITY = "partition-contiguity"
STRATEGIES = (ANY_MATCH, NEXT_MATCH, STRICT_CONTIGUITY, PARTITION_CONTIGUITY)


class StreamCepError(Exception):
    """Base class for all errors raised by this package."""


class PatternStructureError(StreamCepError):
    """A pattern or predicate references positions that do not exist."""


class UnsupportedPatternError(StreamCepError):
    """The pattern is well formed but outside the supported fragment."""


class ContractError(StreamCepError):
    """An operation was called with arguments violating its precondition."""


class MissingStatisticsError(StreamCepError):
    """A cost computation needed a rate that the catalog does not have."""


class DataError(StreamCepError):
    """Malformed external input (CSV stream, statistics file, plan file)."""


class ResourceLimitError(StreamCepError):
    """A configured size or enumeration limit was exceeded."""


# ---------------------------------------------------------------------------
# Events


@dataclass(frozen=True)
class EventType:
    """Schema of a primitive event: a name plus typed payload attributes.

    A ``timestamp`` attribute is always present and appended automatically
    when missing from ``attributes``.
    """

    name: str
    attributes: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        names = [a for a, _ in self.attributes]
        if "timestamp" not in names:
            object.__setattr__(
                self, "attributes", self.attributes + (("timestamp", KIND_TIMESTAMP),)
            )
        if len(set(names)) != len(names):
            raise PatternStructureError(f"duplicate attribute on event type {self.name!r}")

    def kind_of(self, attribute: str) -> str:
        for name, kind in self.attributes:
            if name == attribute:
                return kind
        raise PatternStructureError(
            f"event type {self.name!r} has no attribute {attribute!r}"
        )


@dataclass(frozen=True)
class Event:
    """A primitive event instance.

    ``serial`` is the global arrival index assigned by the stream source;
    it is strictly increasing and is the basis of contiguity checks and of
    match identity.  ``attrs`` is treated as immutable after construction.
    """

    type_name: str
    timestamp: float
    serial: int
    attrs: Mapping[str, object] = field(default_factory=dict)

    def value(self, attribute: str) -> object:
        if attribute in ("ts", "timestamp"):
            return self.timestamp
        if attribute == "serial":
            return self.serial
        try:
            return self.attrs[attribute]
        except KeyError:
            raise DataError(
                f"event {self.type_name}#{self.serial} has no attribute {attribute!r}"
            ) from None


# ---------------------------------------------------------------------------
# Pattern structure


@dataclass(frozen=True)
class Leaf:
    """One declared position of a pattern: an event type bound to an alias.

    ``unary`` holds the stack of unary wrappers applied to the position,
    outermost first.  Valid patterns carry at most one wrapper; the parser
    may still produce nested wrappers (e.g. KL(NOT(A))) so that validation
    can report them instead of failing to represent them.
    """

    type_name: str
    alias: str
    unary: tuple[str, ...] = ()

    @property
    def negated(self) -> bool:
        return NOT in self.unary

    @property
    def kleene(self) -> bool:
        return KLEENE in self.unary


@dataclass(frozen=True)
class OperatorNode:
    op: str
    children: tuple[Union["OperatorNode", Leaf], ...]


@dataclass(frozen=True)
class AttrRef:
    alias: str
    attribute: str


@dataclass(frozen=True)
class Literal:
    value: object


@dataclass(frozen=True)
class Predicate:
    """A pairwise comparison between attribute references, or a filter.

    ``right_offset`` shifts the right-hand reference by a constant; it is
    used by the contiguity rewrite (serial adjacency: next = prev + 1) and
    is zero for predicates written in the pattern language.  ``origin``
    records whether the predicate came from the user or from a rewrite.
    """

    left: AttrRef
    comparator: str
    right: Union[AttrRef, Literal]
    right_offset: float = 0.0
    origin: str = "user"

    def __post_init__(self) -> None:
        if self.comparator not in COMPARATORS:
            raise PatternStructureError(f"unknown comparator {self.comparator!r}")

    def aliases(self) -> tuple[str, ...]:
        if isinstance(self.right, AttrRef) and self.right.alias != self.left.alias:
            return (self.left.alias, self.right.alias)
        return (self.left.alias,)


@dataclass(frozen=True)
class SelectionStrategy:
    kind: str = ANY_MATCH
    partition_key: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in STRATEGIES:
            raise ContractError(f"unknown selection strategy {self.kind!r}")

    @property
    def contiguous(self) -> bool:
        return self.kind in (STRICT_CONTIGUITY, PARTITION_CONTIGUITY)


@dataclass(frozen=True)
class Pattern:
    """A declarative pattern: operator tree, predicate conjunction, window.

    ``window`` is in seconds.  A set of events is inside the window when the
    largest pairwise timestamp difference is at most ``window``.
    """

    root: OperatorNode
    predicates: tuple[Predicate, ...] = ()
    window: float = 0.0
    strategy: SelectionStrategy = SelectionStrategy()

    def leaves(self) -> tuple[Leaf, ...]:
        """All leaf positions in declaration order (left-to-right)."""
        out: list[Leaf] = []

        def walk(node: Union[OperatorNode, Leaf]) -> None:
            if isinstance(node, Leaf):
                out.append(node)
            else:
                for child in node.children:
                    walk(child)

        walk(self.root)
        return tuple(out)

    def leaf_by_alias(self) -> dict[str, Leaf]:
        return {leaf.alias: leaf for leaf in self.leaves()}

    def alias_types(self) -> dict[str, str]:
        return {leaf.alias: leaf.type_name for leaf in self.leaves()}

    def positive_leaves(self) -> tuple[Leaf, ...]:
        return tuple(l for l in self.leaves() if not l.negated)

    def type_names(self) -> tuple[str, ...]:
        return tuple(l.type_name for l in self.leaves())

    def is_simple(self) -> bool:
        """One n-ary operator, children all leaves."""
        return all(isinstance(c, Leaf) for c in self.root.children)

    def with_strategy(self, strategy: SelectionStrategy) -> "Pattern":
        return replace(self, strategy=strategy)


def iter_nodes(node: Union[OperatorNode, Leaf]) -> Iterator[Union[OperatorNode, Leaf]]:
    yield node
    if isinstance(node, OperatorNode):
        for child in node.children:
            yield from iter_nodes(child)


def validate_pattern(pattern: Pattern) -> list[str]:
    """Check structural invariants; returns a list of violated rule names.

    An empty list means the pattern is valid.  Rule names are stable
    identifiers, suitable for asserting on in tests and for CLI output.
    """
    violations: list[str] = []
    if not pattern.window > 0:
        violations.append("window-not-positive")
    if pattern.root.op not in NARY_OPERATORS:
        violations.append("unknown-operator")
    leaves = pattern.leaves()
    if not leaves:
        violations.append("empty-pattern")

    aliases = [l.alias for l in leaves]
    if len(set(aliases)) != len(aliases):
        violations.append("duplicate-alias")
    types = [l.type_name for l in leaves]
    if len(set(types)) != len(types):
        violations.append("duplicate-type")

    for node in iter_nodes(pattern.root):
        if isinstance(node, OperatorNode):
            if node.op not in NARY_OPERATORS:
                violations.append("unknown-operator")
            if not node.children:
                violations.append("empty-operator")
        else:
            if len(node.unary) > 1:
                violations.append("unary-nesting")
            for u in node.unary:
                if u not in (NOT, KLEENE):
                    violations.append("unknown-unary")

    known = set(aliases)
    for pred in pattern.predicates:
        for alias in pred.aliases():
            if alias not in known:
                violations.append("unknown-alias")

    strategy = pattern.strategy
    if strategy.contiguous:
        if pattern.root.op != SEQ or not pattern.is_simple():
            violations.append("contiguity-requires-sequence")
        if any(l.kleene for l in leaves):
            violations.append("contiguity-with-kleene")
    if strategy.kind == PARTITION_CONTIGUITY and not strategy.partition_key:
        violations.append("partition-key-missing")

    # stable order, no duplicates
    seen: set[str] = set()
    unique = []
    for v in violations:
        if v not in seen:
            seen.add(v)
            unique.append(v)
    return unique


def predicate_selectivity_key(pattern: Pattern, predicate: Predicate) -> tuple[str, ...]:
    """The catalog key a predicate's selectivity is stored under.

    Cross predicates map to the sorted pair of event type names, filters to
    the single type name.  Unknown aliases raise ``PatternStructureError``.
    """
    alias_types = pattern.alias_types()
    names = set()
    for alias in predicate.aliases():
        if alias not in alias_types:
            raise PatternStructureError(f"predicate references unknown alias {alias!r}")
        names.add(alias_types[alias])
    return tuple(sorted(names))


# ---------------------------------------------------------------------------
# Predicate evaluation

_NUMERIC = (int, float)


def _compare(comparator: str, left: object, right: object) -> bool:
    if isinstance(left, str) or isinstance(right, str):
        if comparator not in TEXT_COMPARATORS:
            raise UnsupportedPatternError(
                f"comparator {comparator!r} is not defined for text attributes"
            )
        if comparator == "=":
            return left == right
        return left != right
    if not isinstance(left, _NUMERIC) or not isinstance(right, _NUMERIC):
        raise DataError(f"cannot compare {type(left).__name__} with {type(right).__name__}")
    if comparator == "<":
        return left < right
    if comparator == "<=":
        return left <= right
    if comparator == "=":
        return left == right
    if comparator == ">=":
        return left >= right
    if comparator == ">":
        return left > right
    return left != right


Binding = Mapping[str, Union[Event, Sequence[Event]]]


def evaluate_predicate(predicate: Predicate, bindings: Binding) -> bool:
    """Evaluate a predicate against partially bound positions.

    Aliases missing from ``bindings`` make the predicate vacuously true
    (their constraints are rechecked when they bind).  An alias bound to a
    sequence of events (a Kleene position) satisfies the predicate only if
    every member does.
    """

    def operands(side: Union[AttrRef, Literal], offset: float) -> list[object] | None:
        if isinstance(side, Literal):
            return [side.value]
        bound = bindings.get(side.alias)
        if bound is None:
            return None
        events = bound if isinstance(bound, (list, tuple)) else [bound]
        values = []
        for event in events:
            v = event.value(side.attribute)
            if offset and isinstance(v, _NUMERIC):
                v = v + offset
            values.append(v)
        return values

    lefts = operands(predicate.left, 0.0)
    rights = operands(predicate.right, predicate.right_offset)
    if lefts is None or rights is None:
        return True
    return all(
        _compare(predicate.comparator, lv, rv) for lv in lefts for rv in rights
    )


# ---------------------------------------------------------------------------
# Statistics


def selectivity_key(a: str, b: str | None = None) -> tuple[str, ...]:
    if b is None or b == a:
        return (a,)
    return tuple(sorted((a, b)))


_LOG2_LINEAR_MAX = 1020.0  # 2**x stays inside float range below this


def linear_from_log2(log2_value: float) -> float:
    if log2_value > _LOG2_LINEAR_MAX:
        return math.inf
    if log2_value == -math.inf:
        return 0.0
    return 2.0 ** log2_value


@dataclass(frozen=True)
class StatisticsCatalog:
    """Arrival rates (events/second) and predicate selectivities.

    Rates are carried both linearly and as log2 so that synthetic types with
    astronomically large rates (Kleene rewrite) stay representable.  The
    selectivity map is keyed by ``selectivity_key``: sorted type pairs for
    cross predicates, single names for filters; absent keys default to 1.
    """

    rates: Mapping[str, float]
    selectivities: Mapping[tuple[str, ...], float] = field(default_factory=dict)
    log2_rates: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        norm_sel: dict[tuple[str, ...], float] = {}
        for key, value in self.selectivities.items():
            if isinstance(key, str):
                norm = (key,)
            else:
                norm = selectivity_key(*key) if len(key) == 2 else (key[0],)
            if not 0.0 <= value <= 1.0:
                raise ContractError(f"selectivity for {norm} out of [0, 1]: {value}")
            norm_sel[norm] = value
        object.__setattr__(self, "selectivities", norm_sel)

        logs = dict(self.log2_rates)
        for name, rate in self.rates.items():
            if name in logs:
                continue
            if not rate > 0 or math.isinf(rate):
                raise ContractError(f"rate for {name!r} must be positive and finite: {rate}")
            logs[name] = math.log2(rate)
        object.__setattr__(self, "log2_rates", logs)
        # materialize linear values for log-only entries
        rates = dict(self.rates)
        for name, l2 in logs.items():
            if name not in rates:
                rates[name] = linear_from_log2(l2)
        object.__setattr__(self, "rates", rates)

    def rate(self, type_name: str) -> float:
        try:
            return self.rates[type_name]
        except KeyError:
            raise MissingStatisticsError(f"no arrival rate for type {type_name!r}") from None

    def log2_rate(self, type_name: str) -> float:
        try:
            return self.log2_rates[type_name]
        except KeyError:
            raise MissingStatisticsError(f"no arrival rate for type {type_name!r}") from None

    def sel(self, a: str, b: str | None = None) -> float:
        return self.selectivities.get(selectivity_key(a, b), 1.0)

    def type_names(self) -> tuple[str, ...]:
        return tuple(sorted(self.rates))

    def with_entries(
        self,
        rates: Mapping[str, float] | None = None,
        selectivities: Mapping[tuple[str, ...], float] | None = None,
        log2_rates: Mapping[str, float] | None = None,
    ) -> "StatisticsCatalog":
        new_rates = dict(self.rates)
        new_logs = dict(self.log2_rates)
        if rates:
            new_rates.update(rates)
            for name in rates:
                new_logs.pop(name, None)
        if log2_rates:
            for name, l2 in log2_rates.items():
                new_logs[name] = l2
                new_rates[name] = linear_from_log2(l2)
        new_sel = dict(self.selectivities)
        if selectivities:
            for key, value in selectivities.items():
                norm = selectivity_key(*key) if not isinstance(key, str) else (key,)
                new_sel[norm] = value
        return StatisticsCatalog(new_rates, new_sel, new_logs)

    # -- JSON interface -----------------------------------------------------

    @classmethod
    def from_json(cls, text: str) -> "StatisticsCatalog":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"malformed statistics JSON: {exc}") from exc
        if not isinstance(doc, dict) or "rates" not in doc:
            raise DataError("statistics JSON must be an object with a 'rates' member")
        rates = doc["rates"]
        sels_raw = doc.get("selectivities", {})
        if not isinstance(rates, dict) or not isinstance(sels_raw, dict):
            raise DataError("'rates' and 'selectivities' must be objects")
        sels: dict[tuple[str, ...], float] = {}
        for key, value in sels_raw.items():
            parts = tuple(p.strip() for p in key.split(","))
            if not all(parts) or len(parts) > 2:
                raise DataError(f"bad selectivity key {key!r}")
            sels[selectivity_key(*parts)] = float(value)
        try:
            return cls({str(k): float(v) for k, v in rates.items()}, sels)
        except (TypeError, ValueError) as exc:
            raise DataError(f"bad statistics value: {exc}") from exc

    def to_json(self) -> str:
        for name, rate in self.rates.items():
            if math.isinf(rate):
                raise DataError(f"rate for {name!r} exceeds the serializable range")
        doc = {
            "rates": dict(sorted(self.rates.items())),
            "selectivities": {
                ",".join(key): value for key, value in sorted(self.selectivities.items())
            },
        }
        return json.dumps(doc, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# Plans


@dataclass(frozen=True)
class NegationCheckpoint:
    """Where a plan verifies the absence of a negated event type.

    ``position`` is the 1-based step index for order plans, or the
    post-order node index for tree plans: the earliest point at which every
    dependency of the negated type has been accepted.
    """

    type_name: str
    alias: str
    position: int
    dependencies: tuple[str, ...] = ()


@dataclass(frozen=True)
class OrderPlan:
    """An event-processing order over the positive core of one conjunct."""

    order: tuple[str, ...]
    kl_types: frozenset[str] = frozenset()
    checkpoints: tuple[NegationCheckpoint, ...] = ()

    def __post_init__(self) -> None:
        if len(set(self.order)) != len(self.order):
            raise ContractError("evaluation order repeats a type")

    def step_of(self, type_name: str) -> int:
        """1-based step at which ``type_name`` is consumed."""
        return self.order.index(type_name) + 1


@dataclass(frozen=True)
class TreeNode:
    """A node of a binary evaluation tree; leaves carry an event type."""

    type_name: str | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.type_name is not None

    def __post_init__(self) -> None:
        if self.is_leaf:
            if self.left is not None or self.right is not None:
                raise ContractError("leaf nodes cannot have children")
        elif self.left is None or self.right is None:
            raise ContractError("internal nodes need both children")

    def leaf_names(self) -> tuple[str, ...]:
        if self.is_leaf:
            return (self.type_name,)
        return self.left.leaf_names() + self.right.leaf_names()

    def postorder(self) -> Iterator["TreeNode"]:
        if not self.is_leaf:
            yield from self.left.postorder()
            yield from self.right.postorder()
        yield self


def leaf(type_name: str) -> TreeNode:
    return TreeNode(type_name=type_name)


def join(left_node: TreeNode, right_node: TreeNode) -> TreeNode:
    return TreeNode(left=left_node, right=right_node)


def left_deep_tree(order: Sequence[str]) -> TreeNode:
    if not order:
        raise ContractError("cannot build a tree over an empty order")
    node = leaf(order[0])
    for name in order[1:]:
        node = join(node, leaf(name))
    return node


@dataclass(frozen=True)
class TreePlan:
    """A bushy evaluation tree over the positive core of one conjunct."""

    root: TreeNode
    kl_types: frozenset[str] = frozenset()
    checkpoints: tuple[NegationCheckpoint, ...] = ()

    def __post_init__(self) -> None:
        names = self.root.leaf_names()
        if len(set(names)) != len(names):
            raise ContractError("evaluation tree repeats a type")


Plan = Union[OrderPlan, TreePlan]


# ---------------------------------------------------------------------------
# Match reports


@dataclass(frozen=True)
class MatchReport:
    """One reported full match.

    ``serials`` is the sorted tuple of contributing event serials and is the
    canonical identity of the match; ``groups`` maps aliases to the events
    bound at that position (more than one for Kleene positions).
    ``emit_serial`` is the arrival index at which the match was emitted.
    """

    serials: tuple[int, ...]
    groups: tuple[tuple[str, tuple[int, ...]], ...]
    ts_min: float
    ts_max: float
    emit_serial: int
    completion_serial: int
    detected_at: float = 0.0
    latency: float = 0.0

    def group_map(self) -> dict[str, tuple[int, ...]]:
        return dict(self.groups)


def match_key(report: MatchReport) -> tuple[int, ...]:
    return report.serials
