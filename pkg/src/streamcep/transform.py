"""Pattern rewrites that reduce every supported pattern to conjunctive form.

Plan generation only understands pure conjunctive patterns over positive
singleton positions, so patterns are normalized before planning:

* sequences become conjunctions plus explicit timestamp-order predicates;
* Kleene closures are replaced (for planning purposes) by synthetic types
  whose rate counts the non-empty event subsets per window;
* negated positions are split off into absence checks with a dependency
  set that later anchors their checkpoint in the plan;
* disjunctions distribute into a union of conjunctive subpatterns;
* contiguity strategies add serial-adjacency predicates.

The rewrites are used for planning; execution still enforces the original
semantics (the runtimes consume the annotations produced here).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import product

from .model import (
    AND,
    AttrRef,
    KLEENE,
    Leaf,
    NOT,
    OperatorNode,
    OR,
    Pattern,
    Predicate,
    PARTITION_CONTIGUITY,
    SEQ,
    SelectionStrategy,
    StatisticsCatalog,
    UnsupportedPatternError,
    linear_from_log2,
    validate_pattern,
)

TEMPORAL_ORIGIN = "temporal-order"
CONTIGUITY_ORIGIN = "contiguity"

DEFAULT_TEMPORAL_SELECTIVITY = 0.5


def _require_simple(pattern: Pattern, op: str) -> None:
    if pattern.root.op != op or not pattern.is_simple():
        raise UnsupportedPatternError(f"expected a simple {op} pattern")


# ---------------------------------------------------------------------------
# SEQ -> AND


def seq_to_and(pattern: Pattern) -> Pattern:
    """Replace a simple SEQ by AND plus explicit timestamp predicates.

    The positive (and Kleene) positions get one ``a.ts < b.ts`` predicate
    per adjacent pair of that subsequence, so their ordering survives when
    negated positions are split off.  Each negated position is ordered
    against its nearest positive neighbour on both sides, which is what
    the absence check needs to reconstruct its interval.  Applied to a
    Kleene position an order constraint binds every member of the
    selected set.
    """
    _require_simple(pattern, SEQ)
    leaves = pattern.leaves()

    def order(a: Leaf, b: Leaf) -> Predicate:
        return Predicate(
            AttrRef(a.alias, "ts"), "<", AttrRef(b.alias, "ts"), origin=TEMPORAL_ORIGIN
        )

    positives = [l for l in leaves if not l.negated]
    added = [order(a, b) for a, b in zip(positives, positives[1:])]
    for index, leaf_node in enumerate(leaves):
        if not leaf_node.negated:
            continue
        before = next(
            (l for l in reversed(leaves[:index]) if not l.negated), None
        )
        after = next(
            (l for l in leaves[index + 1 :] if not l.negated), None
        )
        if before is not None:
            added.append(order(before, leaf_node))
        if after is not None:
            added.append(order(leaf_node, after))
    return replace(
        pattern,
        root=OperatorNode(AND, pattern.root.children),
        predicates=pattern.predicates + tuple(added),
    )


# ---------------------------------------------------------------------------
# Kleene rewrite


@dataclass(frozen=True)
class SyntheticType:
    """Planning stand-in for a Kleene position.

    ``log2_rate_window`` is the authoritative field: log2(r' * W) = r * W,
    the number of non-empty subsets of the expected W*r events per window
    (exact whenever r*W is integral).  The linear ``rate`` is materialized
    only while it fits the float range.
    """

    origin: str
    name: str
    log2_rate_window: float
    window: float

    @property
    def log2_rate(self) -> float:
        return self.log2_rate_window - math.log2(self.window)

    @property
    def rate(self) -> float:
        if self.log2_rate_window <= 1020.0:
            return 2.0 ** self.log2_rate_window / self.window
        return linear_from_log2(self.log2_rate)


def synthetic_name(type_name: str) -> str:
    return type_name + "'"


@dataclass(frozen=True)
class KleeneRewrite:
    pattern: Pattern
    stats: StatisticsCatalog
    synthetics: tuple[SyntheticType, ...]


def rewrite_kleene(pattern: Pattern, stats: StatisticsCatalog) -> KleeneRewrite:
    """Replace Kleene positions by synthetic types for planning.

    Each KL(T) leaf becomes a plain leaf of type T' with rate
    2**(r_T * W) / W; selectivities involving T are copied to T'.  The
    returned synthetics record the substitution so plan finalization can
    restore the Kleene markers.
    """
    window = pattern.window
    if not window > 0:
        raise UnsupportedPatternError("Kleene rewrite needs a positive window")
    synthetics: list[SyntheticType] = []
    new_children = []
    for child in pattern.root.children:
        if isinstance(child, Leaf) and child.kleene:
            origin = child.type_name
            name = synthetic_name(origin)
            rate_window = stats.rate(origin) * window
            synthetics.append(SyntheticType(origin, name, rate_window, window))
            unary = tuple(u for u in child.unary if u != KLEENE)
            new_children.append(Leaf(name, child.alias, unary))
        else:
            new_children.append(child)
    if not synthetics:
        return KleeneRewrite(pattern, stats, ())

    new_stats = stats
    for synthetic in synthetics:
        sel_updates = {}
        for key, value in stats.selectivities.items():
            if synthetic.origin in key:
                new_key = tuple(
                    synthetic.name if part == synthetic.origin else part for part in key
                )
                sel_updates[new_key if len(new_key) > 1 else (new_key[0],)] = value
        if synthetic.log2_rate_window <= 1020.0:
            new_stats = new_stats.with_entries(
                rates={synthetic.name: synthetic.rate}, selectivities=sel_updates
            )
        else:
            new_stats = new_stats.with_entries(
                log2_rates={synthetic.name: synthetic.log2_rate},
                selectivities=sel_updates,
            )
    rewritten = replace(pattern, root=OperatorNode(pattern.root.op, tuple(new_children)))
    return KleeneRewrite(rewritten, new_stats, tuple(synthetics))


# ---------------------------------------------------------------------------
# Negation split


@dataclass(frozen=True)
class NegationSpec:
    """Everything needed to test the absence of one negated position.

    ``predicates`` are the pattern predicates touching the negated alias
    (including rewritten timestamp-order constraints); ``dependencies`` are
    the positive event types those predicates reference, which anchor the
    checkpoint during plan finalization.  In ``seq`` mode the blocker must
    fall strictly between the predecessor and successor events (window
    edges when absent); in ``and`` mode it must satisfy the predicates
    inside the full match window.
    """

    alias: str
    type_name: str
    mode: str  # "seq" | "and"
    predicates: tuple[Predicate, ...] = ()
    dependencies: tuple[str, ...] = ()
    predecessor: str | None = None  # alias
    successor: str | None = None  # alias

    @property
    def needs_pending(self) -> bool:
        """True when blockers may still arrive after the match completes."""
        if self.mode == "seq":
            return self.successor is None
        return not self._bounded_above()

    def _bounded_above(self) -> bool:
        for pred in self.predicates:
            left, right = pred.left, pred.right
            if not isinstance(right, AttrRef) or pred.right_offset:
                continue
            # Only a strict bound is final once the bounding member arrives;
            # with <= an equal-timestamp blocker may still follow it.
            if (
                left.alias == self.alias
                and left.attribute in ("ts", "timestamp")
                and pred.comparator == "<"
                and right.attribute in ("ts", "timestamp")
                and right.alias != self.alias
            ):
                return True
            if (
                right.alias == self.alias
                and right.attribute in ("ts", "timestamp")
                and pred.comparator == ">"
                and left.attribute in ("ts", "timestamp")
                and left.alias != self.alias
            ):
                return True
        return False

    def _bounded_below(self) -> bool:
        for pred in self.predicates:
            left, right = pred.left, pred.right
            if not isinstance(right, AttrRef) or pred.right_offset:
                continue
            if (
                left.alias == self.alias
                and left.attribute in ("ts", "timestamp")
                and pred.comparator in (">", ">=")
                and right.attribute in ("ts", "timestamp")
                and right.alias != self.alias
            ):
                return True
            if (
                right.alias == self.alias
                and right.attribute in ("ts", "timestamp")
                and pred.comparator in ("<", "<=")
                and left.attribute in ("ts", "timestamp")
                and left.alias != self.alias
            ):
                return True
        return False

    @property
    def ts_confined(self) -> bool:
        """Predicates pin the blocker's timestamp between bound members.

        With a lower bound present, the window's trailing edge can never
        be the binding constraint (the bounding member sits inside the
        window of everything bound), so the test gives the same answer on
        a partial as on the full match.
        """
        return self._bounded_above() and self._bounded_below()


def split_negation(pattern: Pattern) -> tuple[Pattern, tuple[NegationSpec, ...]]:
    """Separate negated positions from the positive core.

    Returns the pattern restricted to positive positions plus one
    ``NegationSpec`` per negated position.  For sequences the dependency
    set is the nearest positive neighbor on each side; for conjunctions it
    is the set of positive types referenced by the negated position's
    predicates (possibly empty).
    """
    if pattern.root.op not in (SEQ, AND) or not pattern.is_simple():
        raise UnsupportedPatternError("negation split expects a simple SEQ or AND")
    leaves = pattern.leaves()
    negated = [l for l in leaves if l.negated]
    positives = [l for l in leaves if not l.negated]
    if not negated:
        return pattern, ()
    if not positives:
        raise UnsupportedPatternError("pattern consists only of negated positions")
    negated_aliases = {l.alias for l in negated}
    alias_types = pattern.alias_types()

    specs = []
    for leaf_node in negated:
        touching = tuple(
            p for p in pattern.predicates if leaf_node.alias in p.aliases()
        )
        for pred in touching:
            others = [a for a in pred.aliases() if a != leaf_node.alias]
            if any(a in negated_aliases for a in others):
                raise UnsupportedPatternError(
                    "predicates between two negated positions are not supported"
                )
        if pattern.root.op == SEQ:
            index = leaves.index(leaf_node)
            predecessor = next(
                (l.alias for l in reversed(leaves[:index]) if not l.negated), None
            )
            successor = next(
                (l.alias for l in leaves[index + 1 :] if not l.negated), None
            )
            deps = tuple(
                alias_types[a] for a in (predecessor, successor) if a is not None
            )
            specs.append(
                NegationSpec(
                    alias=leaf_node.alias,
                    type_name=leaf_node.type_name,
                    mode="seq",
                    predicates=touching,
                    dependencies=deps,
                    predecessor=predecessor,
                    successor=successor,
                )
            )
        else:
            dep_types = []
            for pred in touching:
                for a in pred.aliases():
                    if a != leaf_node.alias and alias_types[a] not in dep_types:
                        dep_types.append(alias_types[a])
            specs.append(
                NegationSpec(
                    alias=leaf_node.alias,
                    type_name=leaf_node.type_name,
                    mode="and",
                    predicates=touching,
                    dependencies=tuple(dep_types),
                )
            )

    kept_predicates = tuple(
        p
        for p in pattern.predicates
        if not (set(p.aliases()) & negated_aliases)
    )
    core = replace(
        pattern,
        root=OperatorNode(pattern.root.op, tuple(positives)),
        predicates=kept_predicates,
    )
    return core, tuple(specs)


# ---------------------------------------------------------------------------
# Disjunction -> DNF


def to_dnf(pattern: Pattern) -> tuple[Pattern, ...]:
    """Distribute disjunctions into a union of conjunctive subpatterns.

    Every returned pattern has a simple SEQ or AND root.  Sequences nested
    under a conjunction are flattened via ``seq_to_and``.  Predicates are
    kept in each conjunct that binds all of their aliases; a predicate
    spanning two branches of one OR can never bind and is dropped.
    """

    def alternatives(node) -> list[tuple[object, tuple[Predicate, ...]]]:
        if isinstance(node, Leaf):
            return [(node, ())]
        if node.op == OR:
            out = []
            for child in node.children:
                out.extend(alternatives(child))
            return out
        combos = [alternatives(child) for child in node.children]
        results = []
        for combo in product(*combos):
            children: list[Leaf] = []
            preds: list[Predicate] = []
            for fragment, extra in combo:
                preds.extend(extra)
                if isinstance(fragment, Leaf):
                    children.append(fragment)
                elif fragment.op == node.op:
                    children.extend(fragment.children)
                elif node.op == AND and fragment.op == SEQ:
                    flattened = seq_to_and(
                        Pattern(fragment, window=pattern.window)
                    )
                    children.extend(flattened.root.children)
                    preds.extend(flattened.predicates)
                else:
                    raise UnsupportedPatternError(
                        f"cannot nest {fragment.op} inside {node.op}"
                    )
            results.append((OperatorNode(node.op, tuple(children)), tuple(preds)))
        return results

    conjuncts = []
    for fragment, preds in alternatives(pattern.root):
        if isinstance(fragment, Leaf):
            fragment = OperatorNode(AND, (fragment,))
        aliases = {l.alias for l in Pattern(fragment).leaves()}
        kept = tuple(
            p for p in pattern.predicates if set(p.aliases()) <= aliases
        )
        conjuncts.append(
            replace(pattern, root=fragment, predicates=kept + preds)
        )
    return tuple(conjuncts)


# ---------------------------------------------------------------------------
# Contiguity predicates


def add_contiguity_predicates(pattern: Pattern, strategy: SelectionStrategy) -> Pattern:
    """Encode a contiguity requirement as serial-adjacency predicates.

    Strict contiguity demands globally adjacent serial numbers between the
    positive positions of a sequence; partition contiguity demands equal
    partition keys and adjacent per-partition serials (the ``pserial``
    attribute attached by the stream layer).
    """
    if not strategy.contiguous:
        raise UnsupportedPatternError("strategy adds no contiguity predicates")
    if pattern.root.op != SEQ or not pattern.is_simple():
        raise UnsupportedPatternError("contiguity requires a simple sequence pattern")
    positives = [l for l in pattern.leaves() if not l.negated]
    if any(l.kleene for l in positives):
        raise UnsupportedPatternError("contiguity over Kleene positions is not supported")

    added: list[Predicate] = []
    for prev, nxt in zip(positives, positives[1:]):
        if strategy.kind == PARTITION_CONTIGUITY:
            key = strategy.partition_key
            added.append(
                Predicate(
                    AttrRef(nxt.alias, key), "=", AttrRef(prev.alias, key),
                    origin=CONTIGUITY_ORIGIN,
                )
            )
            added.append(
                Predicate(
                    AttrRef(nxt.alias, "pserial"), "=", AttrRef(prev.alias, "pserial"),
                    right_offset=1.0, origin=CONTIGUITY_ORIGIN,
                )
            )
        else:
            added.append(
                Predicate(
                    AttrRef(nxt.alias, "serial"), "=", AttrRef(prev.alias, "serial"),
                    right_offset=1.0, origin=CONTIGUITY_ORIGIN,
                )
            )
    return replace(pattern, predicates=pattern.predicates + tuple(added))


# ---------------------------------------------------------------------------
# Normalization pipeline


@dataclass(frozen=True)
class NormalizedConjunct:
    """One conjunctive subpattern, execution-ready.

    ``core`` has an AND root over the positive positions (Kleene markers
    kept on their leaves) with all user, timestamp-order and contiguity
    predicates that bind positive aliases.  ``negations`` carry the
    absence checks; ``seq_aliases`` remembers the original sequence order
    when there was one (it fixes the pattern-final type for latency).
    """

    core: Pattern
    negations: tuple[NegationSpec, ...] = ()
    seq_aliases: tuple[str, ...] | None = None

    def kl_types(self) -> frozenset[str]:
        return frozenset(l.type_name for l in self.core.leaves() if l.kleene)

    def runtime_types(self) -> tuple[str, ...]:
        return tuple(l.type_name for l in self.core.leaves())

    def planning_types(self) -> tuple[str, ...]:
        kl = self.kl_types()
        return tuple(
            synthetic_name(t) if t in kl else t for t in self.runtime_types()
        )

    def planning_to_runtime(self) -> dict[str, str]:
        kl = self.kl_types()
        return {
            (synthetic_name(t) if t in kl else t): t for t in self.runtime_types()
        }

    def last_planning_type(self) -> str | None:
        """Planning name of the pattern-final positive type, if sequential."""
        if not self.seq_aliases:
            return None
        alias_types = self.core.alias_types()
        for alias in reversed(self.seq_aliases):
            if alias in alias_types:
                name = alias_types[alias]
                return synthetic_name(name) if name in self.kl_types() else name
        return None


@dataclass(frozen=True)
class NormalizedPattern:
    original: Pattern
    conjuncts: tuple[NormalizedConjunct, ...]


def normalize_pattern(pattern: Pattern) -> NormalizedPattern:
    """Reduce any supported pattern to a union of conjunctive cores."""
    violations = validate_pattern(pattern)
    if violations:
        raise UnsupportedPatternError(
            f"pattern fails validation: {', '.join(violations)}"
        )
    strategy = pattern.strategy
    conjuncts = []
    for conjunct in to_dnf(pattern):
        seq_aliases = None
        if conjunct.root.op == SEQ:
            seq_aliases = tuple(l.alias for l in conjunct.leaves())
            if strategy.contiguous:
                conjunct = add_contiguity_predicates(conjunct, strategy)
            conjunct = seq_to_and(conjunct)
        elif strategy.contiguous:
            raise UnsupportedPatternError("contiguity requires a sequence pattern")
        core, negations = split_negation(conjunct)
        conjuncts.append(
            NormalizedConjunct(core=core, negations=negations, seq_aliases=seq_aliases)
        )
    return NormalizedPattern(original=pattern, conjuncts=tuple(conjuncts))


def planning_catalog(
    conjunct: NormalizedConjunct,
    stats: StatisticsCatalog,
    temporal_selectivity: float = DEFAULT_TEMPORAL_SELECTIVITY,
) -> tuple[StatisticsCatalog, tuple[SyntheticType, ...]]:
    """Statistics for planning one conjunct: synthetic Kleene rates plus
    the default selectivity of every rewritten timestamp-order predicate
    multiplied into its pair entry."""
    core = conjunct.core
    catalog = stats
    sel_updates: dict[tuple[str, ...], float] = {}
    alias_types = core.alias_types()
    for pred in core.predicates:
        if pred.origin != TEMPORAL_ORIGIN:
            continue
        names = sorted({alias_types[a] for a in pred.aliases()})
        if len(names) != 2:
            continue
        key = tuple(names)
        current = sel_updates.get(key, catalog.sel(*key))
        sel_updates[key] = current * temporal_selectivity
    if sel_updates:
        catalog = catalog.with_entries(selectivities=sel_updates)

    kl = conjunct.kl_types()
    if not kl:
        return catalog, ()
    window = core.window
    planning_pattern = Pattern(
        root=OperatorNode(AND, tuple(core.leaves())),
        predicates=(),
        window=window,
    )
    rewrite = rewrite_kleene(planning_pattern, catalog)
    return rewrite.stats, rewrite.synthetics
