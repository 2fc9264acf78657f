"""Shared builders for the test suite: catalogs, patterns, streams, trees."""
from __future__ import annotations

import random

from streamcep.model import (
    AttrRef,
    Leaf,
    OperatorNode,
    Pattern,
    Predicate,
    SEQ,
    StatisticsCatalog,
    TreeNode,
    join,
    leaf,
    selectivity_key,
)
from streamcep.stream import SyntheticConfig, generate_synthetic

UNIVERSE = tuple(chr(ord("A") + i) for i in range(12))


def random_catalog(rng: random.Random, n: int, *, sel_density: float = 0.6,
                   rate_lo: float = 0.1, rate_hi: float = 8.0) -> StatisticsCatalog:
    """A catalog of n types with log-uniform rates and random pair selectivities."""
    types = UNIVERSE[:n]
    rates = {
        t: rate_lo * (rate_hi / rate_lo) ** rng.random() for t in types
    }
    sels = {}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < sel_density:
                sels[selectivity_key(types[i], types[j])] = rng.uniform(0.05, 1.0)
    return StatisticsCatalog(rates=rates, selectivities=sels)


def acyclic_catalog(rng: random.Random, n: int) -> StatisticsCatalog:
    """A catalog whose non-unit selectivities form a random tree over the types.

    Rooted at any type, every other type then has exactly one selectivity
    edge on its path toward the root, which is what the rank-based
    ordering arguments require.
    """
    types = UNIVERSE[:n]
    rates = {t: 0.2 * 40.0 ** rng.random() for t in types}
    sels = {}
    for i in range(1, n):
        parent = rng.randrange(i)
        sels[selectivity_key(types[i], types[parent])] = rng.uniform(0.05, 0.95)
    return StatisticsCatalog(rates=rates, selectivities=sels)


def seq_pattern(types, window: float, predicates=(), aliases=None) -> Pattern:
    if aliases is None:
        aliases = [t.lower() for t in types]
    leaves = tuple(Leaf(t, a) for t, a in zip(types, aliases))
    return Pattern(OperatorNode(SEQ, leaves), tuple(predicates), window)


def offset_pred(a: str, b: str, shift: float, comparator: str = "<") -> Predicate:
    """a.x < b.x + shift over the synthetic uniform attribute."""
    return Predicate(AttrRef(a, "x"), comparator, AttrRef(b, "x"),
                     right_offset=shift)


def workload_pattern(rng: random.Random, size: int, window: float,
                     density: int, off_lo: float = -0.8,
                     off_hi: float = 0.2) -> tuple[tuple[str, ...], Pattern]:
    """A random sequence pattern with offset-comparison predicates.

    The offsets control joint selectivity; drawing them from a range below
    zero keeps most predicates selective without starving the match count.
    """
    types = tuple(rng.sample(UNIVERSE, size))
    aliases = [t.lower() for t in types]
    pairs = [(i, j) for i in range(size) for j in range(i + 1, size)]
    rng.shuffle(pairs)
    preds = [
        offset_pred(aliases[i], aliases[j], rng.uniform(off_lo, off_hi))
        for i, j in pairs[:density]
    ]
    return types, seq_pattern(types, window, preds, aliases)


def workload_stream(types, seed: int, target_events: int, spread: float,
                    min_expected: float = 6.0):
    """A synthetic stream with log-uniform per-type rates.

    Rate sets that would leave some type practically absent are redrawn so
    statistics estimation always has support.
    """
    rng = random.Random(seed)
    for _ in range(64):
        rates = {t: 2.0 ** rng.uniform(-spread, spread) for t in types}
        duration = target_events / sum(rates.values())
        if duration * min(rates.values()) >= min_expected:
            break
    cfg = SyntheticConfig(rates=rates, duration=duration, seed=seed,
                          attributes={"x": (0.0, 1.0)})
    return generate_synthetic(cfg)


def descending_stream(types, seed: int, target_events: int, spread: float):
    """A stream whose rates fall along the pattern positions.

    Later positions are rarer, the regime where processing the final type
    early pays off in partial-match count but costs detection latency.
    """
    rng = random.Random(seed)
    draws = sorted((2.0 ** rng.uniform(-spread, spread) for _ in types),
                   reverse=True)
    rates = dict(zip(types, draws))
    duration = max(target_events / sum(draws), 8.0 / draws[-1])
    cfg = SyntheticConfig(rates=rates, duration=duration, seed=seed,
                          attributes={"x": (0.0, 1.0)})
    return generate_synthetic(cfg)


def all_tree_shapes(names) -> list[TreeNode]:
    """Every binary tree over the given leaf sequence, by split recursion."""
    names = list(names)
    if len(names) == 1:
        return [leaf(names[0])]
    shapes = []
    for cut in range(1, len(names)):
        for left_node in all_tree_shapes(names[:cut]):
            for right_node in all_tree_shapes(names[cut:]):
                shapes.append(join(left_node, right_node))
    return shapes


def random_tree(names, rng: random.Random) -> TreeNode:
    nodes = [leaf(n) for n in names]
    while len(nodes) > 1:
        i = rng.randrange(len(nodes) - 1)
        nodes[i:i + 2] = [join(nodes[i], nodes[i + 1])]
    return nodes[0]


def match_keys(reports) -> set[tuple[int, ...]]:
    return {r.serials for r in reports}


def grouped_keys(reports) -> set[tuple]:
    return {(r.serials, r.groups) for r in reports}
