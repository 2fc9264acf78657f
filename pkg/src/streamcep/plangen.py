"""Plan-generation algorithms.

All searches run over the planning view of one conjunctive core: positive
event types with Kleene positions replaced by synthetic types.  Costs are
evaluated through one ``CostModel`` so every algorithm minimizes the same
objective and comparisons stay consistent; ``finalize_plan`` then maps
synthetic names back to their Kleene originals and anchors the negation
checkpoints.
"""
from __future__ import annotations

import itertools
import random
import time
from dataclasses import dataclass

from .cost import CostModel, CostObjective, FAMILY_ANY, FAMILY_NEXT
from .model import (
    ANY_MATCH,
    ContractError,
    NegationCheckpoint,
    OrderPlan,
    Pattern,
    Plan,
    ResourceLimitError,
    SelectionStrategy,
    StatisticsCatalog,
    TreeNode,
    TreePlan,
    UnsupportedPatternError,
    join,
    leaf,
)
from .transform import (
    NormalizedConjunct,
    normalize_pattern,
    planning_catalog,
    synthetic_name,
)

DP_LD_LIMIT = 20
DP_B_LIMIT = 14
II_RANDOM_RESTARTS = 10
II_GREEDY_RESTARTS = 1

ALGORITHM_NAMES = (
    "trivial",
    "efreq",
    "greedy",
    "ii-random",
    "ii-greedy",
    "dp-ld",
    "zstream",
    "zstream-ord",
    "dp-b",
)

ORDER_ALGORITHMS = ("trivial", "efreq", "greedy", "ii-random", "ii-greedy", "dp-ld")
TREE_ALGORITHMS = ("zstream", "zstream-ord", "dp-b")


@dataclass(frozen=True)
class PlanSearchReport:
    algorithm: str
    cost: float
    cost_log2: float
    candidates: int
    wall_time: float
    seed: int | None = None


@dataclass(frozen=True)
class PlannedConjunct:
    plan: Plan
    report: PlanSearchReport


@dataclass(frozen=True)
class PlanBundle:
    """One plan per conjunctive subpattern of a (possibly disjunctive) pattern."""

    algorithm: str
    conjuncts: tuple[PlannedConjunct, ...]

    @property
    def total_cost(self) -> float:
        return sum(c.report.cost for c in self.conjuncts)


def catalan(m: int) -> int:
    if m < 0:
        return 0
    out = 1
    for k in range(m):
        out = out * 2 * (2 * k + 1) // (k + 2)
    return out


# ---------------------------------------------------------------------------
# Searches over a CostModel (index-based; declaration order = index order)


def _order_names(model: CostModel, order: list[int]) -> tuple[str, ...]:
    return tuple(model.types[i] for i in order)


def _search_trivial(model: CostModel) -> tuple[list[int], float, int]:
    order = list(range(len(model.types)))
    return order, model.order_total(model.types), 1


def _search_efreq(model: CostModel) -> tuple[list[int], float, int]:
    order = sorted(range(len(model.types)), key=lambda i: (model.sc.wr(i), i))
    return order, model.order_total(_order_names(model, order)), 1


def _search_greedy(model: CostModel) -> tuple[list[int], float, int]:
    n = len(model.types)
    remaining = list(range(n))
    order: list[int] = []
    prefix = 0
    candidates = 0
    total = model.sc.zero
    while remaining:
        best_index = None
        best_step = None
        for i in remaining:
            step = model.step_cost(prefix, 1 << i)
            candidates += 1
            if best_step is None or step < best_step:
                best_index, best_step = i, step
        order.append(best_index)
        remaining.remove(best_index)
        prefix |= 1 << best_index
        total = model.sc.add(total, best_step)
    return order, total, candidates


def _neighbors(order: list[int]):
    n = len(order)
    for i in range(n):
        for j in range(i + 1, n):
            nxt = list(order)
            nxt[i], nxt[j] = nxt[j], nxt[i]
            yield nxt
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                forward = list(order)
                forward[i], forward[j], forward[k] = order[j], order[k], order[i]
                yield forward
                backward = list(order)
                backward[i], backward[j], backward[k] = order[k], order[i], order[j]
                yield backward


def _search_ii(
    model: CostModel,
    seed: int,
    restarts: int,
    init: str,
    first_improvement: bool = False,
) -> tuple[list[int], float, int]:
    if restarts < 1:
        raise ContractError("iterative improvement needs at least one restart")
    n = len(model.types)
    rng = random.Random(seed)
    candidates = 0
    greedy_order = None
    if init == "greedy":
        greedy_order, _, greedy_count = _search_greedy(model)
        candidates += greedy_count

    best_order = None
    best_cost = None
    for _ in range(restarts):
        if init == "greedy":
            order = list(greedy_order)
        else:
            order = list(range(n))
            rng.shuffle(order)
        cost = model.order_total(_order_names(model, order))
        candidates += 1
        improved = True
        while improved:
            improved = False
            move_order = None
            move_cost = cost
            for neighbor in _neighbors(order):
                c = model.order_total(_order_names(model, neighbor))
                candidates += 1
                if c < move_cost:
                    move_order, move_cost = neighbor, c
                    if first_improvement:
                        break
            if move_order is not None:
                order, cost = move_order, move_cost
                improved = True
        if best_cost is None or cost < best_cost:
            best_order, best_cost = order, cost
    return best_order, best_cost, candidates


def _search_dp_ld(model: CostModel, limit: int = DP_LD_LIMIT) -> tuple[list[int], float, int]:
    n = len(model.types)
    if n > limit:
        raise ResourceLimitError(
            f"order search by dynamic programming is limited to {limit} types; "
            f"the pattern has {n}"
        )
    dp_cost = {0: model.sc.zero}
    dp_order: dict[int, tuple[int, ...]] = {0: ()}
    candidates = 0
    for mask in sorted(range(1, 1 << n), key=lambda m: (bin(m).count("1"), m)):
        best = None
        best_prev = None
        for i in range(n):
            bit = 1 << i
            if not mask & bit:
                continue
            prev = mask ^ bit
            cand = model.sc.add(dp_cost[prev], model.step_cost(prev, bit))
            candidates += 1
            if best is None or cand < best:
                best, best_prev = cand, (prev, i)
        dp_cost[mask] = best
        dp_order[mask] = dp_order[best_prev[0]] + (best_prev[1],)
    full = (1 << n) - 1
    return list(dp_order[full]), dp_cost[full], candidates


def _interval_trees(
    lo: int, hi: int, leaves: list[TreeNode], memo: dict
) -> list[TreeNode]:
    if (lo, hi) in memo:
        return memo[(lo, hi)]
    if hi - lo == 1:
        out = [leaves[lo]]
    else:
        out = []
        for split in range(lo + 1, hi):
            for left in _interval_trees(lo, split, leaves, memo):
                for right in _interval_trees(split, hi, leaves, memo):
                    out.append(join(left, right))
    memo[(lo, hi)] = out
    return out


def _search_zstream(
    model: CostModel, leaf_names: tuple[str, ...]
) -> tuple[TreeNode, float, int]:
    leaves = [leaf(name) for name in leaf_names]
    best = None
    best_cost = None
    count = 0
    for tree in _interval_trees(0, len(leaves), leaves, {}):
        count += 1
        cost = model.tree_total(tree)
        if best_cost is None or cost < best_cost:
            best, best_cost = tree, cost
    return best, best_cost, count


def _submask_splits(mask: int):
    """Proper splits of mask, left half holding mask's lowest set bit."""
    low = mask & -mask
    sub = (mask - 1) & mask
    while sub:
        if sub & low and sub != mask:
            yield sub, mask ^ sub
        sub = (sub - 1) & mask


def _search_dp_b(model: CostModel, limit: int = DP_B_LIMIT) -> tuple[TreeNode, float, int]:
    n = len(model.types)
    if n > limit:
        raise ResourceLimitError(
            f"tree search by dynamic programming is limited to {limit} types; "
            f"the pattern has {n}"
        )
    dp_cost: dict[int, float] = {}
    dp_tree: dict[int, TreeNode] = {}
    for i in range(n):
        bit = 1 << i
        dp_cost[bit] = model.leaf_cost(bit)
        dp_tree[bit] = leaf(model.types[i])
    candidates = 0
    for mask in sorted(range(1, 1 << n), key=lambda m: (bin(m).count("1"), m)):
        if bin(mask).count("1") < 2:
            continue
        best = None
        best_split = None
        for left_bits, right_bits in _submask_splits(mask):
            cand = model.sc.add(
                model.sc.add(dp_cost[left_bits], dp_cost[right_bits]),
                model.join_cost(left_bits, right_bits),
            )
            candidates += 1
            if best is None or cand < best:
                best, best_split = cand, (left_bits, right_bits)
        dp_cost[mask] = best
        dp_tree[mask] = join(dp_tree[best_split[0]], dp_tree[best_split[1]])
    full = (1 << n) - 1
    return dp_tree[full], dp_cost[full], candidates


# ---------------------------------------------------------------------------
# Brute-force references (used by the test suite, exported for the CLI verify)


def brute_force_order(model: CostModel) -> tuple[tuple[str, ...], float]:
    best = None
    best_cost = None
    for perm in itertools.permutations(model.types):
        cost = model.order_total(perm)
        if best_cost is None or cost < best_cost:
            best, best_cost = perm, cost
    return best, best_cost


def _all_trees(bits: int, model: CostModel, memo: dict) -> list[tuple[TreeNode, int]]:
    if bits in memo:
        return memo[bits]
    if bin(bits).count("1") == 1:
        index = bits.bit_length() - 1
        out = [(leaf(model.types[index]), bits)]
    else:
        out = []
        for left_bits, right_bits in _submask_splits(bits):
            for lt, _ in _all_trees(left_bits, model, memo):
                for rt, _ in _all_trees(right_bits, model, memo):
                    out.append((join(lt, rt), bits))
    memo[bits] = out
    return out


def brute_force_tree(model: CostModel) -> tuple[TreeNode, float]:
    full = (1 << len(model.types)) - 1
    best = None
    best_cost = None
    for tree, _ in _all_trees(full, model, {}):
        cost = model.tree_total(tree)
        if best_cost is None or cost < best_cost:
            best, best_cost = tree, cost
    return best, best_cost


# ---------------------------------------------------------------------------
# Pattern-level wiring


def _single_conjunct(pattern: Pattern) -> NormalizedConjunct:
    norm = normalize_pattern(pattern)
    if len(norm.conjuncts) != 1:
        raise UnsupportedPatternError(
            "disjunctive patterns are planned per conjunct; use generate_plan"
        )
    return norm.conjuncts[0]


def _default_last_type(conjunct: NormalizedConjunct, catalog: StatisticsCatalog) -> str:
    """Pattern-final type for latency: the declared sequence tail, else the
    highest-rate type (the one most likely to arrive last among the match's
    events)."""
    last = conjunct.last_planning_type()
    if last is not None:
        return last
    types = conjunct.planning_types()
    return max(types, key=lambda t: (catalog.log2_rate(t), -types.index(t)))


def conjunct_model(
    conjunct: NormalizedConjunct,
    stats: StatisticsCatalog,
    family: str = FAMILY_ANY,
    alpha: float = 0.0,
    last_type: str | None = None,
) -> CostModel:
    catalog, _ = planning_catalog(conjunct, stats)
    if alpha > 0 and last_type is None:
        last_type = _default_last_type(conjunct, catalog)
    objective = CostObjective(family=family, alpha=alpha, last_type=last_type)
    return CostModel(
        conjunct.planning_types(), catalog, conjunct.core.window, objective
    )


def family_for(strategy: SelectionStrategy) -> str:
    return FAMILY_ANY if strategy.kind == ANY_MATCH else FAMILY_NEXT


def finalize_plan(
    kind: str,
    payload,
    conjunct: NormalizedConjunct,
) -> Plan:
    """Map a search result over planning names back to a runtime plan.

    Synthetic Kleene stand-ins are restored to their original type names
    with KL markers, and each negation checkpoint is placed at the
    earliest step (or lowest tree node) whose accepted types cover the
    checkpoint's dependency set.
    """
    mapping = conjunct.planning_to_runtime()
    kl = conjunct.kl_types()

    if kind == "order":
        order = tuple(mapping.get(name, name) for name in payload)
        checkpoints = []
        for spec in conjunct.negations:
            deps = set(spec.dependencies)
            if not deps <= set(order):
                raise ContractError(
                    f"checkpoint for {spec.type_name} depends on types "
                    f"missing from the plan"
                )
            position = 1
            seen: set[str] = set()
            for step, name in enumerate(order, start=1):
                seen.add(name)
                if deps <= seen:
                    position = step if deps else 1
                    break
            checkpoints.append(
                NegationCheckpoint(
                    type_name=spec.type_name,
                    alias=spec.alias,
                    position=position,
                    dependencies=spec.dependencies,
                )
            )
        return OrderPlan(order=order, kl_types=kl, checkpoints=tuple(checkpoints))

    def map_tree(node: TreeNode) -> TreeNode:
        if node.is_leaf:
            return leaf(mapping.get(node.type_name, node.type_name))
        return join(map_tree(node.left), map_tree(node.right))

    root = map_tree(payload)
    postorder = list(root.postorder())
    checkpoints = []
    for spec in conjunct.negations:
        deps = set(spec.dependencies)
        if not deps <= set(root.leaf_names()):
            raise ContractError(
                f"checkpoint for {spec.type_name} depends on types missing "
                f"from the plan"
            )
        node = root
        if deps:
            while not node.is_leaf:
                if deps <= set(node.left.leaf_names()):
                    node = node.left
                elif deps <= set(node.right.leaf_names()):
                    node = node.right
                else:
                    break
        else:
            while not node.is_leaf:
                node = node.left
        checkpoints.append(
            NegationCheckpoint(
                type_name=spec.type_name,
                alias=spec.alias,
                position=postorder.index(node),
                dependencies=spec.dependencies,
            )
        )
    return TreePlan(root=root, kl_types=kl, checkpoints=tuple(checkpoints))


def _dispatch(
    algorithm: str,
    model: CostModel,
    seed: int,
    restarts: int | None,
    first_improvement: bool,
    leaf_order: tuple[str, ...] | None,
) -> tuple[str, object, float, int, int | None]:
    if algorithm == "trivial":
        order, cost, count = _search_trivial(model)
        return "order", _order_names(model, order), cost, count, None
    if algorithm == "efreq":
        order, cost, count = _search_efreq(model)
        return "order", _order_names(model, order), cost, count, None
    if algorithm == "greedy":
        order, cost, count = _search_greedy(model)
        return "order", _order_names(model, order), cost, count, None
    if algorithm == "ii-random":
        order, cost, count = _search_ii(
            model, seed, restarts or II_RANDOM_RESTARTS, "random", first_improvement
        )
        return "order", _order_names(model, order), cost, count, seed
    if algorithm == "ii-greedy":
        order, cost, count = _search_ii(
            model, seed, restarts or II_GREEDY_RESTARTS, "greedy", first_improvement
        )
        return "order", _order_names(model, order), cost, count, seed
    if algorithm == "dp-ld":
        order, cost, count = _search_dp_ld(model)
        return "order", _order_names(model, order), cost, count, None
    if algorithm == "zstream":
        names = leaf_order if leaf_order is not None else model.types
        tree, cost, count = _search_zstream(model, tuple(names))
        return "tree", tree, cost, count, None
    if algorithm == "zstream-ord":
        order, _, greedy_count = _search_greedy(model)
        tree, cost, count = _search_zstream(model, _order_names(model, order))
        return "tree", tree, cost, count + greedy_count, None
    if algorithm == "dp-b":
        tree, cost, count = _search_dp_b(model)
        return "tree", tree, cost, count, None
    raise ContractError(f"unknown algorithm {algorithm!r}")


def generate_plan(
    pattern: Pattern,
    stats: StatisticsCatalog,
    algorithm: str,
    alpha: float = 0.0,
    seed: int = 0,
    strategy: SelectionStrategy | None = None,
    last_type: str | None = None,
    restarts: int | None = None,
    first_improvement: bool = False,
    leaf_order: tuple[str, ...] | None = None,
) -> PlanBundle:
    """Plan every conjunct of the pattern with the named algorithm."""
    if algorithm not in ALGORITHM_NAMES:
        raise ContractError(f"unknown algorithm {algorithm!r}")
    strategy = strategy if strategy is not None else pattern.strategy
    family = family_for(strategy)
    norm = normalize_pattern(pattern)
    planned = []
    for conjunct in norm.conjuncts:
        model = conjunct_model(conjunct, stats, family, alpha, last_type)
        kl = conjunct.kl_types()
        mapped_leaf_order = None
        if leaf_order is not None:
            mapped_leaf_order = tuple(
                synthetic_name(n) if n in kl else n for n in leaf_order
            )
        start = time.perf_counter()
        kind, payload, cost, count, used_seed = _dispatch(
            algorithm, model, seed, restarts, first_improvement, mapped_leaf_order
        )
        wall = time.perf_counter() - start
        value = model.value(cost)
        plan = finalize_plan(kind, payload, conjunct)
        planned.append(
            PlannedConjunct(
                plan=plan,
                report=PlanSearchReport(
                    algorithm=algorithm,
                    cost=float(value),
                    cost_log2=value.log2,
                    candidates=count,
                    wall_time=wall,
                    seed=used_seed,
                ),
            )
        )
    return PlanBundle(algorithm=algorithm, conjuncts=tuple(planned))


# -- spec-level single-conjunct entry points --------------------------------


def _order_plan(pattern, stats, algorithm, **kw) -> OrderPlan:
    bundle = generate_plan(pattern, stats, algorithm, **kw)
    return bundle.conjuncts[0].plan


def gen_trivial(pattern: Pattern) -> OrderPlan:
    conjunct = _single_conjunct(pattern)
    return finalize_plan("order", conjunct.planning_types(), conjunct)


def gen_efreq(pattern: Pattern, stats: StatisticsCatalog) -> OrderPlan:
    return _order_plan(pattern, stats, "efreq")


def gen_greedy(
    pattern: Pattern, stats: StatisticsCatalog, alpha: float = 0.0,
    last_type: str | None = None,
) -> OrderPlan:
    return _order_plan(pattern, stats, "greedy", alpha=alpha, last_type=last_type)


def gen_iterative_improvement(
    pattern: Pattern,
    stats: StatisticsCatalog,
    init: str = "random",
    seed: int = 0,
    restarts: int | None = None,
    first_improvement: bool = False,
    alpha: float = 0.0,
    last_type: str | None = None,
) -> OrderPlan:
    if init not in ("random", "greedy"):
        raise ContractError("iterative improvement init must be random or greedy")
    algorithm = "ii-random" if init == "random" else "ii-greedy"
    return _order_plan(
        pattern, stats, algorithm, seed=seed, restarts=restarts,
        first_improvement=first_improvement, alpha=alpha, last_type=last_type,
    )


def gen_dp_ld(
    pattern: Pattern, stats: StatisticsCatalog, alpha: float = 0.0,
    last_type: str | None = None,
) -> OrderPlan:
    return _order_plan(pattern, stats, "dp-ld", alpha=alpha, last_type=last_type)


def gen_zstream(
    pattern: Pattern, stats: StatisticsCatalog,
    leaf_order: tuple[str, ...] | None = None,
) -> TreePlan:
    bundle = generate_plan(pattern, stats, "zstream", leaf_order=leaf_order)
    return bundle.conjuncts[0].plan


def gen_zstream_ord(pattern: Pattern, stats: StatisticsCatalog) -> TreePlan:
    bundle = generate_plan(pattern, stats, "zstream-ord")
    return bundle.conjuncts[0].plan


def gen_dp_b(
    pattern: Pattern, stats: StatisticsCatalog, alpha: float = 0.0,
    last_type: str | None = None,
) -> TreePlan:
    bundle = generate_plan(pattern, stats, "dp-b", alpha=alpha, last_type=last_type)
    return bundle.conjuncts[0].plan


# ---------------------------------------------------------------------------
# Plan evaluation and normalization


def _planning_names_of_plan(plan: Plan, conjunct: NormalizedConjunct):
    kl = conjunct.kl_types()

    def to_planning(name: str) -> str:
        return synthetic_name(name) if name in kl else name

    if isinstance(plan, OrderPlan):
        return "order", tuple(to_planning(n) for n in plan.order)

    def map_tree(node: TreeNode) -> TreeNode:
        if node.is_leaf:
            return leaf(to_planning(node.type_name))
        return join(map_tree(node.left), map_tree(node.right))

    return "tree", map_tree(plan.root)


def plan_cost(
    plan: Plan,
    pattern: Pattern,
    stats: StatisticsCatalog,
    family: str | None = None,
    alpha: float = 0.0,
    last_type: str | None = None,
) -> float:
    """Objective value of an existing plan for a single-conjunct pattern."""
    conjunct = _single_conjunct(pattern)
    if family is None:
        family = family_for(pattern.strategy)
    model = conjunct_model(conjunct, stats, family, alpha, last_type)
    kind, payload = _planning_names_of_plan(plan, conjunct)
    if kind == "order":
        active = model.order_total(payload)
    else:
        active = model.tree_total(payload)
    return float(model.value(active))


def normalized_cost(
    plan: Plan,
    pattern: Pattern,
    stats: StatisticsCatalog,
    family: str | None = None,
    alpha: float = 0.0,
    last_type: str | None = None,
) -> float:
    """Baseline (ascending-rate order) cost divided by the plan's cost."""
    conjunct = _single_conjunct(pattern)
    if family is None:
        family = family_for(pattern.strategy)
    model = conjunct_model(conjunct, stats, family, alpha, last_type)
    base_order, base_active, _ = _search_efreq(model)
    kind, payload = _planning_names_of_plan(plan, conjunct)
    plan_active = (
        model.order_total(payload) if kind == "order" else model.tree_total(payload)
    )
    base = model.value(base_active)
    mine = model.value(plan_active)
    if base.linear != float("inf") and mine.linear != float("inf"):
        return base.linear / mine.linear
    return 2.0 ** (base.log2 - mine.log2)


# ---------------------------------------------------------------------------
# Serialization


def _tree_to_json(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"leaf": node.type_name}
    return {"left": _tree_to_json(node.left), "right": _tree_to_json(node.right)}


def _tree_from_json(data: dict) -> TreeNode:
    if "leaf" in data:
        return leaf(data["leaf"])
    return join(_tree_from_json(data["left"]), _tree_from_json(data["right"]))


def bundle_to_json(bundle: PlanBundle, include_timing: bool = False) -> dict:
    """Serialize a bundle; timing is left out so plan files are repeatable."""
    out = {"algorithm": bundle.algorithm, "conjuncts": []}
    for planned in bundle.conjuncts:
        plan = planned.plan
        entry: dict = {
            "kl": sorted(plan.kl_types),
            "checkpoints": [
                {
                    "type": c.type_name,
                    "alias": c.alias,
                    "position": c.position,
                    "deps": list(c.dependencies),
                }
                for c in plan.checkpoints
            ],
            "cost": planned.report.cost,
            "cost_log2": planned.report.cost_log2,
            "candidates": planned.report.candidates,
            "seed": planned.report.seed,
        }
        if include_timing:
            entry["wall_time"] = planned.report.wall_time
        if isinstance(plan, OrderPlan):
            entry["order"] = list(plan.order)
        else:
            entry["tree"] = _tree_to_json(plan.root)
        out["conjuncts"].append(entry)
    return out


def bundle_from_json(data: dict) -> PlanBundle:
    planned = []
    algorithm = data.get("algorithm", "unknown")
    for entry in data["conjuncts"]:
        kl = frozenset(entry.get("kl", ()))
        checkpoints = tuple(
            NegationCheckpoint(
                type_name=c["type"],
                alias=c["alias"],
                position=c["position"],
                dependencies=tuple(c["deps"]),
            )
            for c in entry.get("checkpoints", ())
        )
        if "order" in entry:
            plan: Plan = OrderPlan(
                order=tuple(entry["order"]), kl_types=kl, checkpoints=checkpoints
            )
        else:
            plan = TreePlan(
                root=_tree_from_json(entry["tree"]), kl_types=kl,
                checkpoints=checkpoints,
            )
        planned.append(
            PlannedConjunct(
                plan=plan,
                report=PlanSearchReport(
                    algorithm=algorithm,
                    cost=entry.get("cost", 0.0),
                    cost_log2=entry.get("cost_log2", 0.0),
                    candidates=entry.get("candidates", 1),
                    wall_time=entry.get("wall_time", 0.0),
                    seed=entry.get("seed"),
                ),
            )
        )
    return PlanBundle(algorithm=algorithm, conjuncts=tuple(planned))
