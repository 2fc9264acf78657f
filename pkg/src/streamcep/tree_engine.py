"""Instance-based evaluation of a binary tree plan.

Every node of the plan keeps the set of live instances over its leaf
types.  An arriving event becomes one leaf instance (or one per subset
for a Kleene leaf), and each new instance immediately joins the stored
instances of its sibling, cascading upward; a new root instance is a
full match.  Joining on insert keeps every pair of child instances
combined exactly once.
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
    ContractError,
    Event,
    NegationCheckpoint,
    OrderPlan,
    Pattern,
    Predicate,
    TreePlan,
    evaluate_predicate,
    left_deep_tree,
)
from .nfa import DEFAULT_KL_CAP
from .transform import NegationSpec, NormalizedConjunct, normalize_pattern


class _PendingMatch:
    __slots__ = ("bindings", "deadline")

    def __init__(self, bindings: dict, deadline: float):
        self.bindings = bindings
        self.deadline = deadline


class _Instance:
    __slots__ = ("bindings", "min_ts", "max_ts")

    def __init__(self, bindings: dict, min_ts: float, max_ts: float):
        self.bindings = bindings
        self.min_ts = min_ts
        self.max_ts = max_ts


class TreeStructure:
    """Static shape of the tree: nodes in post-order, predicate and
    checkpoint assignment, Kleene and negation bookkeeping."""

    def __init__(self, plan: TreePlan, conjunct: NormalizedConjunct):
        core = conjunct.core
        type_alias = {l.type_name: l.alias for l in core.leaves()}
        if set(plan.root.leaf_names()) != set(type_alias):
            raise ContractError(
                "plan types do not match the pattern's positive types"
            )
        self.window = core.window
        self.alias_order = tuple(l.alias for l in core.leaves())
        self.nodes = list(plan.root.postorder())
        self.root_index = len(self.nodes) - 1
        index_of = {id(node): i for i, node in enumerate(self.nodes)}
        self.parent = [-1] * len(self.nodes)
        self.sibling = [-1] * len(self.nodes)
        for i, node in enumerate(self.nodes):
            if node.is_leaf:
                continue
            li, ri = index_of[id(node.left)], index_of[id(node.right)]
            self.parent[li] = self.parent[ri] = i
            self.sibling[li], self.sibling[ri] = ri, li
        self.labels = [self._label(node) for node in self.nodes]
        self.leaf_index = {
            node.type_name: i
            for i, node in enumerate(self.nodes) if node.is_leaf
        }
        self.alias_at = {
            i: type_alias[node.type_name]
            for i, node in enumerate(self.nodes) if node.is_leaf
        }
        self.kl_leaves = frozenset(
            i for i, node in enumerate(self.nodes)
            if node.is_leaf and node.type_name in plan.kl_types
        )
        self.leaf_indices = frozenset(self.leaf_index.values())
        self.singleton_leaves = self.leaf_indices - self.kl_leaves
        # Predicates live at the lowest node covering all their aliases:
        # single-position predicates filter their leaf, the rest are
        # verified by the join that first sees both sides.
        leaf_of_alias = {a: i for i, a in self.alias_at.items()}
        self.node_predicates: list[list[Predicate]] = [[] for _ in self.nodes]
        for pred in core.predicates:
            cover = {leaf_of_alias[a] for a in pred.aliases()}
            self.node_predicates[self._lowest_covering(cover)].append(pred)
        self.checkpoints: list[list[NegationSpec]] = [[] for _ in self.nodes]
        checkpoint_position = {c.alias: c.position for c in plan.checkpoints}
        completion: list[NegationSpec] = []
        for spec in conjunct.negations:
            if spec.alias not in checkpoint_position:
                raise ContractError(
                    f"plan lacks a checkpoint for negated position {spec.alias!r}"
                )
            if final_at_checkpoint(spec):
                self.checkpoints[checkpoint_position[spec.alias]].append(spec)
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

    def _label(self, node) -> str:
        if node.is_leaf:
            return node.type_name
        return f"({self._label(node.left)},{self._label(node.right)})"

    def _lowest_covering(self, leaf_indices: set[int]) -> int:
        paths = []
        for i in leaf_indices:
            path = [i]
            while self.parent[path[-1]] != -1:
                path.append(self.parent[path[-1]])
            paths.append(set(path))
        common = set.intersection(*paths)
        return min(common)


def build_tree_engine(plan: TreePlan, pattern: Pattern) -> "TreeEngine":
    """Engine for a single-conjunct pattern under the given tree plan."""
    norm = normalize_pattern(pattern)
    if len(norm.conjuncts) != 1:
        raise ContractError("the tree engine executes one conjunct at a time")
    return TreeEngine(plan, norm.conjuncts[0])


def tree_plan_from_order(plan: OrderPlan, conjunct: NormalizedConjunct) -> TreePlan:
    """Left-deep tree equivalent of an order plan, checkpoints re-anchored."""
    root = left_deep_tree(plan.order)
    postorder = list(root.postorder())
    checkpoints = []
    for spec in conjunct.negations:
        deps = set(spec.dependencies)
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
        checkpoints.append(NegationCheckpoint(
            type_name=spec.type_name,
            alias=spec.alias,
            position=postorder.index(node),
            dependencies=spec.dependencies,
        ))
    return TreePlan(
        root=root, kl_types=plan.kl_types, checkpoints=tuple(checkpoints)
    )


class TreeEngine:
    def __init__(self, plan: TreePlan, conjunct: NormalizedConjunct,
                 kl_cap: int = DEFAULT_KL_CAP):
        self.tree = TreeStructure(plan, conjunct)
        self.kl_cap = kl_cap
        self.window = self.tree.window
        self.instances: list[list[_Instance]] = [[] for _ in self.tree.nodes]
        self.kl_pool: dict[int, list[Event]] = {i: [] for i in self.tree.kl_leaves}
        self.blocker_buffers: dict[str, list[Event]] = {
            t: [] for t in self.tree.blocker_types
        }
        self.pending: list[_PendingMatch] = []
        self.metrics = EngineMetrics()
        self._latest = float("-inf")

    @property
    def alias_order(self) -> tuple[str, ...]:
        return self.tree.alias_order

    # -- absence tests -------------------------------------------------------

    def _blocked_at(self, node_index: int, bindings: dict) -> bool:
        for spec in self.tree.checkpoints[node_index]:
            for blocker in self.blocker_buffers.get(spec.type_name, ()):
                if blocks(spec, blocker, bindings, self.window):
                    return True
        return False

    def _blocked_on_completion(self, bindings: dict) -> bool:
        for spec in self.tree.completion_specs + self.tree.pending_specs:
            for blocker in self.blocker_buffers.get(spec.type_name, ()):
                if blocks(spec, blocker, bindings, self.window):
                    return True
        return False

    def _apply_blocker(self, event: Event) -> None:
        if event.type_name not in self.tree.pending_blockers or not self.pending:
            return
        self.pending = [
            entry for entry in self.pending
            if not any(
                spec.type_name == event.type_name
                and blocks(spec, event, entry.bindings, self.window)
                for spec in self.tree.pending_specs
            )
        ]

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

    # -- instance propagation ------------------------------------------------

    def _report_root(self, instance: _Instance, out: list[Candidate],
                     emission_serial: int) -> None:
        if self._blocked_on_completion(instance.bindings):
            return
        if self.tree.pending_specs:
            self.pending.append(_PendingMatch(
                instance.bindings,
                absence_deadline(instance.bindings, self.window),
            ))
            return
        out.append(make_candidate(instance.bindings, emission_serial))

    def _propagate(self, node_index: int, instance: _Instance,
                   out: list[Candidate], emission_serial: int) -> None:
        self.metrics.instances_created += 1
        if node_index == self.tree.root_index:
            self._report_root(instance, out, emission_serial)
            return
        slot = self.instances[node_index]
        slot.append(instance)
        self.metrics.note_node(self.tree.labels[node_index], len(slot))
        parent = self.tree.parent[node_index]
        for other in list(self.instances[self.tree.sibling[node_index]]):
            self._try_join(parent, instance, other, out, emission_serial)

    def _try_join(self, parent: int, left: _Instance, right: _Instance,
                  out: list[Candidate], emission_serial: int) -> None:
        lo = min(left.min_ts, right.min_ts)
        hi = max(left.max_ts, right.max_ts)
        if hi - lo > self.window:
            return
        bindings = {**left.bindings, **right.bindings}
        if not all(
            evaluate_predicate(p, bindings)
            for p in self.tree.node_predicates[parent]
        ):
            return
        if self._blocked_at(parent, bindings):
            return
        self._propagate(parent, _Instance(bindings, lo, hi), out, emission_serial)

    def _leaf_instances(self, node_index: int, event: Event) -> list[_Instance]:
        alias = self.tree.alias_at[node_index]
        singleton = {alias: event}
        if not all(
            evaluate_predicate(p, singleton)
            for p in self.tree.node_predicates[node_index]
        ):
            return []
        if node_index not in self.tree.kl_leaves:
            return [_Instance(singleton, event.timestamp, event.timestamp)]
        pool = self.kl_pool[node_index]
        room = self.kl_cap - 1
        if len(pool) > room:
            self.metrics.kl_overflows += 1
        made = []
        for size in range(0, min(len(pool), room) + 1):
            for combo in combinations(pool, size):
                group = combo + (event,)
                lo = min(e.timestamp for e in group)
                hi = max(e.timestamp for e in group)
                if hi - lo > self.window:
                    continue
                made.append(_Instance({alias: group}, lo, hi))
        pool.append(event)
        return made

    # -- public protocol -----------------------------------------------------

    def process_event(self, event: Event) -> list[Candidate]:
        out: list[Candidate] = []
        self.metrics.events += 1
        self._latest = max(self._latest, event.timestamp)
        self._resolve_pending(event.timestamp, event.serial, out)
        self._apply_blocker(event)
        if event.type_name in self.blocker_buffers:
            self.blocker_buffers[event.type_name].append(event)
        leaf_index = self.tree.leaf_index.get(event.type_name)
        if leaf_index is not None:
            for instance in self._leaf_instances(leaf_index, event):
                self._propagate(leaf_index, instance, out, event.serial)
        self._evict(event.timestamp)
        live = sum(
            len(slot) for i, slot in enumerate(self.instances)
            if i not in self.tree.singleton_leaves
        )
        self.metrics.live_partials = live + len(self.pending)
        self.metrics.buffered = (
            sum(len(self.instances[i]) for i in self.tree.singleton_leaves)
            + sum(len(p) for p in self.kl_pool.values())
            + sum(len(b) for b in self.blocker_buffers.values())
        )
        self.metrics.note_usage()
        return out

    def end(self, max_serial: int) -> list[Candidate]:
        out: list[Candidate] = []
        self._resolve_pending(float("inf"), max_serial + 1, out)
        return out

    def _evict(self, latest: float) -> None:
        horizon = latest - self.window
        for i, slot in enumerate(self.instances):
            if slot and any(x.min_ts < horizon for x in slot):
                self.instances[i] = [x for x in slot if x.min_ts >= horizon]
        for pool in self.kl_pool.values():
            while pool and pool[0].timestamp < horizon:
                pool.pop(0)
        for buffer in self.blocker_buffers.values():
            while buffer and buffer[0].timestamp < horizon:
                buffer.pop(0)
