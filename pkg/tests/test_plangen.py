"""Plan generation: searches, finalization, serialization, worked examples.

The three-type catalog is the same worked example as in the cost tests
(W = 10, rates 1/2/4, selectivities AB 0.5, AC 0.1, BC 1.0), so the
expected orders, trees, and totals are hand-checkable.
"""
import json
import random

import pytest

from streamcep.cost import FAMILY_NEXT
from streamcep.model import (
    AND,
    ContractError,
    Leaf,
    NOT,
    KLEENE,
    OperatorNode,
    OrderPlan,
    Pattern,
    ResourceLimitError,
    SEQ,
    SelectionStrategy,
    StatisticsCatalog,
    TreePlan,
    UnsupportedPatternError,
    NEXT_MATCH,
    OR,
    join,
    leaf,
)
from streamcep.plangen import (
    ALGORITHM_NAMES,
    DP_B_LIMIT,
    DP_LD_LIMIT,
    ORDER_ALGORITHMS,
    TREE_ALGORITHMS,
    PlanBundle,
    brute_force_order,
    brute_force_tree,
    bundle_from_json,
    bundle_to_json,
    catalan,
    conjunct_model,
    finalize_plan,
    gen_dp_b,
    gen_dp_ld,
    gen_efreq,
    gen_greedy,
    gen_iterative_improvement,
    gen_trivial,
    gen_zstream,
    gen_zstream_ord,
    generate_plan,
    normalized_cost,
    plan_cost,
)
from streamcep.transform import normalize_pattern

from helpers import random_catalog

W = 10.0
STATS = StatisticsCatalog(
    rates={"A": 1.0, "B": 2.0, "C": 4.0},
    selectivities={("A", "B"): 0.5, ("A", "C"): 0.1, ("B", "C"): 1.0},
)


def and_pattern(*types, window=W):
    leaves = tuple(Leaf(t, t.lower()) for t in types)
    return Pattern(OperatorNode(AND, leaves), (), window)


def seq_pattern(*leaves, window=W):
    return Pattern(OperatorNode(SEQ, tuple(leaves)), (), window)


P_ABC = and_pattern("A", "B", "C")


def internal_leaf_sets(root):
    return {
        frozenset(node.leaf_names())
        for node in root.postorder()
        if not node.is_leaf
    }


class TestCatalan:
    def test_known_values(self):
        assert [catalan(m) for m in range(8)] == [1, 1, 2, 5, 14, 42, 132, 429]
        assert catalan(-1) == 0


class TestWorkedExamplePlans:
    def test_trivial_keeps_declaration_order(self):
        plan = gen_trivial(P_ABC)
        assert plan.order == ("A", "B", "C")
        assert plan_cost(plan, P_ABC, STATS) == 510.0

    def test_efreq_sorts_by_expected_count(self):
        plan = gen_efreq(P_ABC, STATS)
        assert plan.order == ("A", "B", "C")  # W*r: 10 < 20 < 40

    def test_greedy_follows_cheapest_extension(self):
        plan = gen_greedy(P_ABC, STATS)
        # A (10); then C (10*40*0.1=40) beats B (10*20*0.5=100); then B
        assert plan.order == ("A", "C", "B")
        assert plan_cost(plan, P_ABC, STATS) == 450.0

    def test_dp_order_finds_the_minimum(self):
        plan = gen_dp_ld(P_ABC, STATS)
        assert plan.order == ("A", "C", "B")
        bundle = generate_plan(P_ABC, STATS, "dp-ld")
        assert bundle.conjuncts[0].report.cost == 450.0

    def test_zstream_over_declared_leaf_order(self):
        plan = gen_zstream(P_ABC, STATS)
        # leaf sequence fixed at (A, B, C): ((A,B),C)=570 beats (A,(B,C))=1270
        assert plan.root.leaf_names() == ("A", "B", "C")
        assert internal_leaf_sets(plan.root) == {
            frozenset({"A", "B"}),
            frozenset({"A", "B", "C"}),
        }
        assert plan_cost(plan, P_ABC, STATS) == 570.0

    def test_zstream_candidate_count_is_shape_count(self):
        for n in (3, 4, 5):
            types = [chr(ord("A") + i) for i in range(n)]
            stats = StatisticsCatalog(rates={t: 1.0 for t in types})
            bundle = generate_plan(and_pattern(*types), stats, "zstream")
            assert bundle.conjuncts[0].report.candidates == catalan(n - 1)

    def test_zstream_reordered_reaches_the_better_tree(self):
        plan = gen_zstream_ord(P_ABC, STATS)
        # greedy order (A, C, B) exposes ((A,C),B) = 510
        assert plan_cost(plan, P_ABC, STATS) == 510.0
        assert frozenset({"A", "C"}) in internal_leaf_sets(plan.root)

    def test_zstream_explicit_leaf_order(self):
        plan = gen_zstream(P_ABC, STATS, leaf_order=("C", "A", "B"))
        assert plan.root.leaf_names() == ("C", "A", "B")

    def test_dp_tree_finds_the_minimum(self):
        plan = gen_dp_b(P_ABC, STATS)
        assert plan_cost(plan, P_ABC, STATS) == 510.0
        assert frozenset({"A", "C"}) in internal_leaf_sets(plan.root)

    def test_hybrid_objective_changes_the_winner(self):
        bundle = generate_plan(P_ABC, STATS, "dp-ld", alpha=1.0, last_type="C")
        (planned,) = bundle.conjuncts
        # throughput 450 plus one trailing type (B, 20) beats 480 + 30
        assert planned.plan.order == ("A", "C", "B")
        assert planned.report.cost == 470.0

    def test_next_match_family_is_used_for_next_strategies(self):
        p = P_ABC.with_strategy(SelectionStrategy(NEXT_MATCH))
        plan = OrderPlan(("A", "C", "B"))
        assert plan_cost(plan, p, STATS) == 115.0


class TestSearchProperties:
    def test_dp_matches_brute_force_orders(self):
        rng = random.Random(3)
        for _ in range(8):
            stats = random_catalog(rng, 5)
            pattern = and_pattern(*stats.type_names())
            model = conjunct_model(
                normalize_pattern(pattern).conjuncts[0], stats
            )
            _, best = brute_force_order(model)
            bundle = generate_plan(pattern, stats, "dp-ld")
            assert bundle.conjuncts[0].report.cost == float(model.value(best))

    def test_dp_matches_brute_force_trees(self):
        rng = random.Random(4)
        for _ in range(6):
            stats = random_catalog(rng, 4)
            pattern = and_pattern(*stats.type_names())
            model = conjunct_model(
                normalize_pattern(pattern).conjuncts[0], stats
            )
            _, best = brute_force_tree(model)
            bundle = generate_plan(pattern, stats, "dp-b")
            assert bundle.conjuncts[0].report.cost == float(model.value(best))

    def test_iterative_improvement_is_deterministic_per_seed(self):
        rng = random.Random(11)
        stats = random_catalog(rng, 6)
        pattern = and_pattern(*stats.type_names())
        a = generate_plan(pattern, stats, "ii-random", seed=5)
        b = generate_plan(pattern, stats, "ii-random", seed=5)
        assert a.conjuncts[0].plan == b.conjuncts[0].plan
        assert a.conjuncts[0].report.seed == 5

    def test_iterative_improvement_restarts_widen_the_search(self):
        rng = random.Random(12)
        stats = random_catalog(rng, 6)
        pattern = and_pattern(*stats.type_names())
        one = generate_plan(pattern, stats, "ii-random", seed=1, restarts=1)
        many = generate_plan(pattern, stats, "ii-random", seed=1, restarts=10)
        assert many.conjuncts[0].report.candidates > one.conjuncts[0].report.candidates
        assert many.conjuncts[0].report.cost <= one.conjuncts[0].report.cost

    def test_first_improvement_explores_fewer_candidates(self):
        rng = random.Random(13)
        stats = random_catalog(rng, 7)
        pattern = and_pattern(*stats.type_names())
        steepest = generate_plan(pattern, stats, "ii-random", seed=2, restarts=2)
        eager = generate_plan(
            pattern, stats, "ii-random", seed=2, restarts=2, first_improvement=True
        )
        assert (
            eager.conjuncts[0].report.candidates
            <= steepest.conjuncts[0].report.candidates
        )

    def test_local_search_never_beats_dp(self):
        rng = random.Random(14)
        for _ in range(5):
            stats = random_catalog(rng, 6)
            pattern = and_pattern(*stats.type_names())
            best = generate_plan(pattern, stats, "dp-ld").conjuncts[0].report.cost
            for algorithm in ("trivial", "efreq", "greedy", "ii-random", "ii-greedy"):
                got = generate_plan(pattern, stats, algorithm, seed=9)
                assert got.conjuncts[0].report.cost >= best - 1e-9 * abs(best)

    def test_ii_greedy_init_validation(self):
        with pytest.raises(ContractError):
            gen_iterative_improvement(P_ABC, STATS, init="annealed")


class TestLimits:
    def test_order_dp_size_limit(self):
        names = [f"T{i:02d}" for i in range(DP_LD_LIMIT + 1)]
        stats = StatisticsCatalog(rates={n: 1.0 for n in names})
        with pytest.raises(ResourceLimitError):
            gen_dp_ld(and_pattern(*names), stats)

    def test_tree_dp_size_limit(self):
        names = [f"T{i:02d}" for i in range(DP_B_LIMIT + 1)]
        stats = StatisticsCatalog(rates={n: 1.0 for n in names})
        with pytest.raises(ResourceLimitError):
            gen_dp_b(and_pattern(*names), stats)

    def test_unknown_algorithm_rejected(self):
        with pytest.raises(ContractError):
            generate_plan(P_ABC, STATS, "quantum")

    def test_single_conjunct_helpers_reject_disjunctions(self):
        p = Pattern(
            OperatorNode(
                OR,
                (
                    OperatorNode(AND, (Leaf("A", "a"), Leaf("B", "b"))),
                    OperatorNode(AND, (Leaf("C", "c"), Leaf("D", "d"))),
                ),
            ),
            (),
            W,
        )
        with pytest.raises(UnsupportedPatternError):
            gen_trivial(p)
        stats = StatisticsCatalog(rates={t: 1.0 for t in "ABCD"})
        with pytest.raises(UnsupportedPatternError):
            plan_cost(OrderPlan(("A", "B")), p, stats)


class TestFinalization:
    def test_kleene_markers_are_restored(self):
        p = seq_pattern(Leaf("A", "a"), Leaf("K", "k", (KLEENE,)), Leaf("B", "b"))
        stats = StatisticsCatalog(rates={"A": 1.0, "K": 0.3, "B": 2.0})
        plan = gen_trivial(p)
        assert plan.order == ("A", "K", "B")
        assert plan.kl_types == frozenset({"K"})
        tree = gen_dp_b(p, stats)
        assert set(tree.root.leaf_names()) == {"A", "K", "B"}
        assert tree.kl_types == frozenset({"K"})

    def test_order_checkpoint_sits_at_dependency_cover(self):
        p = seq_pattern(
            Leaf("A", "a"), Leaf("N", "n", (NOT,)), Leaf("B", "b"), Leaf("C", "c")
        )
        conjunct = normalize_pattern(p).conjuncts[0]
        plan = finalize_plan("order", ("C", "B", "A"), conjunct)
        (checkpoint,) = plan.checkpoints
        assert checkpoint.type_name == "N"
        assert set(checkpoint.dependencies) == {"A", "B"}
        assert checkpoint.position == 3  # A and B both accepted only at step 3

    def test_order_checkpoint_without_dependencies_is_step_one(self):
        root = OperatorNode(AND, (Leaf("A", "a"), Leaf("N", "n", (NOT,))))
        conjunct = normalize_pattern(Pattern(root, (), W)).conjuncts[0]
        plan = finalize_plan("order", ("A",), conjunct)
        assert plan.checkpoints[0].position == 1
        assert plan.checkpoints[0].dependencies == ()

    def test_tree_checkpoint_sits_at_smallest_covering_node(self):
        p = seq_pattern(
            Leaf("A", "a"), Leaf("N", "n", (NOT,)), Leaf("B", "b"), Leaf("C", "c")
        )
        conjunct = normalize_pattern(p).conjuncts[0]
        tree = join(join(leaf("A"), leaf("B")), leaf("C"))
        plan = finalize_plan("tree", tree, conjunct)
        (checkpoint,) = plan.checkpoints
        # postorder: A(0) B(1) AB(2) C(3) root(4); {A,B} covered at node 2
        assert checkpoint.position == 2

    def test_missing_dependency_is_a_contract_error(self):
        p = seq_pattern(Leaf("A", "a"), Leaf("N", "n", (NOT,)), Leaf("B", "b"))
        conjunct = normalize_pattern(p).conjuncts[0]
        with pytest.raises(ContractError):
            finalize_plan("order", ("A",), conjunct)


class TestEvaluationHelpers:
    def test_plan_cost_matches_search_report(self):
        for algorithm in ("dp-ld", "greedy"):
            bundle = generate_plan(P_ABC, STATS, algorithm)
            (planned,) = bundle.conjuncts
            assert plan_cost(planned.plan, P_ABC, STATS) == planned.report.cost
        for algorithm in TREE_ALGORITHMS:
            bundle = generate_plan(P_ABC, STATS, algorithm)
            (planned,) = bundle.conjuncts
            assert plan_cost(planned.plan, P_ABC, STATS) == planned.report.cost

    def test_normalized_cost_is_relative_to_ascending_rates(self):
        base = gen_efreq(P_ABC, STATS)
        assert normalized_cost(base, P_ABC, STATS) == 1.0
        best = gen_dp_ld(P_ABC, STATS)
        assert normalized_cost(best, P_ABC, STATS) == pytest.approx(510.0 / 450.0)

    def test_bundle_total_cost_sums_conjuncts(self):
        p = Pattern(
            OperatorNode(
                OR,
                (
                    OperatorNode(AND, (Leaf("A", "a"), Leaf("B", "b"))),
                    OperatorNode(AND, (Leaf("C", "c"), Leaf("D", "d"))),
                ),
            ),
            (),
            W,
        )
        stats = StatisticsCatalog(rates={"A": 1.0, "B": 2.0, "C": 4.0, "D": 8.0})
        bundle = generate_plan(p, stats, "dp-ld")
        assert len(bundle.conjuncts) == 2
        assert bundle.total_cost == sum(c.report.cost for c in bundle.conjuncts)


class TestSerialization:
    def make_bundle(self):
        p = seq_pattern(
            Leaf("A", "a"),
            Leaf("K", "k", (KLEENE,)),
            Leaf("N", "n", (NOT,)),
            Leaf("B", "b"),
        )
        stats = StatisticsCatalog(rates={"A": 1.0, "K": 0.2, "N": 0.5, "B": 2.0})
        return p, stats

    @pytest.mark.parametrize("algorithm", ["dp-ld", "dp-b"])
    def test_round_trip_preserves_plans(self, algorithm):
        p, stats = self.make_bundle()
        bundle = generate_plan(p, stats, algorithm)
        doc = json.loads(json.dumps(bundle_to_json(bundle)))
        back = bundle_from_json(doc)
        assert back.algorithm == bundle.algorithm
        for before, after in zip(bundle.conjuncts, back.conjuncts):
            assert after.plan == before.plan
            assert after.report.cost == before.report.cost
            assert after.report.cost_log2 == before.report.cost_log2
            assert after.report.candidates == before.report.candidates

    def test_wall_time_is_excluded_by_default(self):
        p, stats = self.make_bundle()
        bundle = generate_plan(p, stats, "dp-ld")
        doc = bundle_to_json(bundle)
        assert all("wall_time" not in entry for entry in doc["conjuncts"])
        timed = bundle_to_json(bundle, include_timing=True)
        assert all("wall_time" in entry for entry in timed["conjuncts"])

    def test_serialized_bundles_are_repeatable(self):
        p, stats = self.make_bundle()
        a = bundle_to_json(generate_plan(p, stats, "dp-b"))
        b = bundle_to_json(generate_plan(p, stats, "dp-b"))
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_algorithm_registry_is_partitioned():
    assert set(ORDER_ALGORITHMS) | set(TREE_ALGORITHMS) == set(ALGORITHM_NAMES)
    assert not set(ORDER_ALGORITHMS) & set(TREE_ALGORITHMS)
