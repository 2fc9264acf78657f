"""Cost models: order and tree throughput, latency, hybrid, ranks, log path.

The fixture catalog (three types, W = 10) is small enough that every
expected value below is a hand-computed product and sum of W*r and
selectivity terms; the comments next to each assertion show the arithmetic.
"""
import math
import random

import pytest

from streamcep.cost import (
    CostBreakdown,
    CostModel,
    CostObjective,
    CostValue,
    FAMILY_ANY,
    FAMILY_NEXT,
    SubsetCosts,
    asi_sequence_cost,
    asi_sequence_product,
    cost_bj,
    cost_hybrid,
    cost_ldj,
    cost_ord,
    cost_ord_latency,
    cost_ord_next,
    cost_tree,
    cost_tree_latency,
    cost_tree_next,
    rank_lat,
    rank_trpt,
    root_edge_selectivities,
)
from streamcep.model import (
    ContractError,
    StatisticsCatalog,
    join,
    leaf,
    left_deep_tree,
    selectivity_key,
)

from helpers import acyclic_catalog, random_catalog

W = 10.0
STATS = StatisticsCatalog(
    rates={"A": 1.0, "B": 2.0, "C": 4.0},
    selectivities={("A", "B"): 0.5, ("A", "C"): 0.1, ("B", "C"): 1.0},
)
CARDS = {t: W * STATS.rate(t) for t in ("A", "B", "C")}  # A=10 B=20 C=40
TREE_ACB = join(join(leaf("A"), leaf("C")), leaf("B"))


def lin(values):
    return [float(v) for v in values]


class TestOrderCost:
    def test_worked_example_per_step(self):
        got = cost_ord(("A", "B", "C"), STATS, W)
        # 10; 10*20*0.5 = 100; 100*40*0.1*1 = 400
        assert lin(got.partials) == [10.0, 100.0, 400.0]
        assert float(got.throughput) == 510.0

    def test_order_sensitivity(self):
        assert float(cost_ord(("A", "C", "B"), STATS, W).throughput) == 450.0
        assert float(cost_ord(("C", "A", "B"), STATS, W).throughput) == 480.0
        assert float(cost_ord(("C", "B", "A"), STATS, W).throughput) == 1240.0

    def test_prefix_value_is_order_independent(self):
        # the k-th partial count depends only on the consumed subset
        full_abc = cost_ord(("A", "B", "C"), STATS, W).partials[-1]
        full_bac = cost_ord(("B", "A", "C"), STATS, W).partials[-1]
        assert float(full_abc) == float(full_bac) == 400.0

    def test_filter_applies_at_entry_step(self):
        stats = STATS.with_entries(selectivities={("B",): 0.5})
        got = cost_ord(("A", "B", "C"), stats, W)
        # step 2 halves: 10*20*0.5*0.5 = 50; step 3 follows: 50*40*0.1 = 200
        assert lin(got.partials) == [10.0, 50.0, 200.0]

    def test_unknown_rate_and_bad_window(self):
        with pytest.raises(Exception):
            cost_ord(("A", "Z"), STATS, W)
        with pytest.raises(ContractError):
            cost_ord(("A", "B"), STATS, 0.0)
        with pytest.raises(ContractError):
            SubsetCosts(("A", "A"), STATS, W)

    def test_left_deep_join_twin(self):
        sels = dict(STATS.selectivities)
        assert cost_ldj(("A", "B", "C"), CARDS, sels) == 510.0
        assert cost_ldj(("A", "C", "B"), CARDS, sels) == 450.0
        assert cost_ldj((), CARDS, sels) == 0.0

    def test_left_deep_join_accepts_string_filter_keys(self):
        total = cost_ldj(("A", "B"), CARDS, {"A": 0.5, ("B", "A"): 0.1})
        # 10*0.5 = 5; 5*20*0.1 = 10
        assert total == 15.0

    def test_order_equivalence_random_smoke(self):
        import itertools

        rng = random.Random(7)
        for _ in range(5):
            stats = random_catalog(rng, 4)
            window = rng.uniform(2.0, 20.0)
            cards = {t: window * stats.rate(t) for t in stats.type_names()}
            for perm in itertools.permutations(stats.type_names()):
                a = float(cost_ord(perm, stats, window).throughput)
                b = cost_ldj(perm, cards, dict(stats.selectivities))
                assert abs(a - b) <= 1e-9 * max(1.0, abs(a))


class TestTreeCost:
    def test_worked_example_postorder(self):
        got = cost_tree(TREE_ACB, STATS, W)
        # A=10, C=40, AC join 10*40*0.1=40, B=20, root 40*20*0.5*1=400
        assert lin(got.partials) == [10.0, 40.0, 40.0, 20.0, 400.0]
        assert float(got.throughput) == 510.0

    def test_left_deep_tree_matches_order_cost_totals(self):
        # same per-subset values, one extra leaf term per join step
        order = ("A", "C", "B")
        tree_total = float(cost_tree(left_deep_tree(order), STATS, W).throughput)
        order_total = float(cost_ord(order, STATS, W).throughput)
        # leaves C and B add W*r each on top of the order model's steps
        assert tree_total == order_total + 40.0 + 20.0

    def test_filters_do_not_enter_tree_nodes(self):
        stats = STATS.with_entries(selectivities={("B",): 0.25})
        assert float(cost_tree(TREE_ACB, stats, W).throughput) == 510.0

    def test_bushy_join_twin(self):
        sels = dict(STATS.selectivities)
        assert cost_bj(TREE_ACB, CARDS, sels) == 510.0
        other = join(leaf("B"), join(leaf("A"), leaf("C")))
        assert cost_bj(other, CARDS, sels) == float(
            cost_tree(other, STATS, W).throughput
        )


class TestLatencyAndHybrid:
    def test_order_latency_counts_types_after_anchor(self):
        # after C in (C, A, B): W*r_A + W*r_B = 30
        assert cost_ord_latency(("C", "A", "B"), STATS, W, "C") == 30.0
        assert cost_ord_latency(("A", "B", "C"), STATS, W, "C") == 0.0
        with pytest.raises(ContractError):
            cost_ord_latency(("A", "B"), STATS, W, "C")

    def test_tree_latency_sums_sibling_instances(self):
        # path B -> root; sibling subtree (A,C) holds 40 instances
        assert cost_tree_latency(TREE_ACB, STATS, W, "B") == 40.0
        # path C -> (A,C) -> root: siblings A (10) and B (20)
        assert cost_tree_latency(TREE_ACB, STATS, W, "C") == 30.0
        with pytest.raises(ContractError):
            cost_tree_latency(TREE_ACB, STATS, W, "Z")

    def test_hybrid_combines_linearly(self):
        assert cost_hybrid(("C", "A", "B"), STATS, W, 0.0, "C") == 480.0
        assert cost_hybrid(("C", "A", "B"), STATS, W, 1.0, "C") == 510.0
        assert cost_hybrid(("C", "A", "B"), STATS, W, 0.5, "C") == 495.0
        assert cost_hybrid(TREE_ACB, STATS, W, 1.0, "B") == 550.0
        with pytest.raises(ContractError):
            cost_hybrid(("A", "B", "C"), STATS, W, -0.1, "C")

    def test_breakdown_reports_alpha(self):
        got = cost_ord(("C", "A", "B"), STATS, W, last_type="C", alpha=0.5)
        assert isinstance(got, CostBreakdown)
        assert got.alpha == 0.5
        assert float(got.latency) == 30.0
        assert float(got.combined) == 495.0


class TestNextMatchCosts:
    def test_order_next_worked_example(self):
        # steps: W*(W*min(r)*sel): 10*10, 10*(10*0.1), 10*(10*0.05)
        assert cost_ord_next(("A", "C", "B"), STATS, W) == 115.0

    def test_order_next_prefers_scarce_first_here(self):
        assert cost_ord_next(("A", "C", "B"), STATS, W) < cost_ord_next(
            ("C", "B", "A"), STATS, W
        )

    def test_tree_next_worked_example(self):
        # leaves 10+40+20, AC node min(10,40)*0.1 = 1, root 10*0.05 = 0.5
        assert cost_tree_next(TREE_ACB, STATS, W) == 71.5


class TestRanks:
    def test_root_edge_selectivities_tree(self):
        stats = StatisticsCatalog(
            rates={"A": 1.0, "B": 2.0, "C": 4.0},
            selectivities={("A", "B"): 0.5, ("A", "C"): 0.1},
        )
        assert root_edge_selectivities(stats, "A") == {
            "A": 1.0,
            "B": 0.5,
            "C": 0.1,
        }

    def test_root_edge_selectivities_rejects_cycles_and_gaps(self):
        with pytest.raises(ContractError):
            root_edge_selectivities(STATS, "A")  # triangle: cyclic
        sparse = StatisticsCatalog(
            rates={"A": 1.0, "B": 1.0, "C": 1.0},
            selectivities={("A", "B"): 0.5},
        )
        with pytest.raises(ContractError):
            root_edge_selectivities(sparse, "A")  # C unreachable
        with pytest.raises(ContractError):
            root_edge_selectivities(sparse, "Z")

    def test_sequence_product_and_cost(self):
        stats = StatisticsCatalog(
            rates={"A": 1.0, "B": 2.0, "C": 4.0},
            selectivities={("A", "B"): 0.5, ("A", "C"): 0.1},
        )
        # terms toward root A: B -> 20*0.5 = 10, C -> 40*0.1 = 4
        assert asi_sequence_product(("B", "C"), stats, W, "A") == 40.0
        assert asi_sequence_cost(("B", "C"), stats, W, "A") == 50.0
        assert asi_sequence_product((), stats, W, "A") == 1.0
        assert asi_sequence_cost((), stats, W, "A") == 0.0

    def test_cost_concatenation_identity(self):
        rng = random.Random(42)
        for _ in range(50):
            stats = acyclic_catalog(rng, rng.randint(2, 6))
            names = list(stats.type_names())
            root = rng.choice(names)
            rng.shuffle(names)
            cut = rng.randint(0, len(names))
            s1, s2 = names[:cut], names[cut:]
            window = rng.uniform(1.0, 12.0)
            whole = asi_sequence_cost(names, stats, window, root)
            split = asi_sequence_cost(s1, stats, window, root) + (
                asi_sequence_product(s1, stats, window, root)
                * asi_sequence_cost(s2, stats, window, root)
            )
            assert abs(whole - split) <= 1e-9 * max(1.0, abs(whole))

    def test_throughput_rank_worked_example(self):
        stats = StatisticsCatalog(
            rates={"A": 1.0, "B": 2.0, "C": 4.0},
            selectivities={("A", "B"): 0.5, ("A", "C"): 0.1},
        )
        # single B toward root A: T = 10, C = 10, rank = 9/10
        assert rank_trpt(("B",), stats, W, "A") == 0.9
        with pytest.raises(ContractError):
            rank_trpt((), stats, W, "A")

    def test_latency_rank(self):
        assert rank_lat(("C", "A", "B"), STATS, W, "C") == 30.0
        assert rank_lat(("A", "B"), STATS, W, "C") == 0.0
        with pytest.raises(ContractError):
            rank_lat((), STATS, W, "C")


class TestLogSpacePath:
    def test_forced_log_space_matches_linear(self):
        linear = SubsetCosts(("A", "B", "C"), STATS, W, log_space=False)
        logged = SubsetCosts(("A", "B", "C"), STATS, W, log_space=True)
        assert logged.log_space and not linear.log_space
        full = (1 << 3) - 1
        a = float(linear.value(linear.pm_ord(full)))
        b = float(logged.value(logged.pm_ord(full)))
        assert abs(a - b) <= 1e-9 * a

    def test_huge_rates_choose_log_space_and_stay_ordered(self):
        stats = StatisticsCatalog(
            rates={"B": 2.0},
            log2_rates={"A'": 2000.0},
            selectivities={("A'", "B"): 0.5},
        )
        sc = SubsetCosts(("A'", "B"), stats, W)
        assert sc.log_space
        got = cost_ord(("B", "A'"), stats, W)
        assert math.isinf(float(got.throughput))
        assert got.throughput.log2 < cost_ord(("A'", "B"), stats, W).throughput.log2

    def test_cost_value_comparisons_cross_range(self):
        small = CostValue.from_linear(1e300)
        big = CostValue.from_log2(2000.0)
        assert small < big
        assert big <= big
        assert CostValue.from_linear(2.0) < CostValue.from_linear(3.0)
        assert float(CostValue.from_log2(3.0)) == 8.0
        with pytest.raises(ContractError):
            CostValue.from_linear(-1.0)


class TestCostModel:
    def test_order_total_matches_direct_cost(self):
        model = CostModel(("A", "B", "C"), STATS, W)
        for order in (("A", "B", "C"), ("A", "C", "B"), ("C", "A", "B")):
            direct = float(cost_ord(order, STATS, W).throughput)
            assert float(model.value(model.order_total(order))) == direct

    def test_order_total_with_hybrid_objective(self):
        objective = CostObjective(FAMILY_ANY, alpha=1.0, last_type="C")
        model = CostModel(("A", "B", "C"), STATS, W, objective)
        got = float(model.value(model.order_total(("C", "A", "B"))))
        assert got == cost_hybrid(("C", "A", "B"), STATS, W, 1.0, "C")

    def test_tree_total_matches_direct_cost(self):
        model = CostModel(("A", "B", "C"), STATS, W)
        assert float(model.value(model.tree_total(TREE_ACB))) == 510.0
        objective = CostObjective(FAMILY_ANY, alpha=1.0, last_type="B")
        hybrid = CostModel(("A", "B", "C"), STATS, W, objective)
        assert float(hybrid.value(hybrid.tree_total(TREE_ACB))) == 550.0

    def test_next_family_matches_direct_cost(self):
        objective = CostObjective(FAMILY_NEXT)
        model = CostModel(("A", "B", "C"), STATS, W, objective)
        got = float(model.value(model.order_total(("A", "C", "B"))))
        assert got == cost_ord_next(("A", "C", "B"), STATS, W)
        tree_got = float(model.value(model.tree_total(TREE_ACB)))
        assert tree_got == cost_tree_next(TREE_ACB, STATS, W)

    def test_objective_validation(self):
        with pytest.raises(ContractError):
            CostObjective("fastest")
        with pytest.raises(ContractError):
            CostObjective(FAMILY_ANY, alpha=-0.5)
        with pytest.raises(ContractError):
            CostObjective(FAMILY_ANY, alpha=0.5)  # needs an anchor type


def test_selectivity_key_used_for_symmetric_lookup():
    sels = {selectivity_key("B", "A"): 0.5}
    assert cost_ldj(("A", "B"), {"A": 10.0, "B": 20.0}, sels) == 110.0
