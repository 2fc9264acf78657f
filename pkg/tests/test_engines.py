"""Runtime engines: agreement with the reference matcher, metrics, guards.

Handcrafted streams carry their expected serial sets next to them; the
randomized checks compare both engines under several plans against the
exhaustive matcher, which was validated independently.
"""
import random

import pytest

from streamcep.model import (
    AND,
    ContractError,
    Event,
    KLEENE,
    Leaf,
    NOT,
    OperatorNode,
    OrderPlan,
    Pattern,
    SEQ,
    SelectionStrategy,
    StatisticsCatalog,
    NEXT_MATCH,
    PARTITION_CONTIGUITY,
    STRICT_CONTIGUITY,
)
from streamcep.nfa import NfaChain, NfaEngine
from streamcep.oracle import oracle_match
from streamcep.plangen import (
    PlanBundle,
    PlannedConjunct,
    PlanSearchReport,
    generate_plan,
)
from streamcep.runner import PatternRunner, run_pattern
from streamcep.transform import normalize_pattern

from helpers import (
    grouped_keys,
    match_keys,
    offset_pred,
    seq_pattern,
    workload_pattern,
    workload_stream,
)


def ev(type_name, ts, serial, **attrs):
    return Event(type_name, ts, serial, attrs)


def stats_for(pattern, rate=1.0):
    return StatisticsCatalog(rates={t: rate for t in pattern.alias_types().values()})


def bundle_for(pattern, algorithm="trivial", stats=None, **kwargs):
    stats = stats if stats is not None else stats_for(pattern)
    return generate_plan(pattern, stats, algorithm, **kwargs)


def run_keys(pattern, events, algorithm="trivial", engine="auto", **kwargs):
    bundle = bundle_for(pattern, algorithm)
    return match_keys(run_pattern(pattern, bundle, events, engine=engine, **kwargs).reports)


class TestBasicAgreement:
    def test_simple_sequence(self):
        p = seq_pattern(("A", "B"), 10.0)
        events = [ev("A", 0.0, 0), ev("A", 1.0, 1), ev("B", 2.0, 2), ev("B", 20.0, 3)]
        # (0,2) and (1,2); serial 3 falls outside both windows
        expected = {(0, 2), (1, 2)}
        assert run_keys(p, events) == expected
        assert run_keys(p, events, engine="tree") == expected
        assert match_keys(oracle_match(p, events)) == expected

    def test_predicates_are_applied(self):
        p = seq_pattern(("A", "B"), 10.0, predicates=(offset_pred("a", "b", 0.0),))
        events = [
            ev("A", 0.0, 0, x=0.5),
            ev("B", 1.0, 1, x=0.2),
            ev("B", 2.0, 2, x=0.9),
        ]
        assert run_keys(p, events) == {(0, 2)}
        assert run_keys(p, events, engine="tree") == {(0, 2)}

    def test_out_of_window_partials_are_evicted(self):
        p = seq_pattern(("A", "B"), 1.0)
        events = [ev("A", 0.0, 0)] + [
            ev("A", 5.0 + i, 1 + i) for i in range(3)
        ] + [ev("B", 7.8, 4)]
        result = run_pattern(p, bundle_for(p), events)
        # only the A at 7.0 is within 1.0 of the B at 7.8
        assert match_keys(result.reports) == {(3, 4)}
        # the three stale opens must not survive until the end
        assert result.engine_metrics[0].live_partials <= 1


class TestStrategies:
    STREAM = [
        ev("A", 0.0, 0), ev("A", 1.0, 1), ev("B", 2.0, 2), ev("B", 3.0, 3),
    ]

    def test_any_match_reports_every_combination(self):
        p = seq_pattern(("A", "B"), 10.0)
        assert run_keys(p, self.STREAM) == {(0, 2), (1, 2), (0, 3), (1, 3)}

    def test_next_match_consumes_events(self):
        p = seq_pattern(("A", "B"), 10.0).with_strategy(SelectionStrategy(NEXT_MATCH))
        expected = {(0, 2), (1, 3)}
        assert run_keys(p, self.STREAM) == expected
        assert run_keys(p, self.STREAM, engine="tree") == expected
        assert match_keys(oracle_match(p, self.STREAM)) == expected

    def test_strict_contiguity_requires_adjacent_serials(self):
        p = seq_pattern(("A", "B"), 10.0).with_strategy(
            SelectionStrategy(STRICT_CONTIGUITY)
        )
        events = [ev("A", 0.0, 0), ev("C", 1.0, 1), ev("B", 2.0, 2), ev("A", 3.0, 3), ev("B", 4.0, 4)]
        # the C at serial 1 breaks (0, 2); only (3, 4) is contiguous
        assert run_keys(p, events) == {(3, 4)}
        assert match_keys(oracle_match(p, events)) == {(3, 4)}

    def test_partition_contiguity_counts_within_key(self):
        p = seq_pattern(("A", "B"), 10.0).with_strategy(
            SelectionStrategy(PARTITION_CONTIGUITY, partition_key="k")
        )
        events = [
            ev("A", 0.0, 0, k=1), ev("A", 0.5, 1, k=2),
            ev("B", 1.0, 2, k=1), ev("B", 1.5, 3, k=2),
        ]
        expected = {(0, 2), (1, 3)}
        assert run_keys(p, events) == expected
        assert run_keys(p, events, engine="tree") == expected
        assert match_keys(oracle_match(p, events)) == expected


class TestNegation:
    def test_blocker_between_members(self):
        p = Pattern(
            OperatorNode(SEQ, (Leaf("A", "a"), Leaf("N", "n", (NOT,)), Leaf("B", "b"))),
            (), 10.0,
        )
        blocked = [ev("A", 0.0, 0), ev("N", 1.0, 1), ev("B", 2.0, 2)]
        clean = [ev("A", 0.0, 0), ev("B", 2.0, 2), ev("N", 3.0, 3)]
        for algorithm in ("trivial", "dp-ld"):
            assert run_keys(p, blocked, algorithm) == set()
            assert run_keys(p, clean, algorithm) == {(0, 2)}
            assert run_keys(p, blocked, algorithm, engine="tree") == set()
            assert run_keys(p, clean, algorithm, engine="tree") == {(0, 2)}

    def test_trailing_absence_is_deferred(self):
        p = Pattern(
            OperatorNode(SEQ, (Leaf("A", "a"), Leaf("B", "b"), Leaf("N", "n", (NOT,)))),
            (), 2.0,
        )
        events = [ev("A", 0.0, 0), ev("B", 1.0, 1), ev("C", 3.5, 2)]
        bundle = bundle_for(p)
        runner = PatternRunner(p, bundle)
        emitted = []
        for event in events:
            emitted.extend((event.serial, r) for r in runner.process(event))
        emitted.extend(("end", r) for r in runner.end())
        # the pending match may only surface once serial 2 proves the window clear
        assert [(at, r.serials) for at, r in emitted] == [(2, (0, 1))]

    def test_trailing_blocker_cancels_pending(self):
        p = Pattern(
            OperatorNode(SEQ, (Leaf("A", "a"), Leaf("B", "b"), Leaf("N", "n", (NOT,)))),
            (), 2.0,
        )
        # the absence interval runs to match start + window = 2.0
        events = [ev("A", 0.0, 0), ev("B", 1.0, 1), ev("N", 1.8, 2)]
        assert run_keys(p, events) == set()
        survive = [ev("A", 0.0, 0), ev("B", 1.0, 1), ev("N", 2.5, 2)]
        assert run_keys(p, survive) == {(0, 1)}

    def test_stream_end_flushes_pending(self):
        p = Pattern(
            OperatorNode(SEQ, (Leaf("A", "a"), Leaf("B", "b"), Leaf("N", "n", (NOT,)))),
            (), 2.0,
        )
        events = [ev("A", 0.0, 0), ev("B", 1.0, 1)]
        for engine in ("auto", "tree"):
            assert run_keys(p, events, engine=engine) == {(0, 1)}

    def test_missing_checkpoint_is_a_contract_error(self):
        p = Pattern(
            OperatorNode(SEQ, (Leaf("A", "a"), Leaf("N", "n", (NOT,)), Leaf("B", "b"))),
            (), 10.0,
        )
        conjunct = normalize_pattern(p).conjuncts[0]
        bare = OrderPlan(("A", "B"))  # no checkpoint for the absent position
        with pytest.raises(ContractError):
            NfaChain(bare, conjunct)


class TestKleene:
    P = Pattern(
        OperatorNode(SEQ, (Leaf("A", "a"), Leaf("K", "k", (KLEENE,)), Leaf("B", "b"))),
        (), 10.0,
    )

    def test_subsets_and_groups(self):
        events = [ev("A", 0.0, 0), ev("K", 1.0, 1), ev("K", 2.0, 2), ev("B", 3.0, 3)]
        expected = {(0, 1, 3), (0, 2, 3), (0, 1, 2, 3)}
        for engine in ("auto", "tree"):
            result = run_pattern(self.P, bundle_for(self.P), events, engine=engine)
            assert match_keys(result.reports) == expected
            assert grouped_keys(result.reports) == grouped_keys(oracle_match(self.P, events))

    def test_cap_truncates_and_counts_overflows(self):
        events = [ev("A", 0.0, 0)]
        events += [ev("K", 1.0 + 0.1 * i, 1 + i) for i in range(5)]
        events += [ev("B", 2.0, 6)]
        capped = run_pattern(self.P, bundle_for(self.P), events, kl_cap=3)
        full = run_pattern(self.P, bundle_for(self.P), events, kl_cap=16)
        assert capped.kl_overflows > 0
        assert capped.matches < full.matches
        assert full.kl_overflows == 0
        assert match_keys(full.reports) == match_keys(oracle_match(self.P, events))


class TestPlanInvariance:
    def test_all_plans_and_engines_agree(self):
        rng = random.Random(42)
        for trial in range(6):
            types, pattern = workload_pattern(rng, 3, 6.0, density=2)
            events = list(workload_stream(types, seed=100 + trial, target_events=50, spread=1.5))
            expected = grouped_keys(oracle_match(pattern, events, max_coresident=60))
            stats = stats_for(pattern)
            for algorithm, engine in (
                ("trivial", "nfa"), ("dp-ld", "nfa"), ("greedy", "tree"),
                ("zstream", "tree"), ("dp-b", "tree"),
            ):
                bundle = generate_plan(pattern, stats, algorithm)
                result = run_pattern(pattern, bundle, events, engine=engine)
                assert grouped_keys(result.reports) == expected, (trial, algorithm)

    def test_order_plan_runs_on_the_tree_engine(self):
        p = seq_pattern(("A", "B", "C"), 10.0)
        events = [ev("A", 0.0, 0), ev("B", 1.0, 1), ev("C", 2.0, 2), ev("B", 2.5, 3), ev("C", 3.0, 4)]
        bundle = bundle_for(p, "dp-ld")
        nfa_result = run_pattern(p, bundle, events, engine="nfa")
        tree_result = run_pattern(p, bundle, events, engine="tree")
        assert match_keys(nfa_result.reports) == match_keys(tree_result.reports)

    def test_nfa_refuses_tree_plans(self):
        p = seq_pattern(("A", "B", "C"), 10.0)
        bundle = bundle_for(p, "dp-b")
        with pytest.raises(ContractError):
            PatternRunner(p, bundle, engine="nfa")

    def test_unknown_engine_kind(self):
        p = seq_pattern(("A", "B"), 10.0)
        with pytest.raises(ContractError):
            PatternRunner(p, bundle_for(p), engine="gpu")

    def test_bundle_must_cover_all_conjuncts(self):
        p = seq_pattern(("A", "B"), 10.0)
        planned = PlannedConjunct(
            OrderPlan(("A", "B")),
            PlanSearchReport("trivial", 0.0, 0.0, 1, 0.0, None),
        )
        doubled = PlanBundle("trivial", (planned, planned))
        with pytest.raises(ContractError):
            PatternRunner(p, doubled)


class TestExecutionShortcuts:
    def test_plain_sequences_run_eagerly(self):
        p = seq_pattern(("A", "B", "C"), 10.0)
        conjunct = normalize_pattern(p).conjuncts[0]
        chain = NfaChain(OrderPlan(("A", "B", "C")), conjunct)
        assert chain.eager
        # a reordered plan must buffer instead
        reordered = NfaChain(OrderPlan(("A", "C", "B")), conjunct)
        assert not reordered.eager

    def test_contiguity_plans_prune_stale_partials(self):
        p = seq_pattern(("A", "B", "C"), 10.0).with_strategy(
            SelectionStrategy(STRICT_CONTIGUITY)
        )
        conjunct = normalize_pattern(p).conjuncts[0]
        chain = NfaChain(OrderPlan(("A", "B", "C")), conjunct)
        assert chain.prune_stale

    def test_shortcut_paths_agree_with_buffered_path(self):
        # same stream through the eager in-order plan and a buffering
        # reordered plan; the match sets must not differ
        rng = random.Random(7)
        types, pattern = workload_pattern(rng, 4, 5.0, density=0)
        p = Pattern(
            OperatorNode(SEQ, tuple(Leaf(t, t.lower()) for t in types)), (), 5.0
        )
        events = list(workload_stream(types, seed=9, target_events=60, spread=1.0))
        in_order = run_keys(p, events, "trivial")
        reordered = run_keys(p, events, "dp-ld")
        assert in_order == reordered == match_keys(
            oracle_match(p, events, max_coresident=60)
        )


class TestMetrics:
    def test_event_and_match_counts(self):
        p = seq_pattern(("A", "B"), 10.0)
        events = [ev("A", 0.0, 0), ev("B", 1.0, 1)]
        result = run_pattern(p, bundle_for(p), events)
        metrics = result.engine_metrics[0]
        assert result.events == 2
        assert metrics.events == 2
        assert result.matches == metrics.matches == 1
        assert len(metrics.latency_samples) == 1
        assert metrics.latency_samples[0] >= 0.0

    def test_latency_measurement_can_be_disabled(self):
        p = seq_pattern(("A", "B"), 10.0)
        events = [ev("A", 0.0, 0), ev("B", 1.0, 1)]
        runner = PatternRunner(p, bundle_for(p), measure_latency=False)
        result = runner.run(events)
        assert result.mean_latency == 0.0
        assert result.matches == 1

    def test_tree_counts_lone_leaves_as_buffered(self):
        p = Pattern(OperatorNode(AND, (Leaf("A", "a"), Leaf("B", "b"))), (), 10.0)
        result = run_pattern(p, bundle_for(p, "dp-b"), [ev("A", 0.0, 0)], engine="tree")
        metrics = result.engine_metrics[0]
        assert metrics.buffered >= 1
        assert metrics.live_partials == 0
        assert metrics.memory_peak >= 1
        assert metrics.per_node_peak  # per-node occupancy was tracked

    def test_memory_peak_tracks_joint_state(self):
        p = seq_pattern(("A", "B"), 4.0)
        events = [ev("A", 0.0, i) for i in range(4)] + [ev("B", 1.0, 4)]
        result = run_pattern(p, bundle_for(p), events)
        assert result.memory_peak >= 4
        assert result.engine_metrics[0].peak_partials >= 4

    def test_wall_time_and_throughput(self):
        p = seq_pattern(("A", "B"), 10.0)
        events = [ev("A", 0.0, 0), ev("B", 1.0, 1)]
        result = run_pattern(p, bundle_for(p), events)
        assert result.wall_time > 0.0
        assert result.throughput == result.events / result.wall_time
