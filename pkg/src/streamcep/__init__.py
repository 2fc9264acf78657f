"""Complex event processing with cost-based evaluation plans.

Patterns over event streams (sequences, conjunctions, disjunctions,
negation, Kleene closure) are compiled to evaluation plans, event
processing orders or binary join trees, chosen by plan-generation
algorithms working against a statistics catalog.  Two runtimes execute
the plans: a lazy chain automaton for orders and an instance-propagating
tree evaluator; an exhaustive matcher provides ground truth.
"""
from .model import (
    AND,
    ANY_MATCH,
    AttrRef,
    ContractError,
    DataError,
    Event,
    EventType,
    KLEENE,
    Leaf,
    Literal,
    MatchReport,
    MissingStatisticsError,
    NEXT_MATCH,
    NOT,
    NegationCheckpoint,
    OR,
    OperatorNode,
    OrderPlan,
    PARTITION_CONTIGUITY,
    Pattern,
    PatternStructureError,
    Predicate,
    ResourceLimitError,
    SEQ,
    STRICT_CONTIGUITY,
    SelectionStrategy,
    StatisticsCatalog,
    StreamCepError,
    TreeNode,
    TreePlan,
    UnsupportedPatternError,
    join,
    leaf,
    left_deep_tree,
    match_key,
    validate_pattern,
)
from .parser import ParseError, parse_pattern, render_pattern
from .transform import NormalizedConjunct, NormalizedPattern, normalize_pattern
from .cost import (
    cost_hybrid,
    cost_ord,
    cost_ord_latency,
    cost_ord_next,
    cost_tree,
    cost_tree_latency,
    cost_tree_next,
)
from .plangen import (
    ALGORITHM_NAMES,
    ORDER_ALGORITHMS,
    TREE_ALGORITHMS,
    PlanBundle,
    bundle_from_json,
    bundle_to_json,
    generate_plan,
    normalized_cost,
    plan_cost,
)
from .nfa import DEFAULT_KL_CAP, NfaEngine, build_nfa
from .tree_engine import TreeEngine, build_tree_engine, tree_plan_from_order
from .runner import PatternRunner, RunResult, run_pattern
from .oracle import oracle_match
from .stream import (
    ArrivalOrderProfile,
    StreamSource,
    SyntheticConfig,
    estimate_statistics,
    from_events,
    generate_synthetic,
    ingest_csv,
    profile_output,
)
from .bench import (
    FAMILIES,
    BenchmarkRow,
    WorkloadSpec,
    builtin_corpus,
    corpus_stream,
    generate_workload,
    run_benchmark,
    verify_pattern,
)

__version__ = "0.1.0"
