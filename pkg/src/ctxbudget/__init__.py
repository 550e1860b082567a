"""Budget-constrained context selection for long documents."""

from .bench import (
    Corpus,
    EvalReport,
    EvalRow,
    SweepConfig,
    load_corpus,
    load_report,
    pareto_envelope,
    position_dependence,
    run_sweep,
    save_report,
    sensitivity_sweep,
    write_corpus_jsonl,
)
from .features import Embedder, FeatureSet, build_features, build_kernel, condition_kernel
from .metrics import PriceSchedule, ScorePair, estimate_cost, rouge1, rouge2, soft_embed_f1, token_f1
from .routing import (
    DocStats,
    RouterPolicy,
    calibrate_thresholds,
    compute_doc_stats,
    load_policy,
    oracle_bounds,
    route,
    routed_scores,
    save_policy,
)
from .selectors import (
    MmrParams,
    RcdWeights,
    SELECTOR_NAMES,
    SelectionProblem,
    SelectionResult,
    rcd_objective,
    run_selector,
    select_graph_cluster,
    select_hierarchical,
    select_lead,
    select_mmr,
    select_rcd,
    select_shuffled,
    select_sliding,
)
from .units import (
    Document,
    TokenCounter,
    UNITIZATION_NAMES,
    Unit,
    unitize_clusters,
    unitize_sections,
    unitize_sentences,
    unitize_windows,
)

__version__ = "0.1.0"

__all__ = [
    "Corpus",
    "DocStats",
    "Document",
    "Embedder",
    "EvalReport",
    "EvalRow",
    "FeatureSet",
    "MmrParams",
    "PriceSchedule",
    "RcdWeights",
    "RouterPolicy",
    "SELECTOR_NAMES",
    "ScorePair",
    "SelectionProblem",
    "SelectionResult",
    "SweepConfig",
    "TokenCounter",
    "UNITIZATION_NAMES",
    "Unit",
    "build_features",
    "build_kernel",
    "calibrate_thresholds",
    "compute_doc_stats",
    "condition_kernel",
    "estimate_cost",
    "load_corpus",
    "load_policy",
    "load_report",
    "oracle_bounds",
    "pareto_envelope",
    "position_dependence",
    "rcd_objective",
    "rouge1",
    "rouge2",
    "route",
    "routed_scores",
    "run_selector",
    "run_sweep",
    "save_policy",
    "save_report",
    "select_graph_cluster",
    "select_hierarchical",
    "select_lead",
    "select_mmr",
    "select_rcd",
    "select_shuffled",
    "select_sliding",
    "sensitivity_sweep",
    "soft_embed_f1",
    "token_f1",
    "unitize_clusters",
    "unitize_sections",
    "unitize_sentences",
    "unitize_windows",
    "write_corpus_jsonl",
]
