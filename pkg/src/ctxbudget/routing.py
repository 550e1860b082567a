"""Budget-regime routing: document statistics, the threshold policy, and
its calibration against a validation sweep."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from itertools import combinations
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import IncompleteSweepError
from .features import FeatureSet
from .units import Unit

if TYPE_CHECKING:  # pragma: no cover
    from .bench import EvalReport


@dataclass
class DocStats:
    """Diagnostics that describe how a document interacts with a budget.

    front_loading_index: fraction of total relevance in the budget-feasible
    prefix.  redundancy_index: mean similarity of adjacent units (0 when the
    document has a single unit).
    """

    front_loading_index: float
    redundancy_index: float
    unit_count: int
    total_cost: int


@dataclass
class RouterPolicy:
    b1: int = 512
    b2: int = 1024
    low_method: str = "lead"
    mid_method: str = "mmr"
    high_method: str = "rcd"

    def __post_init__(self):
        if self.b1 < 1 or self.b2 < 1:
            raise ValueError("thresholds must be positive token counts")
        if not self.b1 < self.b2:
            raise ValueError(f"b1 must be < b2, got ({self.b1}, {self.b2})")


def compute_doc_stats(units: Sequence[Unit], features: FeatureSet, budget: int) -> DocStats:
    rel = features.relevance
    kernel = features.kernel
    n = len(units)
    costs = [u.token_cost for u in units]

    prefix_len = 0
    acc = 0
    for c in costs:
        if acc + c > budget:
            break
        acc += c
        prefix_len += 1
    total_rel = float(rel.sum())
    phi = float(rel[:prefix_len].sum() / total_rel) if total_rel > 0 else 0.0
    rho = float(np.mean([kernel[i, i + 1] for i in range(n - 1)])) if n > 1 else 0.0
    return DocStats(
        front_loading_index=phi,
        redundancy_index=rho,
        unit_count=n,
        total_cost=int(sum(costs)),
    )


def route(budget: int, policy: RouterPolicy) -> str:
    """Map a budget to a selector identifier (upper boundaries inclusive)."""
    if budget <= policy.b1:
        return policy.low_method
    if budget <= policy.b2:
        return policy.mid_method
    return policy.high_method


def _mean_score_table(report: "EvalReport", metric: str, methods, budgets):
    from .bench import metric_value  # local import to avoid a cycle

    sums: dict[tuple[int, str], list[float]] = {}
    for row in report.rows:
        if row.method not in methods or row.budget not in budgets:
            continue
        value = metric_value(row, metric)
        if value is None:
            continue
        sums.setdefault((row.budget, row.method), []).append(value)
    missing = [
        (b, m) for b in budgets for m in methods if not sums.get((b, m))
    ]
    if missing:
        raise IncompleteSweepError(missing)
    return {cell: float(np.mean(vals)) for cell, vals in sums.items()}


def calibrate_thresholds(
    report: "EvalReport",
    candidate_grid: Sequence[int],
    methods: tuple[str, str, str] = ("lead", "mmr", "rcd"),
    metric: str = "rouge1",
) -> RouterPolicy:
    """Pick (b1, b2) maximizing the mean routed score over the budget grid.

    All b1 < b2 pairs from the grid are evaluated exhaustively; ties resolve
    to the lexicographically smallest pair.
    """
    budgets = sorted(set(int(b) for b in candidate_grid))
    if len(budgets) < 2:
        raise ValueError("candidate grid needs at least two budgets for b1 < b2")
    table = _mean_score_table(report, metric, set(methods), set(budgets))

    low, mid, high = methods
    best_pair = None
    best_value = -np.inf
    for b1, b2 in combinations(budgets, 2):
        trial = RouterPolicy(b1=b1, b2=b2, low_method=low, mid_method=mid, high_method=high)
        value = float(np.mean([table[(b, route(b, trial))] for b in budgets]))
        if value > best_value:
            best_value = value
            best_pair = (b1, b2)
    return RouterPolicy(
        b1=best_pair[0], b2=best_pair[1], low_method=low, mid_method=mid, high_method=high
    )


def oracle_bounds(
    report: "EvalReport",
    methods: Sequence[str] = ("lead", "mmr", "rcd"),
    metric: str = "rouge1",
) -> dict[int, tuple[float, float]]:
    """Per-budget (upper, lower) mean score over the given methods."""
    budgets = sorted({row.budget for row in report.rows})
    table = _mean_score_table(report, metric, set(methods), set(budgets))
    return {
        b: (
            max(table[(b, m)] for m in methods),
            min(table[(b, m)] for m in methods),
        )
        for b in budgets
    }


def routed_scores(
    report: "EvalReport", policy: RouterPolicy, metric: str = "rouge1"
) -> dict[int, float]:
    """Mean score per budget of the method the policy routes that budget to."""
    budgets = sorted({row.budget for row in report.rows})
    methods = {policy.low_method, policy.mid_method, policy.high_method}
    table = _mean_score_table(report, metric, methods, set(budgets))
    return {b: table[(b, route(b, policy))] for b in budgets}


def save_policy(policy: RouterPolicy, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(asdict(policy), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_policy(path) -> RouterPolicy:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return RouterPolicy(**raw)
