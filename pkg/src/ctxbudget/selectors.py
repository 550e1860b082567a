"""Budget-feasible selection algorithms.

Seven selectors share one contract: given units with token costs and a
feature set, return a subset whose total cost fits the budget.  The
relevance/coverage/diversity objective is monotone submodular on a
nonnegative PSD kernel, so it is maximized by lazy greedy sweeps (per-cost
and plain-gain) guarded by a best-singleton check.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import FeatureMismatchError, NumericalBreakdownError
from .features import FeatureSet
from .units import Unit

SELECTOR_NAMES = (
    "lead",
    "shuffled",
    "sliding",
    "hierarchical",
    "graph_cluster",
    "mmr",
    "rcd",
)


@dataclass
class SelectionProblem:
    units: list[Unit]
    features: FeatureSet
    budget: int
    seed: int = 0

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be a positive token count")
        n = len(self.units)
        if self.features.kernel.shape != (n, n) or len(self.features.relevance) != n:
            raise FeatureMismatchError(
                f"features sized {self.features.kernel.shape} for {n} units"
            )

    @property
    def costs(self) -> np.ndarray:
        return np.array([u.token_cost for u in self.units], dtype=np.int64)


@dataclass
class SelectionResult:
    selected: list[int]
    total_cost: int
    method: str
    context_text: str
    objective_value: Optional[float] = None


@dataclass
class RcdWeights:
    """Objective weights; (alpha, beta, gamma) are normalized onto the simplex."""

    alpha: float = 0.4
    beta: float = 0.4
    gamma: float = 0.2
    eta: float = 1.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("objective weights must be nonnegative")
        total = self.alpha + self.beta + self.gamma
        if total <= 0:
            raise ValueError("at least one objective weight must be positive")
        self.alpha /= total
        self.beta /= total
        self.gamma /= total
        if self.eta <= 0:
            raise ValueError("eta must be positive")


@dataclass
class MmrParams:
    lam: float = 0.7

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")


def _finish(problem: SelectionProblem, chosen: Iterable[int], method: str,
            objective: Optional[float] = None) -> SelectionResult:
    selected = sorted(chosen)
    total = int(sum(problem.units[i].token_cost for i in selected))
    assert total <= problem.budget, "selector produced an infeasible set"
    text = " ".join(problem.units[i].text for i in selected)
    return SelectionResult(
        selected=selected,
        total_cost=total,
        method=method,
        context_text=text,
        objective_value=objective,
    )


def select_lead(problem: SelectionProblem) -> SelectionResult:
    """Document order, taking every unit that still fits the budget."""
    chosen = _pack_in_order(range(len(problem.units)), problem.costs, problem.budget)
    return _finish(problem, chosen, "lead")


def select_shuffled(problem: SelectionProblem) -> SelectionResult:
    """Lead rule over a seeded uniform permutation of the units."""
    rng = np.random.default_rng(problem.seed)
    order = rng.permutation(len(problem.units))
    chosen = _pack_in_order(order, problem.costs, problem.budget)
    return _finish(problem, chosen, "shuffled")


def _pack_in_order(order, costs, budget) -> list[int]:
    remaining = budget
    chosen = []
    for i in order:
        c = int(costs[i])
        if c <= remaining:
            chosen.append(int(i))
            remaining -= c
    return chosen


def select_sliding(problem: SelectionProblem) -> SelectionResult:
    """Contiguous range with the highest total relevance under the budget.

    Two-pointer sweep; ties resolve to the earliest start.
    """
    costs = problem.costs
    rel = problem.features.relevance
    n = len(costs)
    best_sum = -1.0
    best_range: tuple[int, int] | None = None
    left = 0
    cost_sum = 0
    rel_sum = 0.0
    for right in range(n):
        cost_sum += int(costs[right])
        rel_sum += float(rel[right])
        while cost_sum > problem.budget and left <= right:
            cost_sum -= int(costs[left])
            rel_sum -= float(rel[left])
            left += 1
        if left > right:
            continue
        if rel_sum > best_sum:
            best_sum = rel_sum
            best_range = (left, right)
    if best_range is None:
        return _finish(problem, [], "sliding")
    chosen = list(range(best_range[0], best_range[1] + 1))
    return _finish(problem, chosen, "sliding")


def select_hierarchical(problem: SelectionProblem, max_anchors: int = 5) -> SelectionResult:
    """Anchor on top-relevance units, then grow into adjacent context.

    Up to `max_anchors` anchors are taken in descending relevance (ties to
    the lowest index), skipping any that do not fit; afterwards the
    immediate left/right neighbors of the selection are added one at a
    time, higher relevance first, until nothing fits.
    """
    costs = problem.costs
    rel = problem.features.relevance
    n = len(costs)
    remaining = problem.budget
    chosen: set[int] = set()

    by_relevance = sorted(range(n), key=lambda i: (-rel[i], i))
    for i in by_relevance:
        if len(chosen) >= max_anchors:
            break
        if costs[i] <= remaining:
            chosen.add(i)
            remaining -= int(costs[i])

    while True:
        frontier = set()
        for i in chosen:
            if i - 1 >= 0 and i - 1 not in chosen:
                frontier.add(i - 1)
            if i + 1 < n and i + 1 not in chosen:
                frontier.add(i + 1)
        candidates = sorted(frontier, key=lambda i: (-rel[i], i))
        added = False
        for i in candidates:
            if costs[i] <= remaining:
                chosen.add(i)
                remaining -= int(costs[i])
                added = True
                break
        if not added:
            break
    return _finish(problem, chosen, "hierarchical")


def select_graph_cluster(
    problem: SelectionProblem, edge_threshold: float = 0.5
) -> SelectionResult:
    """Round-robin representatives from similarity components.

    Components of the kernel>=threshold graph are visited in descending
    total relevance; every round each component contributes its
    highest-relevance unselected unit that still fits.
    """
    kernel = problem.features.kernel
    rel = problem.features.relevance
    costs = problem.costs
    n = len(costs)

    adjacency = kernel >= edge_threshold
    np.fill_diagonal(adjacency, True)
    _, labels = connected_components(csr_matrix(adjacency), directed=False)
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    components = sorted(
        groups.values(), key=lambda g: (-sum(float(rel[i]) for i in g), g[0])
    )
    ranked = [sorted(g, key=lambda i: (-rel[i], i)) for g in components]

    remaining = problem.budget
    chosen: set[int] = set()
    progress = True
    while progress:
        progress = False
        for members in ranked:
            for i in members:
                if i in chosen or costs[i] > remaining:
                    continue
                chosen.add(i)
                remaining -= int(costs[i])
                progress = True
                break
    return _finish(problem, chosen, "graph_cluster")


def select_mmr(problem: SelectionProblem, params: MmrParams | None = None) -> SelectionResult:
    """Greedy maximal marginal relevance under the knapsack.

    Each step adds the feasible argmax of lam * r_i - (1 - lam) *
    max_{j in S} k(i, j); the redundancy term is 0 for the first pick.
    """
    params = params or MmrParams()
    kernel = problem.features.kernel
    rel = problem.features.relevance
    costs = problem.costs
    n = len(costs)

    remaining = problem.budget
    chosen: list[int] = []
    selected_mask = np.zeros(n, dtype=bool)
    max_sim = np.zeros(n, dtype=np.float64)
    while True:
        feasible = ~selected_mask & (costs <= remaining)
        if not feasible.any():
            break
        scores = params.lam * rel - (1.0 - params.lam) * max_sim
        scores = np.where(feasible, scores, -np.inf)
        i = int(np.argmax(scores))  # argmax takes the lowest index on ties
        chosen.append(i)
        selected_mask[i] = True
        remaining -= int(costs[i])
        max_sim = np.maximum(max_sim, kernel[:, i])
    return _finish(problem, chosen, "mmr")


def rcd_objective(selected, features: FeatureSet, weights: RcdWeights) -> float:
    """alpha * sum(r_i) + beta * facility-location coverage + gamma * log det(I + eta * K_S)."""
    idx = sorted(set(int(i) for i in selected))
    if not idx:
        return 0.0
    rel_term = float(features.relevance[idx].sum())
    cov_term = float(features.kernel[:, idx].max(axis=1).sum())
    sub = features.kernel[np.ix_(idx, idx)]
    sign, logdet = np.linalg.slogdet(np.eye(len(idx)) + weights.eta * sub)
    if sign <= 0:
        raise NumericalBreakdownError("I + eta * K_S is not positive definite")
    return weights.alpha * rel_term + weights.beta * cov_term + weights.gamma * float(logdet)


class LogDetState:
    """Incremental Cholesky factor of I + eta * K_S in insertion order.

    Adding an item borders the factor with one row: solve L w = v for the
    new off-diagonal block and take sqrt(d - w.w) as the new pivot.  The
    log-det marginal gain of a candidate is log(pivot), evaluated in
    O(|S|^2) without touching the factorization.
    """

    def __init__(self, kernel: np.ndarray, eta: float):
        self.kernel = kernel
        self.eta = eta
        n = kernel.shape[0]
        self._factor = np.zeros((n, n), dtype=np.float64)
        self.members: list[int] = []

    def _pivot(self, candidate: int) -> tuple[float, np.ndarray]:
        m = len(self.members)
        d = 1.0 + self.eta * float(self.kernel[candidate, candidate])
        if m == 0:
            return d, np.empty(0)
        v = self.eta * self.kernel[self.members, candidate]
        w = solve_triangular(self._factor[:m, :m], v, lower=True, check_finite=False)
        return d - float(w @ w), w

    def gain(self, candidate: int) -> float:
        """log det(I + eta * K_{S+e}) - log det(I + eta * K_S)."""
        pivot, _ = self._pivot(candidate)
        if pivot <= 0.0:
            raise NumericalBreakdownError(
                f"non-positive pivot {pivot:.3e} adding unit {candidate}; "
                "kernel is not conditioned"
            )
        return float(np.log(pivot))

    def add(self, candidate: int) -> None:
        pivot, w = self._pivot(candidate)
        if pivot <= 0.0:
            raise NumericalBreakdownError(
                f"non-positive pivot {pivot:.3e} adding unit {candidate}"
            )
        m = len(self.members)
        self._factor[m, :m] = w
        self._factor[m, m] = np.sqrt(pivot)
        self.members.append(candidate)


def logdet_marginal_gain(
    candidate: int, state: LogDetState, kernel: np.ndarray, eta: float
) -> float:
    """Marginal log-det gain of `candidate` against the state's current set."""
    if state.kernel is not kernel or state.eta != eta:
        raise ValueError("state was built for a different kernel or eta")
    return state.gain(candidate)


class _RcdGainState:
    """Mutable greedy state: coverage maxima, relevance sum, log-det factor."""

    def __init__(self, problem: SelectionProblem, weights: RcdWeights):
        self.kernel = problem.features.kernel
        self.rel = problem.features.relevance
        self.weights = weights
        self.cover = np.zeros(len(problem.units), dtype=np.float64)
        self.logdet = LogDetState(self.kernel, weights.eta) if weights.gamma > 0 else None

    def gain(self, i: int) -> float:
        w = self.weights
        g = w.alpha * float(self.rel[i])
        if w.beta > 0:
            g += w.beta * float(np.maximum(self.kernel[:, i] - self.cover, 0.0).sum())
        if self.logdet is not None:
            g += w.gamma * self.logdet.gain(i)
        return g

    def add(self, i: int) -> None:
        self.cover = np.maximum(self.cover, self.kernel[:, i])
        if self.logdet is not None:
            self.logdet.add(i)


def _lazy_greedy(problem: SelectionProblem, weights: RcdWeights, per_cost: bool) -> list[int]:
    """One lazy greedy pass; scores are marginal gain over cost or plain gain.

    A max-heap holds stale upper bounds; popped entries are recomputed
    against the current set and taken only when they still beat the next
    bound (ties to the lowest index), which reproduces the naive
    recompute-everything greedy exactly.  Items whose cost exceeds the
    remaining budget are dropped for good.
    """
    costs = problem.costs
    n = len(costs)
    state = _RcdGainState(problem, weights)

    def score(i: int) -> float:
        gain = state.gain(i)
        return gain / int(costs[i]) if per_cost else gain

    remaining = problem.budget
    heap = [(-score(i), i) for i in range(n) if costs[i] <= problem.budget]
    heapq.heapify(heap)
    chosen: list[int] = []
    while heap:
        _, i = heapq.heappop(heap)
        if costs[i] > remaining:
            continue
        fresh = (-score(i), i)
        if heap and fresh > heap[0]:
            heapq.heappush(heap, fresh)
            continue
        chosen.append(i)
        remaining -= int(costs[i])
        state.add(i)
    return chosen


def select_rcd(problem: SelectionProblem, weights: RcdWeights | None = None) -> SelectionResult:
    """Maximize the combined objective under the token knapsack.

    Runs the lazy greedy twice, once on gain-per-cost and once on plain
    gain (the per-cost rule alone can strand budget on cheap items), then
    compares both sets and the best feasible singleton by full objective
    value and returns the winner.  Deterministic with lowest-index
    tie-breaking throughout.
    """
    weights = weights or RcdWeights()
    costs = problem.costs
    n = len(costs)

    ratio_set = _lazy_greedy(problem, weights, per_cost=True)
    gain_set = _lazy_greedy(problem, weights, per_cost=False)
    best_set = ratio_set
    best_value = rcd_objective(ratio_set, problem.features, weights)
    gain_value = rcd_objective(gain_set, problem.features, weights)
    if gain_value > best_value:
        best_set, best_value = gain_set, gain_value

    best_single, best_single_value = None, -np.inf
    for i in range(n):
        if costs[i] > problem.budget:
            continue
        value = rcd_objective([i], problem.features, weights)
        if value > best_single_value:
            best_single, best_single_value = i, value
    if best_single is not None and best_single_value > best_value:
        return _finish(problem, [best_single], "rcd", objective=best_single_value)
    return _finish(problem, sorted(best_set), "rcd", objective=best_value)


def run_selector(
    name: str,
    problem: SelectionProblem,
    *,
    mmr_params: MmrParams | None = None,
    rcd_weights: RcdWeights | None = None,
    edge_threshold: float = 0.5,
    max_anchors: int = 5,
) -> SelectionResult:
    """Dispatch a selector by identifier."""
    if name == "lead":
        return select_lead(problem)
    if name == "shuffled":
        return select_shuffled(problem)
    if name == "sliding":
        return select_sliding(problem)
    if name == "hierarchical":
        return select_hierarchical(problem, max_anchors=max_anchors)
    if name == "graph_cluster":
        return select_graph_cluster(problem, edge_threshold=edge_threshold)
    if name == "mmr":
        return select_mmr(problem, mmr_params)
    if name == "rcd":
        return select_rcd(problem, rcd_weights)
    raise ValueError(f"unknown selector: {name!r}")
