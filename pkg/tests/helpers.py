"""Shared test utilities: random instances, reference implementations, and a
stub HTTP server.

The greedy/exhaustive functions here are deliberately independent of the
production code paths they check: naive greedy recomputes every gain from
the full objective each step, and the exhaustive oracle enumerates all
feasible subsets.
"""

from __future__ import annotations

import json
import threading
from contextlib import contextmanager
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from itertools import combinations

import numpy as np

from ctxbudget.features import FeatureSet, condition_kernel
from ctxbudget.selectors import RcdWeights, SelectionProblem, rcd_objective
from ctxbudget.units import Unit


def make_units(costs) -> list[Unit]:
    return [
        Unit(
            index=i,
            text=f"unit{i} text",
            token_cost=int(c),
            char_span=(i * 10, i * 10 + 9),
            member_sentence_indices=[i],
        )
        for i, c in enumerate(costs)
    ]


def make_problem(costs, relevance, kernel=None, budget=10, seed=0) -> SelectionProblem:
    """Build a SelectionProblem from explicit arrays."""
    relevance = np.asarray(relevance, dtype=np.float64)
    n = len(relevance)
    if kernel is None:
        kernel = np.eye(n)
    features = FeatureSet(
        embeddings=np.eye(n),
        relevance=relevance,
        kernel=np.asarray(kernel, dtype=np.float64),
    )
    return SelectionProblem(units=make_units(costs), features=features, budget=budget, seed=seed)


def random_problem(rng, n_min=3, n_max=12, max_cost=20) -> SelectionProblem:
    """Random costs/relevance and a conditioned random kernel."""
    n = int(rng.integers(n_min, n_max + 1))
    raw = rng.uniform(-1.0, 1.0, size=(n, n))
    kernel = condition_kernel(0.5 * (raw + raw.T))
    relevance = rng.uniform(0.0, 1.0, size=n)
    costs = rng.integers(1, max_cost, size=n)
    budget = max(int(costs.min()), int(rng.integers(1, int(costs.sum()) + 1)))
    return make_problem(costs, relevance, kernel, budget=budget)


def random_weights(rng) -> RcdWeights:
    a, b, g = rng.uniform(0.05, 1.0, size=3)
    return RcdWeights(alpha=float(a), beta=float(b), gamma=float(g), eta=float(rng.uniform(0.2, 2.0)))


def naive_greedy_pass(problem: SelectionProblem, weights: RcdWeights, per_cost: bool) -> list[int]:
    """Recompute-every-gain-each-step greedy, sharing no code with the lazy
    incremental path: gains come from full objective evaluations."""
    costs = problem.costs
    n = len(costs)
    chosen: list[int] = []
    remaining = problem.budget
    current = 0.0
    while True:
        best = None
        for i in range(n):
            if i in chosen or costs[i] > remaining:
                continue
            gain = rcd_objective(chosen + [i], problem.features, weights) - current
            score = gain / int(costs[i]) if per_cost else gain
            key = (-score, i)
            if best is None or key < best[0]:
                best = (key, i)
        if best is None:
            break
        i = best[1]
        chosen.append(i)
        remaining -= int(costs[i])
        current = rcd_objective(chosen, problem.features, weights)
    return chosen


def naive_rcd_greedy(problem: SelectionProblem, weights: RcdWeights) -> list[int]:
    """Naive twin of select_rcd: per-cost pass, plain-gain pass, singleton."""
    costs = problem.costs
    n = len(costs)
    best_set = naive_greedy_pass(problem, weights, per_cost=True)
    best_value = rcd_objective(best_set, problem.features, weights)
    gain_set = naive_greedy_pass(problem, weights, per_cost=False)
    gain_value = rcd_objective(gain_set, problem.features, weights)
    if gain_value > best_value:
        best_set, best_value = gain_set, gain_value

    best_single = None
    single_value = -np.inf
    for i in range(n):
        if costs[i] > problem.budget:
            continue
        value = rcd_objective([i], problem.features, weights)
        if value > single_value:
            best_single, single_value = i, value
    if best_single is not None and single_value > best_value:
        return [best_single]
    return sorted(best_set)


def exhaustive_rcd_optimum(problem: SelectionProblem, weights: RcdWeights) -> float:
    """Max objective over all budget-feasible subsets (2^n enumeration)."""
    costs = problem.costs
    n = len(costs)
    best = 0.0
    for r in range(n + 1):
        for subset in combinations(range(n), r):
            if sum(int(costs[i]) for i in subset) <= problem.budget:
                best = max(best, rcd_objective(subset, problem.features, weights))
    return best


def make_row(doc_id, budget, method, rouge1_score, unitization="sentence", **overrides):
    from ctxbudget.bench import EvalRow

    fields = dict(
        doc_id=doc_id,
        budget=budget,
        unitization=unitization,
        method=method,
        rcd_weights=None,
        rouge1=rouge1_score,
        rouge2=rouge1_score / 2,
        token_f1=rouge1_score,
        soft_f1=None,
        selected_cost=budget,
        estimated_cost=0.0,
        elapsed_ms=0,
    )
    fields.update(overrides)
    return EvalRow(**fields)


@contextmanager
def stub_http_server(respond):
    """Serve POST requests with `respond(path, payload) -> (status, body_dict)`."""
    calls = []

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            payload = json.loads(self.rfile.read(length) or b"{}")
            calls.append({"path": self.path, "payload": payload, "headers": dict(self.headers)})
            status, body = respond(self.path, payload)
            data = json.dumps(body).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_port}", calls
    finally:
        server.shutdown()
        thread.join(timeout=5)
