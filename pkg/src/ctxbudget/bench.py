"""Corpus ingestion, budget sweeps, Pareto envelopes, weight sensitivity,
position dependence, and report persistence.

Sweeps are deterministic: given the same corpus, configuration, and seed,
two runs serialize to byte-identical report files.  Timings are therefore
off by default (`record_timings`) and per-row failures are recorded rather
than fatal.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import metrics
from .errors import CorpusFormatError, UnknownMetricError
from .features import Embedder, FeatureSet, build_features
from .metrics import PriceSchedule, estimate_cost
from .selectors import (
    RcdWeights,
    MmrParams,
    SelectionProblem,
    run_selector,
    select_rcd,
)
from .units import (
    Document,
    TokenCounter,
    Unit,
    unitize_clusters,
    unitize_sections,
    unitize_sentences,
    unitize_windows,
)

METRIC_KEYS = ("rouge1", "rouge2", "token_f1", "soft_f1")


@dataclass
class Corpus:
    documents: list[Document]
    name: str = "corpus"
    split: str = "test"


def load_corpus(path, format: str = "jsonl", name: Optional[str] = None) -> Corpus:
    """Read a JSON Lines corpus: one {id, text, reference?, query?} per line."""
    if format != "jsonl":
        raise ValueError(f"unsupported corpus format: {format!r}")
    path = Path(path)
    documents = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {lineno}: invalid JSON ({exc})") from exc
            for required in ("id", "text"):
                if required not in raw:
                    raise CorpusFormatError(f"line {lineno}: missing field {required!r}")
            doc_id = str(raw["id"])
            if doc_id in seen:
                raise CorpusFormatError(
                    f"duplicate id {doc_id!r} on lines {seen[doc_id]} and {lineno}"
                )
            seen[doc_id] = lineno
            documents.append(
                Document(
                    id=doc_id,
                    text=str(raw["text"]),
                    reference=raw.get("reference"),
                    query=raw.get("query"),
                )
            )
    return Corpus(documents=documents, name=name or path.stem)


def write_corpus_jsonl(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            record = {"id": doc.id, "text": doc.text}
            if doc.reference is not None:
                record["reference"] = doc.reference
            if doc.query is not None:
                record["query"] = doc.query
            fh.write(json.dumps(record, sort_keys=True) + "\n")


@dataclass
class EvalRow:
    doc_id: str
    budget: int
    unitization: str
    method: str
    rcd_weights: Optional[RcdWeights]
    rouge1: float
    rouge2: float
    token_f1: float
    soft_f1: Optional[float]
    selected_cost: int
    estimated_cost: float
    elapsed_ms: int


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)


def metric_value(row: EvalRow, metric: str) -> Optional[float]:
    if metric not in METRIC_KEYS:
        raise UnknownMetricError(f"unknown metric {metric!r}; expected one of {METRIC_KEYS}")
    return getattr(row, metric)


@dataclass
class SweepConfig:
    """Everything a sweep needs beyond the corpus/budget/method axes."""

    counter: TokenCounter = field(default_factory=TokenCounter)
    embedder: Embedder = field(default_factory=Embedder)
    rcd_weights: RcdWeights = field(default_factory=RcdWeights)
    mmr_lambda: float = 0.7
    edge_threshold: float = 0.5
    max_anchors: int = 5
    window_base_words: int = 50
    window_overlap: float = 0.25
    cluster_sim_threshold: float = 0.5
    cluster_decay_halflife: float = 5.0
    prices: PriceSchedule = field(default_factory=PriceSchedule)
    seed: int = 0
    include_soft_f1: bool = False
    record_timings: bool = False
    jobs: int = 1

    def summary(self) -> dict:
        return {
            "counter": {
                "mode": self.counter.mode,
                "tokens_per_word": self.counter.tokens_per_word,
            },
            "embedder": {"kind": self.embedder.kind, "dimension": self.embedder.dimension},
            "rcd_weights": _weights_dict(self.rcd_weights),
            "mmr_lambda": self.mmr_lambda,
            "edge_threshold": self.edge_threshold,
            "max_anchors": self.max_anchors,
            "window_base_words": self.window_base_words,
            "window_overlap": self.window_overlap,
            "cluster_sim_threshold": self.cluster_sim_threshold,
            "cluster_decay_halflife": self.cluster_decay_halflife,
            "prices": {
                "input_price_per_million": self.prices.input_price_per_million,
                "output_price_per_million": self.prices.output_price_per_million,
            },
            "seed": self.seed,
            "include_soft_f1": self.include_soft_f1,
            "record_timings": self.record_timings,
        }


def build_units(doc: Document, unitization: str, config: SweepConfig) -> list[Unit]:
    if unitization == "sentence":
        return unitize_sentences(doc, config.counter)
    if unitization == "section":
        return unitize_sections(doc, config.counter)
    if unitization == "window":
        return unitize_windows(
            doc,
            config.counter,
            base_words=config.window_base_words,
            overlap_fraction=config.window_overlap,
        )
    if unitization == "cluster":
        sentence_units = unitize_sentences(doc, config.counter)
        sentence_features = build_features(sentence_units, config.embedder, doc.query)
        return unitize_clusters(
            doc,
            config.counter,
            sentence_features,
            sim_threshold=config.cluster_sim_threshold,
            decay_halflife=config.cluster_decay_halflife,
        )
    raise ValueError(f"unknown unitization: {unitization!r}")


def _score_row(doc, budget, unitization, method, result, config, elapsed_ms) -> EvalRow:
    r1 = metrics.rouge1(result.context_text, doc.reference)
    r2 = metrics.rouge2(result.context_text, doc.reference)
    tf1 = metrics.token_f1(result.context_text, doc.reference)
    soft = None
    if config.include_soft_f1:
        soft = metrics.soft_embed_f1(result.context_text, doc.reference, config.embedder).f1
    return EvalRow(
        doc_id=doc.id,
        budget=budget,
        unitization=unitization,
        method=method,
        rcd_weights=config.rcd_weights if method == "rcd" else None,
        rouge1=r1.f1,
        rouge2=r2.f1,
        token_f1=tf1.f1,
        soft_f1=soft,
        selected_cost=result.total_cost,
        estimated_cost=estimate_cost(result.total_cost, 0, config.prices),
        elapsed_ms=elapsed_ms,
    )


def _sweep_one(doc, unitization, budgets, methods, config):
    rows, failures = [], []
    try:
        units = build_units(doc, unitization, config)
        features = build_features(units, config.embedder, doc.query)
    except Exception as exc:  # degenerate document: fail every cell for it
        for budget in budgets:
            for method in methods:
                failures.append(
                    {
                        "doc_id": doc.id,
                        "budget": budget,
                        "unitization": unitization,
                        "method": method,
                        "error": str(exc),
                    }
                )
        return rows, failures

    for budget in budgets:
        problem = SelectionProblem(units=units, features=features, budget=budget, seed=config.seed)
        for method in methods:
            start = time.perf_counter()
            try:
                result = run_selector(
                    method,
                    problem,
                    mmr_params=MmrParams(lam=config.mmr_lambda),
                    rcd_weights=config.rcd_weights,
                    edge_threshold=config.edge_threshold,
                    max_anchors=config.max_anchors,
                )
            except Exception as exc:
                failures.append(
                    {
                        "doc_id": doc.id,
                        "budget": budget,
                        "unitization": unitization,
                        "method": method,
                        "error": str(exc),
                    }
                )
                continue
            elapsed = int((time.perf_counter() - start) * 1000) if config.record_timings else 0
            rows.append(_score_row(doc, budget, unitization, method, result, config, elapsed))
    return rows, failures


def run_sweep(
    corpus: Corpus,
    budgets: Sequence[int],
    unitizations: Sequence[str] = ("sentence",),
    methods: Sequence[str] = ("lead", "mmr", "rcd"),
    config: Optional[SweepConfig] = None,
) -> EvalReport:
    """Run the full pipeline for every (doc, budget, unitization, method) cell.

    Extractive mode: the selected context is scored directly against the
    document's reference.  Failures are recorded per cell and do not abort
    the sweep; rows are returned in deterministic sorted order.
    """
    config = config or SweepConfig()
    missing = [d.id for d in corpus.documents if not d.reference]
    if missing:
        raise ValueError(f"documents without references: {', '.join(missing[:5])}")
    budgets = [int(b) for b in budgets]

    tasks = [(doc, unitization) for doc in corpus.documents for unitization in unitizations]
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(
                pool.map(lambda t: _sweep_one(t[0], t[1], budgets, methods, config), tasks)
            )
    else:
        results = [_sweep_one(doc, u, budgets, methods, config) for doc, u in tasks]

    report = EvalReport(config=config.summary())
    for rows, failures in results:
        report.rows.extend(rows)
        report.failures.extend(failures)
    report.rows.sort(key=lambda r: (r.doc_id, r.budget, r.unitization, r.method))
    report.failures.sort(
        key=lambda f: (f["doc_id"], f["budget"], f["unitization"], f["method"])
    )
    return report


def pareto_envelope(report: EvalReport, metric: str = "rouge1") -> list[tuple[int, float, str]]:
    """Best mean score and achieving method at each budget."""
    cells: dict[tuple[int, str], list[float]] = {}
    for row in report.rows:
        value = metric_value(row, metric)
        if value is not None:
            cells.setdefault((row.budget, row.method), []).append(value)
    if not cells:
        raise UnknownMetricError(f"report has no values for metric {metric!r}")
    envelope = []
    for budget in sorted({b for b, _ in cells}):
        scored = [
            (float(np.mean(vals)), method)
            for (b, method), vals in cells.items()
            if b == budget
        ]
        scored.sort(key=lambda sm: (-sm[0], sm[1]))  # ties: smallest method name
        best_score, best_method = scored[0]
        envelope.append((budget, best_score, best_method))
    return envelope


def simplex_grid(grid_step: float) -> list[tuple[float, float, float]]:
    """All (alpha, beta, gamma) on the simplex with the given resolution."""
    n = round(1.0 / grid_step)
    if abs(n * grid_step - 1.0) > 1e-9 or n < 1:
        raise ValueError("grid_step must divide 1")
    points = []
    for i in range(n, -1, -1):
        for j in range(n - i, -1, -1):
            k = n - i - j
            points.append((i / n, j / n, k / n))
    return points


def weight_distance(a: RcdWeights, b: RcdWeights) -> float:
    """Half the L1 distance between weight vectors: the earth-mover distance
    between the two simplex points under a unit ground metric."""
    return 0.5 * (
        abs(a.alpha - b.alpha) + abs(a.beta - b.beta) + abs(a.gamma - b.gamma)
    )


@dataclass
class WeightSample:
    weights: RcdWeights
    mean_score: float
    distance_to_best: float = 0.0


@dataclass
class SensitivityGrid:
    samples: list[WeightSample]
    best_weights: RcdWeights
    tolerance: float
    stability_fraction: float
    budget: int


def sensitivity_sweep(
    corpus: Corpus,
    budget: int,
    grid_step: float = 0.1,
    eta: float = 1.0,
    tolerance: float = 0.005,
    config: Optional[SweepConfig] = None,
    mode: str = "grid",
    n_samples: int = 66,
) -> SensitivityGrid:
    """Mean score of the RCD selector at every objective-weight setting.

    `mode` "grid" enumerates the simplex at `grid_step`; "dirichlet" draws
    `n_samples` random points instead.  The stability fraction is the share
    of settings scoring within `tolerance` of the best one.
    """
    config = config or SweepConfig()
    if mode == "grid":
        points = simplex_grid(grid_step)
    elif mode == "dirichlet":
        rng = np.random.default_rng(config.seed)
        points = [tuple(p) for p in rng.dirichlet(np.ones(3), size=n_samples)]
    else:
        raise ValueError(f"unknown sensitivity mode: {mode!r}")

    prepared = []
    for doc in corpus.documents:
        if not doc.reference:
            raise ValueError(f"document {doc.id!r} has no reference")
        units = build_units(doc, "sentence", config)
        features = build_features(units, config.embedder, doc.query)
        prepared.append((doc, units, features))

    samples = []
    for alpha, beta, gamma in points:
        weights = RcdWeights(alpha=alpha, beta=beta, gamma=gamma, eta=eta)
        scores = []
        for doc, units, features in prepared:
            problem = SelectionProblem(units=units, features=features, budget=budget, seed=config.seed)
            result = select_rcd(problem, weights)
            scores.append(metrics.rouge1(result.context_text, doc.reference).f1)
        samples.append(WeightSample(weights=weights, mean_score=float(np.mean(scores))))

    best = max(samples, key=lambda s: s.mean_score)  # ties keep enumeration order
    for sample in samples:
        sample.distance_to_best = weight_distance(sample.weights, best.weights)
    stability = float(
        np.mean([s.mean_score >= best.mean_score - tolerance for s in samples])
    )
    return SensitivityGrid(
        samples=samples,
        best_weights=best.weights,
        tolerance=tolerance,
        stability_fraction=stability,
        budget=budget,
    )


@dataclass
class PositionDelta:
    budget: int
    lead_mean: float
    shuffled_mean: float
    delta: float


def position_dependence(
    corpus: Corpus,
    budgets: Sequence[int],
    seeds: Sequence[int] = (0,),
    config: Optional[SweepConfig] = None,
) -> list[PositionDelta]:
    """Lead-minus-Shuffled mean score per budget, Shuffled averaged over seeds."""
    if not seeds:
        raise ValueError("at least one seed is required")
    config = config or SweepConfig()
    prepared = []
    for doc in corpus.documents:
        if not doc.reference:
            raise ValueError(f"document {doc.id!r} has no reference")
        units = build_units(doc, "sentence", config)
        features = build_features(units, config.embedder, doc.query)
        prepared.append((doc, units, features))

    deltas = []
    for budget in budgets:
        lead_scores = []
        shuffled_by_seed = {seed: [] for seed in seeds}
        for doc, units, features in prepared:
            problem = SelectionProblem(units=units, features=features, budget=budget)
            lead = run_selector("lead", problem)
            lead_scores.append(metrics.rouge1(lead.context_text, doc.reference).f1)
            for seed in seeds:
                problem_s = SelectionProblem(
                    units=units, features=features, budget=budget, seed=seed
                )
                shuffled = run_selector("shuffled", problem_s)
                shuffled_by_seed[seed].append(
                    metrics.rouge1(shuffled.context_text, doc.reference).f1
                )
        lead_mean = float(np.mean(lead_scores))
        # delta as the mean of per-seed differences: exactly 0.0 whenever
        # every shuffled run reproduces the lead scores (e.g. budget covers
        # the whole document), with no nested-mean rounding
        per_seed_delta = [
            lead_mean - float(np.mean(shuffled_by_seed[seed])) for seed in seeds
        ]
        delta = float(np.mean(per_seed_delta))
        deltas.append(
            PositionDelta(
                budget=int(budget),
                lead_mean=lead_mean,
                shuffled_mean=lead_mean - delta,
                delta=delta,
            )
        )
    return deltas


def _weights_dict(weights: Optional[RcdWeights]) -> Optional[dict]:
    if weights is None:
        return None
    return {
        "alpha": round(weights.alpha, 6),
        "beta": round(weights.beta, 6),
        "gamma": round(weights.gamma, 6),
        "eta": round(weights.eta, 6),
    }


def _row_dict(row: EvalRow) -> dict:
    return {
        "doc_id": row.doc_id,
        "budget": row.budget,
        "unitization": row.unitization,
        "method": row.method,
        "rcd_weights": _weights_dict(row.rcd_weights),
        "rouge1": round(row.rouge1, 6),
        "rouge2": round(row.rouge2, 6),
        "token_f1": round(row.token_f1, 6),
        "soft_f1": None if row.soft_f1 is None else round(row.soft_f1, 6),
        "selected_cost": row.selected_cost,
        "estimated_cost": round(row.estimated_cost, 6),
        "elapsed_ms": row.elapsed_ms,
    }


_CSV_FIELDS = (
    "doc_id",
    "budget",
    "unitization",
    "method",
    "rcd_weights",
    "rouge1",
    "rouge2",
    "token_f1",
    "soft_f1",
    "selected_cost",
    "estimated_cost",
    "elapsed_ms",
)


def save_report(report: EvalReport, path, format: str = "json") -> None:
    """Serialize a report bit-stably: sorted keys, floats at 6 decimals."""
    path = Path(path)
    if format == "json":
        payload = {
            "config": report.config,
            "failures": report.failures,
            "rows": [_row_dict(r) for r in report.rows],
        }
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                json.dump(payload, fh, sort_keys=True, indent=2)
                fh.write("\n")
        except OSError as exc:
            raise CorpusFormatError(f"cannot write report to {path}: {exc}") from exc
        return
    if format == "csv":
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(_CSV_FIELDS)
                for row in report.rows:
                    d = _row_dict(row)
                    weights = d["rcd_weights"]
                    writer.writerow(
                        [
                            d["doc_id"],
                            d["budget"],
                            d["unitization"],
                            d["method"],
                            ""
                            if weights is None
                            else "{alpha:.6f}|{beta:.6f}|{gamma:.6f}|{eta:.6f}".format(**weights),
                            f"{d['rouge1']:.6f}",
                            f"{d['rouge2']:.6f}",
                            f"{d['token_f1']:.6f}",
                            "" if d["soft_f1"] is None else f"{d['soft_f1']:.6f}",
                            d["selected_cost"],
                            f"{d['estimated_cost']:.6f}",
                            d["elapsed_ms"],
                        ]
                    )
        except OSError as exc:
            raise CorpusFormatError(f"cannot write report to {path}: {exc}") from exc
        return
    raise ValueError(f"unsupported report format: {format!r}")


def load_report(path) -> EvalReport:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    rows = []
    for raw in payload["rows"]:
        weights = raw.get("rcd_weights")
        rows.append(
            EvalRow(
                doc_id=raw["doc_id"],
                budget=int(raw["budget"]),
                unitization=raw["unitization"],
                method=raw["method"],
                rcd_weights=None if weights is None else RcdWeights(**weights),
                rouge1=float(raw["rouge1"]),
                rouge2=float(raw["rouge2"]),
                token_f1=float(raw["token_f1"]),
                soft_f1=None if raw.get("soft_f1") is None else float(raw["soft_f1"]),
                selected_cost=int(raw["selected_cost"]),
                estimated_cost=float(raw["estimated_cost"]),
                elapsed_ms=int(raw["elapsed_ms"]),
            )
        )
    return EvalReport(
        rows=rows,
        failures=payload.get("failures", []),
        config=payload.get("config", {}),
    )
