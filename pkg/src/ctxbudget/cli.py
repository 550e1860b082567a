"""Command-line frontend.

Subcommands: select, sweep, calibrate, sensitivity, pareto, generate.
Configuration precedence is CLI flags > config file > environment >
defaults, and every command validates its full configuration before it
touches the corpus.  Exit codes: 0 success, 1 validation error, 2 runtime
error, 3 external-service error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import bench, routing
from .clients import post_json
from .errors import (
    ConfigError,
    CtxBudgetError,
    EmbeddingDimensionError,
    EmbeddingServiceError,
    GenerationServiceError,
)
from .features import Embedder, build_features
from .metrics import PriceSchedule, estimate_cost, rouge1, rouge2, token_f1
from .selectors import MmrParams, RcdWeights, SELECTOR_NAMES, SelectionProblem, run_selector
from .units import TokenCounter, UNITIZATION_NAMES

DEFAULT_PROMPT_TEMPLATE = "Summarize the following clinical context:\n\n{context}\n\nSummary:"

_ENV_KEYS = {
    "embedding_endpoint": "EMBEDDING_ENDPOINT",
    "embedding_api_key": "EMBEDDING_API_KEY",
    "generation_endpoint": "GENERATION_ENDPOINT",
    "generation_api_key": "GENERATION_API_KEY",
}


@dataclass
class GenerationClient:
    """Optional client for a user-supplied generation endpoint.

    Sends {"model", "prompt", "max_tokens"} and expects {"text": ...}; the
    prompt template must contain exactly one {context} placeholder.
    """

    endpoint: str
    model: str = "generator"
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE
    timeout: float = 30.0
    max_output_tokens: int = 512
    api_key: Optional[str] = None

    def __post_init__(self):
        if self.prompt_template.count("{context}") != 1:
            raise ConfigError("prompt template must contain exactly one {context} placeholder")

    def build_prompt(self, context: str) -> str:
        return self.prompt_template.replace("{context}", context)

    def generate(self, context: str) -> str:
        body = post_json(
            self.endpoint,
            {
                "model": self.model,
                "prompt": self.build_prompt(context),
                "max_tokens": self.max_output_tokens,
            },
            timeout=self.timeout,
            api_key=self.api_key,
            error_cls=GenerationServiceError,
        )
        if "text" not in body:
            raise GenerationServiceError(f"{self.endpoint} response has no 'text' field")
        return str(body["text"])


@dataclass
class RunConfig:
    corpus_path: Optional[str] = None
    budgets: list[int] = field(default_factory=lambda: [512])
    unitization: str = "sentence"
    method: str = "lead"
    router_policy_path: Optional[str] = None
    weights: tuple[float, float, float] = (0.4, 0.4, 0.2)
    eta: float = 1.0
    mmr_lambda: float = 0.7
    edge_threshold: float = 0.5
    max_anchors: int = 5
    seed: int = 0
    embedder_kind: str = "hashed_tfidf"
    dimension: int = 512
    embedding_endpoint: Optional[str] = None
    embedding_api_key: Optional[str] = None
    tokens_per_word: float = 1.3
    price_in: float = 0.0
    price_out: float = 0.0
    out: Optional[str] = None
    format: str = "json"
    provenance: bool = False
    jobs: int = 1
    soft_f1: bool = False
    doc_id: Optional[str] = None
    metric: str = "rouge1"
    low_method: str = "lead"
    mid_method: str = "mmr"
    high_method: str = "rcd"
    grid_step: float = 0.1
    tolerance: float = 0.005
    report: Optional[str] = None
    generation_endpoint: Optional[str] = None
    generation_api_key: Optional[str] = None
    generation_model: str = "generator"
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE
    max_output_tokens: int = 512
    timeout: float = 30.0

    def validate(self, command: str) -> None:
        if not self.budgets:
            raise ConfigError("budgets: at least one budget is required")
        if any(b < 1 for b in self.budgets):
            raise ConfigError("budgets: budgets must be positive token counts")
        known = set(SELECTOR_NAMES) | {"route"}
        if self.method not in known:
            raise ConfigError(f"method: unknown method {self.method!r}")
        if self.method == "route" and not self.router_policy_path:
            raise ConfigError("method: method 'route' requires --policy")
        if self.unitization not in UNITIZATION_NAMES:
            raise ConfigError(f"unitization: unknown unitization {self.unitization!r}")
        if self.format not in ("json", "csv"):
            raise ConfigError(f"format: unknown output format {self.format!r}")
        if self.jobs < 1:
            raise ConfigError("jobs: must be >= 1")
        if self.metric not in bench.METRIC_KEYS:
            raise ConfigError(f"metric: unknown metric {self.metric!r}")
        try:
            self.rcd_weights()
            MmrParams(lam=self.mmr_lambda)
            TokenCounter(tokens_per_word=self.tokens_per_word)
            PriceSchedule(self.price_in, self.price_out)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if command in ("select", "sweep", "calibrate", "sensitivity", "generate"):
            if not self.corpus_path:
                raise ConfigError("corpus: a corpus path is required")
        if command == "calibrate" and len(set(self.budgets)) < 2:
            raise ConfigError("budgets: calibration needs at least two grid points for b1 < b2")
        if command == "sensitivity":
            try:
                bench.simplex_grid(self.grid_step)
            except ValueError as exc:
                raise ConfigError(f"grid_step: {exc}") from exc
        if command == "pareto" and not self.report:
            raise ConfigError("report: --report is required")
        if command == "generate" and not self.generation_endpoint:
            raise ConfigError("generation endpoint: set --endpoint or GENERATION_ENDPOINT")

    def rcd_weights(self) -> RcdWeights:
        a, b, g = self.weights
        return RcdWeights(alpha=a, beta=b, gamma=g, eta=self.eta)

    def embedder(self) -> Embedder:
        cfg = {"seed": self.seed}
        if self.embedder_kind == "external_service":
            cfg.update(
                endpoint=self.embedding_endpoint,
                api_key=self.embedding_api_key,
                timeout=self.timeout,
            )
        return Embedder(kind=self.embedder_kind, dimension=self.dimension, config=cfg)

    def counter(self) -> TokenCounter:
        return TokenCounter(tokens_per_word=self.tokens_per_word)

    def sweep_config(self) -> bench.SweepConfig:
        return bench.SweepConfig(
            counter=self.counter(),
            embedder=self.embedder(),
            rcd_weights=self.rcd_weights(),
            mmr_lambda=self.mmr_lambda,
            edge_threshold=self.edge_threshold,
            max_anchors=self.max_anchors,
            prices=PriceSchedule(self.price_in, self.price_out),
            seed=self.seed,
            include_soft_f1=self.soft_f1,
            jobs=self.jobs,
        )

    def echo(self) -> dict:
        return {
            "corpus": self.corpus_path,
            "budgets": list(self.budgets),
            "unitization": self.unitization,
            "method": self.method,
            "seed": self.seed,
            "metric": self.metric,
        }


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # map argparse failures onto exit code 1
        raise ConfigError(message)


def _csv_ints(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"budgets: {text!r} is not a comma-separated integer list") from exc


def _csv_floats3(text: str) -> tuple[float, float, float]:
    parts = [part for part in text.split(",") if part.strip()]
    if len(parts) != 3:
        raise ConfigError(f"weights: expected three comma-separated values, got {text!r}")
    return tuple(float(p) for p in parts)


def build_parser() -> _Parser:
    parser = _Parser(prog="ctxbudget", description="Budgeted context selection")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--corpus", dest="corpus_path")
        p.add_argument("--budgets", type=_csv_ints)
        p.add_argument("--unitization", choices=UNITIZATION_NAMES)
        p.add_argument("--method", help="selector identifier or 'route'")
        p.add_argument("--policy", dest="router_policy_path")
        p.add_argument("--weights", type=_csv_floats3, help="alpha,beta,gamma")
        p.add_argument("--eta", type=float)
        p.add_argument("--lambda", dest="mmr_lambda", type=float)
        p.add_argument("--edge-threshold", dest="edge_threshold", type=float)
        p.add_argument("--max-anchors", dest="max_anchors", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--embedder", dest="embedder_kind", choices=("hashed_tfidf", "external_service"))
        p.add_argument("--dimension", type=int)
        p.add_argument("--tokens-per-word", dest="tokens_per_word", type=float)
        p.add_argument("--price-in", dest="price_in", type=float)
        p.add_argument("--price-out", dest="price_out", type=float)
        p.add_argument("--out")
        p.add_argument("--format", choices=("json", "csv"))
        p.add_argument("--jobs", type=int)
        p.add_argument("--metric", choices=bench.METRIC_KEYS)
        p.add_argument("--soft-f1", dest="soft_f1", action="store_const", const=True)

    p_select = sub.add_parser("select", help="select context for one document")
    common(p_select)
    p_select.add_argument("--doc-id", dest="doc_id")
    p_select.add_argument("--provenance", action="store_const", const=True)

    p_sweep = sub.add_parser("sweep", help="run a budget sweep and save a report")
    common(p_sweep)
    p_sweep.add_argument("--unitizations", type=lambda s: s.split(","), dest="unitizations")
    p_sweep.add_argument("--methods", type=lambda s: s.split(","), dest="methods")

    p_cal = sub.add_parser("calibrate", help="tune routing thresholds on a validation corpus")
    common(p_cal)
    p_cal.add_argument("--low", dest="low_method")
    p_cal.add_argument("--mid", dest="mid_method")
    p_cal.add_argument("--high", dest="high_method")

    p_sens = sub.add_parser("sensitivity", help="sweep RCD objective weights on the simplex")
    common(p_sens)
    p_sens.add_argument("--grid-step", dest="grid_step", type=float)
    p_sens.add_argument("--tolerance", type=float)

    p_par = sub.add_parser("pareto", help="best score per budget from a saved report")
    common(p_par)
    p_par.add_argument("--report")

    p_gen = sub.add_parser("generate", help="select context and call a generation service")
    common(p_gen)
    p_gen.add_argument("--doc-id", dest="doc_id")
    p_gen.add_argument("--endpoint", dest="generation_endpoint")
    p_gen.add_argument("--model", dest="generation_model")
    p_gen.add_argument("--template-file", dest="template_file")
    p_gen.add_argument("--max-output-tokens", dest="max_output_tokens", type=int)
    p_gen.add_argument("--timeout", type=float)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge CLI flags over the config file, environment, and defaults."""
    file_cfg: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config: file must hold a JSON object")

    config = RunConfig()
    template_file = getattr(args, "template_file", None) or file_cfg.get("template_file")
    if template_file:
        try:
            config.prompt_template = Path(template_file).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"template: cannot read {template_file}: {exc}") from exc

    for name in vars(config):
        cli_value = getattr(args, name, None)
        if cli_value is not None:
            setattr(config, name, cli_value)
        elif name in file_cfg:
            value = file_cfg[name]
            if name == "budgets":
                value = [int(b) for b in value]
            if name == "weights":
                value = tuple(float(w) for w in value)
            setattr(config, name, value)
        elif name in _ENV_KEYS and os.environ.get(_ENV_KEYS[name]):
            setattr(config, name, os.environ[_ENV_KEYS[name]])
    return config


def _load_document(config: RunConfig):
    corpus = bench.load_corpus(config.corpus_path)
    if not corpus.documents:
        raise ConfigError(f"corpus: {config.corpus_path} holds no documents")
    if config.doc_id is None:
        return corpus.documents[0]
    for doc in corpus.documents:
        if doc.id == config.doc_id:
            return doc
    raise ConfigError(f"doc-id: {config.doc_id!r} not found in {config.corpus_path}")


def _resolve_method(config: RunConfig, budget: int) -> str:
    if config.method != "route":
        return config.method
    policy = routing.load_policy(config.router_policy_path)
    return routing.route(budget, policy)


def _select_for_document(config: RunConfig, doc, budget: int):
    method = _resolve_method(config, budget)
    sweep_cfg = config.sweep_config()
    units = bench.build_units(doc, config.unitization, sweep_cfg)
    features = build_features(units, sweep_cfg.embedder, doc.query)
    problem = SelectionProblem(units=units, features=features, budget=budget, seed=config.seed)
    result = run_selector(
        method,
        problem,
        mmr_params=MmrParams(lam=config.mmr_lambda),
        rcd_weights=config.rcd_weights(),
        edge_threshold=config.edge_threshold,
        max_anchors=config.max_anchors,
    )
    return units, features, result


def cmd_select(config: RunConfig) -> int:
    doc = _load_document(config)
    budget = config.budgets[0]
    units, features, result = _select_for_document(config, doc, budget)
    stats = routing.compute_doc_stats(units, features, budget)
    print(
        f"# doc={doc.id} method={result.method} budget={budget} "
        f"cost={result.total_cost} units={len(result.selected)} "
        f"front_loading={stats.front_loading_index:.4f} "
        f"redundancy={stats.redundancy_index:.4f}"
    )
    print(result.context_text)
    if config.provenance:
        print("# provenance:")
        for i in result.selected:
            unit = units[i]
            label = unit.section_label or ""
            print(
                f"# unit={unit.index} span={unit.char_span[0]}:{unit.char_span[1]} "
                f"cost={unit.token_cost} section={label!r}"
            )
    return 0


def _print_budget_table(report: bench.EvalReport, methods, metric: str) -> None:
    budgets = sorted({row.budget for row in report.rows})
    print(f"{'budget':>8}  {'method':<14} {metric:>10}")
    for budget in budgets:
        for method in methods:
            values = [
                bench.metric_value(r, metric)
                for r in report.rows
                if r.budget == budget and r.method == method
            ]
            values = [v for v in values if v is not None]
            if values:
                mean = sum(values) / len(values)
                print(f"{budget:>8}  {method:<14} {mean:>10.4f}")


def cmd_sweep(config: RunConfig, unitizations=None, methods=None) -> int:
    corpus = bench.load_corpus(config.corpus_path)
    unitizations = unitizations or [config.unitization]
    methods = methods or ["lead", "mmr", "rcd"]
    report = bench.run_sweep(
        corpus, config.budgets, unitizations=unitizations, methods=methods,
        config=config.sweep_config(),
    )
    report.config.update(config.echo())
    report.config["methods"] = list(methods)
    report.config["unitizations"] = list(unitizations)
    if config.out:
        bench.save_report(report, config.out, format=config.format)
        print(f"# wrote {len(report.rows)} rows to {config.out}")
    _print_budget_table(report, methods, config.metric)
    if report.failures:
        print(f"# {len(report.failures)} cells failed", file=sys.stderr)
    return 0


def cmd_calibrate(config: RunConfig) -> int:
    corpus = bench.load_corpus(config.corpus_path)
    methods = (config.low_method, config.mid_method, config.high_method)
    report = bench.run_sweep(
        corpus, config.budgets, unitizations=[config.unitization],
        methods=list(dict.fromkeys(methods)), config=config.sweep_config(),
    )
    policy = routing.calibrate_thresholds(
        report, config.budgets, methods=methods, metric=config.metric
    )
    out = config.out or "router_policy.json"
    routing.save_policy(policy, out)
    print(
        f"# calibrated policy: b1={policy.b1} b2={policy.b2} "
        f"({policy.low_method}/{policy.mid_method}/{policy.high_method}) -> {out}"
    )
    return 0


def cmd_sensitivity(config: RunConfig) -> int:
    corpus = bench.load_corpus(config.corpus_path)
    grids = []
    for budget in config.budgets:
        grid = bench.sensitivity_sweep(
            corpus,
            budget,
            grid_step=config.grid_step,
            eta=config.eta,
            tolerance=config.tolerance,
            config=config.sweep_config(),
        )
        grids.append(grid)
        best = grid.best_weights
        print(
            f"# budget={budget} best=({best.alpha:.2f},{best.beta:.2f},{best.gamma:.2f}) "
            f"stability={grid.stability_fraction:.4f}"
        )
    if config.out:
        payload = {
            "config": {**config.echo(), "grid_step": config.grid_step,
                       "tolerance": config.tolerance, "eta": config.eta},
            "grids": [
                {
                    "budget": g.budget,
                    "tolerance": g.tolerance,
                    "stability_fraction": round(g.stability_fraction, 6),
                    "best_weights": bench._weights_dict(g.best_weights),
                    "samples": [
                        {
                            "weights": bench._weights_dict(s.weights),
                            "mean_score": round(s.mean_score, 6),
                            "distance_to_best": round(s.distance_to_best, 6),
                        }
                        for s in g.samples
                    ],
                }
                for g in grids
            ],
        }
        with open(config.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")
        print(f"# wrote sensitivity grids to {config.out}")
    return 0


def cmd_pareto(config: RunConfig) -> int:
    report = bench.load_report(config.report)
    envelope = bench.pareto_envelope(report, metric=config.metric)
    on_envelope = {(budget, method) for budget, _, method in envelope}
    if config.out:
        import csv as _csv

        cells: dict[tuple[int, str], list[float]] = {}
        for row in report.rows:
            value = bench.metric_value(row, config.metric)
            if value is not None:
                cells.setdefault((row.budget, row.method), []).append(value)
        with open(config.out, "w", encoding="utf-8", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["budget", "method", "score", "on_envelope"])
            for (budget, method) in sorted(cells):
                mean = sum(cells[(budget, method)]) / len(cells[(budget, method)])
                writer.writerow(
                    [budget, method, f"{mean:.6f}", int((budget, method) in on_envelope)]
                )
        print(f"# wrote curve table to {config.out}")
    for budget, score, method in envelope:
        print(f"{budget:>8}  {method:<14} {score:>10.4f}")
    return 0


def cmd_generate(config: RunConfig) -> int:
    doc = _load_document(config)
    budget = config.budgets[0]
    client = GenerationClient(
        endpoint=config.generation_endpoint,
        model=config.generation_model,
        prompt_template=config.prompt_template,
        timeout=config.timeout,
        max_output_tokens=config.max_output_tokens,
        api_key=config.generation_api_key,
    )
    _, _, result = _select_for_document(config, doc, budget)
    output = client.generate(result.context_text)
    counter = config.counter()
    input_tokens = counter.count(client.build_prompt(result.context_text))
    output_tokens = counter.count(output) if output.strip() else 0
    cost = estimate_cost(input_tokens, output_tokens, PriceSchedule(config.price_in, config.price_out))
    record = {
        "config": config.echo(),
        "doc_id": doc.id,
        "budget": budget,
        "method": result.method,
        "input_tokens": input_tokens,
        "output_tokens": output_tokens,
        "estimated_cost": round(cost, 6),
        "summary": output,
    }
    if doc.reference:
        record["rouge1"] = round(rouge1(output, doc.reference).f1, 6)
        record["rouge2"] = round(rouge2(output, doc.reference).f1, 6)
        record["token_f1"] = round(token_f1(output, doc.reference).f1, 6)
    print(json.dumps(record, sort_keys=True, indent=2))
    if config.out:
        with open(config.out, "w", encoding="utf-8") as fh:
            json.dump(record, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = resolve_config(args)
        config.validate(args.command)
        if args.command == "select":
            return cmd_select(config)
        if args.command == "sweep":
            return cmd_sweep(
                config,
                unitizations=getattr(args, "unitizations", None),
                methods=getattr(args, "methods", None),
            )
        if args.command == "calibrate":
            return cmd_calibrate(config)
        if args.command == "sensitivity":
            return cmd_sensitivity(config)
        if args.command == "pareto":
            return cmd_pareto(config)
        if args.command == "generate":
            return cmd_generate(config)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (EmbeddingServiceError, EmbeddingDimensionError, GenerationServiceError) as exc:
        print(f"service error: {exc}", file=sys.stderr)
        return 3
    except (CtxBudgetError, ValueError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
