import json

import numpy as np
import pytest
from scipy.optimize import linprog

from helpers import make_row

from ctxbudget.bench import (
    Corpus,
    EvalReport,
    SweepConfig,
    load_corpus,
    load_report,
    pareto_envelope,
    position_dependence,
    run_sweep,
    save_report,
    sensitivity_sweep,
    simplex_grid,
    weight_distance,
    write_corpus_jsonl,
)
from ctxbudget.errors import CorpusFormatError, UnknownMetricError
from ctxbudget.selectors import RcdWeights
from ctxbudget.synth import front_loaded_corpus, multi_topic_corpus, smoke_corpus
from ctxbudget.units import Document, TokenCounter


@pytest.fixture(scope="module")
def tiny_corpus():
    return front_loaded_corpus(n_docs=3, n_sentences=8, seed=1, name="tiny")


class TestLoadCorpus:
    def test_three_valid_lines(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(
            "\n".join(
                json.dumps({"id": f"d{i}", "text": f"Doc {i} text.", "reference": "ref"})
                for i in range(3)
            )
            + "\n"
        )
        corpus = load_corpus(path)
        assert len(corpus.documents) == 3
        assert corpus.documents[1].reference == "ref"

    def test_missing_text_names_line(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"id": "a", "text": "ok."}\n{"id": "b"}\n')
        with pytest.raises(CorpusFormatError, match="line 2"):
            load_corpus(path)

    def test_duplicate_ids_name_both_lines(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"id": "a", "text": "x."}\n{"id": "a", "text": "y."}\n')
        with pytest.raises(CorpusFormatError, match="lines 1 and 2"):
            load_corpus(path)

    def test_invalid_json_names_line(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"id": "a", "text": "x."}\nnot json\n')
        with pytest.raises(CorpusFormatError, match="line 2"):
            load_corpus(path)

    def test_optional_fields_tolerated(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"id": "a", "text": "x."}\n')
        doc = load_corpus(path).documents[0]
        assert doc.reference is None and doc.query is None

    def test_round_trip(self, tmp_path, tiny_corpus):
        path = tmp_path / "out.jsonl"
        write_corpus_jsonl(tiny_corpus, path)
        loaded = load_corpus(path)
        assert [d.id for d in loaded.documents] == [d.id for d in tiny_corpus.documents]
        assert loaded.documents[0].text == tiny_corpus.documents[0].text


class TestRunSweep:
    def test_row_count(self, tiny_corpus):
        report = run_sweep(
            Corpus(documents=tiny_corpus.documents[:1]),
            budgets=[32, 64],
            methods=("lead", "mmr", "rcd"),
        )
        assert len(report.rows) == 6
        assert not report.failures

    def test_rows_respect_budget(self, tiny_corpus):
        report = run_sweep(tiny_corpus, budgets=[24, 48], methods=("lead", "shuffled", "rcd"))
        for row in report.rows:
            assert row.selected_cost <= row.budget

    def test_convergence_at_large_budget(self, tiny_corpus):
        report = run_sweep(tiny_corpus, budgets=[100000], methods=("lead", "mmr", "rcd"))
        by_doc = {}
        for row in report.rows:
            by_doc.setdefault(row.doc_id, []).append(row)
        for rows in by_doc.values():
            scores = {(r.rouge1, r.rouge2, r.token_f1) for r in rows}
            assert len(scores) == 1

    def test_empty_methods_empty_report(self, tiny_corpus):
        report = run_sweep(tiny_corpus, budgets=[32], methods=())
        assert report.rows == [] and report.failures == []

    def test_missing_references_rejected_before_running(self):
        corpus = Corpus(documents=[Document(id="x", text="Some text here.")])
        with pytest.raises(ValueError, match="x"):
            run_sweep(corpus, budgets=[32])

    def test_rcd_weights_attached_to_rcd_rows_only(self, tiny_corpus):
        report = run_sweep(tiny_corpus, budgets=[32], methods=("lead", "rcd"))
        for row in report.rows:
            if row.method == "rcd":
                assert row.rcd_weights is not None
            else:
                assert row.rcd_weights is None

    def test_parallel_jobs_match_sequential(self, tiny_corpus):
        seq = run_sweep(tiny_corpus, budgets=[32, 64], methods=("lead", "mmr"))
        par = run_sweep(
            tiny_corpus,
            budgets=[32, 64],
            methods=("lead", "mmr"),
            config=SweepConfig(jobs=4),
        )
        assert seq.rows == par.rows

    def test_degenerate_document_recorded_not_fatal(self, tiny_corpus):
        docs = tiny_corpus.documents[:1] + [Document(id="bad", text="   ", reference="r")]
        report = run_sweep(Corpus(documents=docs), budgets=[32], methods=("lead",))
        assert len(report.rows) == 1
        assert len(report.failures) == 1
        assert report.failures[0]["doc_id"] == "bad"

    def test_every_unitization_sweeps(self, tiny_corpus):
        report = run_sweep(
            tiny_corpus,
            budgets=[48],
            unitizations=("sentence", "section", "window", "cluster"),
            methods=("lead", "rcd"),
        )
        assert not report.failures
        assert {r.unitization for r in report.rows} == {
            "sentence", "section", "window", "cluster",
        }
        for row in report.rows:
            assert row.selected_cost <= row.budget


class TestParetoEnvelope:
    def test_single_method_is_own_curve(self):
        rows = [make_row("d", b, "lead", s) for b, s in [(256, 0.4), (512, 0.5)]]
        env = pareto_envelope(EvalReport(rows=rows))
        assert env == [(256, pytest.approx(0.4), "lead"), (512, pytest.approx(0.5), "lead")]

    def test_dominant_method_named_everywhere(self):
        rows = []
        for b in (256, 512):
            rows.append(make_row("d", b, "lead", 0.3))
            rows.append(make_row("d", b, "mmr", 0.6))
        env = pareto_envelope(EvalReport(rows=rows))
        assert all(method == "mmr" for _, _, method in env)

    def test_envelope_pointwise_ge_every_curve(self):
        rng = np.random.default_rng(13)
        rows = []
        budgets = (128, 256, 512)
        methods = ("lead", "mmr", "rcd")
        table = {}
        for b in budgets:
            for m in methods:
                v = float(rng.uniform(0, 1))
                table[(b, m)] = v
                rows.append(make_row("d", b, m, v))
        env = {b: s for b, s, _ in pareto_envelope(EvalReport(rows=rows))}
        for (b, m), v in table.items():
            assert env[b] >= v - 1e-12

    def test_unknown_metric(self):
        rows = [make_row("d", 256, "lead", 0.4)]
        with pytest.raises(UnknownMetricError):
            pareto_envelope(EvalReport(rows=rows), metric="bleu")

    def test_envelope_ge_routed_curve_and_oracle_lower(self, tiny_corpus):
        from ctxbudget.routing import RouterPolicy, oracle_bounds, routed_scores

        report = run_sweep(tiny_corpus, budgets=[24, 48, 96, 2048])
        env = {b: s for b, s, _ in pareto_envelope(report)}
        bounds = oracle_bounds(report)
        routed = routed_scores(report, RouterPolicy(b1=48, b2=96))
        for b in env:
            assert env[b] >= routed[b] - 1e-12
            assert env[b] >= bounds[b][1] - 1e-12


class TestSensitivity:
    def test_simplex_enumeration_half_step(self):
        assert simplex_grid(0.5) == [
            (1.0, 0.0, 0.0),
            (0.5, 0.5, 0.0),
            (0.5, 0.0, 0.5),
            (0.0, 1.0, 0.0),
            (0.0, 0.5, 0.5),
            (0.0, 0.0, 1.0),
        ]

    def test_grid_point_count_tenth_step(self):
        assert len(simplex_grid(0.1)) == 66

    def test_step_must_divide_one(self):
        with pytest.raises(ValueError):
            simplex_grid(0.3)

    def test_constant_scores_stability_one(self, tiny_corpus):
        # budget above every document cost: every weight setting selects
        # everything, so scores are constant across the simplex
        grid = sensitivity_sweep(tiny_corpus, budget=100000, grid_step=0.5)
        assert grid.stability_fraction == 1.0
        scores = {s.mean_score for s in grid.samples}
        assert len(scores) == 1

    def test_best_weights_attain_max(self, tiny_corpus):
        grid = sensitivity_sweep(tiny_corpus, budget=40, grid_step=0.5)
        best = max(s.mean_score for s in grid.samples)
        chosen = [s for s in grid.samples if s.weights == grid.best_weights]
        assert chosen and chosen[0].mean_score == best

    def test_stability_monotone_in_tolerance(self, tiny_corpus):
        fractions = []
        for tol in (0.0, 0.01, 0.1, 1.0):
            grid = sensitivity_sweep(tiny_corpus, budget=40, grid_step=0.5, tolerance=tol)
            fractions.append(grid.stability_fraction)
        assert fractions == sorted(fractions)

    def test_dirichlet_mode_sample_count(self, tiny_corpus):
        grid = sensitivity_sweep(
            tiny_corpus, budget=40, mode="dirichlet", n_samples=5
        )
        assert len(grid.samples) == 5

    def test_half_l1_matches_transport_oracle(self):
        # earth-mover distance on a 3-point space with unit ground metric,
        # solved as a transport LP
        rng = np.random.default_rng(29)
        cost = (1.0 - np.eye(3)).reshape(-1)
        for _ in range(20):
            p = rng.dirichlet(np.ones(3))
            q = rng.dirichlet(np.ones(3))
            a_eq = np.zeros((6, 9))
            for i in range(3):
                a_eq[i, i * 3 : (i + 1) * 3] = 1.0  # row marginals
                for j in range(3):
                    a_eq[3 + i, j * 3 + i] = 1.0  # column marginals
            res = linprog(cost, A_eq=a_eq, b_eq=np.concatenate([p, q]), method="highs")
            assert res.success
            wa = RcdWeights(alpha=p[0], beta=p[1], gamma=p[2])
            wb = RcdWeights(alpha=q[0], beta=q[1], gamma=q[2])
            assert weight_distance(wa, wb) == pytest.approx(res.fun, abs=1e-9)


class TestPositionDependence:
    def test_single_sentence_documents_delta_zero(self):
        docs = [
            Document(id=f"d{i}", text=f"Only sentence number {i}.", reference="sentence")
            for i in range(4)
        ]
        deltas = position_dependence(Corpus(documents=docs), budgets=[16], seeds=(0, 1, 2))
        assert deltas[0].delta == 0.0

    def test_budget_above_cost_delta_zero(self, tiny_corpus):
        deltas = position_dependence(tiny_corpus, budgets=[100000], seeds=(0, 1))
        assert deltas[0].delta == 0.0

    def test_front_loaded_delta_positive_at_small_budget(self):
        corpus = front_loaded_corpus(n_docs=20, n_sentences=10, seed=3)
        deltas = position_dependence(corpus, budgets=[24], seeds=(0, 1, 2))
        assert deltas[0].delta > 0

    def test_requires_a_seed(self, tiny_corpus):
        with pytest.raises(ValueError):
            position_dependence(tiny_corpus, budgets=[32], seeds=())


class TestSaveReport:
    @pytest.fixture()
    def report(self, tiny_corpus):
        return run_sweep(tiny_corpus, budgets=[32, 64], methods=("lead", "shuffled", "rcd"))

    def test_json_round_trip(self, tmp_path, report):
        path = tmp_path / "r.json"
        save_report(report, path)
        loaded = load_report(path)
        assert len(loaded.rows) == len(report.rows)
        again = tmp_path / "r2.json"
        save_report(loaded, again)
        assert path.read_bytes() == again.read_bytes()

    def test_double_save_byte_identical(self, tmp_path, report):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_report(report, a)
        save_report(report, b)
        assert a.read_bytes() == b.read_bytes()

    def test_sweep_rerun_byte_identical(self, tmp_path, tiny_corpus):
        paths = []
        for name in ("x.json", "y.json"):
            report = run_sweep(
                tiny_corpus, budgets=[32, 64], methods=("lead", "shuffled", "rcd"),
                config=SweepConfig(seed=11),
            )
            path = tmp_path / name
            save_report(report, path)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_csv_header_and_rows(self, tmp_path, report):
        path = tmp_path / "r.csv"
        save_report(report, path, format="csv")
        lines = path.read_text().strip().splitlines()
        assert lines[0] == (
            "doc_id,budget,unitization,method,rcd_weights,rouge1,rouge2,"
            "token_f1,soft_f1,selected_cost,estimated_cost,elapsed_ms"
        )
        assert len(lines) == len(report.rows) + 1

    def test_empty_report_csv_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        save_report(EvalReport(), path, format="csv")
        assert path.read_text().strip().splitlines() == [
            "doc_id,budget,unitization,method,rcd_weights,rouge1,rouge2,"
            "token_f1,soft_f1,selected_cost,estimated_cost,elapsed_ms"
        ]

    def test_unknown_format_rejected(self, tmp_path, report):
        with pytest.raises(ValueError):
            save_report(report, tmp_path / "r.xml", format="xml")


class TestSmokeCorpus:
    def test_five_documents_with_references(self):
        corpus = smoke_corpus()
        assert len(corpus.documents) == 5
        assert all(d.reference for d in corpus.documents)

    def test_multi_topic_structure(self):
        corpus = multi_topic_corpus(n_docs=2, n_topics=3, sentences_per_topic=2)
        doc = corpus.documents[0]
        counter = TokenCounter()
        assert doc.reference
        assert len(doc.text.split(".")) >= 6
        assert counter.count(doc.text) > counter.count(doc.reference)
