import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxbudget.features import Embedder
from ctxbudget.metrics import (
    PriceSchedule,
    estimate_cost,
    normalize_tokens,
    rouge1,
    rouge2,
    soft_embed_f1,
    token_f1,
)

EMBEDDER = Embedder(dimension=256)

texts = st.text(
    alphabet=st.sampled_from("abcde .,!?"), min_size=0, max_size=40
)


class TestRouge1:
    def test_identity(self):
        assert rouge1("the patient improved", "the patient improved").f1 == 1.0

    def test_half_overlap(self):
        score = rouge1("a b", "a c")
        assert (score.precision, score.recall, score.f1) == (0.5, 0.5, 0.5)

    def test_clipped_multiset_counts(self):
        # {a:2, b:1} vs {a:1, b:2}: overlap = min(2,1) + min(1,2) = 2
        score = rouge1("a a b", "a b b")
        assert score.precision == pytest.approx(2 / 3)
        assert score.recall == pytest.approx(2 / 3)
        assert score.f1 == pytest.approx(2 / 3)

    def test_empty_sides_zero(self):
        assert rouge1("", "something").f1 == 0.0
        assert rouge1("something", "").f1 == 0.0
        assert rouge1("", "").f1 == 0.0

    def test_disjoint_zero(self):
        assert rouge1("alpha beta", "gamma delta").f1 == 0.0

    def test_case_and_punctuation_invariance(self):
        base = rouge1("the cat sat", "a cat sat down")
        perturbed = rouge1("The CAT, sat!", "a - CaT: sat? (down)")
        assert perturbed == base

    def test_random_case_punctuation_perturbations(self):
        rng = np.random.default_rng(31)
        words = ["alpha", "beta", "gamma", "delta", "epsilon"]
        marks = [",", ".", "!", "?", ";", ":"]

        def perturb(text):
            out = []
            for w in text.split():
                w = "".join(
                    c.upper() if rng.random() < 0.5 else c for c in w
                )
                if rng.random() < 0.4:
                    w += marks[int(rng.integers(0, len(marks)))]
                out.append(w)
            return " ".join(out)

        for _ in range(30):
            a = " ".join(rng.choice(words, size=6))
            b = " ".join(rng.choice(words, size=7))
            assert rouge1(perturb(a), perturb(b)) == rouge1(a, b)
            assert rouge2(perturb(a), perturb(b)) == rouge2(a, b)

    @given(texts, texts)
    @settings(max_examples=100, deadline=None)
    def test_precision_recall_symmetry(self, a, b):
        assert rouge1(a, b).precision == rouge1(b, a).recall

    @given(texts, texts)
    @settings(max_examples=100, deadline=None)
    def test_scores_bounded(self, a, b):
        # the harmonic-mean bounds hold mathematically; allow an ulp of
        # rounding (2*0.4*0.4/0.8 lands one ulp above 0.4)
        for metric in (rouge1, rouge2):
            s = metric(a, b)
            assert 0.0 <= s.precision <= 1.0
            assert 0.0 <= s.recall <= 1.0
            if s.precision > 0 and s.recall > 0:
                assert min(s.precision, s.recall) - 1e-12 <= s.f1
                assert s.f1 <= max(s.precision, s.recall) + 1e-12
            else:
                assert s.f1 == 0.0


class TestRouge2:
    def test_identity(self):
        assert rouge2("alpha beta gamma", "alpha beta gamma").f1 == 1.0

    def test_single_shared_bigram(self):
        score = rouge2("a b c", "b c d")
        assert (score.precision, score.recall, score.f1) == (0.5, 0.5, 0.5)

    def test_single_token_candidate_zero(self):
        assert rouge2("alpha", "alpha beta").f1 == 0.0


class TestTokenF1:
    def test_alias_of_rouge1(self):
        rng = np.random.default_rng(2)
        words = ["alpha", "beta", "gamma", "delta"]
        for _ in range(20):
            a = " ".join(rng.choice(words, size=5))
            b = " ".join(rng.choice(words, size=6))
            assert token_f1(a, b) == rouge1(a, b)

    def test_identity_and_disjoint(self):
        assert token_f1("x y z", "x y z").f1 == 1.0
        assert token_f1("x y", "p q").f1 == 0.0


class TestSoftEmbedF1:
    def test_identity_is_one(self):
        s = soft_embed_f1("alpha beta gamma", "alpha beta gamma", EMBEDDER)
        assert s.precision == pytest.approx(1.0, abs=1e-9)
        assert s.recall == pytest.approx(1.0, abs=1e-9)
        assert s.f1 == pytest.approx(1.0, abs=1e-9)

    def test_disjoint_tokens_zero(self):
        s = soft_embed_f1("alpha beta", "gamma delta", Embedder(dimension=512))
        assert s.f1 == pytest.approx(0.0, abs=1e-12)

    def test_partial_reference_coverage(self):
        # candidate {v}, reference {v, w}, cos(v, w) = 0
        s = soft_embed_f1("alpha", "alpha delta", Embedder(dimension=512))
        assert s.precision == pytest.approx(1.0, abs=1e-9)
        assert s.recall == pytest.approx(0.5, abs=1e-9)
        assert s.f1 == pytest.approx(2 / 3, abs=1e-9)

    def test_empty_zero(self):
        assert soft_embed_f1("", "words", EMBEDDER).f1 == 0.0


class TestEstimateCost:
    def test_unit_prices(self):
        prices = PriceSchedule(1e6, 1e6)
        assert estimate_cost(100, 50, prices) == pytest.approx(150.0)

    def test_zero_tokens(self):
        assert estimate_cost(0, 0, PriceSchedule(5.0, 10.0)) == 0.0

    def test_input_only(self):
        assert estimate_cost(10**6, 0, PriceSchedule(2.0, 0.0)) == pytest.approx(2.0)

    def test_linearity(self):
        prices = PriceSchedule(3.5, 7.25)
        assert estimate_cost(2 * 123, 2 * 456, prices) == pytest.approx(
            2 * estimate_cost(123, 456, prices)
        )

    def test_negative_tokens_rejected(self):
        with pytest.raises(ValueError):
            estimate_cost(-1, 0, PriceSchedule())

    def test_negative_prices_rejected(self):
        with pytest.raises(ValueError):
            PriceSchedule(-0.1, 0.0)


class TestNormalization:
    def test_lowercase_and_punctuation(self):
        assert normalize_tokens("The CAT, sat!") == ["the", "cat", "sat"]

    def test_digits_kept(self):
        assert normalize_tokens("dose 40mg b.i.d.") == ["dose", "40mg", "b", "i", "d"]
