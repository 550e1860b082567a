"""Evaluation metrics and the token cost model.

Text normalization is shared by every metric here: lowercase, punctuation
stripped to whitespace, whitespace split, no stemming.  Rankings are
therefore consistent within this package even though absolute values are
not comparable to scorers with different preprocessing.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .features import Embedder

_NON_WORD_RE = re.compile(r"[^a-z0-9]+")


@dataclass(frozen=True)
class ScorePair:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_pr(cls, precision: float, recall: float) -> "ScorePair":
        total = precision + recall
        f1 = 2.0 * precision * recall / total if total > 0 else 0.0
        return cls(precision=precision, recall=recall, f1=f1)


ZERO_SCORE = ScorePair(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class PriceSchedule:
    input_price_per_million: float = 0.0
    output_price_per_million: float = 0.0

    def __post_init__(self):
        if self.input_price_per_million < 0 or self.output_price_per_million < 0:
            raise ValueError("prices must be nonnegative")


def normalize_tokens(text: str) -> list[str]:
    return _NON_WORD_RE.sub(" ", text.lower()).split()


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _ngram_overlap(candidate: str, reference: str, n: int) -> ScorePair:
    cand = _ngrams(normalize_tokens(candidate), n)
    ref = _ngrams(normalize_tokens(reference), n)
    cand_total = sum(cand.values())
    ref_total = sum(ref.values())
    if cand_total == 0 or ref_total == 0:
        return ZERO_SCORE
    overlap = sum((cand & ref).values())  # clipped multiset intersection
    return ScorePair.from_pr(overlap / cand_total, overlap / ref_total)


def rouge1(candidate: str, reference: str) -> ScorePair:
    """Unigram multiset overlap precision/recall/F1."""
    return _ngram_overlap(candidate, reference, 1)


def rouge2(candidate: str, reference: str) -> ScorePair:
    """Bigram multiset overlap; zero when either side has fewer than 2 tokens."""
    return _ngram_overlap(candidate, reference, 2)


def token_f1(candidate: str, reference: str) -> ScorePair:
    """Token-level F1; identical to rouge1 under this package's normalization,
    kept as a separately named metric."""
    return _ngram_overlap(candidate, reference, 1)


def soft_embed_f1(candidate: str, reference: str, embedder: Embedder) -> ScorePair:
    """Greedy max-cosine token matching in embedding space.

    Precision averages, over candidate tokens, the best cosine against any
    reference token; recall is symmetric.  No baseline rescaling is applied,
    and negative best-matches are floored at zero.
    """
    cand_tokens = normalize_tokens(candidate)
    ref_tokens = normalize_tokens(reference)
    if not cand_tokens or not ref_tokens:
        return ZERO_SCORE

    vocab = sorted(set(cand_tokens) | set(ref_tokens))
    vectors = embedder.embed(vocab)
    row = {tok: vectors[i] for i, tok in enumerate(vocab)}
    cand_mat = np.stack([row[t] for t in cand_tokens])
    ref_mat = np.stack([row[t] for t in ref_tokens])
    sims = cand_mat @ ref_mat.T
    precision = float(np.mean(np.clip(sims.max(axis=1), 0.0, 1.0)))
    recall = float(np.mean(np.clip(sims.max(axis=0), 0.0, 1.0)))
    return ScorePair.from_pr(precision, recall)


def estimate_cost(input_tokens: int, output_tokens: int, prices: PriceSchedule) -> float:
    """Price of one call: (p_in * input + p_out * output) / 1e6."""
    if input_tokens < 0 or output_tokens < 0:
        raise ValueError("token counts must be nonnegative")
    return (
        prices.input_price_per_million * input_tokens
        + prices.output_price_per_million * output_tokens
    ) / 1_000_000.0
