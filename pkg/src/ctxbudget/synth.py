"""Synthetic corpus generators.

The benchmark's reference datasets are restricted clinical corpora; these
generators produce small documents with controlled structure (front-loaded
relevance, redundancy, topic blocks) so directional behavior can be tested
without any external data.
"""

from __future__ import annotations

import numpy as np

from .bench import Corpus
from .units import Document

_FILLER = [f"filler{i}" for i in range(240)]


def _topic_pool(topic: int, size: int = 30) -> list[str]:
    return [f"topic{topic}term{i}" for i in range(size)]


def _sentence(rng: np.random.Generator, pool: list[str], n_words: int) -> str:
    words = [pool[int(i)] for i in rng.integers(0, len(pool), size=n_words)]
    return words[0].capitalize() + " " + " ".join(words[1:]) + "."


def front_loaded_corpus(
    n_docs: int = 100,
    n_sentences: int = 20,
    key_fraction: float = 0.2,
    words_per_sentence: int = 8,
    seed: int = 0,
    name: str = "front_loaded",
) -> Corpus:
    """Reference-bearing content sits in the first `key_fraction` of sentences."""
    rng = np.random.default_rng(seed)
    docs = []
    key_count = max(1, round(key_fraction * n_sentences))
    for d in range(n_docs):
        pool = _topic_pool(d % 8)
        key = [_sentence(rng, pool, words_per_sentence) for _ in range(key_count)]
        filler = [
            _sentence(rng, _FILLER, words_per_sentence)
            for _ in range(n_sentences - key_count)
        ]
        docs.append(
            Document(
                id=f"{name}-{d:03d}",
                text=" ".join(key + filler),
                reference=" ".join(key),
            )
        )
    return Corpus(documents=docs, name=name)


def back_loaded_corpus(
    n_docs: int = 100,
    n_sentences: int = 20,
    key_fraction: float = 0.2,
    words_per_sentence: int = 8,
    seed: int = 0,
) -> Corpus:
    """Mirror image of the front-loaded corpus: key content at the end."""
    rng = np.random.default_rng(seed)
    docs = []
    key_count = max(1, round(key_fraction * n_sentences))
    for d in range(n_docs):
        pool = _topic_pool(d % 8)
        key = [_sentence(rng, pool, words_per_sentence) for _ in range(key_count)]
        filler = [
            _sentence(rng, _FILLER, words_per_sentence)
            for _ in range(n_sentences - key_count)
        ]
        docs.append(
            Document(
                id=f"back_loaded-{d:03d}",
                text=" ".join(filler + key),
                reference=" ".join(key),
            )
        )
    return Corpus(documents=docs, name="back_loaded")


def redundant_corpus(
    n_docs: int = 50,
    n_base: int = 6,
    repeats: int = 3,
    words_per_sentence: int = 8,
    seed: int = 0,
) -> Corpus:
    """Each base sentence appears several times with shuffled word order."""
    rng = np.random.default_rng(seed)
    docs = []
    for d in range(n_docs):
        pool = _topic_pool(d % 8)
        base = [_sentence(rng, pool, words_per_sentence) for _ in range(n_base)]
        sentences = []
        for s in base:
            words = s.rstrip(".").lower().split()
            sentences.append(s)
            for _ in range(repeats - 1):
                perm = [words[int(i)] for i in rng.permutation(len(words))]
                sentences.append(perm[0].capitalize() + " " + " ".join(perm[1:]) + ".")
        docs.append(
            Document(
                id=f"redundant-{d:03d}",
                text=" ".join(sentences),
                reference=" ".join(base),
            )
        )
    return Corpus(documents=docs, name="redundant")


def multi_topic_corpus(
    n_docs: int = 50,
    n_topics: int = 4,
    sentences_per_topic: int = 5,
    words_per_sentence: int = 8,
    seed: int = 0,
) -> Corpus:
    """Documents made of topic blocks; the reference covers every topic."""
    rng = np.random.default_rng(seed)
    docs = []
    for d in range(n_docs):
        blocks = []
        summary = []
        for t in range(n_topics):
            pool = _topic_pool((d + t * 13) % 29 + t * 29)
            blocks.extend(
                _sentence(rng, pool, words_per_sentence)
                for _ in range(sentences_per_topic)
            )
            summary.append(_sentence(rng, pool, words_per_sentence))
        docs.append(
            Document(
                id=f"multi_topic-{d:03d}",
                text=" ".join(blocks),
                reference=" ".join(summary),
            )
        )
    return Corpus(documents=docs, name="multi_topic")


def smoke_corpus(seed: int = 7) -> Corpus:
    """Five tiny documents for CLI smoke runs and examples."""
    corpus = front_loaded_corpus(
        n_docs=5, n_sentences=10, key_fraction=0.3, seed=seed, name="smoke"
    )
    return corpus
