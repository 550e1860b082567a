"""Per-unit embeddings, relevance scores, and the similarity kernel.

The default embedder is a hashed TF-IDF: deterministic, offline, and
componentwise nonnegative, so the resulting Gram kernel is entrywise
nonnegative and PSD by construction.  External embeddings are routed
through `condition_kernel`, which projects onto that same regime.
"""

from __future__ import annotations

import hashlib
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DegenerateFeaturesError,
    EmbeddingDimensionError,
    NonSquareKernelError,
)

_WORD_RE = re.compile(r"[a-z0-9]+")

KERNEL_JITTER = 1e-8
# Loop the clip passes until the smallest eigenvalue clears this bar; the
# added jitter then keeps the final matrix comfortably inside -1e-8.
_EIG_TOL = -3e-9
_MAX_CLIP_PASSES = 64


def _tokenize(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


@dataclass
class Embedder:
    """Embedding backend configuration.

    kind "hashed_tfidf" runs in-process; "external_service" POSTs texts to a
    configured HTTP endpoint (see `config` keys endpoint/api_key/timeout/
    retries, with EMBEDDING_ENDPOINT / EMBEDDING_API_KEY as fallbacks).
    """

    kind: str = "hashed_tfidf"
    dimension: int = 512
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("hashed_tfidf", "external_service"):
            raise ValueError(f"unknown embedder kind: {self.kind!r}")
        if self.dimension < 1:
            raise ValueError("dimension must be positive")

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if self.kind == "hashed_tfidf":
            seed = int(self.config.get("seed", 0))
            return _hashed_tfidf(texts, self.dimension, seed)
        return self._embed_external(texts)

    def _embed_external(self, texts: Sequence[str]) -> np.ndarray:
        import os

        from .clients import fetch_embeddings

        endpoint = self.config.get("endpoint") or os.environ.get("EMBEDDING_ENDPOINT")
        if not endpoint:
            raise ValueError("external_service embedder needs an endpoint")
        api_key = self.config.get("api_key") or os.environ.get("EMBEDDING_API_KEY")
        vectors = fetch_embeddings(
            list(texts),
            endpoint,
            api_key=api_key,
            timeout=float(self.config.get("timeout", 10.0)),
            retries=int(self.config.get("retries", 2)),
        )
        if len(vectors) != len(texts):
            raise EmbeddingDimensionError(
                f"service returned {len(vectors)} vectors for {len(texts)} texts"
            )
        mat = np.asarray(vectors, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[1] != self.dimension:
            got = mat.shape[1] if mat.ndim == 2 else "ragged"
            raise EmbeddingDimensionError(
                f"expected dimension {self.dimension}, service returned {got}"
            )
        norms = np.linalg.norm(mat, axis=1)
        if np.any(norms == 0):
            raise DegenerateFeaturesError("service returned a zero embedding vector")
        return mat / norms[:, None]


def _stable_bucket(token: str, seed: int, dimension: int) -> int:
    key = seed.to_bytes(8, "little", signed=True)
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little") % dimension


def _hashed_tfidf(texts: Sequence[str], dimension: int, seed: int) -> np.ndarray:
    token_lists = [_tokenize(t) for t in texts]
    n = len(texts)
    df: Counter = Counter()
    for toks in token_lists:
        df.update(set(toks))
    idf = {t: math.log((1.0 + n) / (1.0 + d)) + 1.0 for t, d in df.items()}
    buckets = {t: _stable_bucket(t, seed, dimension) for t in df}

    rows = np.zeros((n, dimension), dtype=np.float64)
    for i, toks in enumerate(token_lists):
        if not toks:
            # token-less text: deterministic unit mass in a fixed bucket
            rows[i, _stable_bucket("", seed, dimension)] = 1.0
            continue
        for tok, count in Counter(toks).items():
            rows[i, buckets[tok]] += (1.0 + math.log(count)) * idf[tok]
        rows[i] /= np.linalg.norm(rows[i])
    return rows


@dataclass
class FeatureSet:
    """Immutable per-unit features shared read-only by the selectors."""

    embeddings: np.ndarray
    relevance: np.ndarray
    kernel: np.ndarray


def embed_units(units, embedder: Embedder) -> np.ndarray:
    """Embed unit texts; rows are L2-normalized."""
    if not units:
        raise ValueError("units must be non-empty")
    return embedder.embed([u.text for u in units])


def compute_relevance(
    embeddings: np.ndarray, query_embedding: Optional[np.ndarray] = None
) -> np.ndarray:
    """Cosine of each row against the query (or the centroid), clipped at 0."""
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.size == 0:
        raise ValueError("embeddings must be non-empty")
    if query_embedding is not None:
        target = np.asarray(query_embedding, dtype=np.float64)
    else:
        target = emb.mean(axis=0)
    norm = np.linalg.norm(target)
    if norm == 0:
        raise DegenerateFeaturesError("target direction has zero norm")
    target = target / norm
    return np.clip(emb @ target, 0.0, None)


def build_kernel(embeddings: np.ndarray) -> np.ndarray:
    """Gram matrix of unit-normalized rows, exactly symmetric, unit diagonal."""
    emb = np.asarray(embeddings, dtype=np.float64)
    kernel = emb @ emb.T
    kernel = 0.5 * (kernel + kernel.T)
    np.fill_diagonal(kernel, 1.0)
    return kernel


def condition_kernel(kernel: np.ndarray, jitter: float = KERNEL_JITTER) -> np.ndarray:
    """Project a square matrix onto nonnegative-entry PSD kernels.

    Symmetrizes, then alternates eigenvalue clipping with an entry clamp to
    [0, 1] until the smallest eigenvalue is above tolerance, and finally adds
    `jitter` to the diagonal.  The output has min eigenvalue >= -1e-8 and
    entries in [0, 1 + jitter]; applying it twice moves entries by at most
    2 * jitter.
    """
    mat = np.asarray(kernel, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise NonSquareKernelError(f"kernel must be square, got shape {mat.shape}")
    mat = 0.5 * (mat + mat.T)
    for _ in range(_MAX_CLIP_PASSES):
        eigvals, eigvecs = np.linalg.eigh(mat)
        in_box = mat.min() >= 0.0 and mat.max() <= 1.0
        if eigvals[0] >= _EIG_TOL and in_box:
            break
        if eigvals[0] < 0.0:
            mat = (eigvecs * np.clip(eigvals, 0.0, None)) @ eigvecs.T
            mat = 0.5 * (mat + mat.T)
        mat = np.clip(mat, 0.0, 1.0)
    return mat + jitter * np.eye(mat.shape[0])


def build_features(units, embedder: Embedder, query: Optional[str] = None) -> FeatureSet:
    """Run the full representation stage for one unit list.

    Hashed TF-IDF gives a nonnegative PSD kernel directly; external
    embeddings are conditioned before use.
    """
    embeddings = embed_units(units, embedder)
    query_vec = None
    if query:
        query_vec = embedder.embed([query])[0]
    relevance = compute_relevance(embeddings, query_vec)
    kernel = build_kernel(embeddings)
    if embedder.kind != "hashed_tfidf":
        kernel = condition_kernel(kernel)
    return FeatureSet(embeddings=embeddings, relevance=relevance, kernel=kernel)
