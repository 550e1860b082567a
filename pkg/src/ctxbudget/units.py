"""Document segmentation into costed, ordered candidate units.

Four strategies are provided: sentences, header-labelled sections,
overlapping sentence-aligned windows, and similarity-graph clusters.
All of them are pure functions of their inputs and deterministic.
"""

from __future__ import annotations

import math
import re
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import EmptyDocumentError, FeatureMismatchError

if TYPE_CHECKING:  # pragma: no cover
    from .features import FeatureSet

# Terminators split only when followed by whitespace + uppercase or end of
# text; these trailing tokens never end a sentence even then.
DEFAULT_ABBREVIATIONS = frozenset({"Dr.", "Mr.", "e.g.", "i.e.", "vs."})

_BLANK_LINE_RE = re.compile(r"(?:[ \t]*\n){2,}")

# A run of 2+ uppercase words ending in ":" opens a section.  Matched at
# line starts and directly after sentence terminators; single words like
# "A:" are rejected so list markers do not become headers.
_HEADER_RE = re.compile(r"(?m)(?:^|(?<=[.!?]))\s*([A-Z][A-Z-]*(?:[ \t]+[A-Z][A-Z-]*)+)[ \t]*:")

_TERMINATORS = ".!?"


@dataclass
class Document:
    """One input document; `reference` is the gold summary when available."""

    id: str
    text: str
    reference: Optional[str] = None
    query: Optional[str] = None


@dataclass
class Unit:
    """A selectable fragment of a document.

    `char_span` is a (start, end) character-offset slice into the source
    document text.  `member_sentence_indices` records which sentences of the
    sentence unitization this unit covers (a singleton for sentence units).
    """

    index: int
    text: str
    token_cost: int
    char_span: tuple[int, int]
    section_label: Optional[str] = None
    member_sentence_indices: list[int] = field(default_factory=list)


@dataclass
class TokenCounter:
    """Token cost model.

    `word_ratio` estimates ceil(word_count * tokens_per_word); `exact_plugin`
    delegates to a caller-supplied counting function.  Costs are clamped to
    at least 1 token.
    """

    mode: str = "word_ratio"
    tokens_per_word: float = 1.3
    count_fn: Optional[Callable[[str], int]] = None

    def __post_init__(self):
        if self.mode not in ("word_ratio", "exact_plugin"):
            raise ValueError(f"unknown token counter mode: {self.mode!r}")
        if self.mode == "word_ratio" and self.tokens_per_word <= 0:
            raise ValueError("tokens_per_word must be positive")
        if self.mode == "exact_plugin" and self.count_fn is None:
            raise ValueError("exact_plugin mode requires count_fn")

    def count(self, text: str) -> int:
        if self.mode == "word_ratio":
            return max(1, math.ceil(len(text.split()) * self.tokens_per_word))
        return max(1, int(self.count_fn(text)))


def split_sentence_spans(
    text: str, abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS
) -> list[tuple[int, int]]:
    """Return (start, end) spans of sentences in `text`.

    Splits after [.!?] runs followed by whitespace then an uppercase letter,
    or by end of text; blank lines are hard breaks.  Spans are trimmed to
    non-whitespace boundaries and strictly increasing.
    """
    spans: list[tuple[int, int]] = []
    block_start = 0
    blocks: list[tuple[int, int]] = []
    for m in _BLANK_LINE_RE.finditer(text):
        blocks.append((block_start, m.start()))
        block_start = m.end()
    blocks.append((block_start, len(text)))

    for b_start, b_end in blocks:
        if not text[b_start:b_end].strip():
            continue
        spans.extend(_sentences_in_block(text, b_start, b_end, abbreviations))
    return spans


def _sentences_in_block(text, start, end, abbreviations):
    spans = []
    sent_start = start
    i = start
    while i < end:
        if text[i] not in _TERMINATORS:
            i += 1
            continue
        run_end = i + 1
        while run_end < end and text[run_end] in _TERMINATORS:
            run_end += 1
        follow = run_end
        while follow < end and text[follow].isspace():
            follow += 1
        at_block_end = follow >= end
        next_upper = follow > run_end and text[follow].isupper()
        if (at_block_end or next_upper) and not _ends_abbreviation(
            text, run_end, abbreviations
        ):
            span = _trim(text, sent_start, run_end)
            if span is not None:
                spans.append(span)
            sent_start = follow
            i = follow
        else:
            i = run_end
    tail = _trim(text, sent_start, end)
    if tail is not None:
        spans.append(tail)
    return spans


def _ends_abbreviation(text, pos, abbreviations):
    token_start = pos
    while token_start > 0 and not text[token_start - 1].isspace():
        token_start -= 1
    return text[token_start:pos] in abbreviations


def _trim(text, start, end):
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    return (start, end) if end > start else None


def _require_text(doc: Document) -> None:
    if not doc.text or not doc.text.strip():
        raise EmptyDocumentError(f"document {doc.id!r} has no non-whitespace text")


def unitize_sentences(doc: Document, counter: TokenCounter) -> list[Unit]:
    """One unit per sentence; spans reconstruct the document modulo whitespace."""
    _require_text(doc)
    units = []
    for idx, (s, e) in enumerate(split_sentence_spans(doc.text)):
        txt = doc.text[s:e]
        units.append(
            Unit(
                index=idx,
                text=txt,
                token_cost=counter.count(txt),
                char_span=(s, e),
                member_sentence_indices=[idx],
            )
        )
    return units


def unitize_sections(doc: Document, counter: TokenCounter) -> list[Unit]:
    """Sentence units labelled with the nearest preceding section header.

    Spans and ordering are identical to `unitize_sentences`; units before the
    first header carry an empty label.
    """
    _require_text(doc)
    headers = [(m.start(1), m.group(1)) for m in _HEADER_RE.finditer(doc.text)]
    positions = [p for p, _ in headers]
    units = unitize_sentences(doc, counter)
    for unit in units:
        k = bisect_right(positions, unit.char_span[0])
        unit.section_label = headers[k - 1][1] if k > 0 else ""
    return units


def unitize_windows(
    doc: Document,
    counter: TokenCounter,
    base_words: int = 50,
    overlap_fraction: float = 0.25,
) -> list[Unit]:
    """Sentence-aligned windows of roughly `base_words` words.

    Consecutive sentences are packed until the word count reaches
    `base_words`; the next window re-uses the trailing
    ceil(overlap_fraction * window_size) sentences, capped so every step
    advances.  Together the windows cover every sentence.
    """
    if base_words < 1:
        raise ValueError("base_words must be >= 1")
    if not 0.0 <= overlap_fraction < 1.0:
        raise ValueError("overlap_fraction must be in [0, 1)")
    _require_text(doc)
    spans = split_sentence_spans(doc.text)
    words = [len(doc.text[s:e].split()) for s, e in spans]
    n = len(spans)

    units = []
    start = 0
    while start < n:
        end = start
        wc = 0
        while end < n and wc < base_words:
            wc += words[end]
            end += 1
        members = list(range(start, end))
        a, b = spans[start][0], spans[end - 1][1]
        txt = doc.text[a:b]
        units.append(
            Unit(
                index=len(units),
                text=txt,
                token_cost=counter.count(txt),
                char_span=(a, b),
                member_sentence_indices=members,
            )
        )
        if end >= n:
            break
        size = end - start
        overlap = min(math.ceil(overlap_fraction * size), size - 1)
        start = end - overlap
    return units


def unitize_clusters(
    doc: Document,
    counter: TokenCounter,
    features: "FeatureSet",
    sim_threshold: float = 0.5,
    decay_halflife: float = 5.0,
) -> list[Unit]:
    """Group sentences into connected components of a decayed similarity graph.

    Sentences i and j are linked when k(i,j) * 2**(-|i-j| / decay_halflife)
    reaches `sim_threshold`; each component becomes one unit whose text is
    its member sentences concatenated in document order.  `features` must
    have been computed over the sentence unitization of `doc`.
    """
    if decay_halflife <= 0:
        raise ValueError("decay_halflife must be positive")
    _require_text(doc)
    spans = split_sentence_spans(doc.text)
    n = len(spans)
    if features.kernel.shape[0] != n:
        raise FeatureMismatchError(
            f"features cover {features.kernel.shape[0]} sentences, document has {n}"
        )

    idx = np.arange(n)
    dist = np.abs(idx[:, None] - idx[None, :])
    decayed = features.kernel * np.power(2.0, -dist / decay_halflife)
    adjacency = decayed >= sim_threshold
    np.fill_diagonal(adjacency, True)
    _, labels = connected_components(csr_matrix(adjacency), directed=False)

    groups: dict[int, list[int]] = {}
    for sent, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(sent)
    ordered = sorted(groups.values(), key=lambda members: members[0])

    units = []
    for members in ordered:
        txt = " ".join(doc.text[spans[m][0] : spans[m][1]] for m in members)
        a = spans[members[0]][0]
        b = max(spans[m][1] for m in members)
        units.append(
            Unit(
                index=len(units),
                text=txt,
                token_cost=counter.count(txt),
                char_span=(a, b),
                member_sentence_indices=members,
            )
        )
    return units


UNITIZATION_NAMES = ("sentence", "section", "window", "cluster")
