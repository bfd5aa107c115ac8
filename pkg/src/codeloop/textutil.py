"""Small text helpers shared by retrieval scoring and prompt rendering."""

from __future__ import annotations

import re

# Deliberately small: enough to keep glue words out of keyword overlap
# scores without pulling in an NLP dependency.
STOP_WORDS = frozenset(
    """
    a an and are as at be before but by for from has have if in into is it
    its of on or over s so such that the their then there these this to
    under until up was were what when where which while will with you your
    """.split()
)

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


def tokenize(text: str, drop_stop_words: bool = True) -> list[str]:
    """Lowercase alphanumeric tokens, in order, optionally minus stop words."""
    tokens = _TOKEN_RE.findall(text.lower())
    if drop_stop_words:
        tokens = [t for t in tokens if t not in STOP_WORDS]
    return tokens


def token_overlap(query: str, keywords: set[str] | frozenset[str]) -> int:
    """Number of distinct query tokens that appear in ``keywords``."""
    return len(set(tokenize(query)) & set(keywords))


def first_sentence(text: str) -> str:
    """First sentence of ``text``, with internal newlines collapsed."""
    flattened = " ".join(text.split())
    if not flattened:
        return ""
    return _SENTENCE_SPLIT_RE.split(flattened, maxsplit=1)[0]


def estimate_tokens(text: str) -> int:
    """Cheap token estimate: one token per four characters, rounded up."""
    return (len(text) + 3) // 4
