"""Shared text helpers: tokenization, slugs, whitespace handling.

The stopword-filtered tokenizer here is the single tokenizer used by both
catalog keyword refinement and the keyword index, so query terms and
postings always agree.
"""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

_SPLIT = re.compile(r"[^0-9a-z]+")
_WS = re.compile(r"\s+")


@lru_cache(maxsize=1)
def stopwords() -> frozenset[str]:
    """The fixed 30-word English stopword list shipped with the package."""
    text = resources.files("esglens.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


def tokenize_raw(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs. No stopword removal."""
    return [t for t in _SPLIT.split(text.lower()) if t]


def tokenize(text: str) -> list[str]:
    """`tokenize_raw` with the shared stopword list removed."""
    sw = stopwords()
    return [t for t in tokenize_raw(text) if t not in sw]


def slugify(name: str) -> str:
    """Lowercase-hyphenated identifier derived from a display name."""
    return "-".join(tokenize_raw(name))


def collapse_ws(text: str) -> str:
    """Collapse every whitespace run to a single space and strip."""
    return _WS.sub(" ", text).strip()


def normalize_table_text(text: str) -> str:
    """Collapse whitespace within each row, keep one newline per row."""
    rows = [collapse_ws(row) for row in text.split("\n")]
    return "\n".join(r for r in rows if r)


def truncate_at_whitespace(text: str, limit: int) -> str:
    """Cut `text` to at most `limit` chars, preferring a whitespace boundary."""
    if len(text) <= limit:
        return text
    cut = text[:limit]
    for i in range(len(cut) - 1, 0, -1):
        if cut[i].isspace():
            return cut[:i].rstrip()
    return cut
