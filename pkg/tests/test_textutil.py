from hypothesis import given
from hypothesis import strategies as st

from esglens.textutil import (
    collapse_ws,
    normalize_table_text,
    slugify,
    stopwords,
    tokenize,
    tokenize_raw,
    truncate_at_whitespace,
)


def test_tokenize_raw_lowercases_and_splits_on_nonalnum():
    assert tokenize_raw("Total energy: 2,500 MWh!") == [
        "total",
        "energy",
        "2",
        "500",
        "mwh",
    ]


def test_tokenize_drops_stopwords():
    assert tokenize("the total energy of the group") == ["total", "energy", "group"]


def test_stopwords_are_lowercase_and_nonempty():
    words = stopwords()
    assert words
    assert all(w == w.lower() and w.strip() == w for w in words)


def test_slugify_examples():
    assert slugify("Commercial Banks") == "commercial-banks"
    assert slugify("Software & IT Services") == "software-it-services"
    assert slugify("  Household &  Personal Products ") == "household-personal-products"


def test_collapse_ws():
    assert collapse_ws("  a\t b\n  c ") == "a b c"


def test_normalize_table_text_keeps_rows():
    text = "Year |  Scope 1 |  Scope 2\n 2024 | 120 | 80 "
    assert normalize_table_text(text) == "Year | Scope 1 | Scope 2\n2024 | 120 | 80"


def test_truncate_at_whitespace_cuts_on_boundary():
    assert truncate_at_whitespace("alpha beta gamma", 12) == "alpha beta"
    assert truncate_at_whitespace("alpha", 10) == "alpha"


@given(st.text(max_size=200))
def test_tokenize_is_subset_of_raw(text):
    raw = tokenize_raw(text)
    kept = tokenize(text)
    assert set(kept) <= set(raw)
    assert all(w not in stopwords() for w in kept)


@given(st.text(max_size=200), st.integers(min_value=1, max_value=50))
def test_truncate_never_exceeds_limit(text, limit):
    out = truncate_at_whitespace(text, limit)
    assert len(out) <= limit
