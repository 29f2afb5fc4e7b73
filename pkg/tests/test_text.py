import string

from hypothesis import given
from hypothesis import strategies as st

from atomlith.text import (
    clean_generated_lines,
    first_nonempty_line,
    fnv1a64,
    normalize_ws,
    split_sentences,
    tokenize,
)


def test_normalize_ws_collapses_runs():
    assert normalize_ws("  a\t b\n\nc ") == "a b c"


def test_tokenize_lowercases_and_splits_on_non_alnum():
    assert tokenize("The cat, the CAT; 2 cats!") == ["the", "cat", "the", "cat", "2", "cats"]


def test_fnv1a64_published_vectors():
    """Values from the published FNV-1a 64-bit test suite."""
    assert fnv1a64("") == 0xCBF29CE484222325
    assert fnv1a64("a") == 0xAF63DC4C8601EC8C
    assert fnv1a64("foobar") == 0x85944171F73967E8


def test_fnv1a64_independent_reimplementation():
    def reference(text):
        h = 0xCBF29CE484222325
        for b in text.encode("utf-8"):
            h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
        return h

    for word in ("retrieval", "Ångström", "7"):
        assert fnv1a64(word) == reference(word)


def test_split_sentences_three_terminators():
    assert split_sentences("A b. C d? E f!") == ["A b.", "C d?", "E f!"]


def test_split_sentences_no_terminator_is_one_sentence():
    assert split_sentences("no terminator at all") == ["no terminator at all"]


def test_split_sentences_abbreviations_do_not_split():
    text = "Dr. Smith arrived. He met Mr. Jones, e.g. for lunch. Then vs. whom?"
    assert split_sentences(text) == [
        "Dr. Smith arrived.",
        "He met Mr. Jones, e.g. for lunch.",
        "Then vs. whom?",
    ]


def test_split_sentences_requires_sentence_opener_after_gap():
    # lowercase continuation after a period is not a boundary
    assert split_sentences("released the v2. model today") == ["released the v2. model today"]
    # digits and quotes do open sentences
    assert split_sentences('It ended. "Quote starts." 3 items left.') == [
        "It ended.",
        '"Quote starts."',
        "3 items left.",
    ]


def test_split_sentences_closing_quote_binds_to_sentence():
    assert split_sentences('He said "stop." Then left.') == ['He said "stop."', "Then left."]


@given(st.text(alphabet=string.printable, max_size=300))
def test_split_sentences_concatenation_preserves_text(text):
    """Joining the sentences reproduces the input up to whitespace."""
    joined = " ".join(split_sentences(text))
    assert normalize_ws(joined) == normalize_ws(text)


def test_clean_generated_lines_strips_markers_and_short_lines():
    raw = "- Fact one.\n\n2. Fact two.\n* x\n  3) Fact three. "
    assert clean_generated_lines(raw) == ["Fact one.", "Fact two.", "Fact three."]


def test_clean_generated_lines_caps_output():
    raw = "\n".join(f"- fact number {i}" for i in range(80))
    assert len(clean_generated_lines(raw, max_lines=50)) == 50


def test_first_nonempty_line():
    assert first_nonempty_line("\n\n  hello\nworld") == "hello"
    assert first_nonempty_line("   \n\t\n") == ""
