from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from gecdiff.text_norm import (
    DEL_CLOSE,
    DEL_OPEN,
    INS_CLOSE,
    INS_OPEN,
    detokenize,
    domain_name,
    domain_token,
    is_domain_token,
    is_reserved_token,
    is_tag_token,
    tokenize,
)


def test_whitespace_split():
    assert tokenize("the cat sat") == ["the", "cat", "sat"]


def test_boundary_punct_peeled():
    assert tokenize("Hello, world.") == ["Hello", ",", "world", "."]
    assert tokenize("(see [4]; also)") == ["(", "see", "[", "4", "]", ";", "also", ")"]
    assert tokenize('he said "stop"') == ["he", "said", '"', "stop", '"']


def test_interior_punct_kept():
    # commas and periods peel only at chunk edges
    assert tokenize("3.14 a,b") == ["3.14", "a,b"]


def test_single_char_tokens_survive():
    assert tokenize(". , ?") == [".", ",", "?"]
    assert tokenize("a") == ["a"]


def test_apostrophe_split_every_position():
    assert tokenize("don't") == ["don", "'t"]
    assert tokenize("students'") == ["students", "'"]
    assert tokenize("isn't've") == ["isn", "'t", "'ve"]
    # leading apostrophe is position 0: no cut there
    assert tokenize("'tis") == ["'tis"]


def test_empty_and_blank():
    assert tokenize("") == []
    assert tokenize("   ") == []


@pytest.mark.parametrize(
    "text",
    ["the cat sat on the mat .", "Hello, world!", "isn't it's they're", "( a [b] c )"],
)
def test_tokenize_idempotent(text):
    once = tokenize(text)
    assert tokenize(" ".join(once)) == once


def test_tag_tokens_recognized():
    for t in (DEL_OPEN, DEL_CLOSE, INS_OPEN, INS_CLOSE):
        assert is_tag_token(t)
        assert is_reserved_token(t)
    assert not is_tag_token("<dom:physics>")
    assert is_domain_token("<dom:physics>")
    assert is_reserved_token("<dom:physics>")
    assert not is_reserved_token("word")


def test_domain_token_round_trip():
    tok = domain_token("math.GT")
    assert is_domain_token(tok)
    assert domain_name(tok) == "math.GT"
    with pytest.raises(ValueError):
        domain_token("bad name")
    with pytest.raises(ValueError):
        domain_token("a>b")


def test_reserved_lookalikes_escaped():
    toks = tokenize("use <del> carefully")
    assert toks == ["use", "##<del>", "carefully"]
    assert not any(is_reserved_token(t) for t in toks)
    assert detokenize(toks) == "use <del> carefully"


def test_escape_layers_stack():
    toks = tokenize("##<ins>")
    assert toks == ["####<ins>"]
    assert detokenize(toks) == "##<ins>"


def test_detokenize_attachment():
    assert detokenize(["Hello", ",", "world", "."]) == "Hello, world."
    assert detokenize(["don", "'t", "go"]) == "don't go"
    assert detokenize(["(", "a", ")"]) == "(a)"
    assert detokenize(['"', "hi", '"', "there"]) == '"hi" there'


def test_detokenize_rejects_reserved():
    with pytest.raises(ValueError) as err:
        detokenize(["a", DEL_OPEN, "b"])
    assert "1" in str(err.value)


PLAIN_WORDS = st.lists(
    st.text(alphabet="abcdefghij", min_size=1, max_size=6), min_size=0, max_size=12
)


@given(PLAIN_WORDS)
def test_tokenize_fixed_point_on_token_output(words):
    text = " ".join(words)
    once = tokenize(text)
    assert tokenize(" ".join(once)) == once


@given(st.text(alphabet="ab<>/:dinsel# .,'()", max_size=40))
def test_tokenize_never_emits_reserved(text):
    assert not any(is_reserved_token(t) for t in tokenize(text))


@given(PLAIN_WORDS)
def test_detokenize_round_trip_plain(words):
    toks = tokenize(" ".join(words))
    assert tokenize(detokenize(toks)) == toks
