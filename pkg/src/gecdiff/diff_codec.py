"""Encoding, validation, and repair of diff-tagged target sequences.

A tagged sequence is the source token stream with corrections spliced in:
``<del> ... </del>`` wraps source tokens to remove, ``<ins> ... </ins>``
wraps tokens to add, and everything outside spans is copied source.  A
replacement is a deletion span followed by an insertion span.  Stripping
the deletions yields the corrected target; stripping the insertions yields
the original source.  An optional ``<dom:NAME>`` token may sit at position 0.

Model output is not trusted to be well formed, so this module also provides
``validate_tagged`` (a structured report) and ``repair`` (a deterministic
projection back onto the valid set that preserves insertion content).
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass

from .text_norm import (
    DEL_CLOSE,
    DEL_OPEN,
    INS_CLOSE,
    INS_OPEN,
    TokenSeq,
    domain_name,
    domain_token,
    is_domain_token,
    is_reserved_token,
    is_tag_token,
)

# Delimiter between top-level tokens in the character view (open box, U+2423).
CHAR_DELIM = "␣"


class MalformedTagsError(ValueError):
    """Tagged sequence violates span structure; message names the first fault."""


# ---------------------------------------------------------------------------
# encoding


def encode_diffs(source: TokenSeq, target: TokenSeq) -> TokenSeq:
    """Encode target as source plus minimal ``<del>``/``<ins>`` spans.

    Uses longest-matching-block alignment (difflib), so no emitted span pair
    has identical deleted and inserted content.  Inputs must not contain
    reserved tokens.
    """
    for name, seq in (("source", source), ("target", target)):
        for i, tok in enumerate(seq):
            if is_reserved_token(tok):
                raise ValueError(f"reserved token in {name} at position {i}: {tok!r}")
    matcher = difflib.SequenceMatcher(a=source, b=target, autojunk=False)
    out: TokenSeq = []
    for op, i1, i2, j1, j2 in matcher.get_opcodes():
        if op == "equal":
            out.extend(source[i1:i2])
            continue
        if op in ("delete", "replace"):
            out.append(DEL_OPEN)
            out.extend(source[i1:i2])
            out.append(DEL_CLOSE)
        if op in ("insert", "replace"):
            out.append(INS_OPEN)
            out.extend(target[j1:j2])
            out.append(INS_CLOSE)
    return out


# ---------------------------------------------------------------------------
# span parsing


def parse_spans(tagged: TokenSeq) -> list[tuple[str, TokenSeq]]:
    """Split a tagged sequence into ``(kind, tokens)`` segments.

    Kinds are ``dom``, ``plain``, ``del``, ``ins``.  Raises
    ``MalformedTagsError`` on nesting, stray closers, an unclosed span, or a
    domain token after position 0.
    """
    segments: list[tuple[str, TokenSeq]] = []
    mode = "plain"
    span: TokenSeq = []
    plain: TokenSeq = []

    def flush_plain() -> None:
        if plain:
            segments.append(("plain", list(plain)))
            plain.clear()

    for i, tok in enumerate(tagged):
        if is_domain_token(tok):
            if i != 0:
                raise MalformedTagsError(f"domain token not at position 0 (position {i})")
            segments.append(("dom", [tok]))
        elif tok in (DEL_OPEN, INS_OPEN):
            if mode != "plain":
                raise MalformedTagsError(f"nested tag {tok} at position {i}")
            flush_plain()
            mode = "del" if tok == DEL_OPEN else "ins"
        elif tok in (DEL_CLOSE, INS_CLOSE):
            want = "del" if tok == DEL_CLOSE else "ins"
            if mode != want:
                raise MalformedTagsError(f"unmatched {tok} at position {i}")
            segments.append((mode, list(span)))
            span.clear()
            mode = "plain"
        elif mode == "plain":
            plain.append(tok)
        else:
            span.append(tok)
    if mode != "plain":
        raise MalformedTagsError(f"unclosed <{mode}> span at end of sequence")
    flush_plain()
    return segments


def split_domain(tagged: TokenSeq) -> tuple[str | None, TokenSeq]:
    """Return ``(domain name or None, rest of the sequence)``."""
    if tagged and is_domain_token(tagged[0]):
        return domain_name(tagged[0]), tagged[1:]
    return None, list(tagged)


def prepend_domain(seq: TokenSeq, name: str) -> TokenSeq:
    """Prefix ``<dom:NAME>``; the sequence must not already carry one."""
    for i, tok in enumerate(seq):
        if is_domain_token(tok):
            raise ValueError(f"sequence already has a domain token at position {i}")
    return [domain_token(name)] + list(seq)


def strip_to_target(tagged: TokenSeq) -> TokenSeq:
    """Drop deletions and tags, keep insertions: the corrected sentence."""
    out: TokenSeq = []
    for kind, tokens in parse_spans(tagged):
        if kind in ("plain", "ins"):
            out.extend(tokens)
    return out


def strip_to_source(tagged: TokenSeq) -> TokenSeq:
    """Drop insertions and tags, keep deletions: the original sentence."""
    out: TokenSeq = []
    for kind, tokens in parse_spans(tagged):
        if kind in ("plain", "del"):
            out.extend(tokens)
    return out


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    position: int
    kind: str  # unbalanced-tag | out-of-source-token | source-order-violation | leftover-source


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    violations: tuple[Violation, ...]


def validate_tagged(tagged: TokenSeq, source: TokenSeq) -> ValidityReport:
    """Check span structure and that the non-insertion stream equals source.

    Never raises; all faults are reported with positions.  Recovery while
    scanning: stray closers are skipped, redundant opens are ignored, and an
    unclosed span is treated as closed at the end.
    """
    violations: list[Violation] = []
    mode = "plain"
    ptr = 0  # next source token expected
    for i, tok in enumerate(tagged):
        if is_domain_token(tok):
            if i != 0:
                violations.append(Violation(i, "unbalanced-tag"))
            continue
        if tok in (DEL_OPEN, INS_OPEN):
            want = "del" if tok == DEL_OPEN else "ins"
            if mode != "plain":
                violations.append(Violation(i, "unbalanced-tag"))
            else:
                mode = want
            continue
        if tok in (DEL_CLOSE, INS_CLOSE):
            want = "del" if tok == DEL_CLOSE else "ins"
            if mode != want:
                violations.append(Violation(i, "unbalanced-tag"))
            else:
                mode = "plain"
            continue
        if mode == "ins":
            continue  # insertion content is free
        # Outside insertions the stream must replay source in order.
        if ptr < len(source) and tok == source[ptr]:
            ptr += 1
        elif tok in source[ptr + 1 :]:
            violations.append(Violation(i, "source-order-violation"))
        else:
            violations.append(Violation(i, "out-of-source-token"))
    if mode != "plain":
        violations.append(Violation(len(tagged), "unbalanced-tag"))
    if ptr < len(source):
        violations.append(Violation(len(tagged), "leftover-source"))
    return ValidityReport(valid=not violations, violations=tuple(violations))


# ---------------------------------------------------------------------------
# repair


def repair(tagged: TokenSeq, source: TokenSeq) -> TokenSeq:
    """Project arbitrary tagged output onto the valid set.

    Greedy left-to-right: insertion content is kept verbatim; outside
    insertions the output replays source tokens in order, substituting the
    current source token for any mismatch; surplus tokens past the end of
    source are dropped and unconsumed source tokens are appended.  Unmatched
    closers are dropped, an open span at a new tag or at the end is closed,
    and a misplaced domain token is dropped.  Output always validates, and
    valid input is returned unchanged.
    """
    out: TokenSeq = []
    mode = "plain"
    ptr = 0

    def close_open_span() -> None:
        nonlocal mode
        if mode == "del":
            out.append(DEL_CLOSE)
        elif mode == "ins":
            out.append(INS_CLOSE)
        mode = "plain"

    for i, tok in enumerate(tagged):
        if is_domain_token(tok):
            if i == 0:
                out.append(tok)
            continue
        if tok in (DEL_OPEN, INS_OPEN):
            want = "del" if tok == DEL_OPEN else "ins"
            if mode == want:
                continue  # redundant reopen
            close_open_span()
            out.append(tok)
            mode = want
            continue
        if tok in (DEL_CLOSE, INS_CLOSE):
            want = "del" if tok == DEL_CLOSE else "ins"
            if mode == want:
                out.append(tok)
                mode = "plain"
            continue  # unmatched closer dropped
        if mode == "ins":
            out.append(tok)
            continue
        # plain or del: consume source in order
        if ptr < len(source):
            out.append(source[ptr])
            ptr += 1
        # surplus beyond source length dropped
    close_open_span()
    if ptr < len(source):
        out.extend(source[ptr:])
    return out


# ---------------------------------------------------------------------------
# character view


def to_char_view(tagged: TokenSeq) -> TokenSeq:
    """Explode word tokens to characters, joining top-level tokens with ␣.

    Tag and domain tokens stay atomic.  A word containing the delimiter
    character is rejected.
    """
    parse_spans(tagged)  # structural check
    groups: list[list[str]] = []
    for tok in tagged:
        if is_reserved_token(tok):
            groups.append([tok])
        else:
            if CHAR_DELIM in tok:
                raise ValueError(f"token contains the delimiter character: {tok!r}")
            groups.append(list(tok))
    out: TokenSeq = []
    for k, group in enumerate(groups):
        if k:
            out.append(CHAR_DELIM)
        out.extend(group)
    return out


def from_char_view(chars: TokenSeq) -> TokenSeq:
    """Invert ``to_char_view``: group runs between delimiters back to tokens.

    A run is either a single reserved token or a string of characters; a
    reserved token adjacent to characters without a delimiter is an error.
    Empty runs are skipped.
    """
    out: TokenSeq = []
    run: list[str] = []

    def flush() -> None:
        if not run:
            return
        reserved = [t for t in run if is_reserved_token(t)]
        if reserved:
            if len(run) > 1:
                raise ValueError(f"reserved token not delimited: {run!r}")
            out.append(run[0])
        else:
            out.append("".join(run))
        run.clear()

    for tok in chars:
        if tok == CHAR_DELIM:
            flush()
        else:
            run.append(tok)
    flush()
    return out
