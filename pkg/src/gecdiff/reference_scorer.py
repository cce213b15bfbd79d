"""A self-contained statistical corrector that drives the decode pipeline.

Noisy-channel model: a confusion lexicon harvested from training diffs
proposes deletions, insertions, and replacements over a short source window,
and an interpolated n-gram language model trained on corrected text scores
continuations.  The scorer implements the decoding session contract
(start/step/dist), emits well-formed tag sequences by construction, and
assigns probability exactly 0.0 to structurally impossible moves, so the
beam decoder never expands them regardless of bias.

This replaces no neural model's quality; it exists so tuning, decoding, and
evaluation can run end to end without external dependencies.
"""

from __future__ import annotations

import json
import math
import os
from collections import Counter
from dataclasses import dataclass, replace

from .decode_bias import EOS
from .diff_codec import encode_diffs
from .edit_extract import edits_from_tagged
from .text_norm import (
    DEL_CLOSE,
    DEL_OPEN,
    INS_CLOSE,
    INS_OPEN,
    TAG_TOKENS,
    TokenSeq,
    is_reserved_token,
)

BOS = "<s>"
UNK = "<unk>"

MAX_PHRASE = 3  # source-window cap for lexicon entries


@dataclass
class ConfusionLexicon:
    """Counted edit phrases: replacements, deletions, insertions.

    Insertions are keyed by the preceding source token (``BOS`` at the
    sentence start).  All phrases are 1 to MAX_PHRASE tokens.
    """

    replacements: dict[tuple[str, ...], Counter]
    deletions: Counter
    insertions: dict[str, Counter]

    @classmethod
    def empty(cls) -> "ConfusionLexicon":
        return cls({}, Counter(), {})

    def is_empty(self) -> bool:
        return not self.replacements and not self.deletions and not self.insertions

    def check(self) -> None:
        def check_phrase(phrase: tuple[str, ...]) -> None:
            if not 1 <= len(phrase) <= MAX_PHRASE:
                raise ValueError(f"phrase length out of range: {phrase!r}")
            for tok in phrase:
                if is_reserved_token(tok):
                    raise ValueError(f"reserved token in lexicon phrase: {tok!r}")

        for src, repls in self.replacements.items():
            check_phrase(src)
            for repl, count in repls.items():
                check_phrase(repl)
                if count <= 0:
                    raise ValueError(f"nonpositive count for {src!r} -> {repl!r}")
        for phrase, count in self.deletions.items():
            check_phrase(phrase)
            if count <= 0:
                raise ValueError(f"nonpositive count for deletion {phrase!r}")
        for key, phrases in self.insertions.items():
            for phrase, count in phrases.items():
                check_phrase(phrase)
                if count <= 0:
                    raise ValueError(f"nonpositive count for insertion {phrase!r}")


def harvest(corpus: list[tuple[TokenSeq, TokenSeq]]) -> ConfusionLexicon:
    """Collect edit phrases from (source, target) pairs.

    Edits longer than MAX_PHRASE tokens on either side are skipped; they are
    outside the proposal window anyway.
    """
    lex = ConfusionLexicon.empty()
    for source, target in corpus:
        for e in edits_from_tagged(encode_diffs(source, target)):
            if len(e.deleted) > MAX_PHRASE or len(e.replacement) > MAX_PHRASE:
                continue
            if e.kind == "replace":
                lex.replacements.setdefault(e.deleted, Counter())[e.replacement] += 1
            elif e.kind == "delete":
                lex.deletions[e.deleted] += 1
            else:
                key = source[e.start - 1] if e.start > 0 else BOS
                lex.insertions.setdefault(key, Counter())[e.replacement] += 1
    return lex


# ---------------------------------------------------------------------------
# language model


class NGramLM:
    """Interpolated maximum-likelihood n-gram model with an unknown class.

    Each context level contributes ``interp`` of its ML estimate and defers
    the rest to the level below; unseen contexts defer entirely.  The
    unigram level reserves ``unk_mass`` for a uniform distribution over the
    vocabulary plus the unknown class, so every token has positive
    probability and conditionals sum to 1 exactly.
    """

    def __init__(
        self,
        order: int,
        counts: dict[tuple[str, ...], Counter],
        interp: float = 0.5,
        unk_mass: float = 0.1,
    ):
        if order < 1:
            raise ValueError("order must be >= 1")
        if not 0.0 < interp < 1.0 or not 0.0 < unk_mass < 1.0:
            raise ValueError("interpolation weights must be in (0, 1)")
        self.order = order
        self.counts = counts
        self.totals = {ctx: sum(c.values()) for ctx, c in counts.items()}
        self.vocab = frozenset(counts.get((), Counter()))
        self.interp = interp
        self.unk_mass = unk_mass

    def ml_prob(self, word: str, context: tuple[str, ...]) -> float:
        """Raw count ratio at exactly this context; 0 for unseen contexts."""
        ctx = tuple(context)
        total = self.totals.get(ctx)
        if not total:
            return 0.0
        return self.counts[ctx][word] / total

    def prob(self, word: str, context: tuple[str, ...]) -> float:
        w = word if word in self.vocab else UNK
        extended = len(self.vocab) + 1  # vocabulary plus the unknown class
        p = (1.0 - self.unk_mass) * self.ml_prob(w, ()) + self.unk_mass / extended
        for k in range(1, self.order):
            if k > len(context):
                break
            ctx = tuple(context[-k:])
            if ctx in self.totals:
                p = self.interp * self.ml_prob(w, ctx) + (1.0 - self.interp) * p
        return p

    def logprob(self, tokens: TokenSeq) -> float:
        """Sentence log-probability including the end token."""
        ctx = (BOS,) * (self.order - 1)
        total = 0.0
        for tok in list(tokens) + [EOS]:
            total += math.log(self.prob(tok, ctx))
            if self.order > 1:
                ctx = (ctx + (tok,))[-(self.order - 1) :]
        return total

    def perplexity(self, corpus: list[TokenSeq]) -> float:
        tokens = sum(len(s) + 1 for s in corpus)
        if tokens == 0:
            raise ValueError("empty corpus")
        log_total = sum(self.logprob(s) for s in corpus)
        return math.exp(-log_total / tokens)


def train_lm(
    targets: list[TokenSeq],
    order: int = 3,
    interp: float = 0.5,
    unk_mass: float = 0.1,
) -> NGramLM:
    if not targets:
        raise ValueError("empty corpus")
    counts: dict[tuple[str, ...], Counter] = {}
    for sent in targets:
        toks = list(sent) + [EOS]
        history = [BOS] * (order - 1)
        for tok in toks:
            for k in range(order):
                ctx = tuple(history[len(history) - k :])
                counts.setdefault(ctx, Counter())[tok] += 1
            history.append(tok)
            history = history[-(order - 1) :] if order > 1 else []
    return NGramLM(order, counts, interp, unk_mass)


# ---------------------------------------------------------------------------
# decoding session


@dataclass(frozen=True)
class RefState:
    src: tuple[str, ...]
    i: int  # next unconsumed source position
    mode: str  # out | del | postdel | ins
    ctx: tuple[str, ...]  # recent target-side tokens for the LM
    del_start: int = 0
    del_phrase: tuple[str, ...] | None = None  # set while in postdel
    ins_prefix: tuple[str, ...] = ()
    repl_src: tuple[str, ...] | None = None  # replacement mode when set
    ins_key: str | None = None
    done: bool = False


class RefScorer:
    """Decoding session over a lexicon and LM; see the module docstring.

    ``edit_weight`` scales span-opening mass against the copy probability
    (saturating in the evidence count), ``repl_open_weight`` pushes the
    insertion that completes a replacement, and ``close_weight`` favors
    closing a span at a complete lexicon phrase over extending it.
    """

    def __init__(
        self,
        lexicon: ConfusionLexicon,
        lm: NGramLM,
        copy_weight: float = 1.0,
        edit_weight: float = 0.25,
        repl_open_weight: float = 2.0,
        close_weight: float = 2.0,
        saturation: float = 2.0,
    ):
        lexicon.check()
        self.lexicon = lexicon
        self.lm = lm
        self.copy_weight = copy_weight
        self.edit_weight = edit_weight
        self.repl_open_weight = repl_open_weight
        self.close_weight = close_weight
        self.saturation = saturation
        # merged deletion evidence: pure deletions plus replacement sources
        self.del_mass: dict[tuple[str, ...], float] = Counter()
        for phrase, count in lexicon.deletions.items():
            self.del_mass[phrase] += count
        for phrase, repls in lexicon.replacements.items():
            self.del_mass[phrase] += sum(repls.values())
        # prefix -> total mass of deletable phrases extending it
        self.prefix_mass: dict[tuple[str, ...], float] = Counter()
        for phrase, mass in self.del_mass.items():
            for k in range(1, len(phrase) + 1):
                self.prefix_mass[phrase[:k]] += mass

    def _saturate(self, mass: float) -> float:
        return mass / (mass + self.saturation)

    def start(self, source: TokenSeq) -> RefState:
        ctx = (BOS,) * (self.lm.order - 1)
        return RefState(src=tuple(source), i=0, mode="out", ctx=ctx)

    def _push_ctx(self, ctx: tuple[str, ...], token: str) -> tuple[str, ...]:
        if self.lm.order <= 1:
            return ()
        return (ctx + (token,))[-(self.lm.order - 1) :]

    def _ins_table(self, state: RefState) -> Counter | None:
        if state.repl_src is not None:
            return self.lexicon.replacements.get(state.repl_src)
        if state.ins_key is not None:
            return self.lexicon.insertions.get(state.ins_key)
        return None

    def dist(self, state: RefState) -> dict[str, float]:
        w: dict[str, float] = {}
        if state.done:
            w[EOS] = 1.0
        elif state.mode in ("out", "postdel"):
            src, i = state.src, state.i
            if i < len(src):
                w[src[i]] = self.copy_weight * self.lm.prob(src[i], state.ctx)
                mass = 0.0
                for k in range(1, MAX_PHRASE + 1):
                    if i + k > len(src):
                        break
                    mass += self.del_mass.get(tuple(src[i : i + k]), 0.0)
                if mass > 0.0:
                    w[DEL_OPEN] = self.edit_weight * self._saturate(mass)
            else:
                w[EOS] = self.copy_weight * self.lm.prob(EOS, state.ctx)
            key = src[i - 1] if i > 0 else BOS
            ins_tab = self.lexicon.insertions.get(key)
            if ins_tab:
                mass = sum(ins_tab.values())
                w[INS_OPEN] = self.edit_weight * self._saturate(mass)
            if state.mode == "postdel" and state.del_phrase in self.lexicon.replacements:
                mass = sum(self.lexicon.replacements[state.del_phrase].values())
                w[INS_OPEN] = w.get(INS_OPEN, 0.0) + self.repl_open_weight * self._saturate(mass)
        elif state.mode == "del":
            src, i = state.src, state.i
            cur = tuple(src[state.del_start : i])
            if i < len(src) and len(cur) < MAX_PHRASE:
                ext = self.prefix_mass.get(cur + (src[i],), 0.0)
                if ext > 0.0:
                    w[src[i]] = ext
            close = self.del_mass.get(cur, 0.0)
            if close > 0.0:
                w[DEL_CLOSE] = self.close_weight * close
            if not w:  # off-lexicon state: only closing remains
                w[DEL_CLOSE] = 1.0
        else:  # ins
            table = self._ins_table(state)
            prefix = state.ins_prefix
            if table:
                for phrase, count in table.items():
                    if len(phrase) > len(prefix) and phrase[: len(prefix)] == prefix:
                        tok = phrase[len(prefix)]
                        w[tok] = w.get(tok, 0.0) + count * self.lm.prob(tok, state.ctx)
                if prefix and table.get(prefix):
                    w[INS_CLOSE] = self.close_weight * table[prefix]
            if not w:
                w[INS_CLOSE] = 1.0
        total = sum(w.values())
        assert total > 0.0, "scorer state with no positive continuation"
        dist = {tok: v / total for tok, v in sorted(w.items())}
        for tok in TAG_TOKENS:
            dist.setdefault(tok, 0.0)
        dist.setdefault(EOS, 0.0)
        return dist

    def step(self, state: RefState, token: str) -> RefState:
        if state.done:
            return state
        if token == EOS:
            return replace(state, done=True)
        if state.mode in ("out", "postdel"):
            if token == DEL_OPEN:
                return replace(state, mode="del", del_start=state.i, del_phrase=None)
            if token == INS_OPEN:
                repl_src = None
                if state.mode == "postdel" and state.del_phrase in self.lexicon.replacements:
                    repl_src = state.del_phrase
                key = state.src[state.i - 1] if state.i > 0 else BOS
                return replace(
                    state,
                    mode="ins",
                    ins_prefix=(),
                    repl_src=repl_src,
                    ins_key=key,
                    del_phrase=None,
                )
            if token in (DEL_CLOSE, INS_CLOSE):
                return replace(state, mode="out", del_phrase=None)
            consumed = state.i + 1 if state.i < len(state.src) else state.i
            return replace(
                state,
                mode="out",
                i=consumed,
                ctx=self._push_ctx(state.ctx, token),
                del_phrase=None,
            )
        if state.mode == "del":
            if token == DEL_CLOSE:
                phrase = tuple(state.src[state.del_start : state.i])
                return replace(state, mode="postdel", del_phrase=phrase)
            if token in (DEL_OPEN, INS_OPEN, INS_CLOSE):
                return state
            consumed = state.i + 1 if state.i < len(state.src) else state.i
            return replace(state, i=consumed)
        # ins
        if token == INS_CLOSE:
            return replace(state, mode="out", ins_prefix=(), repl_src=None, ins_key=None)
        if token in (DEL_OPEN, DEL_CLOSE, INS_OPEN):
            return state
        return replace(
            state,
            ins_prefix=state.ins_prefix + (token,),
            ctx=self._push_ctx(state.ctx, token),
        )


def scorer(lexicon: ConfusionLexicon, lm: NGramLM, **weights: float) -> RefScorer:
    """Build a decoding session factory from trained components."""
    return RefScorer(lexicon, lm, **weights)


# ---------------------------------------------------------------------------
# model files

MODEL_FORMAT = "gecdiff-ref-model"
MODEL_VERSION = 1


def _join(phrase: tuple[str, ...]) -> str:
    return " ".join(phrase)


def _split(text: str) -> tuple[str, ...]:
    return tuple(text.split())


def save_model(path: str, lexicon: ConfusionLexicon, lm: NGramLM) -> None:
    obj = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "lexicon": {
            "replacements": [
                [_join(src), sorted([[_join(r), c] for r, c in repls.items()])]
                for src, repls in sorted(lexicon.replacements.items())
            ],
            "deletions": sorted([[_join(p), c] for p, c in lexicon.deletions.items()]),
            "insertions": [
                [key, sorted([[_join(p), c] for p, c in phrases.items()])]
                for key, phrases in sorted(lexicon.insertions.items())
            ],
        },
        "lm": {
            "order": lm.order,
            "interp": lm.interp,
            "unk_mass": lm.unk_mass,
            "counts": [
                [_join(ctx), sorted([[w, c] for w, c in counter.items()])]
                for ctx, counter in sorted(lm.counts.items())
            ],
        },
    }
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, ensure_ascii=False)
        fh.write("\n")
    os.replace(tmp, path)


def load_model(path: str) -> tuple[ConfusionLexicon, NGramLM]:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a reference model file")
    if obj.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {obj.get('version')!r}")
    lex_obj = obj["lexicon"]
    lexicon = ConfusionLexicon(
        replacements={
            _split(src): Counter({_split(r): c for r, c in repls})
            for src, repls in lex_obj["replacements"]
        },
        deletions=Counter({_split(p): c for p, c in lex_obj["deletions"]}),
        insertions={
            key: Counter({_split(p): c for p, c in phrases})
            for key, phrases in lex_obj["insertions"]
        },
    )
    lexicon.check()
    lm_obj = obj["lm"]
    counts = {
        _split(ctx): Counter({w: c for w, c in counter})
        for ctx, counter in lm_obj["counts"]
    }
    for ctx, counter in counts.items():
        for w, c in counter.items():
            if c <= 0:
                raise ValueError(f"{path}: nonpositive LM count for {w!r}")
    lm = NGramLM(lm_obj["order"], counts, lm_obj["interp"], lm_obj["unk_mass"])
    return lexicon, lm
