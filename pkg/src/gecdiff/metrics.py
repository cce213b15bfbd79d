"""Correction metrics: GLEU, the MaxMatch (M2) scorer, F-beta, bootstrap.

GLEU here is the single-reference correction variant: n-gram precision with
a penalty for hypothesis n-grams retained from the source but absent from
the reference.  M2 extracts system edits from an edit lattice over the
Levenshtein alignment and picks the selection maximizing overlap with gold.
Both expose per-sentence sufficient statistics so paired bootstrap can
recompute corpus scores cheaply per resample.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, field

from .edit_extract import Edit, check_edits, lattice_arcs, levenshtein_align
from .text_norm import TokenSeq, is_reserved_token

DEFAULT_BETA = 0.5
GLEU_ORDER = 4


def f_beta(p: float, r: float, beta: float = DEFAULT_BETA) -> float:
    """Weighted F-measure; 0 when the denominator is 0."""
    denom = beta * beta * p + r
    if denom == 0:
        return 0.0
    return (1 + beta * beta) * p * r / denom


@dataclass(frozen=True)
class PRF:
    tp: float
    fp: float
    fn: float
    precision: float
    recall: float
    f_beta: float
    beta: float = DEFAULT_BETA

    @classmethod
    def from_counts(cls, tp: float, fp: float, fn: float, beta: float = DEFAULT_BETA) -> "PRF":
        # 0/0 conventions: empty denominators count as perfect.
        p = tp / (tp + fp) if tp + fp else 1.0
        r = tp / (tp + fn) if tp + fn else 1.0
        return cls(tp, fp, fn, p, r, f_beta(p, r, beta), beta)


def micro_prf(decisions: list[tuple[str, str]], beta: float = DEFAULT_BETA) -> dict[str, PRF]:
    """Pool (bucket, outcome) decisions into per-bucket PRF.

    Outcomes are ``tp``, ``fp``, ``fn``.
    """
    counts: dict[str, Counter] = {}
    for bucket, outcome in decisions:
        if outcome not in ("tp", "fp", "fn"):
            raise ValueError(f"unknown outcome {outcome!r}")
        counts.setdefault(bucket, Counter())[outcome] += 1
    return {
        b: PRF.from_counts(c["tp"], c["fp"], c["fn"], beta) for b, c in counts.items()
    }


# ---------------------------------------------------------------------------
# GLEU


@dataclass(frozen=True)
class GleuStats:
    """Per-sentence sufficient statistics, penalty already applied per order."""

    hyp_len: int
    ref_len: int
    matches: tuple[int, ...]
    totals: tuple[int, ...]


@dataclass(frozen=True)
class GleuReport:
    corpus: float
    sentences: tuple[float, ...]
    order: int = GLEU_ORDER
    stats: tuple[GleuStats, ...] = field(default=(), repr=False)


def _ngrams(seq: TokenSeq, n: int) -> Counter:
    return Counter(tuple(seq[i : i + n]) for i in range(len(seq) - n + 1))


def gleu_sentence_stats(
    hyp: TokenSeq, src: TokenSeq, ref: TokenSeq, order: int = GLEU_ORDER
) -> GleuStats:
    """Count matches minus source-retention penalty for each n-gram order.

    For each n: clipped matches of hyp against ref, minus hyp overlap with
    the multiset difference src − ref, floored at 0.  The total is the hyp
    n-gram count.
    """
    matches: list[int] = []
    totals: list[int] = []
    for n in range(1, order + 1):
        hyp_n = _ngrams(hyp, n)
        ref_n = _ngrams(ref, n)
        src_only = _ngrams(src, n) - ref_n
        match = sum((hyp_n & ref_n).values())
        penalty = sum((hyp_n & src_only).values())
        matches.append(max(match - penalty, 0))
        totals.append(max(len(hyp) + 1 - n, 0))
    return GleuStats(len(hyp), len(ref), tuple(matches), tuple(totals))


def _brevity_penalty(hyp_len: int, ref_len: int) -> float:
    if hyp_len == 0:
        return 0.0 if ref_len else 1.0
    if hyp_len > ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / hyp_len)


def sentence_gleu_from_stats(st: GleuStats) -> float:
    """Sentence score with add-one smoothing on zero-denominator orders."""
    if st.hyp_len == 0:
        return 1.0 if st.ref_len == 0 else 0.0
    log_sum = 0.0
    for match, total in zip(st.matches, st.totals):
        if total == 0:
            match, total = 1, 1
        if match == 0:
            return 0.0
        log_sum += math.log(match / total)
    return _brevity_penalty(st.hyp_len, st.ref_len) * math.exp(log_sum / len(st.matches))


def corpus_gleu_from_stats(stats: list[GleuStats]) -> float:
    """Corpus score from summed statistics; zero-total orders are skipped."""
    hyp_len = sum(s.hyp_len for s in stats)
    ref_len = sum(s.ref_len for s in stats)
    if hyp_len == 0:
        return 1.0 if ref_len == 0 else 0.0
    order = max((len(s.matches) for s in stats), default=0)
    logs: list[float] = []
    for n in range(order):
        match = sum(s.matches[n] for s in stats)
        total = sum(s.totals[n] for s in stats)
        if total == 0:
            continue
        if match == 0:
            return 0.0
        logs.append(math.log(match / total))
    if not logs:
        return 0.0
    return _brevity_penalty(hyp_len, ref_len) * math.exp(sum(logs) / len(logs))


def gleu(
    hyps: list[TokenSeq],
    srcs: list[TokenSeq],
    refs: list[TokenSeq],
    order: int = GLEU_ORDER,
) -> GleuReport:
    if not (len(hyps) == len(srcs) == len(refs)):
        raise ValueError(
            f"aligned inputs required: {len(hyps)} hyps, {len(srcs)} srcs, {len(refs)} refs"
        )
    if not hyps:
        raise ValueError("empty corpus")
    stats = tuple(
        gleu_sentence_stats(h, s, r, order) for h, s, r in zip(hyps, srcs, refs)
    )
    sentences = tuple(sentence_gleu_from_stats(st) for st in stats)
    return GleuReport(corpus_gleu_from_stats(list(stats)), sentences, order, stats)


# ---------------------------------------------------------------------------
# MaxMatch (M2)


@dataclass
class GoldAnnotation:
    """Gold edits for one sentence, possibly from several annotators."""

    source: TokenSeq
    annotators: dict[int, list[Edit]]

    def check(self) -> None:
        if not self.annotators:
            raise ValueError("at least one annotator required")
        for aid, edits in self.annotators.items():
            try:
                check_edits(edits, self.source)
            except ValueError as exc:
                raise ValueError(f"annotator {aid}: {exc}") from exc


def _best_selection(
    align, arcs, gold_edits: list[Edit]
) -> tuple[int, int]:
    """Maximize matched gold edits, then minimize selected arc count.

    Dynamic program over op positions.  The boolean flag guards the one
    degenerate double-count: a gold insertion at a position can be matched
    by at most one of the pure-insert arcs within that insertion run.
    """
    ops = align.ops
    n = len(ops)
    gold_keys = {(e.start, e.end, e.replacement) for e in gold_edits}
    arcs_from: dict[int, list] = {}
    for arc in arcs:
        arcs_from.setdefault(arc.lo, []).append(arc)
    # best[p] = {flag: (tp, -arc count)}, maximized lexicographically
    best: list[dict[bool, tuple[int, int]]] = [{} for _ in range(n + 1)]
    best[n] = {False: (0, 0), True: (0, 0)}
    for p in range(n - 1, -1, -1):
        if ops[p].kind == "equal":
            sub = best[p + 1][False]
            best[p] = {False: sub, True: sub}
            continue
        for flag in (False, True):
            value = None
            for arc in arcs_from[p]:
                e = arc.edit
                pure_insert = e.start == e.end
                matched = (e.start, e.end, e.replacement) in gold_keys and not (
                    pure_insert and flag
                )
                run_continues = (
                    pure_insert
                    and arc.hi < n
                    and ops[arc.hi].kind == "insert"
                    and ops[arc.hi].i == e.start
                )
                nflag = (flag or matched) if run_continues else False
                sub_tp, neg = best[arc.hi][nflag]
                cand = (sub_tp + (1 if matched else 0), neg - 1)
                if value is None or cand > value:
                    value = cand
            best[p][flag] = value

    tp, neg = best[0][False]
    return tp, -neg


def m2_maxmatch(
    hyp: TokenSeq,
    gold: GoldAnnotation,
    max_unchanged: int = 2,
    beta: float = DEFAULT_BETA,
) -> PRF:
    """Sentence-level MaxMatch score against the best-matching annotator.

    The hypothesis must be plain (tags stripped).  With several annotators
    the one yielding the highest F_beta is charged; ties go to the smallest
    annotator id.
    """
    for i, tok in enumerate(hyp):
        if is_reserved_token(tok):
            raise ValueError(f"reserved token in hypothesis at position {i}: {tok!r}")
    align = levenshtein_align(gold.source, hyp)
    arcs = lattice_arcs(align, max_unchanged)
    best: PRF | None = None
    for aid in sorted(gold.annotators):
        gold_edits = gold.annotators[aid]
        tp, nedits = _best_selection(align, arcs, gold_edits)
        prf = PRF.from_counts(tp, nedits - tp, len(gold_edits) - tp, beta)
        if best is None or prf.f_beta > best.f_beta:
            best = prf
    assert best is not None
    return best


@dataclass(frozen=True)
class M2Report:
    overall: PRF
    sentences: tuple[PRF, ...]


def m2_corpus(
    hyps: list[TokenSeq],
    golds: list[GoldAnnotation],
    max_unchanged: int = 2,
    beta: float = DEFAULT_BETA,
) -> M2Report:
    """Corpus MaxMatch: per-sentence annotator choice, pooled raw counts."""
    if len(hyps) != len(golds):
        raise ValueError(f"aligned inputs required: {len(hyps)} hyps, {len(golds)} golds")
    sentences = tuple(
        m2_maxmatch(h, g, max_unchanged, beta) for h, g in zip(hyps, golds)
    )
    tp = sum(s.tp for s in sentences)
    fp = sum(s.fp for s in sentences)
    fn = sum(s.fn for s in sentences)
    return M2Report(PRF.from_counts(tp, fp, fn, beta), sentences)


# ---------------------------------------------------------------------------
# paired bootstrap


@dataclass(frozen=True)
class BootstrapReport:
    metric: str
    resamples: int
    level: float
    seed: int
    score_a: float
    score_b: float
    wins_a: int
    wins_b: int
    ties: int
    win_fraction_a: float
    significant: bool
    better: str | None


def _corpus_metric(metric: str, stats: list, beta: float) -> float:
    if metric == "gleu":
        return corpus_gleu_from_stats(stats)
    if metric == "m2":
        tp = sum(s.tp for s in stats)
        fp = sum(s.fp for s in stats)
        fn = sum(s.fn for s in stats)
        return PRF.from_counts(tp, fp, fn, beta).f_beta
    raise ValueError(f"unknown metric {metric!r}")


def paired_bootstrap(
    stats_a: list,
    stats_b: list,
    metric: str = "gleu",
    resamples: int = 50,
    level: float = 0.05,
    seed: int = 13,
    beta: float = DEFAULT_BETA,
) -> BootstrapReport:
    """Paired bootstrap over sentences (resampling the full set each time).

    Per resample both systems are rescored from per-sentence sufficient
    statistics (GleuStats for ``gleu``, PRF counts for ``m2``) on the same
    index sample.  System A is reported significantly better when its win
    fraction (ties counted half) reaches 1 − level, B when it falls to level.
    """
    if len(stats_a) != len(stats_b):
        raise ValueError(f"mismatched lengths: {len(stats_a)} vs {len(stats_b)}")
    if not stats_a:
        raise ValueError("empty corpus")
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    n = len(stats_a)
    rng = random.Random(seed)
    wins_a = wins_b = ties = 0
    for _ in range(resamples):
        idx = [rng.randrange(n) for _ in range(n)]
        a = _corpus_metric(metric, [stats_a[i] for i in idx], beta)
        b = _corpus_metric(metric, [stats_b[i] for i in idx], beta)
        if a > b:
            wins_a += 1
        elif b > a:
            wins_b += 1
        else:
            ties += 1
    frac = (wins_a + 0.5 * ties) / resamples
    better: str | None = None
    if frac >= 1.0 - level:
        better = "A"
    elif frac <= level:
        better = "B"
    return BootstrapReport(
        metric=metric,
        resamples=resamples,
        level=level,
        seed=seed,
        score_a=_corpus_metric(metric, stats_a, beta),
        score_b=_corpus_metric(metric, stats_b, beta),
        wins_a=wins_a,
        wins_b=wins_b,
        ties=ties,
        win_fraction_a=frac,
        significant=better is not None,
        better=better,
    )
