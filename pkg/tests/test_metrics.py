from __future__ import annotations

import math

import pytest
from hypothesis import given, strategies as st

from gecdiff.edit_extract import Edit
from gecdiff.metrics import (
    BootstrapReport,
    GoldAnnotation,
    PRF,
    corpus_gleu_from_stats,
    f_beta,
    gleu,
    gleu_sentence_stats,
    m2_corpus,
    m2_maxmatch,
    micro_prf,
    paired_bootstrap,
    sentence_gleu_from_stats,
)
from gecdiff.text_norm import DEL_OPEN


class TestFBeta:
    def test_balanced_beta_one(self):
        assert f_beta(0.5, 0.5, beta=1.0) == pytest.approx(0.5)

    def test_precision_weighted_default(self):
        # 1.25 * (1 * (1/22)) / (0.25 * 1 + 1/22) == 125/650
        assert f_beta(1.0, 1 / 22) == pytest.approx(0.1923076923, abs=1e-9)

    def test_published_style_rows(self):
        assert round(f_beta(0.4666, 0.1535) * 100, 2) == pytest.approx(33.14, abs=0.01)
        assert round(f_beta(0.7234, 0.0097) * 100, 2) == pytest.approx(4.60, abs=0.01)
        assert round(f_beta(0.3017, 0.2490) * 100, 2) == pytest.approx(28.94, abs=0.01)

    def test_zero_denominator(self):
        assert f_beta(0.0, 0.0) == 0.0


class TestPRF:
    def test_from_counts(self):
        prf = PRF.from_counts(3, 1, 2)
        assert prf.precision == pytest.approx(0.75)
        assert prf.recall == pytest.approx(0.6)

    def test_empty_conventions(self):
        prf = PRF.from_counts(0, 0, 0)
        assert (prf.precision, prf.recall, prf.f_beta) == (1.0, 1.0, 1.0)

    def test_no_output_against_gold(self):
        prf = PRF.from_counts(0, 0, 5)
        assert prf.precision == 1.0 and prf.recall == 0.0 and prf.f_beta == 0.0


def test_micro_prf_buckets():
    decisions = [("x", "tp"), ("x", "fp"), ("y", "fn"), ("x", "tp")]
    out = micro_prf(decisions)
    assert out["x"].precision == pytest.approx(2 / 3)
    assert out["y"].recall == 0.0
    with pytest.raises(ValueError):
        micro_prf([("x", "??")])


class TestGleuSentence:
    # hand-enumerated n-gram cases; arithmetic in comments

    def test_perfect_copy_no_errors(self):
        st_ = gleu_sentence_stats(["the", "cat", "sat"], ["the", "cat", "sat"], ["the", "cat", "sat"])
        assert st_.matches == (3, 2, 1, 0)
        assert st_.totals == (3, 2, 1, 0)
        assert sentence_gleu_from_stats(st_) == pytest.approx(1.0)

    def test_empty_hypothesis(self):
        assert sentence_gleu_from_stats(gleu_sentence_stats([], [], [])) == 1.0
        assert sentence_gleu_from_stats(gleu_sentence_stats([], ["a"], ["a"])) == 0.0

    def test_disjoint_hypothesis(self):
        st_ = gleu_sentence_stats(["x", "y"], ["a", "b"], ["a", "b"])
        assert sentence_gleu_from_stats(st_) == 0.0

    def test_uncorrected_source_penalized(self):
        # hyp==src, ref fixes cat->dog:
        # 1-gram: |hyp∩ref|=2 (the,sat), |hyp∩(src-ref)|=1 (cat) -> 1/3
        # 2-gram: 0 matches, penalty 2 -> floored 0 -> score 0
        st_ = gleu_sentence_stats(
            ["the", "cat", "sat"], ["the", "cat", "sat"], ["the", "dog", "sat"]
        )
        assert st_.matches == (1, 0, 0, 0)
        assert sentence_gleu_from_stats(st_) == 0.0

    def test_partial_correction_order2(self):
        # hyp he/goes/house vs ref he/goes/home, src he/go/home
        # 1-gram: ∩ref {he,goes}=2, src-ref={go}, no overlap -> 2/3
        # 2-gram: ∩ref {(he,goes)}=1 -> 1/2; sqrt(2/3 * 1/2)=sqrt(1/3)
        st_ = gleu_sentence_stats(
            ["he", "goes", "house"], ["he", "go", "home"], ["he", "goes", "home"], order=2
        )
        assert st_.matches == (2, 1)
        assert st_.totals == (3, 2)
        assert sentence_gleu_from_stats(st_) == pytest.approx(
            math.sqrt(1 / 3), abs=1e-9
        )

    def test_clipping_repeated_token(self):
        # hyp the/cat/sat/sat: 1-grams clip sat to 1 -> 3/4; 2-grams 2/3
        # sqrt(3/4 * 2/3) = sqrt(1/2); len 4 > ref 3 so no brevity penalty
        st_ = gleu_sentence_stats(
            ["the", "cat", "sat", "sat"],
            ["the", "cat", "sat"],
            ["the", "cat", "sat"],
            order=2,
        )
        assert st_.matches == (3, 2)
        assert sentence_gleu_from_stats(st_) == pytest.approx(
            math.sqrt(0.5), abs=1e-9
        )

    def test_brevity_penalty(self):
        # perfect prefix, c=2 r=3: BP=exp(1-3/2)
        st_ = gleu_sentence_stats(
            ["the", "cat"], ["the", "cat", "sat"], ["the", "cat", "sat"], order=2
        )
        assert sentence_gleu_from_stats(st_) == pytest.approx(
            math.exp(-0.5), abs=1e-9
        )

    def test_short_hyp_smoothing(self):
        # single token, orders 2..4 have no denominator: smoothed to 1/1
        st_ = gleu_sentence_stats(["hi"], ["hi", "there"], ["hi", "there"])
        assert st_.totals == (1, 0, 0, 0)
        # BP=exp(1-2/1)=exp(-1)
        assert sentence_gleu_from_stats(st_) == pytest.approx(math.exp(-1), abs=1e-9)

    def test_penalty_cancels_in_reference(self):
        # src token also in ref: src-ref empty, no penalty
        st_ = gleu_sentence_stats(["a"], ["b"], ["a"])
        assert st_.matches[0] == 1
        assert sentence_gleu_from_stats(st_) == pytest.approx(1.0)

    def test_floor_is_per_sentence(self):
        # penalty exceeds matches: floored at 0, not negative
        st_ = gleu_sentence_stats(["b", "b"], ["b", "b", "b"], ["a"])
        assert st_.matches[0] == 0


class TestGleuCorpus:
    def test_pooled_counts_not_score_mean(self):
        a = gleu_sentence_stats(["a", "b", "c"], ["a", "b", "c"], ["a", "b", "c"], order=2)
        b = gleu_sentence_stats(["a", "x"], ["a", "y"], ["a", "y"], order=2)
        # pooled: 1-gram (3+1)/(3+2), 2-gram (2+0)/(2+1); sqrt(4/5 * 2/3)
        corpus = corpus_gleu_from_stats([a, b])
        assert corpus == pytest.approx(math.sqrt(8 / 15), abs=1e-9)
        # while sentence b alone is 0
        assert sentence_gleu_from_stats(b) == 0.0

    def test_zero_total_orders_skipped(self):
        st_ = gleu_sentence_stats(["a"], ["b"], ["a"])
        assert corpus_gleu_from_stats([st_]) == pytest.approx(1.0)

    def test_gleu_end_to_end(self):
        report = gleu([["a", "b"]], [["a", "b"]], [["a", "b"]])
        assert report.corpus == pytest.approx(1.0)
        assert report.sentences == (pytest.approx(1.0),)
        with pytest.raises(ValueError):
            gleu([["a"]], [], [["a"]])
        with pytest.raises(ValueError):
            gleu([], [], [])


def ann(source, *edit_lists):
    annotators = {i: list(edits) for i, edits in enumerate(edit_lists)}
    return GoldAnnotation(source, annotators or {0: []})


class TestM2:
    def test_perfect_single_edit(self):
        gold = ann(["a", "b", "c"], [Edit(1, 2, ("b",), ("x",))])
        prf = m2_maxmatch(["a", "x", "c"], gold)
        assert (prf.tp, prf.fp, prf.fn) == (1, 0, 0)
        assert prf.f_beta == 1.0

    def test_unchanged_hypothesis(self):
        gold = ann(["a", "b"], [Edit(0, 1, ("a",), ("x",))])
        prf = m2_maxmatch(["a", "b"], gold)
        assert (prf.tp, prf.fp, prf.fn) == (0, 0, 1)
        assert prf.precision == 1.0 and prf.recall == 0.0 and prf.f_beta == 0.0

    def test_wrong_edit_counts_fp(self):
        gold = ann(["a", "b"], [])
        prf = m2_maxmatch(["a", "x"], gold)
        assert (prf.tp, prf.fp, prf.fn) == (0, 1, 0)

    def test_rejects_tagged_hypothesis(self):
        gold = ann(["a"], [])
        with pytest.raises(ValueError):
            m2_maxmatch([DEL_OPEN, "a"], gold)

    def test_gap_matching_respects_max_unchanged(self):
        # gold merges a change across two unchanged tokens
        src = ["a", "b", "c", "d", "e"]
        gold_edit = Edit(1, 4, ("b", "c", "d"), ("X", "c", "Y"))
        gold = ann(src, [gold_edit])
        hyp = ["a", "X", "c", "Y", "e"]
        assert m2_maxmatch(hyp, gold, max_unchanged=1).tp == 1
        # budget 0 cannot form the wide arc: two small edits, neither matches
        prf0 = m2_maxmatch(hyp, gold, max_unchanged=0)
        assert prf0.tp == 0 and prf0.fp == 2 and prf0.fn == 1

    def test_best_annotator_chosen(self):
        src = ["a", "b"]
        good = [Edit(1, 2, ("b",), ("x",))]
        gold = ann(src, [], good)  # annotator 0 empty, annotator 1 matches
        prf = m2_maxmatch(["a", "x"], gold)
        assert (prf.tp, prf.fp, prf.fn) == (1, 0, 0)

    def test_tie_goes_to_first_annotator(self):
        # both annotators yield F=0; annotator 0's counts (fn=0) are charged
        src = ["a", "b"]
        gold = ann(src, [], [Edit(0, 1, ("a",), ("z",))])
        prf = m2_maxmatch(["a", "x"], gold)
        assert (prf.tp, prf.fp, prf.fn) == (0, 1, 0)

    def test_insert_run_single_count(self):
        # two identical inserts cover the run; the one gold insert matches once
        gold = ann(["a"], [Edit(0, 0, (), ("x",))])
        prf = m2_maxmatch(["x", "x", "a"], gold)
        assert prf.tp == 1 and prf.fn == 0
        assert prf.tp + prf.fp == 2  # two system edits charged

    def test_prefers_fewer_edits_at_equal_tp(self):
        gold = ann(["a", "b", "c"], [])
        prf = m2_maxmatch(["x", "y", "c"], gold)
        # one merged replacement, not two
        assert prf.fp == 1

    def test_corpus_pools_counts(self):
        g1 = ann(["a", "b"], [Edit(1, 2, ("b",), ("x",))])
        g2 = ann(["c"], [Edit(0, 1, ("c",), ("y",))])
        report = m2_corpus([["a", "x"], ["c"]], [g1, g2])
        assert (report.overall.tp, report.overall.fp, report.overall.fn) == (1, 0, 1)
        # pooled, not averaged: P=1, R=1/2
        assert report.overall.precision == 1.0
        assert report.overall.recall == pytest.approx(0.5)
        with pytest.raises(ValueError):
            m2_corpus([["a"]], [])


class TestGoldAnnotation:
    def test_check_rejects_overlap(self):
        bad = GoldAnnotation(
            ["a", "b"],
            {0: [Edit(0, 2, ("a", "b"), ("x",)), Edit(1, 2, ("b",), ())]},
        )
        with pytest.raises(ValueError):
            bad.check()

    def test_check_accepts_empty(self):
        ann(["a"]).check()


class TestBootstrap:
    def perfect_vs_noisy(self):
        srcs = [["a", "b"], ["c", "d"], ["e", "f"]]
        refs = [["a", "x"], ["c", "y"], ["e", "z"]]
        hyp_a = refs
        hyp_b = srcs
        sa = [gleu_sentence_stats(h, s, r) for h, s, r in zip(hyp_a, srcs, refs)]
        sb = [gleu_sentence_stats(h, s, r) for h, s, r in zip(hyp_b, srcs, refs)]
        return sa, sb

    def test_deterministic_for_seed(self):
        sa, sb = self.perfect_vs_noisy()
        r1 = paired_bootstrap(sa, sb, seed=13)
        r2 = paired_bootstrap(sa, sb, seed=13)
        assert r1 == r2
        assert isinstance(r1, BootstrapReport)

    def test_identical_systems_never_significant(self):
        sa, _ = self.perfect_vs_noisy()
        report = paired_bootstrap(sa, list(sa))
        assert report.ties == report.resamples
        assert report.win_fraction_a == pytest.approx(0.5)
        assert not report.significant and report.better is None

    def test_dominant_system_significant(self):
        sa, sb = self.perfect_vs_noisy()
        report = paired_bootstrap(sa, sb)
        assert report.wins_a == report.resamples
        assert report.significant and report.better == "A"
        flipped = paired_bootstrap(sb, sa)
        assert flipped.significant and flipped.better == "B"

    def test_m2_metric_path(self):
        stats_a = [PRF.from_counts(1, 0, 0), PRF.from_counts(1, 0, 0)]
        stats_b = [PRF.from_counts(0, 1, 1), PRF.from_counts(0, 1, 1)]
        report = paired_bootstrap(stats_a, stats_b, metric="m2")
        assert report.score_a == 1.0 and report.score_b == 0.0
        assert report.significant and report.better == "A"

    def test_argument_errors(self):
        sa, sb = self.perfect_vs_noisy()
        with pytest.raises(ValueError):
            paired_bootstrap(sa, sb[:-1])
        with pytest.raises(ValueError):
            paired_bootstrap([], [])
        with pytest.raises(ValueError):
            paired_bootstrap(sa, sb, metric="bleu")


@given(
    st.integers(min_value=0, max_value=20),
    st.integers(min_value=0, max_value=20),
    st.integers(min_value=0, max_value=20),
)
def test_prf_counts_bounds(tp, fp, fn):
    prf = PRF.from_counts(tp, fp, fn)
    assert 0.0 <= prf.precision <= 1.0
    assert 0.0 <= prf.recall <= 1.0
    assert 0.0 <= prf.f_beta <= 1.0
    # betweenness holds in exact arithmetic; allow round-off (P == R can
    # put the computed mean one ulp outside the pair)
    lo = min(prf.precision, prf.recall) - 1e-12
    hi = max(prf.precision, prf.recall) + 1e-12
    assert lo <= prf.f_beta <= hi or prf.f_beta == 0.0
