from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isomt.evaluation import (bleu_from_stats, corpus_bleu, corpus_lc, evaluate, lc_counts,
                              paired_bootstrap, read_tradeoff_data, sentence_stats, tokenize_13a,
                              tradeoff_table)

HYPS = ["the cat sat on the mat", "a dog runs fast"]
REFS = ["the cat sat on a mat", "a dog runs very fast"]


def test_two_sentence_bleu_by_hand():
    # clipped n-gram matches / totals summed over both sentences:
    # 1-grams 5+4 / 6+4, 2-grams 3+2 / 5+3, 3-grams 2+1 / 4+2, 4-grams 1+0 / 3+1
    precisions = [9 / 10, 5 / 8, 3 / 6, 1 / 4]
    bp = math.exp(1 - 11 / 10)  # hypothesis 10 tokens, reference 11
    expected = 100 * bp * math.exp(sum(map(math.log, precisions)) / 4)
    assert abs(expected - 46.59) < 0.01
    assert corpus_bleu(HYPS, REFS) == pytest.approx(expected, abs=0.01)


def test_sentence_stats_layout():
    s = sentence_stats(HYPS[0], REFS[0])
    assert s.tolist() == [5, 3, 2, 1, 6, 5, 4, 3, 6, 6]


def test_identity_scores_100():
    assert corpus_bleu(REFS, REFS) == pytest.approx(100.0)


def test_no_four_gram_match_scores_zero():
    assert corpus_bleu(["the cat is on the mat"], ["there is a dog"]) == 0.0


def test_longer_hypothesis_has_no_brevity_penalty():
    s = sentence_stats("a b c d e", "a b c d")
    assert bleu_from_stats(s) == pytest.approx(100 * (4 / 5 * 3 / 4 * 2 / 3 * 1 / 2) ** 0.25)


def test_empty_hypothesis():
    assert corpus_bleu([""], ["a b c d"]) == 0.0


def test_mismatched_inputs():
    with pytest.raises(ValueError):
        corpus_bleu(["a"], [])
    with pytest.raises(ValueError):
        corpus_bleu([], [])


@pytest.mark.parametrize("line, tokens", [
    ("Hello, world!", ["Hello", ",", "world", "!"]),
    ("It costs $3.50.", ["It", "costs", "$", "3.50", "."]),
    ("1,000 items", ["1,000", "items"]),
    ("x&amp;y", ["x", "&", "y"]),
    ("(a) b-c 5-6", ["(", "a", ")", "b-c", "5", "-", "6"]),
])
def test_13a_tokenizer(line, tokens):
    assert tokenize_13a(line) == tokens


def test_stacked_stats_match_single_scores():
    stats = np.stack([sentence_stats(h, r) for h, r in zip(HYPS, REFS)])
    both = bleu_from_stats(stats)
    assert both.shape == (2,)
    for i in range(2):
        assert both[i] == bleu_from_stats(stats[i])


def test_lc_skips_short_sources():
    srcs = ["short", "a" * 20, "b" * 20]
    hyps = ["x" * 50, "y" * 21, "z" * 30]
    assert lc_counts(srcs, hyps) == (1, 1, 3)
    assert corpus_lc(srcs, hyps) == 50.0
    assert corpus_lc(srcs, hyps, skipped_as_compliant=True) == pytest.approx(200 / 3)
    assert corpus_lc(["short"], ["x"]) == 0.0


def test_evaluate_report():
    rep = evaluate(["a" * 20] * 2, HYPS, REFS)
    assert rep.n_sentences == 2 and rep.n_skipped == 0
    assert rep.bleu == pytest.approx(corpus_bleu(HYPS, REFS))


def test_bootstrap_identical_systems():
    res = paired_bootstrap(HYPS * 5, HYPS * 5, REFS * 5, samples=200, rng=1)
    assert res.p_value == 0.5
    assert res.bleu_a == res.bleu_b


def test_bootstrap_clear_winner_and_seeding():
    refs = [f"w{i} x{i} y{i} z{i} q" for i in range(40)]
    good = list(refs)
    bad = [r.replace("x", "k") if i % 2 else r for i, r in enumerate(refs)]
    res = paired_bootstrap(bad, good, refs, samples=300, rng=0)
    assert res.p_value > 0.99
    lo, hi = res.ci95
    assert lo <= res.bleu_a <= hi
    again = paired_bootstrap(bad, good, refs, samples=300, rng=0)
    assert again == res


def test_tradeoff_table_and_data_file(tmp_path):
    rep_a = evaluate(["a" * 20] * 2, HYPS, REFS)
    rep_b = evaluate(["a" * 20] * 2, REFS, REFS)
    table, data = tradeoff_table([("base", rep_a), ("oracle", rep_b)])
    assert table.splitlines()[0].split() == ["system", "BLEU", "LC", "n", "skip"]
    assert data.splitlines()[1] == f"oracle\t100.00\t{rep_b.lc:.2f}"
    path = tmp_path / "d.tsv"
    path.write_text(data, encoding="utf-8")
    assert read_tradeoff_data(path)[0] == ("base", round(rep_a.bleu, 2), round(rep_a.lc, 2))


words = st.lists(st.sampled_from("a b c d e".split()), max_size=12).map(" ".join)


@settings(max_examples=100)
@given(st.lists(st.tuples(words, words), min_size=1, max_size=6))
def test_bleu_is_bounded(pairs):
    hyps, refs = zip(*pairs)
    assert 0.0 <= corpus_bleu(hyps, refs) <= 100.0 + 1e-9
