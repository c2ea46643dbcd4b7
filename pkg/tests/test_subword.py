from __future__ import annotations

from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from isomt.subword import (LOWER, MIXED, TITLE, UPPER, FactoredToken, SubwordModel, decode, encode,
                           format_stream, parse_stream, train_subword_model)

CORPUS = ["the cat sat on the mat", "The Cat's hat!", "a NASA McDonald's deal", "İstanbul Straße",
          "x-ray 3.5 cats"]

words = st.text(alphabet="abcABCçÇß'-.1 ", min_size=1, max_size=12)
lines = st.lists(words, min_size=1, max_size=6).map(lambda ws: " ".join(" ".join(ws).split()))


@pytest.fixture(scope="module")
def model():
    return train_subword_model(CORPUS, 40)


def naive_merges(corpus, vocab_size):
    """Reference learner: recount all pairs from scratch after every merge."""
    from isomt.subword import fold, segments
    seqs = Counter()
    for line in corpus:
        for w in line.split():
            for seg in segments(w):
                seqs[tuple(fold(seg))] += 1
    alphabet = {c for s in seqs for c in s}
    units, merges = set(alphabet), []
    while len(units) < vocab_size:
        pairs = Counter()
        for s, n in seqs.items():
            for p in zip(s, s[1:]):
                pairs[p] += n
        if not pairs:
            break
        top = max(pairs.values())
        best = min(p for p, n in pairs.items() if n == top)
        merges.append(best)
        units.add(best[0] + best[1])
        new = Counter()
        for s, n in seqs.items():
            out, i = [], 0
            while i < len(s):
                if i + 1 < len(s) and (s[i], s[i + 1]) == best:
                    out.append(s[i] + s[i + 1])
                    i += 2
                else:
                    out.append(s[i])
                    i += 1
            new[tuple(out)] += n
        seqs = new
    return merges


def test_worked_example():
    m = train_subword_model(["abab"], 5)
    assert m.merges == [("a", "b"), ("ab", "ab")]
    assert m.split("abab") == ("abab",)
    assert m.split("aba") == ("ab", "a")


@pytest.mark.parametrize("vocab", [25, 40, 60])
def test_learner_matches_naive_recount(vocab):
    corpus = CORPUS * 3 + ["banana bandana", "cabana"]
    assert train_subword_model(corpus, vocab).merges == naive_merges(corpus, vocab)


def test_vocab_smaller_than_alphabet_is_rejected():
    with pytest.raises(ValueError):
        train_subword_model(["abcdef"], 3)


def test_vocabulary_size_is_respected(model):
    assert len(model.units) <= 40


def test_factors():
    m = train_subword_model(["hello world"], 30)
    toks = encode("Hello WORLD hello", m)
    assert [t.case for t in toks] == [TITLE, UPPER, LOWER]
    assert [t.glue for t in toks] == [False, False, False]
    m = train_subword_model(["mcdonald"] * 3, 20)
    toks = encode("McDonald's", m)
    assert toks[0] == FactoredToken("mcdonald", MIXED, False, "McDonald")
    assert toks[0].glue is False and all(t.glue for t in toks[1:])


@pytest.mark.parametrize("s", CORPUS + ["İstanbul", "ß", "Hello , world", "a"])
def test_round_trip_examples(model, s):
    assert decode(encode(s, model)) == s


@settings(max_examples=200)
@given(lines)
def test_round_trip_property(model, s):
    assert decode(encode(s, model)) == s


@given(lines)
def test_stream_format_round_trip(model, s):
    toks = encode(s, model)
    line = format_stream(toks)
    assert parse_stream(line) == toks
    assert all(field.count("|") >= 2 for field in line.split(" ") if field)


def test_stream_token_format():
    assert str(FactoredToken("ab", UPPER, True)) == "ab|upper|1"
    assert FactoredToken.parse("x|y|title|0") == FactoredToken("x|y", TITLE, False)
    with pytest.raises(ValueError):
        FactoredToken.parse("ab|shouty|0")


def test_model_file_round_trip(tmp_path, model):
    path = tmp_path / "sw.txt"
    model.save(path)
    again = SubwordModel.load(path)
    assert again.merges == model.merges
    for s in CORPUS:
        assert encode(s, again) == encode(s, model)


def test_model_file_rejects_garbage():
    with pytest.raises(ValueError):
        SubwordModel.loads("not a model\n")
