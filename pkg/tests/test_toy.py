from __future__ import annotations

import numpy as np

from isomt.toy import make_lexicon, make_toy_task


def test_toy_task_is_seeded():
    a, b = make_toy_task(3, 50, 5, 5), make_toy_task(3, 50, 5, 5)
    assert a.train == b.train and a.lexicon == b.lexicon
    assert make_toy_task(4, 50, 5, 5).train != a.train


def test_lexicon_shape():
    lex = make_lexicon(np.random.default_rng(0), n_concepts=10, spread=2, offset=1)
    words = [w for ws in lex.values() for w in ws] + list(lex)
    assert len(words) == len(set(words))
    for k, (src, tgts) in enumerate(lex.items()):
        assert 4 <= len(src) <= 8
        if len(tgts) == 2:
            assert [len(t) for t in tgts] == [len(src) - 2, len(src) + 2]
        else:
            assert abs(len(tgts[0]) - len(src)) <= 1
    assert sum(len(t) == 2 for t in lex.values()) == 5


def test_pairs_translate_word_for_word():
    task = make_toy_task(1, 100, 10, 10)
    for p in task.train:
        src, tgt = p.source.split(), p.target.split()
        assert 3 <= len(src) <= 7 and len(src) == len(tgt)
        assert all(t in task.lexicon[s] for s, t in zip(src, tgt))
