"""A small synthetic word-for-word translation task with length freedom.

Every source word stands for a concept.  Half the concepts have two
interchangeable target words, one shorter and one longer than the source
word; references pick between them at random, so the choice carries no
quality signal but moves the output length.  The other concepts translate to
a single word whose length differs slightly from the source word.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import SentencePair

CONSONANTS = "bdfgklmnprstv"
VOWELS = "aeiou"


@dataclass
class ToyTask:
    train: list[SentencePair]
    dev: list[SentencePair]
    test: list[SentencePair]
    lexicon: dict[str, tuple[str, ...]]  # source word -> target choices


def _fresh_word(rng: np.random.Generator, length: int, taken: set) -> str:
    """Random consonant-vowel word of ``length`` characters, unused so far."""
    while True:
        w = "".join(rng.choice(list(VOWELS if i % 2 else CONSONANTS)) for i in range(length))
        if w not in taken:
            taken.add(w)
            return w


def make_lexicon(rng: np.random.Generator, n_concepts: int = 16, spread: int = 2,
                 offset: int = 1) -> dict[str, tuple[str, ...]]:
    """Source words of 4-8 characters; even concepts get a short and a long
    translation (``spread`` characters either way), odd ones a single word
    up to ``offset`` characters shorter or longer."""
    taken: set = set()
    lex = {}
    for c in range(n_concepts):
        n = int(rng.integers(4, 9))
        src = _fresh_word(rng, n, taken)
        if c % 2 == 0:
            lex[src] = (_fresh_word(rng, n - spread, taken), _fresh_word(rng, n + spread, taken))
        else:
            lex[src] = (_fresh_word(rng, n + int(rng.integers(-offset, offset + 1)), taken),)
    return lex


def sample_pairs(lex: dict[str, tuple[str, ...]], n: int, rng: np.random.Generator,
                 min_words: int = 3, max_words: int = 7) -> list[SentencePair]:
    words = sorted(lex)
    out = []
    for _ in range(n):
        k = int(rng.integers(min_words, max_words + 1))
        src = [words[i] for i in rng.integers(len(words), size=k)]
        tgt = [lex[w][int(rng.integers(len(lex[w])))] for w in src]
        out.append(SentencePair(" ".join(src), " ".join(tgt)))
    return out


def make_toy_task(seed: int = 0, n_train: int = 2000, n_dev: int = 200, n_test: int = 400,
                  n_concepts: int = 16, min_words: int = 3, max_words: int = 7,
                  spread: int = 2, offset: int = 1) -> ToyTask:
    rng = np.random.default_rng(seed)
    lex = make_lexicon(rng, n_concepts, spread, offset)
    draw = lambda n: sample_pairs(lex, n, rng, min_words, max_words)  # noqa: E731
    return ToyTask(draw(n_train), draw(n_dev),
                   draw(n_test), lex)
