"""Synthetic training data: word alignment, lexicon/phrase extraction,
synonym replacement and length-compliance filtering of generated text."""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import SentencePair
from .length import COMPLIANT, NONCOMPLIANT, DEFAULT_MARGIN, check_compliance

NULL = "<null>"

Alignment = frozenset  # of (source index, target index) links


def _words(text: str) -> list[str]:
    return text.lower().split()


def _sides(pair) -> tuple[str, str]:
    return (pair.source, pair.target) if hasattr(pair, "source") else pair


@dataclass
class TranslationTable:
    """Word translation probabilities p(target | source) from IBM Model 1.

    ``log_likelihood[i]`` is the corpus log-likelihood under the parameters
    after ``i`` EM iterations (index 0 is the uniform start).
    """

    prob: dict[str, dict[str, float]]
    log_likelihood: list[float] = field(default_factory=list)

    def p(self, tgt: str, src: str) -> float:
        return self.prob.get(src, {}).get(tgt, 0.0)


def _corpus_ll(bitext, prob) -> float:
    ll = 0.0
    for src, tgt in bitext:
        sources = [NULL] + src
        for t in tgt:
            ll += math.log(sum(prob[s].get(t, 0.0) for s in sources) / len(sources))
    return ll


def align_em(corpus: Iterable, iterations: int = 5) -> TranslationTable:
    """Train IBM Model 1 by EM, with a NULL source word and uniform initialization."""
    bitext = [(_words(s), _words(t)) for s, t in map(_sides, corpus)]
    bitext = [(s, t) for s, t in bitext if t]
    if not bitext:
        raise ValueError("cannot align an empty corpus")
    tgt_vocab = sorted({t for _, tgt in bitext for t in tgt})
    uniform = 1.0 / len(tgt_vocab)
    prob: dict[str, dict[str, float]] = defaultdict(dict)
    for src, tgt in bitext:
        for s in [NULL] + src:
            row = prob[s]
            for t in tgt:
                row[t] = uniform
    history = [_corpus_ll(bitext, prob)]
    for _ in range(iterations):
        counts: dict[str, Counter] = defaultdict(Counter)
        for src, tgt in bitext:
            sources = [NULL] + src
            for t in tgt:
                weights = [prob[s][t] for s in sources]
                z = sum(weights)
                for s, w in zip(sources, weights):
                    counts[s][t] += w / z
        prob = defaultdict(dict)
        for s, row in counts.items():
            total = sum(row.values())
            prob[s] = {t: c / total for t, c in row.items()}
        history.append(_corpus_ll(bitext, prob))
    return TranslationTable(dict(prob), history)


def viterbi_align(pair, table: TranslationTable) -> Alignment:
    """Link each target word to its most probable source word; NULL links are dropped."""
    src, tgt = map(_words, _sides(pair))
    links = set()
    for j, t in enumerate(tgt):
        best_i, best_p = None, 0.0
        for i, s in enumerate(src):
            p = table.p(t, s)
            if p > best_p:
                best_i, best_p = i, p
        # NULL only wins when strictly more probable than every source word
        if best_i is not None and best_p >= table.p(t, NULL):
            links.add((best_i, j))
    return frozenset(links)


def format_pharaoh(alignment: Alignment) -> str:
    return " ".join(f"{i}-{j}" for i, j in sorted(alignment))


def parse_pharaoh(line: str) -> Alignment:
    links = set()
    for item in line.split():
        i, _, j = item.partition("-")
        links.add((int(i), int(j)))
    return frozenset(links)


@dataclass
class Lexicon:
    entries: dict[tuple[str, str], float]

    def __post_init__(self):
        self._by_target: dict[str, list[tuple[str, float]]] = defaultdict(list)
        for (s, t), p in self.entries.items():
            self._by_target[t].append((s, p))

    @staticmethod
    def cost(p: float) -> float:
        return -math.log(p)

    def sources_for(self, target: str) -> list[tuple[str, float]]:
        return self._by_target.get(target, [])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for (s, t), p in sorted(self.entries.items()):
                f.write(f"{s}\t{t}\t{p!r}\n")

    @classmethod
    def load(cls, path) -> "Lexicon":
        entries = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ValueError(f"{path}:{lineno}: expected source<TAB>target<TAB>prob")
            entries[(fields[0], fields[1])] = float(fields[2])
        return cls(entries)


def extract_lexicon(table: TranslationTable, cost_threshold: float = 50.0) -> Lexicon:
    entries = {}
    for s, row in table.prob.items():
        if s == NULL:
            continue
        for t, p in row.items():
            if p > 0 and -math.log(p) <= cost_threshold:
                entries[(s, t)] = p
    return Lexicon(entries)


@dataclass(frozen=True)
class PhrasePair:
    src_start: int
    src_end: int  # inclusive
    tgt_start: int
    tgt_end: int  # inclusive
    source: str
    target: str


def extract_phrases(pair, alignment: Alignment, max_len: int = 7) -> list[PhrasePair]:
    """All alignment-consistent phrase pairs with both sides at most ``max_len`` words.

    A span pair is consistent when it holds at least one link and no link
    connects a word inside it to a word outside it.  Unaligned target words at
    the edges give the usual extra variants.
    """
    src, tgt = (side.split() for side in _sides(pair))
    tgt_aligned: dict[int, list[int]] = {}
    for i, j in alignment:
        tgt_aligned.setdefault(j, []).append(i)
    out = []
    for i1 in range(len(src)):
        for i2 in range(i1, min(len(src), i1 + max_len)):
            js = [j for i, j in alignment if i1 <= i <= i2]
            if not js:
                continue
            j1, j2 = min(js), max(js)
            if any(not i1 <= i <= i2 for j in range(j1, j2 + 1)
                   for i in tgt_aligned.get(j, ())):
                continue
            lo = j1
            while True:
                hi = j2
                while True:
                    if hi - lo + 1 > max_len:
                        break
                    out.append(PhrasePair(i1, i2, lo, hi, " ".join(src[i1:i2 + 1]),
                                          " ".join(tgt[lo:hi + 1])))
                    hi += 1
                    if hi >= len(tgt) or hi in tgt_aligned:
                        break
                lo -= 1
                if lo < 0 or lo in tgt_aligned:
                    break
    return sorted(out, key=lambda p: (p.src_start, p.src_end, p.tgt_start, p.tgt_end))


def synonyms_for(word_index: int, pair, alignment: Alignment, lex: Lexicon) -> list[str]:
    """Other source words the lexicon translates into the target word(s) aligned to ``word_index``."""
    src, tgt = map(_words, _sides(pair))
    word = src[word_index]
    best: dict[str, float] = {}
    for i, j in alignment:
        if i != word_index:
            continue
        for s, p in lex.sources_for(tgt[j]):
            if s != word and p > best.get(s, 0.0):
                best[s] = p
    return [s for s, _ in sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))]


@dataclass
class ReplacementPolicy:
    consider_prob: float = 0.5
    max_candidates: int = 3
    variants_per_sentence: int = 4
    similarity_threshold: float = 0.94
    margin: float = DEFAULT_MARGIN

    def __post_init__(self):
        for name in ("consider_prob", "similarity_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


def source_too_long(pair, margin: float = DEFAULT_MARGIN) -> bool:
    """Direction of the length mismatch of a non-compliant pair.

    True when the source is longer than the window allows, i.e. the
    target-to-source ratio falls below it; synonyms then have to be shorter.
    """
    src, tgt = _sides(pair)
    verdict = check_compliance(src, tgt, margin)
    if verdict.status != NONCOMPLIANT:
        raise ValueError(f"pair is {verdict.status}, synonym replacement needs a non-compliant pair")
    return verdict.ratio < 1.0


def synonym_replace(pair, alignment: Alignment, lex: Lexicon, policy: ReplacementPolicy,
                    rng: np.random.Generator) -> list[str]:
    """Generate ``policy.variants_per_sentence`` modified sources for a non-compliant pair.

    Each word is considered with probability ``consider_prob``; a considered
    word is swapped for a random pick among its ``max_candidates`` most
    probable synonyms that are strictly shorter (source too long) or strictly
    longer (source too short) than it.
    """
    shorten = source_too_long(pair, policy.margin)
    words = _sides(pair)[0].split()
    options = []
    for i, w in enumerate(words):
        n = len(w)
        cands = [c for c in synonyms_for(i, pair, alignment, lex)
                 if (len(c) < n if shorten else len(c) > n)]
        options.append(cands[:policy.max_candidates])
    variants = []
    for _ in range(policy.variants_per_sentence):
        out = list(words)
        for i, cands in enumerate(options):
            # draw for every word so variants do not depend on which words have synonyms
            considered = rng.random() < policy.consider_prob
            if considered and cands:
                out[i] = cands[int(rng.integers(len(cands)))]
        variants.append(" ".join(out))
    return variants


def unigram_f1(a: str, b: str) -> float:
    ca, cb = Counter(a.lower().split()), Counter(b.lower().split())
    overlap = sum((ca & cb).values())
    if overlap == 0:
        return 0.0
    p, r = overlap / sum(cb.values()), overlap / sum(ca.values())
    return 2 * p * r / (p + r)


def similarity_filter(original: str, modified: str, threshold: float = 0.94) -> bool:
    """Keep a modified sentence whose unigram F1 against the original reaches ``threshold``."""
    return unigram_f1(original, modified) >= threshold


def filter_synthetic(pairs: Iterable, margin: float = DEFAULT_MARGIN) -> list:
    """Keep generated pairs whose two sides are length-compliant."""
    return [p for p in pairs if check_compliance(*_sides(p), margin).status == COMPLIANT]


def augment_synonyms(corpus: Sequence[SentencePair], policy: ReplacementPolicy,
                     rng: np.random.Generator, iterations: int = 5,
                     cost_threshold: float = 50.0) -> list[SentencePair]:
    """Full synonym-replacement recipe over a corpus.

    Aligns the lowercased corpus, extracts the lexicon, rewrites the sources of
    non-compliant pairs and keeps distinct variants that pass the similarity
    filter, paired with the original target.
    """
    table = align_em(corpus, iterations)
    lex = extract_lexicon(table, cost_threshold)
    out = []
    for pair in corpus:
        if check_compliance(pair.source, pair.target, policy.margin).status != NONCOMPLIANT:
            continue
        links = viterbi_align(pair, table)
        seen = {pair.source}
        for variant in synonym_replace(pair, links, lex, policy, rng):
            if variant in seen or not similarity_filter(pair.source, variant,
                                                        policy.similarity_threshold):
                continue
            seen.add(variant)
            out.append(SentencePair(variant, pair.target, pair.doc_id, pair.position))
    return out
