"""Greedy-merge subword segmentation with case and glue factors.

Text is split on whitespace into words and each word into segments (runs of
alphanumerics, or single other characters).  Segments are case-folded and cut
into subword units by the learned merges.  Every unit carries

* a case factor (``lower``, ``title``, ``upper`` or ``mixed``) that restores
  its surface casing, and
* a glue factor, true when no space separates it from the previous unit.

``decode(encode(s)) == s`` holds for any single-spaced line without leading or
trailing whitespace.
"""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

LOWER, TITLE, UPPER, MIXED = "lower", "title", "upper", "mixed"
CASES = (LOWER, TITLE, UPPER, MIXED)

_HEADER = "isomt-subword v1"
_SEGMENT = re.compile(r"\w+|\W", re.UNICODE)


def _fold_char(c: str) -> str:
    low = c.lower()
    # keep characters whose lowercase form changes length; the case factor
    # then records them as already lowercase
    return low if len(low) == 1 else c


def fold(s: str) -> str:
    return "".join(_fold_char(c) for c in s)


def segments(word: str) -> list[str]:
    # \w includes "_"; that is fine, it just stays inside the run
    return _SEGMENT.findall(word)


def case_of(surface: str, unit: str) -> str:
    if surface == unit:
        return LOWER
    if surface == unit[:1].upper() + unit[1:]:
        return TITLE
    if surface == unit.upper():
        return UPPER
    return MIXED


def apply_case(unit: str, case: str, cased: str | None = None) -> str:
    if case == LOWER:
        return unit
    if case == TITLE:
        return unit[:1].upper() + unit[1:]
    if case == UPPER:
        return unit.upper()
    if case == MIXED:
        if cased is None:
            raise ValueError(f"mixed-case token {unit!r} has no stored surface form")
        return cased
    raise ValueError(f"unknown case factor {case!r}")


@dataclass(frozen=True)
class FactoredToken:
    unit: str
    case: str = LOWER
    glue: bool = False
    cased: str | None = None

    @property
    def surface(self) -> str:
        return apply_case(self.unit, self.case, self.cased)

    def __str__(self) -> str:
        shown = self.cased if self.case == MIXED else self.unit
        return f"{shown}|{self.case}|{int(self.glue)}"

    @classmethod
    def parse(cls, field_: str) -> "FactoredToken":
        try:
            unit, case, glue = field_.rsplit("|", 2)
        except ValueError:
            raise ValueError(f"malformed factored token {field_!r}") from None
        if case not in CASES or glue not in ("0", "1") or not unit:
            raise ValueError(f"malformed factored token {field_!r}")
        if case == MIXED:
            return cls(fold(unit), case, glue == "1", unit)
        return cls(unit, case, glue == "1")


@dataclass
class SubwordModel:
    merges: list[tuple[str, str]]
    vocab_size: int
    alphabet: frozenset = frozenset()
    joint: bool = True
    _ranks: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self._ranks = {pair: i for i, pair in enumerate(self.merges)}
        self._segment_cache: dict[str, tuple[str, ...]] = {}

    @property
    def units(self) -> list[str]:
        """Vocabulary in a stable order: alphabet sorted, then merges by rank."""
        seen = set()
        out = []
        for u in sorted(self.alphabet) + [a + b for a, b in self.merges]:
            if u not in seen:
                seen.add(u)
                out.append(u)
        return out

    def split(self, segment: str) -> tuple[str, ...]:
        """Segment an already case-folded string into units."""
        hit = self._segment_cache.get(segment)
        if hit is not None:
            return hit
        parts = list(segment)
        while len(parts) > 1:
            best = None
            for i in range(len(parts) - 1):
                r = self._ranks.get((parts[i], parts[i + 1]))
                if r is not None and (best is None or r < best[0]):
                    best = (r, i)
            if best is None:
                break
            pair = self.merges[best[0]]
            merged, i = [], 0
            while i < len(parts):
                if i < len(parts) - 1 and (parts[i], parts[i + 1]) == pair:
                    merged.append(parts[i] + parts[i + 1])
                    i += 2
                else:
                    merged.append(parts[i])
                    i += 1
            parts = merged
        out = tuple(parts)
        self._segment_cache[segment] = out
        return out

    def dumps(self) -> str:
        lines = [f"{_HEADER} vocab={self.vocab_size}"]
        lines += [f"{a}\t{b}\t{i}" for i, (a, b) in enumerate(self.merges)]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def loads(cls, text: str) -> "SubwordModel":
        lines = text.split("\n")
        head = lines[0].split()
        if lines[0][:len(_HEADER)] != _HEADER or len(head) != 3 or not head[2].startswith("vocab="):
            raise ValueError("not an isomt-subword v1 file")
        vocab_size = int(head[2][len("vocab="):])
        merges = []
        for lineno, line in enumerate(lines[1:], 2):
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3 or int(fields[2]) != len(merges):
                raise ValueError(f"line {lineno}: expected left<TAB>right<TAB>rank in rank order")
            merges.append((fields[0], fields[1]))
        alphabet = frozenset(u for pair in merges for u in pair if len(u) == 1)
        return cls(merges, vocab_size, alphabet)

    @classmethod
    def load(cls, path) -> "SubwordModel":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def _corpus_lines(corpus) -> Iterable[str]:
    for item in corpus:
        if isinstance(item, str):
            yield item
        else:
            yield item.source
            yield item.target


def train_subword_model(corpus, vocab_size: int) -> SubwordModel:
    """Learn merges on the source and target sides jointly.

    ``corpus`` holds :class:`~isomt.corpus.SentencePair` objects or plain
    strings.  The vocabulary is the case-folded character inventory plus one
    unit per merge; merging stops once ``vocab_size`` is reached or no adjacent
    pair is left.  Ties go to the lexicographically smallest pair.
    """
    counts: Counter = Counter()
    for line in _corpus_lines(corpus):
        for word in line.split():
            for seg in segments(word):
                counts[fold(seg)] += 1
    if not counts:
        raise ValueError("cannot train a subword model on an empty corpus")
    alphabet = frozenset(c for seg in counts for c in seg)
    if vocab_size < len(alphabet):
        raise ValueError(f"vocab_size={vocab_size} is smaller than the "
                         f"{len(alphabet)} distinct characters of the corpus")

    words = [[list(seg), n] for seg, n in sorted(counts.items())]
    pair_counts: Counter = Counter()
    for parts, n in words:
        for pair in zip(parts, parts[1:]):
            pair_counts[pair] += n

    merges: list[tuple[str, str]] = []
    units = set(alphabet)
    while len(units) < vocab_size and pair_counts:
        best_n = max(pair_counts.values())
        best = min(p for p, n in pair_counts.items() if n == best_n)
        merges.append(best)
        units.add(best[0] + best[1])
        for entry in words:
            parts, n = entry
            if len(parts) < 2 or best[0] not in parts:
                continue
            new = []
            i = 0
            changed = False
            while i < len(parts):
                if i < len(parts) - 1 and parts[i] == best[0] and parts[i + 1] == best[1]:
                    new.append(best[0] + best[1])
                    i += 2
                    changed = True
                else:
                    new.append(parts[i])
                    i += 1
            if changed:
                for pair in zip(parts, parts[1:]):
                    pair_counts[pair] -= n
                for pair in zip(new, new[1:]):
                    pair_counts[pair] += n
                entry[0] = new
        pair_counts = +pair_counts  # drop zero counts
    return SubwordModel(merges, vocab_size, alphabet)


def encode(s: str, model: SubwordModel) -> list[FactoredToken]:
    tokens = []
    for word in s.split():
        glue = False
        for seg in segments(word):
            start = 0
            for unit in model.split(fold(seg)):
                surface = seg[start:start + len(unit)]
                start += len(unit)
                case = case_of(surface, unit)
                tokens.append(FactoredToken(unit, case, glue, surface if case == MIXED else None))
                glue = True
    return tokens


def decode(tokens: Sequence[FactoredToken]) -> str:
    parts = []
    for i, tok in enumerate(tokens):
        if i and not tok.glue:
            parts.append(" ")
        parts.append(tok.surface)
    return "".join(parts)


def format_stream(tokens: Sequence[FactoredToken]) -> str:
    return " ".join(str(t) for t in tokens)


def parse_stream(line: str) -> list[FactoredToken]:
    return [FactoredToken.parse(f) for f in line.split(" ") if f]
