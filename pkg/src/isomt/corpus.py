"""Parallel corpus handling: normalization, filtering, file I/O and the
concatenation copy of the training data."""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

_QUOTE_MAP = {
    "“": '"', "”": '"', "„": '"', "‟": '"', "«": '"', "»": '"',
    "″": '"', "‶": '"',
    "‘": "'", "’": "'", "‚": "'", "‛": "'", "‹": "'", "›": "'",
    "′": "'", "‵": "'",
    "‐": "-", "‑": "-", "‒": "-", "–": "-", "—": "-", "―": "-",
}
_TRANSLATE = str.maketrans(_QUOTE_MAP)


class CorpusError(ValueError):
    """Malformed or inconsistent corpus files."""


@dataclass(frozen=True)
class SentencePair:
    source: str
    target: str
    doc_id: Optional[str] = None
    position: Optional[int] = None


def normalize_text(s: str) -> str:
    """Map typographic quotes and dashes to their ASCII counterparts."""
    return s.translate(_TRANSLATE)


def clean_whitespace(s: str) -> str:
    return " ".join(s.split())


def filter_pair(pair: SentencePair) -> bool:
    """True if the pair survives the digit/parenthesis consistency filter."""
    src, tgt = pair.source, pair.target
    if Counter(c for c in src if c.isdigit()) != Counter(c for c in tgt if c.isdigit()):
        return False
    return src.count("(") == tgt.count("(") and src.count(")") == tgt.count(")")


def prepare_corpus(pairs: Iterable[SentencePair]) -> list[SentencePair]:
    """Normalize, drop empty sides and apply :func:`filter_pair`."""
    out = []
    for p in pairs:
        q = SentencePair(normalize_text(p.source), normalize_text(p.target), p.doc_id, p.position)
        if q.source and q.target and filter_pair(q):
            out.append(q)
    return out


def _read_lines(path) -> list[str]:
    with open(path, encoding="utf-8", newline="\n") as f:
        return [clean_whitespace(line.rstrip("\n")) for line in f]


def read_lines(path) -> list[str]:
    return _read_lines(path)


def write_lines(path, lines: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for line in lines:
            f.write(line.replace("\n", " ") + "\n")


def read_parallel(src_path, tgt_path, docs_path=None) -> list[SentencePair]:
    """Read line-aligned source/target files.

    ``docs_path`` optionally holds ``doc_id<TAB>position`` per line.
    Whitespace runs inside lines are collapsed to single spaces.
    """
    src, tgt = _read_lines(src_path), _read_lines(tgt_path)
    if len(src) != len(tgt):
        raise CorpusError(f"{src_path} has {len(src)} lines but {tgt_path} has {len(tgt)}")
    if docs_path is None:
        return [SentencePair(s, t) for s, t in zip(src, tgt)]
    docs = []
    with open(docs_path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 2:
                raise CorpusError(f"{docs_path}:{lineno}: expected doc_id<TAB>position")
            try:
                docs.append((fields[0], int(fields[1])))
            except ValueError:
                raise CorpusError(f"{docs_path}:{lineno}: position is not an integer") from None
    if len(docs) != len(src):
        raise CorpusError(f"{docs_path} has {len(docs)} lines, expected {len(src)}")
    return [SentencePair(s, t, d, pos) for s, t, (d, pos) in zip(src, tgt, docs)]


def write_parallel(pairs: list[SentencePair], src_path, tgt_path, docs_path=None) -> None:
    write_lines(src_path, (p.source for p in pairs))
    write_lines(tgt_path, (p.target for p in pairs))
    if docs_path is not None:
        write_lines(docs_path, (f"{p.doc_id}\t{p.position}" for p in pairs))


def concat_adjacent(pairs: Iterable[SentencePair]) -> list[SentencePair]:
    """Join sentences (0,1), (2,3), ... of each document into single pairs.

    Documents keep their first-appearance order; within a document sentences
    are ordered by position.  A trailing odd sentence is dropped.
    """
    docs: dict[str, list[SentencePair]] = defaultdict(list)
    for p in pairs:
        if p.doc_id is None:
            raise CorpusError("concat_adjacent needs a document-segmented corpus")
        docs[p.doc_id].append(p)
    out = []
    for doc_id, items in docs.items():
        items = sorted(items, key=lambda p: p.position if p.position is not None else 0)
        for i in range(len(items) // 2):
            a, b = items[2 * i], items[2 * i + 1]
            out.append(SentencePair(f"{a.source} {b.source}", f"{a.target} {b.target}", doc_id, i))
    return out
