"""Corpus-level scoring: length compliance, BLEU and paired bootstrap."""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .length import COMPLIANT, SKIPPED, DEFAULT_MARGIN, check_compliance

MAX_ORDER = 4

_TOK_13A = [
    (re.compile(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])"), r" \1 "),
    (re.compile(r"([^0-9])([\.,])"), r"\1 \2 "),
    (re.compile(r"([\.,])([^0-9])"), r" \1 \2"),
    (re.compile(r"([0-9])(-)"), r"\1 \2 "),
]


@dataclass
class EvalReport:
    bleu: float
    lc: float
    n_sentences: int
    n_skipped: int
    ci95: Optional[tuple[float, float]] = None
    p_value: Optional[float] = None


def tokenize_13a(line: str) -> list[str]:
    """mteval-v13a style tokenization: punctuation split off, case kept."""
    line = line.replace("<skipped>", "").replace("-\n", "").replace("\n", " ")
    if "&" in line:
        line = (line.replace("&quot;", '"').replace("&amp;", "&")
                .replace("&lt;", "<").replace("&gt;", ">"))
    line = f" {line} "
    for pattern, repl in _TOK_13A:
        line = pattern.sub(repl, line)
    return line.split()


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def sentence_stats(hyp: str, ref: str) -> np.ndarray:
    """Sufficient statistics ``[match_1..4, total_1..4, hyp_len, ref_len]``."""
    h, r = tokenize_13a(hyp), tokenize_13a(ref)
    stats = np.zeros(2 * MAX_ORDER + 2, dtype=np.int64)
    for n in range(1, MAX_ORDER + 1):
        hc, rc = _ngrams(h, n), _ngrams(r, n)
        stats[n - 1] = sum(min(c, rc[g]) for g, c in hc.items())
        stats[MAX_ORDER + n - 1] = max(len(h) - n + 1, 0)
    stats[-2], stats[-1] = len(h), len(r)
    return stats


def bleu_from_stats(stats: np.ndarray) -> np.ndarray:
    """BLEU (percent) for one stats vector or a stack of them along the last axis."""
    stats = np.asarray(stats, dtype=np.float64)
    matches, totals = stats[..., :MAX_ORDER], stats[..., MAX_ORDER:2 * MAX_ORDER]
    c, r = stats[..., -2], stats[..., -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_p = np.where(matches > 0, np.log(np.where(matches > 0, matches, 1))
                         - np.log(np.where(totals > 0, totals, 1)), -np.inf)
        log_bp = np.where(c < r, 1.0 - r / np.where(c > 0, c, 1), 0.0)
        score = np.exp(log_p.mean(axis=-1) + log_bp) * 100.0
    return np.where(np.isfinite(score) & (c > 0), score, 0.0)


def corpus_bleu(hyps: Sequence[str], refs: Sequence[str]) -> float:
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses but {len(refs)} references")
    if not hyps:
        raise ValueError("cannot score an empty corpus")
    total = sum(sentence_stats(h, r) for h, r in zip(hyps, refs))
    return float(bleu_from_stats(total))


def lc_counts(srcs: Sequence[str], hyps: Sequence[str], margin: float = DEFAULT_MARGIN,
              count_spaces: bool = False) -> tuple[int, int, int]:
    """Return ``(compliant, skipped, total)``."""
    if len(srcs) != len(hyps):
        raise ValueError(f"{len(srcs)} sources but {len(hyps)} hypotheses")
    compliant = skipped = 0
    for s, h in zip(srcs, hyps):
        status = check_compliance(s, h, margin, count_spaces).status
        compliant += status == COMPLIANT
        skipped += status == SKIPPED
    return compliant, skipped, len(srcs)


def corpus_lc(srcs: Sequence[str], hyps: Sequence[str], margin: float = DEFAULT_MARGIN,
              skipped_as_compliant: bool = False, count_spaces: bool = False) -> float:
    """Percentage of length-compliant hypotheses.

    Short sources are left out of the denominator unless
    ``skipped_as_compliant`` is set, in which case they count as hits.
    An all-skipped corpus scores 0.
    """
    compliant, skipped, total = lc_counts(srcs, hyps, margin, count_spaces)
    if skipped_as_compliant:
        return 100.0 * (compliant + skipped) / total if total else 0.0
    eligible = total - skipped
    return 100.0 * compliant / eligible if eligible else 0.0


def evaluate(srcs, hyps, refs, margin: float = DEFAULT_MARGIN) -> EvalReport:
    _, skipped, total = lc_counts(srcs, hyps, margin)
    return EvalReport(corpus_bleu(hyps, refs), corpus_lc(srcs, hyps, margin), total, skipped)


@dataclass
class BootstrapResult:
    p_value: float
    ci95: tuple[float, float]
    bleu_a: float
    bleu_b: float


def paired_bootstrap(hyps_a: Sequence[str], hyps_b: Sequence[str], refs: Sequence[str],
                     samples: int = 1000, rng: np.random.Generator | int | None = None
                     ) -> BootstrapResult:
    """Paired bootstrap resampling over sentences.

    ``p_value`` is the share of resampled test sets on which system B scores at
    least as high as A, ties counted as half.  ``ci95`` is the 2.5-97.5
    percentile interval of A's resampled BLEU.
    """
    if not (len(hyps_a) == len(hyps_b) == len(refs)):
        raise ValueError("system outputs and references differ in length")
    if not refs:
        raise ValueError("cannot resample an empty corpus")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    stats_a = np.stack([sentence_stats(h, r) for h, r in zip(hyps_a, refs)])
    stats_b = np.stack([sentence_stats(h, r) for h, r in zip(hyps_b, refs)])
    n = len(refs)
    idx = rng.integers(0, n, size=(samples, n))
    bleu_a = bleu_from_stats(stats_a[idx].sum(axis=1))
    bleu_b = bleu_from_stats(stats_b[idx].sum(axis=1))
    wins = np.count_nonzero(bleu_b > bleu_a) + 0.5 * np.count_nonzero(bleu_b == bleu_a)
    lo, hi = np.percentile(bleu_a, [2.5, 97.5])
    return BootstrapResult(float(wins / samples), (float(lo), float(hi)),
                           float(bleu_from_stats(stats_a.sum(axis=0))),
                           float(bleu_from_stats(stats_b.sum(axis=0))))


def tradeoff_table(reports: Sequence[tuple[str, EvalReport]]) -> tuple[str, str]:
    """Render ``(label, report)`` rows as an aligned text table and a TSV data file."""
    if not reports:
        raise ValueError("need at least one report")
    labels = [label.replace("\t", " ").replace("\n", " ") for label, _ in reports]
    width = max(len("system"), *(len(l) for l in labels))
    lines = [f"{'system':<{width}}  {'BLEU':>7}  {'LC':>7}  {'n':>6}  {'skip':>5}"]
    lines.append("-" * len(lines[0]))
    data = []
    for label, (_, rep) in zip(labels, reports):
        lines.append(f"{label:<{width}}  {rep.bleu:7.2f}  {rep.lc:7.2f}  "
                     f"{rep.n_sentences:6d}  {rep.n_skipped:5d}")
        data.append(f"{label}\t{rep.bleu:.2f}\t{rep.lc:.2f}")
    return "\n".join(lines) + "\n", "\n".join(data) + "\n"


def read_tradeoff_data(path) -> list[tuple[str, float, float]]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line:
            label, bleu, lc = line.split("\t")
            rows.append((label, float(bleu), float(lc)))
    return rows
