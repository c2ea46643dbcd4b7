"""Length arithmetic shared by training, decoding and evaluation.

Lengths are counted in characters with whitespace excluded.  Every place that
rounds to an integer uses :func:`round_half_away`.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

COMPLIANT = "compliant"
NONCOMPLIANT = "noncompliant"
SKIPPED = "skipped"

#: sources with fewer non-space characters than this are not scored
MIN_SOURCE_CHARS = 10
DEFAULT_MARGIN = 0.10

THREE_BIN = "three_bin"
QUANTILE = "quantile"
THREE_BIN_LABELS = ("too short", "length compliant", "too long")
SEVEN_BIN_LABELS = ("XXS", "XS", "S", "M", "L", "XL", "XXL")

_BINS_HEADER = "isomt-bins v1"


def round_half_away(x) -> int:
    """Round to the nearest integer, ties away from zero."""
    x = Fraction(x)
    sign = -1 if x < 0 else 1
    return sign * math.floor(abs(x) + Fraction(1, 2))


def _exact(margin: float) -> Fraction:
    # 0.1 as a float is not 1/10; compare against the decimal the caller wrote
    return Fraction(repr(float(margin)))


def char_count(s: str, count_spaces: bool = False) -> int:
    if count_spaces:
        return len(s)
    return sum(1 for c in s if not c.isspace())


@dataclass(frozen=True)
class ComplianceVerdict:
    status: str
    ratio: float

    @property
    def compliant(self) -> bool:
        return self.status == COMPLIANT


def check_compliance(src: str, tgt: str, margin: float = DEFAULT_MARGIN,
                     count_spaces: bool = False) -> ComplianceVerdict:
    """Character-length compliance of ``tgt`` against ``src``.

    The window is inclusive: a target exactly ``margin`` away still counts.
    """
    if margin <= 0:
        raise ValueError(f"margin must be positive, got {margin}")
    n_src = char_count(src, count_spaces)
    n_tgt = char_count(tgt, count_spaces)
    ratio = n_tgt / n_src if n_src else math.inf
    if n_src < MIN_SOURCE_CHARS:
        return ComplianceVerdict(SKIPPED, ratio)
    ok = abs(n_tgt - n_src) <= _exact(margin) * n_src
    return ComplianceVerdict(COMPLIANT if ok else NONCOMPLIANT, ratio)


def length_ratio(src: str, tgt: str) -> float:
    n_src = char_count(src)
    if n_src == 0:
        raise ValueError("source has no countable characters")
    return char_count(tgt) / n_src


def default_labels(k: int, scheme: str = QUANTILE) -> tuple[str, ...]:
    if scheme == THREE_BIN:
        return THREE_BIN_LABELS
    named = {7: SEVEN_BIN_LABELS, 5: ("XS", "S", "M", "L", "XL"), 3: ("S", "M", "L")}
    if k in named:
        return named[k]
    return tuple(f"B{i + 1}" for i in range(k))


@dataclass(frozen=True)
class LengthBinning:
    """Target-to-source character ratio classes.

    Bin ``i`` is the half-open interval ``[boundaries[i-1], boundaries[i])``;
    the last bin is unbounded above.  The three-bin scheme instead follows the
    compliance window, so both window edges count as compliant.
    """

    boundaries: tuple[float, ...]
    labels: tuple[str, ...]
    scheme: str = QUANTILE
    margin: float = field(default=DEFAULT_MARGIN, compare=False)

    def __post_init__(self):
        if len(self.labels) != len(self.boundaries) + 1:
            raise ValueError("need exactly one more label than boundaries")
        if any(b > a for a, b in zip(self.boundaries[1:], self.boundaries)):
            raise ValueError("boundaries must be nondecreasing")

    @property
    def k(self) -> int:
        return len(self.labels)

    def classify_ratio(self, ratio) -> str:
        if self.scheme == THREE_BIN:
            lo, hi = 1 - _exact(self.margin), 1 + _exact(self.margin)
            r = Fraction(ratio)
            if r < lo:
                return self.labels[0]
            if r > hi:
                return self.labels[2]
            return self.labels[1]
        return self.labels[bisect.bisect_right(self.boundaries, ratio)]

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown length class {label!r}; known: {list(self.labels)}") from None

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    def dumps(self) -> str:
        head = _BINS_HEADER if self.scheme == QUANTILE else f"{_BINS_HEADER} scheme={self.scheme}"
        labels = "\t".join(("labels",) + tuple(self.labels))
        return "\n".join([head, labels] + [repr(float(b)) for b in self.boundaries]) + "\n"

    @classmethod
    def loads(cls, text: str) -> "LengthBinning":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith(_BINS_HEADER):
            raise ValueError("not an isomt-bins v1 file")
        scheme = QUANTILE
        for tok in lines[0].split()[2:]:
            key, _, val = tok.partition("=")
            if key == "scheme":
                scheme = val
        labels = None
        if len(lines) > 1 and lines[1].startswith("labels\t"):
            labels = tuple(lines[1].split("\t")[1:])
            lines = lines[1:]
        try:
            boundaries = tuple(float(x) for x in lines[1:])
        except ValueError:
            raise ValueError("bins file has a non-numeric boundary") from None
        return cls(boundaries, labels or default_labels(len(boundaries) + 1, scheme), scheme)

    @classmethod
    def load(cls, path: str | Path) -> "LengthBinning":
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def three_bin(margin: float = DEFAULT_MARGIN) -> LengthBinning:
    return LengthBinning((1 - margin, 1 + margin), THREE_BIN_LABELS, THREE_BIN, margin)


def fit_quantile_bins(pairs: Iterable, k: int,
                      labels: Sequence[str] | None = None) -> LengthBinning:
    """Bins holding roughly equal numbers of the given sentence pairs.

    ``pairs`` holds objects with ``source``/``target`` attributes or plain
    ``(source, target)`` tuples.  Pairs with an empty source are ignored.
    """
    if k < 2:
        raise ValueError(f"need at least 2 bins, got k={k}")
    ratios = []
    for p in pairs:
        src, tgt = (p.source, p.target) if hasattr(p, "source") else p
        if char_count(src):
            ratios.append(char_count(tgt) / char_count(src))
    if len(ratios) < k:
        raise ValueError(f"corpus has {len(ratios)} usable pairs, fewer than k={k}")
    qs = np.quantile(np.asarray(ratios), [i / k for i in range(1, k)])
    return LengthBinning(tuple(float(q) for q in qs),
                         tuple(labels) if labels else default_labels(k))


def classify_pair(pair, binning: LengthBinning) -> str:
    src, tgt = (pair.source, pair.target) if hasattr(pair, "source") else pair
    if binning.scheme == THREE_BIN:
        # exact ratio so pairs on the window edge land where check_compliance puts them
        n_src = char_count(src)
        if n_src == 0:
            raise ValueError("source has no countable characters")
        return binning.classify_ratio(Fraction(char_count(tgt), n_src))
    return binning.classify_ratio(length_ratio(src, tgt))


def perturb_length(target_length: int, rng: np.random.Generator) -> int:
    """Draw a forced length uniformly from the +/-10% window around ``target_length``."""
    lo, hi = perturbation_window(target_length)
    return int(rng.integers(lo, hi + 1))


def perturbation_window(target_length: int) -> tuple[int, int]:
    if target_length < 1:
        raise ValueError("target length must be >= 1")
    return (round_half_away(Fraction(9, 10) * target_length),
            round_half_away(Fraction(11, 10) * target_length))


def corrected_length(source_length: int, first_pass_length: int) -> int:
    """Second-pass forced length: scale the source length by the inverse first-pass overshoot."""
    if first_pass_length == 0:
        raise ZeroDivisionError("first-pass length is zero")
    return round_half_away(Fraction(source_length * source_length, first_pass_length))
