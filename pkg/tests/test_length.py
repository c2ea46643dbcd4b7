from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isomt.length import (COMPLIANT, NONCOMPLIANT, SKIPPED, LengthBinning, char_count,
                          check_compliance, classify_pair, corrected_length, fit_quantile_bins,
                          perturb_length, perturbation_window, round_half_away, three_bin)

text = st.text(alphabet="ab c\tdéß", max_size=40)


def brute_status(src: str, tgt: str, margin_pct: int = 10) -> str:
    """Independent recount: strip spaces by splitting, integer arithmetic only."""
    s = len("".join(src.split()))
    t = len("".join(tgt.split()))
    if s < 10:
        return SKIPPED
    return COMPLIANT if 100 * abs(t - s) <= margin_pct * s else NONCOMPLIANT


@pytest.mark.parametrize("x, expected", [(0.5, 1), (1.5, 2), (2.5, 3), (-0.5, -1), (-2.5, -3),
                                         (1.49, 1), (Fraction(7, 2), 4), (0, 0), (-1.2, -1)])
def test_round_half_away(x, expected):
    assert round_half_away(x) == expected


def test_char_count_ignores_whitespace_unless_asked():
    assert char_count("a b\tc d") == 4
    assert char_count("a b", count_spaces=True) == 3


def test_compliance_window_edges_are_inclusive():
    src = "abcdefghij"
    assert check_compliance(src, "x" * 9).status == COMPLIANT
    assert check_compliance(src, "x" * 11).status == COMPLIANT
    assert check_compliance(src, "x" * 8).status == NONCOMPLIANT
    assert check_compliance(src, "x" * 12).status == NONCOMPLIANT


def test_short_sources_are_skipped():
    v = check_compliance("a b c d e f g h i", "x" * 9)
    assert v.status == SKIPPED
    assert not v.compliant


def test_wider_margin():
    assert check_compliance("a" * 20, "b" * 25, margin=0.25).status == COMPLIANT
    assert check_compliance("a" * 20, "b" * 26, margin=0.25).status == NONCOMPLIANT


@given(text, text)
def test_compliance_matches_recount(src, tgt):
    assert check_compliance(src, tgt).status == brute_status(src, tgt)


@pytest.mark.parametrize("ls, l1, expected", [(100, 125, 80), (50, 50, 50), (80, 72, 89),
                                              (10, 4, 25), (3, 2, 5)])
def test_corrected_length(ls, l1, expected):
    assert corrected_length(ls, l1) == expected


def test_corrected_length_rejects_empty_first_pass():
    with pytest.raises(ZeroDivisionError):
        corrected_length(10, 0)


@given(st.integers(1, 500), st.integers(1, 500))
def test_corrected_length_moves_against_the_first_pass(ls, l1):
    l2 = corrected_length(ls, l1)
    if l1 > ls:
        assert l2 <= ls
    elif l1 < ls:
        assert l2 >= ls
    else:
        assert l2 == ls


@pytest.mark.parametrize("length, window", [(10, (9, 11)), (25, (23, 28)), (5, (5, 6)),
                                            (1, (1, 1)), (15, (14, 17))])
def test_perturbation_window(length, window):
    # 25 * 0.9 = 22.5 rounds up to 23; 25 * 1.1 = 27.5 rounds to 28; 15 * 0.9 = 13.5 -> 14
    assert perturbation_window(length) == window


@given(st.integers(1, 10_000), st.integers(0, 2**32 - 1))
def test_perturbed_length_stays_in_window(length, seed):
    lo, hi = perturbation_window(length)
    assert lo <= perturb_length(length, np.random.default_rng(seed)) <= hi


def test_perturbation_rejects_nonpositive_lengths():
    with pytest.raises(ValueError):
        perturb_length(0, np.random.default_rng(0))


def test_quantile_bins_match_numpy_and_balance():
    rng = np.random.default_rng(1)
    pairs = [("a" * int(n), "b" * int(m)) for n, m in
             zip(rng.integers(10, 60, 700), rng.integers(5, 80, 700))]
    bins = fit_quantile_bins(pairs, 7)
    ratios = np.array([len(t) / len(s) for s, t in pairs])
    assert np.allclose(bins.boundaries, np.quantile(ratios, np.arange(1, 7) / 7))
    assert bins.labels == ("XXS", "XS", "S", "M", "L", "XL", "XXL")
    counts = {label: 0 for label in bins.labels}
    for p in pairs:
        counts[classify_pair(p, bins)] += 1
    assert min(counts.values()) >= 700 / 7 * 0.7


@given(st.lists(st.floats(0.01, 10.0), min_size=2, max_size=30), st.floats(0.0, 12.0))
def test_quantile_classes_are_monotone_in_ratio(ratios, r):
    bins = LengthBinning(tuple(sorted(ratios))[:6], tuple(f"B{i}" for i in range(min(7, len(ratios) + 1))))
    i = bins.index(bins.classify_ratio(r))
    j = bins.index(bins.classify_ratio(r + 0.5))
    assert i <= j


def test_bins_need_two_classes():
    with pytest.raises(ValueError):
        fit_quantile_bins([("aaaa", "bbbb")] * 5, 1)


def test_three_bin_follows_compliance_status():
    bins = three_bin()
    for n in range(1, 40):
        pair = ("x" * 20, "y" * n)
        status = check_compliance(*pair).status
        label = classify_pair(pair, bins)
        assert (label == "length compliant") == (status == COMPLIANT)
        if n < 18:
            assert label == "too short"
        if n > 22:
            assert label == "too long"


@pytest.mark.parametrize("bins", [three_bin(), LengthBinning((0.8, 0.95, 1.05, 1.2),
                                                            ("XS", "S", "M", "L", "XL"))])
def test_bins_file_round_trip(tmp_path, bins):
    path = tmp_path / "bins.txt"
    bins.save(path)
    again = LengthBinning.load(path)
    assert again == bins
    for r in (0.5, 0.9, 1.0, 1.1, 1.3):
        assert again.classify_ratio(r) == bins.classify_ratio(r)


def test_bins_file_rejects_garbage():
    with pytest.raises(ValueError):
        LengthBinning.loads("hello\n1.0\n")


@settings(max_examples=50)
@given(st.integers(1, 400))
def test_window_contains_the_reference_length(length):
    lo, hi = perturbation_window(length)
    assert lo <= length <= hi


def test_custom_labels_survive_the_file(tmp_path):
    bins = LengthBinning((0.9, 1.1), ("short one", "fine", "long one"))
    bins.save(tmp_path / "b.txt")
    assert LengthBinning.load(tmp_path / "b.txt").labels == ("short one", "fine", "long one")
