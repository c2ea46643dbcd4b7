"""Spoken-form rewriting of English source text.

Lowercases, verbalizes numbers and dollar amounts and strips punctuation, so
that written-style training sources resemble speech transcripts.  Only
digits, currency, ``%`` and ``&`` are verbalized; other entity types pass
through unchanged.
"""
from __future__ import annotations

import re
import unicodedata

_ONES = ("zero one two three four five six seven eight nine ten eleven twelve thirteen "
         "fourteen fifteen sixteen seventeen eighteen nineteen").split()
_TENS = "_ _ twenty thirty forty fifty sixty seventy eighty ninety".split()
_SCALES = ((10 ** 12, "trillion"), (10 ** 9, "billion"), (10 ** 6, "million"), (1000, "thousand"))
MAX_VERBALIZED = 10 ** 12

CARDINAL = "cardinal"
YEAR = "year"

_MONEY = re.compile(r"\$\s?(\d[\d,]*)(?:\.(\d{1,2}))?")
_NUMBER = re.compile(r"\d+(?:,\d{3})+(?![\d,])|\d+(?:\.\d+)?")


def _below_thousand(n: int) -> list[str]:
    words = []
    if n >= 100:
        words += [_ONES[n // 100], "hundred"]
        n %= 100
    if n >= 20:
        words.append(_TENS[n // 10])
        n %= 10
        if n:
            words.append(_ONES[n])
    elif n or not words:
        words.append(_ONES[n])
    return words


def cardinal(n: int) -> str:
    """English cardinal words for ``0 <= n <= 10**12``; larger values are read digit by digit."""
    if n < 0:
        return "minus " + cardinal(-n)
    if n > MAX_VERBALIZED:
        return " ".join(_ONES[int(d)] for d in str(n))
    if n < 1000:
        return " ".join(_below_thousand(n))
    words = []
    for value, name in _SCALES:
        if n >= value:
            words += [cardinal(n // value), name]
            n %= value
    if n:
        words += _below_thousand(n)
    return " ".join(words)


def year(n: int) -> str:
    """Read a four-digit number the way years are spoken ("nineteen eighty four")."""
    hi, lo = divmod(n, 100)
    # 2005 -> "two thousand five", 2000 -> "two thousand"
    if not 1000 <= n <= 9999 or n % 1000 < 10:
        return cardinal(n)
    if lo == 0:
        return f"{cardinal(hi)} hundred"
    if lo < 10:
        return f"{cardinal(hi)} oh {_ONES[lo]}"
    return f"{cardinal(hi)} {cardinal(lo)}"


def _digits(s: str) -> str:
    return " ".join(_ONES[int(d)] for d in s)


def _number(token: str, year_style: str) -> str:
    if "." in token:
        whole, frac = token.split(".")
        return f"{_number(whole, year_style)} point {_digits(frac)}"
    n = int(token.replace(",", ""))
    if year_style == YEAR and "," not in token and len(token) == 4:
        return year(n)
    return cardinal(n)


def _money(m: re.Match) -> str:
    dollars = int(m.group(1).replace(",", ""))
    out = f" {cardinal(dollars)} {'dollar' if dollars == 1 else 'dollars'}"
    if m.group(2):
        cents = int(m.group(2).ljust(2, "0"))
        if cents:
            out += f" {cardinal(cents)} {'cent' if cents == 1 else 'cents'}"
    return out + " "


def _strip_punct(s: str) -> str:
    out = []
    for i, c in enumerate(s):
        if not unicodedata.category(c).startswith("P"):
            out.append(c)
        elif c == "'" and 0 < i < len(s) - 1 and s[i - 1].isalnum() and s[i + 1].isalnum():
            out.append(c)
        else:
            out.append(" ")
    return "".join(out)


def spoken_form(s: str, year_style: str = CARDINAL) -> str:
    """Lowercased, punctuation-free, number-verbalized version of ``s``."""
    if year_style not in (CARDINAL, YEAR):
        raise ValueError(f"unknown year style {year_style!r}")
    s = _MONEY.sub(_money, s)
    s = s.replace("%", " percent ").replace("&", " and ")
    s = _NUMBER.sub(lambda m: f" {_number(m.group(0), year_style)} ", s)
    s = _strip_punct(s.lower())
    return " ".join(s.split())
