from __future__ import annotations

import numpy as np
import pytest
import torch

from isomt.corpus import SentencePair
from isomt.length import fit_quantile_bins, three_bin
from isomt.model import IsometricTransformer, ModelConfig
from isomt.subword import train_subword_model

TINY_PAIRS = [
    SentencePair("the small cat sleeps", "die kleine Katze schläft"),
    SentencePair("a big dog runs home", "ein großer Hund rennt heim"),
    SentencePair("We see the cat", "Wir sehen die Katze"),
    SentencePair("the dog, the cat and a bird", "der Hund, die Katze und ein Vogel"),
    SentencePair("NASA sends a probe", "NASA schickt eine Sonde"),
    SentencePair("short", "kurz und knapp gesagt"),
    SentencePair("a very long sentence indeed", "lang"),
]


@pytest.fixture(scope="session")
def tiny_subword():
    return train_subword_model(TINY_PAIRS, 60)


def make_tiny(subword, seed=0, dtype=torch.float32, **kw):
    side = kw.get("length_token_side", "none")
    binning = None
    if side != "none":
        binning = three_bin() if kw.pop("three", False) else fit_quantile_bins(TINY_PAIRS, 3)
    torch.manual_seed(seed)
    cfg = ModelConfig(d_model=8, n_heads=2, n_enc_layers=1, n_dec_layers=1, ffn_dim=16,
                      dropout=0.0, label_smoothing=0.1, **kw)
    return IsometricTransformer(cfg, subword, binning).to(dtype)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# -- acceptance verdicts --------------------------------------------------------

ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


class Criterion:
    """Context manager recording one acceptance verdict for the run summary.

    ``note`` collects the measured numbers; a failing assertion inside the
    block marks the criterion FAIL and still propagates.
    """

    def __init__(self, number: int, title: str):
        self.number, self.title, self.notes = number, title, []

    def note(self, text: str) -> None:
        self.notes.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        verdict = "PASS" if exc_type is None else "FAIL"
        detail = "; ".join(self.notes)
        if exc is not None:
            detail = (detail + "; " if detail else "") + f"{exc_type.__name__}: {exc}".splitlines()[0]
        ACCEPTANCE[self.number] = (verdict, self.title, detail)
        return False


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        verdict, title, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{verdict}] criterion {number}: {title} | {detail}")
