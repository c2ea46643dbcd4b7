"""Encoder-decoder transformer with length conditioning.

The decoder position signal is either the absolute target position or the
remaining length, which counts down from a forced length ``L_forced`` in
subword tokens (``ldpe_token``) or characters (``ldpe_char``).  The countdown
replaces the absolute encoding, it is never added to it.  Length-class
pseudo-tokens can be prepended to the source or the target.

Input, output and softmax embeddings share one matrix.  Case and glue factors
are embedded on the input side and predicted by two small heads that see the
decoder state plus the embedding of the unit being emitted.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .corpus import SentencePair
from .length import LengthBinning, char_count, classify_pair, perturb_length
from .subword import CASES, FactoredToken, SubwordModel, encode

ABSOLUTE, LDPE_TOKEN, LDPE_CHAR = "absolute", "ldpe_token", "ldpe_char"
PE_MODES = (ABSOLUTE, LDPE_TOKEN, LDPE_CHAR)
SIDES = ("none", "source", "target")
TOKENS, CHARACTERS = "tokens", "characters"

SPECIALS = ("<pad>", "<s>", "</s>", "<unk>")
PAD, BOS, EOS, UNK = range(4)

_CASE_ID = {c: i for i, c in enumerate(CASES)}
_MAGIC = b"isomt-model v1\n"


class ModelError(ValueError):
    pass


def length_token(label: str) -> str:
    return "<" + label.replace(" ", "_") + ">"


class Vocab:
    """Unit strings to ids: specials, then length tokens, then subword units."""

    def __init__(self, units: Sequence[str], length_labels: Sequence[str] = ()):
        self.itos = list(SPECIALS) + [length_token(l) for l in length_labels] + list(units)
        self.stoi = {s: i for i, s in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ModelError("duplicate entries in vocabulary")
        self.length_ids = {l: self.stoi[length_token(l)] for l in length_labels}
        self.n_units = len(units)

    def __len__(self):
        return len(self.itos)

    def id(self, unit: str) -> int:
        return self.stoi.get(unit, UNK)

    @property
    def first_unit_id(self) -> int:
        return len(SPECIALS) + len(self.length_ids)


@dataclass
class ModelConfig:
    d_model: int = 64
    n_heads: int = 4
    n_enc_layers: int = 2
    n_dec_layers: int = 2
    ffn_dim: int = 128
    dropout: float = 0.3
    label_smoothing: float = 0.2
    pe_mode: str = ABSOLUTE
    length_token_side: str = "none"
    perturb: bool = False
    count_spaces: bool = False

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ModelError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.d_model % 2:
            raise ModelError("d_model must be even for sinusoidal encodings")
        for name in ("dropout", "label_smoothing"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ModelError(f"{name} must lie in [0, 1), got {v}")
        if self.pe_mode not in PE_MODES:
            raise ModelError(f"pe_mode must be one of {PE_MODES}, got {self.pe_mode!r}")
        if self.length_token_side not in SIDES:
            raise ModelError(f"length_token_side must be one of {SIDES}")

    @property
    def length_unit(self) -> Optional[str]:
        return {LDPE_TOKEN: TOKENS, LDPE_CHAR: CHARACTERS}.get(self.pe_mode)

    @classmethod
    def transformer_big(cls, **kw) -> "ModelConfig":
        base = dict(d_model=1024, n_heads=16, n_enc_layers=6, n_dec_layers=6, ffn_dim=4096)
        base.update(kw)
        return cls(**base)


def sinusoid(x: torch.Tensor, d_model: int) -> torch.Tensor:
    """Sinusoidal encoding of (possibly negative) positions ``x``; shape ``x.shape + (d_model,)``."""
    i = torch.arange(0, d_model, 2, dtype=x.dtype, device=x.device)
    angle = x.unsqueeze(-1) / torch.pow(torch.tensor(10000.0, dtype=x.dtype), i / d_model)
    out = torch.empty(*x.shape, d_model, dtype=x.dtype, device=x.device)
    out[..., 0::2] = torch.sin(angle)
    out[..., 1::2] = torch.cos(angle)
    return out


def positional_vector(x: int, d_model: int, mode: str = ABSOLUTE) -> np.ndarray:
    """Encoding vector for a position (absolute mode) or a remaining length (ldpe modes).

    Both use the same sinusoid; they differ only in what ``x`` means.
    """
    if mode not in PE_MODES:
        raise ModelError(f"unknown pe_mode {mode!r}")
    return sinusoid(torch.tensor(float(x), dtype=torch.float64), d_model).numpy()


@dataclass(frozen=True)
class DecoderLengthState:
    unit: str
    forced: int
    consumed: int = 0
    emitted: int = 0
    count_spaces: bool = False

    @property
    def remaining(self) -> int:
        return self.forced - self.consumed


def token_length(token: FactoredToken | None, unit: str, first: bool = False,
                 count_spaces: bool = False) -> int:
    """Length one emitted token uses up; ``None`` stands for end-of-sentence or a length token."""
    if token is None:
        return 0
    if unit == TOKENS:
        return 1
    n = char_count(token.surface)
    if count_spaces and not token.glue and not first:
        n += 1
    return n


def advance_length_state(st: DecoderLengthState,
                         emitted: FactoredToken | None) -> DecoderLengthState:
    used = token_length(emitted, st.unit, st.emitted == 0, st.count_spaces)
    return replace(st, consumed=st.consumed + used,
                   emitted=st.emitted + (emitted is not None))


@dataclass
class TrainingExample:
    src: list[int]
    src_case: list[int]
    src_glue: list[int]
    tgt: list[int]  # output sequence, ends with EOS
    tgt_case: list[int]
    tgt_glue: list[int]
    dec_pos: list[float]  # per decoder input step: position or remaining length
    length_target: Optional[int] = None
    length_forced: Optional[int] = None


class IsometricTransformer(nn.Module):
    def __init__(self, cfg: ModelConfig, subword: SubwordModel,
                 binning: Optional[LengthBinning] = None, units: Optional[Sequence[str]] = None):
        super().__init__()
        if cfg.length_token_side != "none" and binning is None:
            raise ModelError("length tokens need a LengthBinning")
        self.cfg = cfg
        self.subword = subword
        self.binning = binning if cfg.length_token_side != "none" else None
        labels = self.binning.labels if self.binning else ()
        self.vocab = Vocab(units if units is not None else subword.units, labels)

        d = cfg.d_model
        self.embed = nn.Embedding(len(self.vocab), d, padding_idx=PAD)
        self.case_embed = nn.Embedding(len(CASES), d)
        self.glue_embed = nn.Embedding(2, d)
        self.encoder_layers = nn.ModuleList(
            nn.TransformerEncoderLayer(d, cfg.n_heads, cfg.ffn_dim, cfg.dropout,
                                       batch_first=True, norm_first=True)
            for _ in range(cfg.n_enc_layers))
        self.decoder_layers = nn.ModuleList(
            nn.TransformerDecoderLayer(d, cfg.n_heads, cfg.ffn_dim, cfg.dropout,
                                       batch_first=True, norm_first=True)
            for _ in range(cfg.n_dec_layers))
        self.enc_norm = nn.LayerNorm(d)
        self.dec_norm = nn.LayerNorm(d)
        self.case_head = nn.Linear(d, len(CASES))
        self.glue_head = nn.Linear(d, 2)
        self.drop = nn.Dropout(cfg.dropout)
        nn.init.normal_(self.embed.weight, std=d ** -0.5)
        with torch.no_grad():
            self.embed.weight[PAD].zero_()

    # -- featurization ---------------------------------------------------

    @property
    def length_unit(self) -> Optional[str]:
        return self.cfg.length_unit

    def tokenize(self, text: str) -> list[FactoredToken]:
        return encode(text, self.subword)

    def ids_of(self, tokens: Sequence[FactoredToken]) -> tuple[list[int], list[int], list[int]]:
        return ([self.vocab.id(t.unit) for t in tokens], [_CASE_ID[t.case] for t in tokens],
                [int(t.glue) for t in tokens])

    def source_length(self, src: str) -> int:
        """Length of ``src`` in the unit the decoder counts down in."""
        if self.length_unit == TOKENS:
            return len(self.tokenize(src))
        return char_count(src, self.cfg.count_spaces)

    def output_length(self, tokens: Sequence[FactoredToken]) -> int:
        st = DecoderLengthState(self.length_unit or TOKENS, 0, count_spaces=self.cfg.count_spaces)
        for t in tokens:
            st = advance_length_state(st, t)
        return st.consumed

    def source_ids(self, src: str, length_label: Optional[str] = None):
        ids, case, glue = self.ids_of(self.tokenize(src))
        if self.cfg.length_token_side == "source":
            if length_label is None:
                raise ModelError("source-side length token required")
            ids = [self.length_id(length_label)] + ids
            case, glue = [0] + case, [0] + glue
        return ids + [EOS], case + [0], glue + [0]

    def length_id(self, label: str) -> int:
        if label not in self.vocab.length_ids:
            raise ModelError(f"unknown length class {label!r}; model knows {list(self.vocab.length_ids)}")
        return self.vocab.length_ids[label]

    # -- network -----------------------------------------------------------

    def _embed(self, ids, case, glue, pos):
        d = self.cfg.d_model
        x = self.embed(ids) * math.sqrt(d) + self.case_embed(case) + self.glue_embed(glue)
        return self.drop(x + sinusoid(pos.to(x.dtype), d))

    def encode_source(self, src, src_case, src_glue):
        pad = src.eq(PAD)
        pos = torch.arange(src.size(1), device=src.device).expand_as(src)
        x = self._embed(src, src_case, src_glue, pos)
        for layer in self.encoder_layers:
            x = layer(x, src_key_padding_mask=pad)
        return self.enc_norm(x), pad

    def decoder_positions(self, tgt_in: torch.Tensor, dec_pos: Optional[torch.Tensor]):
        if self.cfg.pe_mode == ABSOLUTE:
            return torch.arange(tgt_in.size(1), device=tgt_in.device).expand_as(tgt_in)
        if dec_pos is None:
            raise ModelError("length-encoding decoder needs remaining-length positions")
        return dec_pos

    def decode_hidden(self, memory, src_pad, tgt_in, tgt_case, tgt_glue, dec_pos=None):
        pos = self.decoder_positions(tgt_in, dec_pos)
        y = self._embed(tgt_in, tgt_case, tgt_glue, pos)
        T = tgt_in.size(1)
        causal = torch.triu(torch.ones(T, T, dtype=torch.bool, device=y.device), 1)
        tgt_pad = tgt_in.eq(PAD)
        for layer in self.decoder_layers:
            y = layer(y, memory, tgt_mask=causal, tgt_key_padding_mask=tgt_pad,
                      memory_key_padding_mask=src_pad)
        return self.dec_norm(y)

    def unit_logits(self, h):
        return h @ self.embed.weight.t()

    def factor_logits(self, h, units):
        z = h + self.embed(units)
        return self.case_head(z), self.glue_head(z)

    def forward(self, batch: "Batch"):
        memory, src_pad = self.encode_source(batch.src, batch.src_case, batch.src_glue)
        h = self.decode_hidden(memory, src_pad, batch.tgt_in, batch.tgt_in_case,
                               batch.tgt_in_glue, batch.dec_pos)
        case_logits, glue_logits = self.factor_logits(h, batch.tgt_out)
        return self.unit_logits(h), case_logits, glue_logits

    def loss(self, batch: "Batch", label_smoothing: Optional[float] = None):
        """Label-smoothed cross-entropy summed over units and both factors, per target token.

        Also returns the unsmoothed unit NLL sum and token count for perplexity.
        """
        ls = self.cfg.label_smoothing if label_smoothing is None else label_smoothing
        unit_logits, case_logits, glue_logits = self(batch)
        mask = batch.tgt_out.ne(PAD)
        n = int(mask.sum())
        target = batch.tgt_out.reshape(-1)
        ce = F.cross_entropy(unit_logits.reshape(-1, unit_logits.size(-1)), target,
                             ignore_index=PAD, label_smoothing=ls, reduction="sum")
        keep = mask.reshape(-1)
        ce = ce + F.cross_entropy(case_logits.reshape(-1, len(CASES))[keep],
                                  batch.tgt_out_case.reshape(-1)[keep],
                                  label_smoothing=ls, reduction="sum")
        ce = ce + F.cross_entropy(glue_logits.reshape(-1, 2)[keep],
                                  batch.tgt_out_glue.reshape(-1)[keep],
                                  label_smoothing=ls, reduction="sum")
        with torch.no_grad():
            nll = F.cross_entropy(unit_logits.reshape(-1, unit_logits.size(-1)), target,
                                  ignore_index=PAD, reduction="sum")
        return ce / max(n, 1), float(nll), n


@dataclass
class Batch:
    src: torch.Tensor
    src_case: torch.Tensor
    src_glue: torch.Tensor
    tgt_in: torch.Tensor
    tgt_in_case: torch.Tensor
    tgt_in_glue: torch.Tensor
    tgt_out: torch.Tensor
    tgt_out_case: torch.Tensor
    tgt_out_glue: torch.Tensor
    dec_pos: torch.Tensor

    @property
    def n_tokens(self) -> int:
        return int(self.tgt_out.ne(PAD).sum())


def _pad(rows, value=0, dtype=torch.long):
    width = max(len(r) for r in rows)
    return torch.tensor([list(r) + [value] * (width - len(r)) for r in rows], dtype=dtype)


def collate(examples: Sequence[TrainingExample], dtype=torch.float32) -> Batch:
    return Batch(
        src=_pad([e.src for e in examples], PAD),
        src_case=_pad([e.src_case for e in examples]),
        src_glue=_pad([e.src_glue for e in examples]),
        tgt_in=_pad([[BOS] + e.tgt[:-1] for e in examples], PAD),
        tgt_in_case=_pad([[0] + e.tgt_case[:-1] for e in examples]),
        tgt_in_glue=_pad([[0] + e.tgt_glue[:-1] for e in examples]),
        tgt_out=_pad([e.tgt for e in examples], PAD),
        tgt_out_case=_pad([e.tgt_case for e in examples]),
        tgt_out_glue=_pad([e.tgt_glue for e in examples]),
        dec_pos=_pad([e.dec_pos for e in examples], 0.0, dtype),
    )


def build_training_example(pair: SentencePair, model: IsometricTransformer,
                           rng: Optional[np.random.Generator] = None,
                           perturb: Optional[bool] = None) -> TrainingExample:
    """Turn a sentence pair into id sequences plus per-step decoder positions.

    For length-encoding models the forced length is the reference length,
    randomly rescaled within +/-10% when perturbation is on; the per-step
    decrements always come from the reference tokens, so the countdown need
    not end at zero.  ``perturb`` overrides the model config (dev scoring
    passes False).
    """
    cfg = model.cfg
    label = classify_pair(pair, model.binning) if model.binning else None
    src, src_case, src_glue = model.source_ids(pair.source, label)

    tokens = model.tokenize(pair.target)
    tgt, tgt_case, tgt_glue = model.ids_of(tokens)
    emitted: list[Optional[FactoredToken]] = list(tokens)
    if cfg.length_token_side == "target":
        tgt, tgt_case, tgt_glue = [model.length_id(label)] + tgt, [0] + tgt_case, [0] + tgt_glue
        emitted = [None] + emitted
    tgt, tgt_case, tgt_glue = tgt + [EOS], tgt_case + [0], tgt_glue + [0]
    emitted.append(None)

    if cfg.pe_mode == ABSOLUTE:
        return TrainingExample(src, src_case, src_glue, tgt, tgt_case, tgt_glue,
                               [float(i) for i in range(len(tgt))])

    unit = cfg.length_unit
    length_target = model.output_length(tokens)
    forced = length_target
    if (cfg.perturb if perturb is None else perturb) and length_target >= 1:
        if rng is None:
            raise ModelError("length perturbation needs a random generator")
        forced = perturb_length(length_target, rng)
    st = DecoderLengthState(unit, forced, count_spaces=cfg.count_spaces)
    dec_pos = []
    for tok in emitted:
        dec_pos.append(float(st.remaining))
        st = advance_length_state(st, tok)
    return TrainingExample(src, src_case, src_glue, tgt, tgt_case, tgt_glue, dec_pos,
                           length_target, forced)


# -- checkpoints -------------------------------------------------------------

def save_model(model: IsometricTransformer, path) -> None:
    """``isomt-model v1`` header, ``key=<json>`` config lines, blank line, float32 LE blobs."""
    header = dict(asdict(model.cfg))
    header["units"] = model.vocab.itos[model.vocab.first_unit_id:]
    header["subword"] = model.subword.dumps()
    header["subword_vocab_size"] = model.subword.vocab_size
    header["bins"] = model.binning.dumps() if model.binning else ""
    params = list(model.named_parameters())
    header["params"] = [[name, list(p.shape)] for name, p in params]
    with open(path, "wb") as f:
        f.write(_MAGIC)
        for key, value in header.items():
            f.write(f"{key}={json.dumps(value, ensure_ascii=False)}\n".encode("utf-8"))
        f.write(b"\n")
        for _, p in params:
            arr = p.detach().cpu().to(torch.float32).numpy().astype("<f4", copy=False)
            f.write(arr.tobytes(order="C"))


def load_model(path) -> IsometricTransformer:
    data = Path(path).read_bytes()
    if not data.startswith(_MAGIC):
        raise ModelError(f"{path}: not an isomt-model v1 checkpoint")
    end = data.find(b"\n\n", len(_MAGIC) - 1)
    if end < 0:
        raise ModelError(f"{path}: truncated config block")
    header = {}
    for line in data[len(_MAGIC):end].decode("utf-8").split("\n"):
        if line:
            key, _, value = line.partition("=")
            header[key] = json.loads(value)
    cfg = ModelConfig(**{f.name: header[f.name] for f in fields(ModelConfig) if f.name in header})
    sub = SubwordModel.loads(header["subword"])
    sub.vocab_size = header.get("subword_vocab_size", sub.vocab_size)
    binning = LengthBinning.loads(header["bins"]) if header["bins"] else None
    model = IsometricTransformer(cfg, sub, binning, header["units"])
    blob = memoryview(data)[end + 2:]
    offset = 0
    params = dict(model.named_parameters())
    with torch.no_grad():
        for name, shape in header["params"]:
            p = params[name]
            if list(p.shape) != shape:
                raise ModelError(f"{path}: parameter {name} has shape {shape}, expected {list(p.shape)}")
            n = p.numel() * 4
            if offset + n > len(blob):
                raise ModelError(f"{path}: truncated parameter data")
            arr = np.frombuffer(blob[offset:offset + n], dtype="<f4").reshape(shape)
            p.copy_(torch.from_numpy(arr.copy()))
            offset += n
    if offset != len(blob):
        raise ModelError(f"{path}: {len(blob) - offset} trailing bytes")
    model.eval()
    return model
