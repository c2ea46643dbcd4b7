"""Beam search and the post-hoc length control procedures built on it."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import torch
import torch.nn.functional as F

from .length import DEFAULT_MARGIN, COMPLIANT, check_compliance, corrected_length
from .model import (ABSOLUTE, BOS, EOS, PAD, UNK, DecoderLengthState, IsometricTransformer,
                    advance_length_state)
from .subword import CASES, MIXED, FactoredToken, decode as detokenize


class DecodeError(ValueError):
    pass


@dataclass
class Hypothesis:
    text: str
    score: float
    rank: int = 1
    tokens: tuple = ()
    length: int = 0  # output length in the model's length unit (tokens for absolute models)
    length_label: Optional[str] = None


NBestList = list  # of Hypothesis, rank 1 first


@dataclass
class _Beam:
    ids: list[int]
    case: list[int]
    glue: list[int]
    pos: list[float]  # decoder position input for each prefix step
    tokens: list[FactoredToken]
    state: Optional[DecoderLengthState]
    logp: float = 0.0
    n_scored: int = 0
    label: Optional[str] = None


def _default_source_label(model: IsometricTransformer) -> str:
    # the class that holds an exactly isometric pair
    return model.binning.classify_ratio(1.0)


def _check_request(model: IsometricTransformer, forced_token, L_forced):
    if L_forced is not None and model.cfg.pe_mode == ABSOLUTE:
        raise DecodeError("a forced length needs a length-encoding model")
    if forced_token is not None:
        if model.cfg.length_token_side == "none":
            raise DecodeError("model has no length tokens")
        if forced_token not in model.vocab.length_ids:
            raise DecodeError(f"unknown length class {forced_token!r}; "
                              f"model knows {list(model.vocab.length_ids)}")


@torch.no_grad()
def _prepare(model, src, forced_token, L_forced):
    _check_request(model, forced_token, L_forced)
    side = model.cfg.length_token_side
    label = None
    if side == "source":
        label = forced_token if forced_token is not None else _default_source_label(model)
    ids, case, glue = model.source_ids(src, label)
    src_t = torch.tensor([ids])
    memory, pad = model.encode_source(src_t, torch.tensor([case]), torch.tensor([glue]))
    state = None
    if model.cfg.pe_mode != ABSOLUTE:
        forced = L_forced if L_forced is not None else model.source_length(src)
        state = DecoderLengthState(model.length_unit, int(forced), count_spaces=model.cfg.count_spaces)
    return memory, pad, state, len(ids), label


def _position(beam_state: Optional[DecoderLengthState], step: int) -> float:
    return float(beam_state.remaining) if beam_state is not None else float(step)


@torch.no_grad()
def _step(model, memory, pad, beams: list[_Beam]):
    """Decoder state and unit log-probs after each beam's prefix."""
    n = len(beams)
    tgt_in = torch.tensor([[BOS] + b.ids for b in beams])
    case = torch.tensor([[0] + b.case for b in beams])
    glue = torch.tensor([[0] + b.glue for b in beams])
    dec_pos = torch.tensor([b.pos for b in beams], dtype=memory.dtype)
    h = model.decode_hidden(memory.expand(n, -1, -1), pad.expand(n, -1), tgt_in, case, glue,
                            dec_pos)[:, -1]
    return h, F.log_softmax(model.unit_logits(h), dim=-1)


def _realizable(case_logits):
    # a generated unit has no stored surface to restore a mixed casing from
    out = case_logits.clone()
    out[:, CASES.index(MIXED)] = -math.inf
    return out


def _banned(model) -> list[int]:
    return [PAD, BOS, UNK] + list(model.vocab.length_ids.values())


def _extend(model, beam: _Beam, uid: int, case_id: int, glue_id: int, lp: float) -> _Beam:
    if uid == EOS:
        tok = None
    else:
        unit = model.vocab.itos[uid]
        tok = FactoredToken(unit, CASES[case_id], bool(glue_id))
    state = beam.state
    if tok is not None and state is not None:
        state = advance_length_state(state, tok)
    return _Beam(beam.ids + [uid], beam.case + [case_id], beam.glue + [glue_id],
                 beam.pos + [_position(state, len(beam.ids) + 1)],
                 beam.tokens + ([tok] if tok else []), state, beam.logp + lp,
                 beam.n_scored + 1, beam.label)


def _initial_beams(model, memory, pad, state, beam, forced_token) -> list[_Beam]:
    root = _Beam([], [], [], [_position(state, 0)], [], state)
    if model.cfg.length_token_side != "target":
        return [root]
    if forced_token is not None:
        tid = model.length_id(forced_token)
        return [_Beam([tid], [0], [0], root.pos + [_position(state, 1)], [], state, 0.0, 0,
                      forced_token)]
    # no class given: the model picks one itself
    _, logp = _step(model, memory, pad, [root])
    labels = list(model.vocab.length_ids)
    scores = torch.tensor([logp[0, model.vocab.length_ids[l]].item() for l in labels])
    top = torch.argsort(scores, descending=True, stable=True)[:beam]
    return [_Beam([model.vocab.length_ids[labels[i]]], [0], [0], root.pos + [_position(state, 1)],
                  [], state, float(scores[i]), 1, labels[i]) for i in top.tolist()]


def _finish(model, b: _Beam) -> Hypothesis:
    score = b.logp / max(b.n_scored, 1)
    length = model.output_length(b.tokens)
    return Hypothesis(detokenize(b.tokens), score, tokens=tuple(b.tokens), length=length,
                      length_label=b.label)


@torch.no_grad()
def beam_search(model: IsometricTransformer, src: str, beam: int = 12,
                forced_token: Optional[str] = None, L_forced: Optional[int] = None,
                max_len: Optional[int] = None) -> NBestList:
    """Beam search returning up to ``beam`` distinct hypotheses, best first.

    Finished hypotheses leave the beam, which shrinks until all ``beam`` slots
    have ended.  Scores are summed log-probabilities (unit plus factors) over
    the number of predicted tokens, end-of-sentence included and a forced
    length token excluded.  Length-encoding models start counting down from
    ``L_forced``, by default the source length in the model's unit.
    """
    if beam < 1:
        raise DecodeError("beam must be >= 1")
    model.eval()
    memory, pad, state, src_len, _ = _prepare(model, src, forced_token, L_forced)
    max_len = max_len or 2 * src_len + 10
    live = _initial_beams(model, memory, pad, state, beam, forced_token)
    banned = _banned(model)
    finished: list[_Beam] = []
    for _ in range(max_len):
        if not live:
            break
        h, logp = _step(model, memory, pad, live)
        logp[:, banned] = -math.inf
        k = min(beam, logp.size(1))
        top_lp, top_id = logp.topk(k, dim=-1)
        rows = torch.arange(len(live)).repeat_interleave(k)
        ids = top_id.reshape(-1)
        case_logits, glue_logits = model.factor_logits(h[rows], ids)
        case_lp = F.log_softmax(_realizable(case_logits), dim=-1)
        glue_lp = F.log_softmax(glue_logits, dim=-1)
        best_case_lp, best_case = case_lp.max(dim=-1)
        best_glue_lp, best_glue = glue_lp.max(dim=-1)
        not_eos = ids.ne(EOS)
        step_lp = top_lp.reshape(-1) + not_eos * (best_case_lp + best_glue_lp)
        total = torch.tensor([b.logp for b in live]).repeat_interleave(k) + step_lp
        slots = beam - len(finished)
        order = torch.argsort(total, descending=True, stable=True)[:slots]
        new_live = []
        for c in order.tolist():
            if not math.isfinite(total[c].item()):
                continue
            uid = int(ids[c])
            nb = _extend(model, live[int(rows[c])], uid, int(best_case[c]) if uid != EOS else 0,
                         int(best_glue[c]) if uid != EOS else 0, float(step_lp[c]))
            (finished if uid == EOS else new_live).append(nb)
        live = new_live
    finished += live  # ran out of steps
    hyps: dict[str, Hypothesis] = {}
    for b in finished:
        hyp = _finish(model, b)
        if hyp.text not in hyps or hyp.score > hyps[hyp.text].score:
            hyps[hyp.text] = hyp
    ranked = sorted(hyps.values(), key=lambda h: -h.score)[:beam]
    for r, hyp in enumerate(ranked, 1):
        hyp.rank = r
    return ranked


@torch.no_grad()
def greedy_decode(model: IsometricTransformer, src: str, forced_token: Optional[str] = None,
                  L_forced: Optional[int] = None, max_len: Optional[int] = None) -> Hypothesis:
    """Plain argmax decoding, kept separate from the beam code as a cross-check."""
    model.eval()
    memory, pad, state, src_len, _ = _prepare(model, src, forced_token, L_forced)
    max_len = max_len or 2 * src_len + 10
    b = _initial_beams(model, memory, pad, state, 1, forced_token)[0]
    banned = _banned(model)
    for _ in range(max_len):
        h, logp = _step(model, memory, pad, [b])
        logp[:, banned] = -math.inf
        lp, uid = logp[0].max(dim=-1)
        uid = int(uid)
        if uid == EOS:
            b = _extend(model, b, EOS, 0, 0, float(lp))
            break
        case_logits, glue_logits = model.factor_logits(h, torch.tensor([uid]))
        case_logits[:, CASES.index(MIXED)] = -math.inf
        c_lp, c = F.log_softmax(case_logits, -1)[0].max(-1)
        g_lp, g = F.log_softmax(glue_logits, -1)[0].max(-1)
        b = _extend(model, b, uid, int(c), int(g), float(lp + c_lp + g_lp))
    return _finish(model, b)


def rescore_nbest(nbest: Sequence[Hypothesis], src: str, margin: float = DEFAULT_MARGIN) -> Hypothesis:
    """Best-scoring length-compliant hypothesis, else the first-best one."""
    if not nbest:
        raise DecodeError("empty N-best list")
    for hyp in sorted(nbest, key=lambda h: h.rank):
        if check_compliance(src, hyp.text, margin).status == COMPLIANT:
            return hyp
    return min(nbest, key=lambda h: h.rank)


@dataclass
class TwoPassResult:
    hypothesis: Hypothesis
    first: NBestList
    second: Optional[NBestList] = None
    second_forced: Optional[int] = None


def two_pass_search(model: IsometricTransformer, src: str, beam: int = 12,
                    margin: float = DEFAULT_MARGIN, rescore: bool = False,
                    forced_token: Optional[str] = None) -> TwoPassResult:
    """Decode with ``L_forced`` = source length; if the first-best output is not
    compliant, decode once more aiming at the source length scaled by the
    inverse first-pass ratio.  Rescoring, when enabled, only picks from the
    second-pass list; the correction always uses the first-best length.
    """
    if model.cfg.pe_mode == ABSOLUTE:
        raise DecodeError("two-pass length correction needs a length-encoding model")
    first = beam_search(model, src, beam, forced_token)
    best = first[0]
    if check_compliance(src, best.text, margin).status != "noncompliant":
        return TwoPassResult(best, first)
    L_src = model.source_length(src)
    # an empty first pass gives no ratio to correct with; treat it as length 1
    L2 = corrected_length(L_src, max(best.length, 1))
    second = beam_search(model, src, beam, forced_token, L_forced=max(L2, 1))
    pick = rescore_nbest(second, src, margin) if rescore else second[0]
    return TwoPassResult(pick, first, second, L2)


def two_pass_translate(model, src, beam=12, margin=DEFAULT_MARGIN, rescore=False,
                       forced_token=None) -> Hypothesis:
    return two_pass_search(model, src, beam, margin, rescore, forced_token).hypothesis


def translate(model: IsometricTransformer, src: str, beam: int = 12,
              forced_token: Optional[str] = None, L_forced: Optional[int] = None,
              two_pass: bool = False, rescore: bool = False,
              margin: float = DEFAULT_MARGIN) -> tuple[Hypothesis, NBestList]:
    """One sentence through the configured pipeline; returns the pick and the last N-best list."""
    if two_pass:
        if L_forced is not None:
            raise DecodeError("two-pass decoding chooses its own forced lengths")
        res = two_pass_search(model, src, beam, margin, rescore, forced_token)
        return res.hypothesis, res.second if res.second is not None else res.first
    nbest = beam_search(model, src, beam, forced_token, L_forced)
    return (rescore_nbest(nbest, src, margin) if rescore else nbest[0]), nbest


def translate_corpus(model: IsometricTransformer, srcs: Sequence[str], jobs: int = 1,
                     **kw) -> tuple[list[Hypothesis], list[NBestList]]:
    """Translate sentences independently, optionally on ``jobs`` threads; order is kept."""
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(lambda s: translate(model, s, **kw), srcs))
    else:
        results = [translate(model, s, **kw) for s in srcs]
    return [r[0] for r in results], [r[1] for r in results]


@dataclass
class SystemOutput:
    system_id: str
    hypotheses: list[Hypothesis]
    corpus_quality: float = math.nan
    chosen_from: list[str] = field(default_factory=list)

    @classmethod
    def from_lines(cls, system_id: str, lines: Sequence[str], corpus_quality: float = math.nan):
        return cls(system_id, [Hypothesis(t, 0.0) for t in lines], corpus_quality)

    @property
    def texts(self) -> list[str]:
        return [h.text for h in self.hypotheses]


def length_rover(outputs: Sequence[SystemOutput], srcs: Sequence[str],
                 margin: float = DEFAULT_MARGIN) -> SystemOutput:
    """Per sentence, take the compliant hypothesis of the best-quality system that has one.

    Sentences no system gets compliant come from the overall best-quality
    system.  Equal qualities keep the order of ``outputs``.
    """
    if not outputs:
        raise DecodeError("length ROVER needs at least one system")
    for o in outputs:
        if len(o.hypotheses) != len(srcs):
            raise DecodeError(f"system {o.system_id!r} has {len(o.hypotheses)} hypotheses "
                              f"for {len(srcs)} sources")
    ranked = sorted(outputs, key=lambda o: -o.corpus_quality if not math.isnan(o.corpus_quality)
                    else math.inf)
    picks, chosen = [], []
    for i, src in enumerate(srcs):
        pick = next((o for o in ranked
                     if check_compliance(src, o.hypotheses[i].text, margin).status == COMPLIANT),
                    ranked[0])
        picks.append(pick.hypotheses[i])
        chosen.append(pick.system_id)
    return SystemOutput("rover", picks, math.nan, chosen)


def write_nbest(path, nbests: Sequence[NBestList]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for i, nbest in enumerate(nbests):
            for hyp in nbest:
                f.write(f"{i}\t{hyp.rank}\t{hyp.score + 0.0:.6f}\t{hyp.text}\n")  # no "-0.000000"


def read_nbest(path) -> list[NBestList]:
    groups: dict[int, list[Hypothesis]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields_ = line.split("\t", 3)
            if len(fields_) != 4:
                raise DecodeError(f"{path}:{lineno}: expected index<TAB>rank<TAB>score<TAB>text")
            i, rank, score, text = fields_
            groups.setdefault(int(i), []).append(Hypothesis(text, float(score), int(rank)))
    if groups and sorted(groups) != list(range(max(groups) + 1)):
        raise DecodeError(f"{path}: sentence indices are not contiguous from 0")
    return [sorted(groups[i], key=lambda h: h.rank) for i in range(len(groups))]
