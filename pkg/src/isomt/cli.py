"""Command-line entry point: ``isomt <subcommand> [options]``.

Options can also come from a flat ``key=value`` file given with ``--config``;
keys use the option names without leading dashes (``beam=8``,
``two-pass=true``) and explicit flags win over the file.

Exit status is 0 on success, 1 on usage errors and 2 on data errors.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

log = logging.getLogger("isomt")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


# -- config files ---------------------------------------------------------

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def read_config(path) -> dict[str, str]:
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def _config_defaults(parser: argparse.ArgumentParser, values: dict[str, str]) -> dict:
    actions = {a.dest: a for a in parser._actions if a.dest not in ("help", "config")}
    out = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"unknown config key {key!r} for {parser.prog}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            low = raw.lower()
            if low not in _TRUE | _FALSE:
                raise UsageError(f"config key {key!r} needs a boolean, got {raw!r}")
            out[key] = low in _TRUE
        elif action.nargs in ("+", "*"):
            out[key] = [action.type(v) if action.type else v for v in raw.split()]
        else:
            try:
                out[key] = action.type(raw) if action.type else raw
            except (TypeError, ValueError):
                raise UsageError(f"config key {key!r}: bad value {raw!r}") from None
            if action.choices is not None and out[key] not in action.choices:
                raise UsageError(f"config key {key!r} must be one of {list(action.choices)}")
    return out


# -- subcommands ------------------------------------------------------------

def _pairs(args, docs: bool = False):
    from .corpus import read_parallel
    return read_parallel(args.src, args.tgt, getattr(args, "docs", None) if docs else None)


def cmd_tokenize(args) -> None:
    from .corpus import read_lines, write_lines
    from .subword import SubwordModel, decode, encode, format_stream, parse_stream, \
        train_subword_model
    if args.mode == "learn":
        lines = [l for path in args.input for l in read_lines(path)]
        train_subword_model(lines, args.vocab_size).save(args.out)
        return
    if args.mode == "encode":
        model = SubwordModel.load(args.model)
        write_lines(args.out, (format_stream(encode(l, model)) for l in read_lines(args.input[0])))
        return
    write_lines(args.out, (decode(parse_stream(l)) for l in read_lines(args.input[0])))


def cmd_bins(args) -> None:
    from .length import classify_pair, fit_quantile_bins, three_bin
    from .corpus import write_lines
    pairs = _pairs(args)
    binning = three_bin(args.margin) if args.scheme == "three_bin" else fit_quantile_bins(pairs, args.k)
    binning.save(args.out)
    if args.labels_out:
        write_lines(args.labels_out, (classify_pair(p, binning) for p in pairs))


def cmd_train(args) -> None:
    import torch
    from .corpus import read_parallel
    from .length import LengthBinning
    from .model import IsometricTransformer, ModelConfig, save_model
    from .subword import SubwordModel, train_subword_model
    from .training import TrainSchedule, train
    torch.manual_seed(args.seed)
    torch.set_num_threads(1)
    pairs = _pairs(args)
    dev = read_parallel(args.dev_src, args.dev_tgt) if args.dev_src else []
    if args.subword:
        subword = SubwordModel.load(args.subword)
    else:
        subword = train_subword_model(pairs, args.vocab_size)
    binning = LengthBinning.load(args.bins) if args.bins else None
    cfg = ModelConfig(d_model=args.d_model, n_heads=args.heads, n_enc_layers=args.enc_layers,
                      n_dec_layers=args.dec_layers, ffn_dim=args.ffn_dim, dropout=args.dropout,
                      label_smoothing=args.label_smoothing, pe_mode=args.mode,
                      length_token_side=args.length_token_side, perturb=args.perturb,
                      count_spaces=args.count_spaces)
    model = IsometricTransformer(cfg, subword, binning)
    schedule = TrainSchedule(peak_lr=args.peak_lr, start_lr=args.start_lr,
                             warmup_epochs=args.warmup_epochs, decay_factor=args.decay_factor,
                             patience_epochs=args.patience, batch_tokens=args.batch_tokens,
                             grad_accum=args.grad_accum, epochs=args.epochs,
                             epoch_size=args.epoch_size or len(pairs), seed=args.seed)
    result = train(model, pairs, schedule, dev)
    save_model(model, args.out)
    if args.log:
        Path(args.log).write_text(result.format(), encoding="utf-8")


def _load_checked(args):
    from .model import load_model
    model = load_model(args.model)
    if args.mode and args.mode != model.cfg.pe_mode:
        raise DataError(f"model was trained with pe_mode={model.cfg.pe_mode}, not {args.mode}")
    return model


def cmd_translate(args) -> None:
    import torch
    from .corpus import read_lines, write_lines
    from .decode import translate_corpus, write_nbest
    torch.manual_seed(args.seed)
    model = _load_checked(args)
    srcs = read_lines(args.src)
    hyps, nbests = translate_corpus(
        model, srcs, jobs=args.jobs, beam=args.beam, forced_token=args.length_class,
        L_forced=args.forced_length, two_pass=args.two_pass, rescore=args.rescore,
        margin=args.margin)
    write_lines(args.out, (h.text for h in hyps))
    if args.nbest_out:
        write_nbest(args.nbest_out, nbests)


def cmd_two_pass(args) -> None:
    args.two_pass = True
    args.forced_length = None
    cmd_translate(args)


def cmd_rescore(args) -> None:
    from .corpus import read_lines, write_lines
    from .decode import read_nbest, rescore_nbest
    srcs = read_lines(args.src)
    nbests = read_nbest(args.nbest)
    if len(nbests) != len(srcs):
        raise DataError(f"{args.nbest} covers {len(nbests)} sentences, {args.src} has {len(srcs)}")
    write_lines(args.out, (rescore_nbest(nb, s, args.margin).text for nb, s in zip(nbests, srcs)))


def cmd_rover(args) -> None:
    from .corpus import read_lines, write_lines
    from .decode import SystemOutput, length_rover
    from .evaluation import corpus_bleu
    srcs = read_lines(args.src)
    if args.quality and len(args.quality) != len(args.systems):
        raise UsageError("--quality needs one value per system")
    if not args.quality and not args.ref:
        raise UsageError("give either --quality or --ref to rank the systems")
    refs = read_lines(args.ref) if args.ref else None
    outputs = []
    for k, path in enumerate(args.systems):
        lines = read_lines(path)
        quality = args.quality[k] if args.quality else corpus_bleu(lines, refs)
        outputs.append(SystemOutput.from_lines(path, lines, quality))
    combined = length_rover(outputs, srcs, args.margin)
    write_lines(args.out, combined.texts)
    if args.choices_out:
        write_lines(args.choices_out, combined.chosen_from)


def cmd_augment(args) -> None:
    from .corpus import SentencePair, concat_adjacent, read_lines, write_lines, write_parallel
    rng = np.random.default_rng(args.seed)
    if args.augment_mode == "spoken":
        from .spoken import spoken_form
        write_lines(args.out, (spoken_form(l, args.year_style) for l in read_lines(args.input)))
        return
    if args.augment_mode == "concat":
        write_parallel(concat_adjacent(_pairs(args, docs=True)), args.out_src, args.out_tgt)
        return
    from . import augment as aug
    pairs = _pairs(args)
    if args.augment_mode == "bt-filter":
        write_parallel(aug.filter_synthetic(pairs, args.margin), args.out_src, args.out_tgt)
    elif args.augment_mode == "synonyms":
        policy = aug.ReplacementPolicy(args.consider_prob, args.max_candidates, args.variants,
                                       args.similarity_threshold, args.margin)
        new = aug.augment_synonyms(pairs, policy, rng, args.iterations, args.cost_threshold)
        write_parallel(new, args.out_src, args.out_tgt)
    elif args.augment_mode == "align":
        table = aug.align_em(pairs, args.iterations)
        write_lines(args.out, (aug.format_pharaoh(aug.viterbi_align(p, table)) for p in pairs))
        if args.lexicon_out:
            aug.extract_lexicon(table, args.cost_threshold).save(args.lexicon_out)
    elif args.augment_mode == "phrases":
        links = [aug.parse_pharaoh(l) for l in read_lines(args.align)]
        if len(links) != len(pairs):
            raise DataError(f"{args.align} has {len(links)} lines for {len(pairs)} pairs")
        rows = []
        for k, (p, a) in enumerate(zip(pairs, links)):
            for ph in aug.extract_phrases(SentencePair(p.source, p.target), a, args.max_len):
                rows.append(f"{k}\t{ph.src_start}-{ph.src_end}\t{ph.tgt_start}-{ph.tgt_end}\t"
                            f"{ph.source}\t{ph.target}")
        write_lines(args.out, rows)


def cmd_score(args) -> None:
    from .corpus import read_lines
    from .evaluation import evaluate
    srcs, hyps, refs = read_lines(args.src), read_lines(args.hyp), read_lines(args.ref)
    if not len(srcs) == len(hyps) == len(refs):
        raise DataError("source, hypothesis and reference files differ in length")
    rep = evaluate(srcs, hyps, refs, args.margin)
    print(f"BLEU\t{rep.bleu:.2f}")
    print(f"LC\t{rep.lc:.2f}")


def cmd_bootstrap(args) -> None:
    from .corpus import read_lines
    from .evaluation import paired_bootstrap
    res = paired_bootstrap(read_lines(args.hyp_a), read_lines(args.hyp_b), read_lines(args.ref),
                           args.samples, np.random.default_rng(args.seed))
    print(f"BLEU_A\t{res.bleu_a:.2f}")
    print(f"BLEU_B\t{res.bleu_b:.2f}")
    print(f"CI95_A\t{res.ci95[0]:.2f}\t{res.ci95[1]:.2f}")
    print(f"p\t{res.p_value:.4f}")


def cmd_report(args) -> None:
    from .corpus import read_lines
    from .evaluation import evaluate, tradeoff_table
    from .plotting import plot_tradeoff
    srcs, refs = read_lines(args.src), read_lines(args.ref)
    reports = []
    for entry in args.system:
        label, sep, path = entry.partition("=")
        if not sep:
            raise UsageError(f"--system expects label=path, got {entry!r}")
        hyps = read_lines(path)
        if len(hyps) != len(srcs):
            raise DataError(f"{path} has {len(hyps)} lines, {args.src} has {len(srcs)}")
        reports.append((label, evaluate(srcs, hyps, refs, args.margin)))
    table, data = tradeoff_table(reports)
    prefix = Path(args.out_prefix)
    prefix.with_suffix(".txt").write_text(table, encoding="utf-8")
    prefix.with_suffix(".tsv").write_text(data, encoding="utf-8")
    plot_tradeoff([(l, r.bleu, r.lc) for l, r in reports], prefix.with_suffix(".png"), args.title)
    sys.stdout.write(table)


def cmd_toy(args) -> None:
    from .corpus import write_parallel
    from .toy import make_toy_task
    task = make_toy_task(args.seed, args.n_train, args.n_dev, args.n_test)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("train", "dev", "test"):
        write_parallel(getattr(task, name), out / f"{name}.src", out / f"{name}.tgt")


# -- parser ---------------------------------------------------------------------

def _common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="key=value file; explicit flags override it")
    p.add_argument("-v", "--verbose", action="store_true")


def _margin(p):
    p.add_argument("--margin", type=float, default=0.10, help="relative length tolerance")


def _bitext(p, docs=False):
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    if docs:
        p.add_argument("--docs", required=True, help="doc_id<TAB>position per line")


def build_parser() -> argparse.ArgumentParser:
    from .model import PE_MODES, SIDES
    parser = _Parser(prog="isomt", description="Length-controlled machine translation toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("tokenize", help="learn, apply or undo factored subword segmentation")
    p.add_argument("mode", choices=["learn", "encode", "decode"])
    p.add_argument("--input", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", help="subword model (encode)")
    p.add_argument("--vocab-size", type=int, default=8000)
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("bins", help="fit length classes on a corpus")
    _bitext(p)
    p.add_argument("--scheme", choices=["quantile", "three_bin"], default="quantile")
    p.add_argument("--k", type=int, default=7)
    p.add_argument("--out", required=True)
    p.add_argument("--labels-out")
    _margin(p)
    p.set_defaults(func=cmd_bins)

    p = sub.add_parser("train", help="train a translation model")
    _bitext(p)
    p.add_argument("--dev-src")
    p.add_argument("--dev-tgt")
    p.add_argument("--subword", help="subword model; learned from the corpus when omitted")
    p.add_argument("--vocab-size", type=int, default=8000)
    p.add_argument("--bins", help="length class file (needed with --length-token-side)")
    p.add_argument("--mode", choices=PE_MODES, default="absolute")
    p.add_argument("--length-token-side", choices=SIDES, default="none")
    p.add_argument("--perturb", action="store_true")
    p.add_argument("--count-spaces", action="store_true")
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--enc-layers", type=int, default=2)
    p.add_argument("--dec-layers", type=int, default=2)
    p.add_argument("--ffn-dim", type=int, default=128)
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--label-smoothing", type=float, default=0.2)
    p.add_argument("--peak-lr", type=float, default=3e-4)
    p.add_argument("--start-lr", type=float, default=3e-5)
    p.add_argument("--warmup-epochs", type=int, default=10)
    p.add_argument("--decay-factor", type=float, default=0.9)
    p.add_argument("--patience", type=int, default=4)
    p.add_argument("--batch-tokens", type=int, default=1700)
    p.add_argument("--grad-accum", type=int, default=8)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--epoch-size", type=int, default=0, help="pairs per epoch; 0 = corpus size")
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="write the per-epoch log here")
    p.set_defaults(func=cmd_train)

    for name, func in (("translate", cmd_translate), ("two-pass", cmd_two_pass)):
        p = sub.add_parser(name, help="decode a source file" if name == "translate"
                           else "decode with second-pass length correction")
        p.add_argument("--model", required=True)
        p.add_argument("--src", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--nbest-out")
        p.add_argument("--mode", choices=PE_MODES, help="expected pe_mode of the model")
        p.add_argument("--beam", type=int, default=12)
        p.add_argument("--length-class", help="force this length class token")
        if name == "translate":
            p.add_argument("--forced-length", type=int, help="fixed countdown start")
            p.add_argument("--two-pass", action="store_true")
        p.add_argument("--rescore", action="store_true")
        p.add_argument("--jobs", type=int, default=1)
        _margin(p)
        p.set_defaults(func=func)

    p = sub.add_parser("rescore", help="pick length-compliant hypotheses from an N-best file")
    p.add_argument("--src", required=True)
    p.add_argument("--nbest", required=True)
    p.add_argument("--out", required=True)
    _margin(p)
    p.set_defaults(func=cmd_rescore)

    p = sub.add_parser("rover", help="combine system outputs sentence by sentence")
    p.add_argument("--src", required=True)
    p.add_argument("--systems", nargs="+", required=True)
    p.add_argument("--quality", nargs="+", type=float, help="corpus quality per system")
    p.add_argument("--ref", help="rank systems by BLEU against this reference instead")
    p.add_argument("--out", required=True)
    p.add_argument("--choices-out")
    _margin(p)
    p.set_defaults(func=cmd_rover)

    p = sub.add_parser("augment", help="synthetic data helpers")
    modes = p.add_subparsers(dest="augment_mode", required=True, parser_class=_Parser)
    q = modes.add_parser("synonyms")
    _bitext(q)
    q.add_argument("--out-src", required=True)
    q.add_argument("--out-tgt", required=True)
    q.add_argument("--consider-prob", type=float, default=0.5)
    q.add_argument("--max-candidates", type=int, default=3)
    q.add_argument("--variants", type=int, default=4)
    q.add_argument("--similarity-threshold", type=float, default=0.94)
    q.add_argument("--iterations", type=int, default=5)
    q.add_argument("--cost-threshold", type=float, default=50.0)
    _margin(q)
    q = modes.add_parser("concat")
    _bitext(q, docs=True)
    q.add_argument("--out-src", required=True)
    q.add_argument("--out-tgt", required=True)
    q = modes.add_parser("spoken")
    q.add_argument("--input", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--year-style", choices=["cardinal", "year"], default="cardinal")
    q = modes.add_parser("bt-filter")
    _bitext(q)
    q.add_argument("--out-src", required=True)
    q.add_argument("--out-tgt", required=True)
    _margin(q)
    q = modes.add_parser("phrases")
    _bitext(q)
    q.add_argument("--align", required=True, help="Pharaoh alignment file")
    q.add_argument("--max-len", type=int, default=7)
    q.add_argument("--out", required=True)
    q = modes.add_parser("align")
    _bitext(q)
    q.add_argument("--iterations", type=int, default=5)
    q.add_argument("--out", required=True)
    q.add_argument("--lexicon-out")
    q.add_argument("--cost-threshold", type=float, default=50.0)
    for q in modes.choices.values():
        _common(q)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("score", help="BLEU and length compliance of a system output")
    p.add_argument("--src", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    _margin(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("bootstrap", help="paired bootstrap significance test")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp-a", required=True)
    p.add_argument("--hyp-b", required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("report", help="BLEU/LC table, data file and scatter plot")
    p.add_argument("--src", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--system", nargs="+", required=True, metavar="LABEL=PATH")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--title", default="")
    _margin(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("toy", help="write the synthetic word-for-word task")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-dev", type=int, default=200)
    p.add_argument("--n-test", type=int, default=400)
    p.set_defaults(func=cmd_toy)

    for name, q in sub.choices.items():
        if name != "augment":
            _common(q)
    return parser


def _leaf_parser(parser, argv):
    """The (sub)parser an argv would end up in, for applying config defaults."""
    node = parser
    for tok in argv:
        subs = [a for a in node._actions if isinstance(a, argparse._SubParsersAction)]
        if subs and tok in subs[0].choices:
            node = subs[0].choices[tok]
    return node


def _config_path(argv: Sequence[str]) -> Optional[str]:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    path = _config_path(argv)
    if path is not None:
        leaf = _leaf_parser(parser, argv)
        defaults = _config_defaults(leaf, read_config(path))
        for action in leaf._actions:
            if action.dest in defaults:
                action.required = False  # the file supplies it
        leaf.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    from .corpus import CorpusError
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1
    except DataError as exc:
        sys.stderr.write(f"isomt: {exc}\n")
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1
    except (DataError, CorpusError, ValueError, OSError, ZeroDivisionError) as exc:
        sys.stderr.write(f"isomt: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
