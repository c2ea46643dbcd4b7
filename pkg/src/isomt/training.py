"""Training loop and finite-difference gradient check."""
from __future__ import annotations

import logging
import math
import queue
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np
import torch

from .corpus import SentencePair
from .model import Batch, IsometricTransformer, TrainingExample, build_training_example, collate

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainSchedule:
    peak_lr: float = 3e-4
    start_lr: float = 3e-5
    warmup_epochs: int = 10
    decay_factor: float = 0.9
    patience_epochs: int = 4
    batch_tokens: int = 1700
    grad_accum: int = 8
    beam_default: int = 12
    epochs: int = 200
    epoch_size: int = 100_000  # sentence pairs per epoch
    seed: int = 0
    prefetch: int = 0  # bounded queue capacity for batch preparation; 0 = inline
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.start_lr > self.peak_lr:
            raise ValueError("start_lr must not exceed peak_lr")
        if not 0.0 < self.decay_factor < 1.0:
            raise ValueError("decay_factor must lie in (0, 1)")
        if self.warmup_epochs < 1 or self.grad_accum < 1 or self.batch_tokens < 1:
            raise ValueError("warmup_epochs, grad_accum and batch_tokens must be positive")


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    dev_ppl: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    initial_dev_ppl: float = math.nan

    def format(self) -> str:
        lines = ["epoch\tlr\ttrain_loss\tdev_ppl", f"0\t-\t-\t{self.initial_dev_ppl:.4f}"]
        lines += [f"{r.epoch}\t{r.lr:.3e}\t{r.train_loss:.4f}\t{r.dev_ppl:.4f}" for r in self.records]
        return "\n".join(lines) + "\n"


class LearningRate:
    """Linear warmup per epoch, then decay by a factor whenever dev perplexity
    has not improved for ``patience_epochs`` epochs."""

    def __init__(self, schedule: TrainSchedule):
        self.s = schedule
        self.value = schedule.start_lr
        self.best = math.inf
        self.stale = 0

    def for_epoch(self, epoch: int) -> float:
        s = self.s
        if epoch <= s.warmup_epochs:
            frac = (epoch - 1) / (s.warmup_epochs - 1) if s.warmup_epochs > 1 else 1.0
            self.value = s.start_lr + (s.peak_lr - s.start_lr) * frac
        return self.value

    def observe(self, epoch: int, dev_ppl: float) -> None:
        if dev_ppl < self.best:
            self.best, self.stale = dev_ppl, 0
            return
        self.stale += 1
        if epoch >= self.s.warmup_epochs and self.stale >= self.s.patience_epochs:
            self.value *= self.s.decay_factor
            self.stale = 0


def make_batches(examples: Sequence[TrainingExample], batch_tokens: int,
                 rng: Optional[np.random.Generator] = None) -> list[list[TrainingExample]]:
    """Group examples of similar target length so padded target tokens stay under ``batch_tokens``."""
    order = sorted(range(len(examples)), key=lambda i: (len(examples[i].tgt), len(examples[i].src), i))
    batches, cur, width = [], [], 0
    for i in order:
        ex = examples[i]
        w = max(width, len(ex.tgt))
        if cur and w * (len(cur) + 1) > batch_tokens:
            batches.append(cur)
            cur, w = [], len(ex.tgt)
        cur.append(ex)
        width = w
    if cur:
        batches.append(cur)
    if rng is not None:
        perm = rng.permutation(len(batches))
        batches = [batches[i] for i in perm]
    return batches


def _prefetched(gen: Iterator, capacity: int) -> Iterator:
    q: queue.Queue = queue.Queue(maxsize=capacity)
    done = object()

    def producer():
        try:
            for item in gen:
                q.put(item)
        except BaseException as exc:  # re-raised in the consumer
            q.put(exc)
        q.put(done)

    t = threading.Thread(target=producer, daemon=True)
    t.start()
    while True:
        item = q.get()
        if item is done:
            break
        if isinstance(item, BaseException):
            raise item
        yield item
    t.join()


def dev_perplexity(model: IsometricTransformer, dev: Sequence[SentencePair],
                   batch_tokens: int = 4000) -> float:
    """Perplexity of the reference units (no smoothing, no length noise)."""
    was_training = model.training
    model.eval()
    examples = [build_training_example(p, model, perturb=False) for p in dev]
    nll, n = 0.0, 0
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        for chunk in make_batches(examples, batch_tokens):
            _, s, k = model.loss(collate(chunk, dtype), label_smoothing=0.0)
            nll, n = nll + s, n + k
    model.train(was_training)
    return math.exp(nll / max(n, 1))


def train(model: IsometricTransformer, corpus: Sequence[SentencePair], schedule: TrainSchedule,
          dev_corpus: Sequence[SentencePair],
          on_epoch: Optional[Callable[[EpochRecord], None]] = None) -> TrainLog:
    """Train ``model`` in place and return the per-epoch log.

    An epoch is ``schedule.epoch_size`` pairs drawn from a reshuffled pass
    over ``corpus`` (cycling as needed).  Length noise is redrawn every time
    a pair is used.
    """
    if not corpus:
        raise TrainingError("empty training corpus")
    torch.manual_seed(schedule.seed)
    rng = np.random.default_rng(schedule.seed)
    dtype = next(model.parameters()).dtype
    opt = torch.optim.Adam(model.parameters(), lr=schedule.start_lr,
                           betas=schedule.adam_betas, eps=schedule.adam_eps)
    lr = LearningRate(schedule)
    out = TrainLog(initial_dev_ppl=dev_perplexity(model, dev_corpus) if dev_corpus else math.nan)

    stream: list[int] = []

    def next_shard() -> list[SentencePair]:
        nonlocal stream
        shard = []
        while len(shard) < schedule.epoch_size:
            if not stream:
                stream = list(rng.permutation(len(corpus)))
            take = min(len(stream), schedule.epoch_size - len(shard))
            shard += [corpus[i] for i in stream[:take]]
            stream = stream[take:]
        return shard

    def batches_for(shard) -> Iterator[Batch]:
        examples = [build_training_example(p, model, rng) for p in shard]
        for chunk in make_batches(examples, schedule.batch_tokens, rng):
            yield collate(chunk, dtype)

    for epoch in range(1, schedule.epochs + 1):
        current_lr = lr.for_epoch(epoch)
        for g in opt.param_groups:
            g["lr"] = current_lr
        model.train()
        shard = next_shard()
        gen = batches_for(shard)
        if schedule.prefetch > 0:
            gen = _prefetched(gen, schedule.prefetch)
        total, count, pending = 0.0, 0, 0
        opt.zero_grad()
        for b, batch in enumerate(gen):
            loss, _, n = model.loss(batch)
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss.item()} at epoch {epoch}, batch {b} "
                                    f"(lr={current_lr:.3e}, {n} target tokens)")
            (loss / schedule.grad_accum).backward()
            total, count = total + loss.item() * n, count + n
            pending += 1
            if pending == schedule.grad_accum:
                opt.step()
                opt.zero_grad()
                pending = 0
        if pending:
            opt.step()
            opt.zero_grad()
        ppl = dev_perplexity(model, dev_corpus) if dev_corpus else math.nan
        lr.observe(epoch, ppl)
        rec = EpochRecord(epoch, current_lr, total / max(count, 1), ppl)
        out.records.append(rec)
        log.info("epoch %d lr %.3e loss %.4f dev ppl %.3f", epoch, current_lr, rec.train_loss, ppl)
        if on_epoch:
            on_epoch(rec)
    model.eval()
    return out


def gradient_check(model: IsometricTransformer, examples: Sequence[TrainingExample],
                   n_per_param: int = 3, eps: float = 1e-4, seed: int = 0,
                   floor: float = 1e-6) -> float:
    """Largest relative error between backprop and central differences.

    Runs in double precision with dropout off; samples ``n_per_param`` entries
    of every parameter tensor.  The relative error of an entry is
    ``|a - n| / max(|a|, |n|, floor)``.
    """
    model = model.double().eval()
    batch = collate(examples, torch.float64)
    model.zero_grad()
    loss, _, _ = model.loss(batch)
    loss.backward()
    rng = np.random.default_rng(seed)
    worst = 0.0
    with torch.no_grad():
        for _, p in model.named_parameters():
            flat = p.view(-1)
            grad = p.grad.view(-1) if p.grad is not None else torch.zeros_like(flat)
            for k in rng.choice(flat.numel(), size=min(n_per_param, flat.numel()), replace=False):
                orig = flat[k].item()
                flat[k] = orig + eps
                up = model.loss(batch)[0].item()
                flat[k] = orig - eps
                down = model.loss(batch)[0].item()
                flat[k] = orig
                numeric = (up - down) / (2 * eps)
                analytic = grad[k].item()
                err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
                worst = max(worst, err)
    return worst
