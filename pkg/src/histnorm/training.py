"""Teacher-forced training with Adam, linear warmup, periodic checkpoints and early stopping."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .autograd import Tape, backward
from .data import TokenPair
from .models.checkpoint import save_checkpoint
from .models.seq2seq import Batch, Seq2Seq, make_batch
from .optim import AdamState, LrSchedule, adam_step, clip_grad_norm
from .segmentation import Segmenter

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    base_lr: float = 3e-4
    warmup_steps: int = 16_000
    checkpoint_every: int = 500
    patience: int = 8
    batch_size: int = 64
    max_updates: int = 200_000
    seed: int = 0
    clip_norm: float | None = 1.0
    label_smoothing: float = 0.0  # reserved; only 0 is implemented
    eval_batch_size: int = 256

    def __post_init__(self):
        for f in ("base_lr", "warmup_steps", "checkpoint_every", "patience",
                  "batch_size", "max_updates"):
            if getattr(self, f) <= 0:
                raise ValueError(f"TrainConfig.{f} must be positive")
        if self.label_smoothing:
            raise NotImplementedError("label smoothing is not implemented")

    @classmethod
    def scaled(cls, scale: float = 1.0, **kw) -> "TrainConfig":
        """Shrink warmup and checkpoint intervals by ``scale`` (0.1 = desk scale)."""
        base = cls()
        kw.setdefault("warmup_steps", max(1, int(round(base.warmup_steps * scale))))
        kw.setdefault("checkpoint_every", max(1, int(round(base.checkpoint_every * scale))))
        return cls(**kw)


TOY_TRAIN = dict(warmup_steps=1_600, checkpoint_every=100)


@dataclass
class CheckpointMeta:
    update_step: int
    dev_cross_entropy: float
    dev_perplexity: float
    path: str | None = None
    train_loss: float = float("nan")
    lr: float = 0.0


def encode_pairs(segmenter: Segmenter, pairs: Sequence[TokenPair]):
    return ([segmenter.encode(p.historical) for p in pairs],
            [segmenter.encode(p.modern) for p in pairs])


def iterate_batches(sources, targets, batch_size: int, rng: np.random.Generator,
                    dtype=np.float32):
    """Endless stream of batches: shuffled each epoch, bucketed by source length."""
    n = len(sources)
    if n == 0:
        raise ValueError("no training pairs")
    while True:
        order = rng.permutation(n)
        chunk = batch_size * 20
        batches = []
        for s in range(0, n, chunk):
            part = sorted(order[s: s + chunk], key=lambda i: len(sources[i]))
            batches.extend(part[k: k + batch_size] for k in range(0, len(part), batch_size))
        for j in rng.permutation(len(batches)):
            idx = batches[j]
            yield make_batch([sources[i] for i in idx], [targets[i] for i in idx], dtype)


def evaluate_dev(model: Seq2Seq, segmenter: Segmenter, dev_pairs: Sequence[TokenPair],
                 batch_size: int = 256, encoded=None) -> tuple[float, float]:
    """Per-symbol cross-entropy (nats, EOS included) and perplexity."""
    if not dev_pairs and encoded is None:
        raise ValueError("evaluate_dev: empty development set")
    srcs, tgts = encoded if encoded is not None else encode_pairs(segmenter, dev_pairs)
    order = sorted(range(len(srcs)), key=lambda i: len(srcs[i]))
    total, count = 0.0, 0
    for k in range(0, len(order), batch_size):
        idx = order[k: k + batch_size]
        nll, n = model.nll(make_batch([srcs[i] for i in idx], [tgts[i] for i in idx], model.dtype))
        total += nll
        count += n
    ce = total / count
    return ce, math.exp(ce)


def select_best(checkpoints: Sequence[CheckpointMeta]) -> CheckpointMeta:
    """Lowest dev perplexity; the earlier checkpoint wins ties."""
    if not checkpoints:
        raise ValueError("select_best: no checkpoints")
    best = checkpoints[0]
    for c in checkpoints[1:]:
        if c.dev_perplexity < best.dev_perplexity:
            best = c
    return best


@dataclass
class EarlyStopping:
    patience: int
    best: float = float("inf")
    bad: int = 0

    def update(self, value: float) -> bool:
        """Record one checkpoint; True when training should stop."""
        if value < self.best:
            self.best, self.bad = value, 0
        else:
            self.bad += 1
        return self.bad >= self.patience


@dataclass
class TrainResult:
    checkpoints: list[CheckpointMeta] = field(default_factory=list)
    best: CheckpointMeta | None = None
    updates: int = 0
    stopped_early: bool = False


def train(model: Seq2Seq, segmenter: Segmenter, train_pairs: Sequence[TokenPair],
          dev_pairs: Sequence[TokenPair], config: TrainConfig,
          out_dir=None, log_file=None) -> TrainResult:
    """Minimise teacher-forced cross-entropy; leaves the best checkpoint's weights in ``model``.

    A checkpoint (dev evaluation, optional file) happens every
    ``checkpoint_every`` updates and once more at the end if the last
    interval was partial.
    """
    rng = np.random.default_rng(config.seed)
    srcs, tgts = encode_pairs(segmenter, train_pairs)
    dev_enc = encode_pairs(segmenter, dev_pairs)
    if not dev_enc[0]:
        raise ValueError("train: empty development set")
    schedule = LrSchedule(config.base_lr, config.warmup_steps)
    state = AdamState.for_params(model.params)
    stopper = EarlyStopping(config.patience)
    result = TrainResult()
    best_weights = None
    out_dir = Path(out_dir) if out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    logf = open(log_file, "w", encoding="utf-8") if log_file else None
    names = list(model.params)
    running, n_running = 0.0, 0

    def checkpoint(step):
        nonlocal best_weights, running, n_running
        ce, ppl = evaluate_dev(model, segmenter, dev_pairs, config.eval_batch_size, dev_enc)
        path = None
        meta = CheckpointMeta(step, ce, ppl, None,
                              running / n_running if n_running else float("nan"),
                              schedule(step))
        if out_dir:
            path = out_dir / f"ckpt-{step:07d}.bin"
            save_checkpoint(path, model, segmenter, asdict(meta))
            meta.path = str(path)
        running, n_running = 0.0, 0
        result.checkpoints.append(meta)
        line = json.dumps({"update": step, "lr": meta.lr, "train_loss": round(meta.train_loss, 6),
                           "dev_cross_entropy": round(ce, 6), "dev_perplexity": round(ppl, 6)})
        log.info(line)
        if logf:
            logf.write(line + "\n")
            logf.flush()
        if ppl < stopper.best:
            best_weights = model.state_dict()
        return stopper.update(ppl)

    try:
        batches = iterate_batches(srcs, tgts, config.batch_size, rng, model.dtype)
        step = 0
        while step < config.max_updates:
            batch: Batch = next(batches)
            with Tape() as tape:
                loss = model.loss(batch, train=True, rng=rng)
            lv = float(loss.data)
            if not math.isfinite(lv):
                raise TrainingDiverged(f"loss became {lv} at update {step + 1}")
            g = backward(tape, loss)
            grads = {}
            for n in names:
                p = model.params[n]
                grads[n] = g.get(p.node_id, None)
                if grads[n] is None:
                    grads[n] = np.zeros_like(p.data)
            clip_grad_norm(grads, config.clip_norm)
            adam_step(model.params, grads, state, schedule)
            step += 1
            running += lv
            n_running += 1
            if step % config.checkpoint_every == 0 and checkpoint(step):
                result.stopped_early = True
                break
        if not result.checkpoints or result.checkpoints[-1].update_step != step:
            checkpoint(step)
        result.updates = step
    finally:
        if logf:
            logf.close()
    result.best = select_best(result.checkpoints)
    if best_weights is not None:
        model.load_state_dict(best_weights)
    return result
