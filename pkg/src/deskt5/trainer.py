"""Token-budget batching, multi-task pre-training and fine-tuning loops."""
from __future__ import annotations

import dataclasses
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from .checkpoint import Checkpoint, save_checkpoint
from .model import (Batch, OptState, Params, adam_step, greedy_decode_batch, loss_and_grads,
                    make_batch)
from .objectives import Example, NoiseSpec, Objective, build_example
from .runinfo import environment
from .sampler import RawTask
from .vocab import EOS, Vocab, decode

log = logging.getLogger(__name__)

PRETRAIN_BATCH_TOKENS = 4096
FINETUNE_BATCH_TOKENS = 1024


@dataclass(frozen=True)
class TrainConfig:
    batch_tokens: int = PRETRAIN_BATCH_TOKENS
    steps: int = 2000
    checkpoint_every: int = 500
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        for name in ("batch_tokens", "steps", "checkpoint_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.checkpoint_every > self.steps:
            raise ValueError(f"checkpoint_every ({self.checkpoint_every}) exceeds steps ({self.steps})")


class TrainingAborted(RuntimeError):
    """Raised on a non-finite loss; carries the checkpoints written so far."""

    def __init__(self, message: str, step: int, checkpoints: list):
        super().__init__(message)
        self.step = step
        self.checkpoints = checkpoints


def _truncate(ex: Example, max_len: int) -> tuple[Example, bool]:
    if len(ex.input) <= max_len and len(ex.target) <= max_len:
        return ex, False
    tgt = ex.target
    if len(tgt) > max_len:
        tgt = tgt[:max_len - 1] + (EOS,)
    return dataclasses.replace(ex, input=ex.input[:max_len], target=tgt), True


def _collate(examples: Sequence[Example]) -> Batch:
    b = make_batch([e.input for e in examples], [e.target for e in examples])
    b.tags = tuple(e.objective for e in examples)
    return b


def make_batches(examples: Iterable[Example], batch_tokens: int,
                 max_len: Optional[int] = None) -> Iterator[Batch]:
    """Greedy packing under a padded (input + target) token budget.

    A batch of ``k`` examples costs ``k * (max input len + max target len)``.
    An example is added while the cost stays within ``batch_tokens``; one that
    exceeds the budget on its own becomes a singleton batch.
    """
    cur: list[Example] = []
    s_max = t_max = 0
    truncated = 0
    for ex in examples:
        if max_len is not None:
            ex, cut = _truncate(ex, max_len)
            truncated += cut
        s, t = len(ex.input), len(ex.target)
        if cur and (len(cur) + 1) * (max(s_max, s) + max(t_max, t)) > batch_tokens:
            yield _collate(cur)
            cur, s_max, t_max = [], 0, 0
        if not cur and s + t > batch_tokens:
            log.warning("example of %d tokens exceeds batch_tokens=%d; emitting a singleton batch",
                        s + t, batch_tokens)
        cur.append(ex)
        s_max, t_max = max(s_max, s), max(t_max, t)
    if cur:
        yield _collate(cur)
    if truncated:
        log.info("truncated %d examples to max_len=%d", truncated, max_len)


@dataclass(frozen=True)
class ObjectiveMap:
    """Turns mixture draws into training examples."""

    vocab: Vocab
    parallel: Objective = Objective.NMT
    noise: NoiseSpec = NoiseSpec()
    mono: Objective = Objective.MLM

    def build(self, task: RawTask, rng) -> Optional[Example]:
        objective = self.parallel if task.kind == "parallel" else self.mono
        return build_example(objective, task.item, self.vocab, self.noise, rng)


def example_stream(tasks: Iterable[RawTask], objective_map: ObjectiveMap, seed: int) -> Iterator[Example]:
    rng = np.random.default_rng([seed, 1])
    for task in tasks:
        ex = objective_map.build(task, rng)
        if ex is not None:
            yield ex


def _run_manifest(cfg: TrainConfig, extra: Optional[dict]) -> dict:
    run = {"train": dataclasses.asdict(cfg), **environment()}
    if extra:
        run.update(extra)
    return run


def pretrain(cfg: TrainConfig, mixture: Iterable[RawTask], objective_map: ObjectiveMap,
             model: Union[Params, Checkpoint], *, history: Optional[list] = None,
             checkpoint_dir=None, run_info: Optional[dict] = None) -> list[Checkpoint]:
    """Multi-task pre-training for ``cfg.steps`` optimizer steps.

    ``model`` is either initial parameters or a checkpoint to resume from. On
    resume, ``mixture`` must be a fresh stream built with the original seed;
    the batches consumed before the checkpoint step are replayed and skipped.
    Per-step records (loss, per-objective example counts) are appended to
    ``history`` when given.
    """
    vocab = objective_map.vocab
    if isinstance(model, Checkpoint):
        params, opt, start = model.params, model.opt_state, model.step
        if opt is None:
            opt = OptState.zeros_like(params, lr=cfg.learning_rate)
    else:
        params, opt, start = model, OptState.zeros_like(model, lr=cfg.learning_rate), 0
    if params.config.vocab_size != vocab.size:
        raise ValueError(f"model vocab_size {params.config.vocab_size} != vocab size {vocab.size}")
    run = _run_manifest(cfg, run_info)
    run["parallel_objective"] = objective_map.parallel.value
    batches = make_batches(example_stream(mixture, objective_map, cfg.seed), cfg.batch_tokens,
                           params.config.max_len)
    for _ in range(start):
        next(batches)

    checkpoints: list[Checkpoint] = []
    counts: Counter = Counter()
    if isinstance(model, Checkpoint):
        counts.update(model.run.get("objective_counts", {}))
    for step in range(start + 1, cfg.steps + 1):
        batch = next(batches)
        try:
            loss, grads = loss_and_grads(params, batch)
        except FloatingPointError as e:
            log.error("aborting at step %d: %s", step, e)
            raise TrainingAborted(f"step {step}: {e}", step, checkpoints) from e
        params, opt = adam_step(params, grads, opt)
        counts.update(t.value for t in batch.tags)
        if history is not None:
            history.append({"step": step, "loss": loss, "examples": batch.size,
                            "tokens": batch.num_tokens, "counts": dict(Counter(t.value for t in batch.tags))})
        if step % cfg.checkpoint_every == 0:
            ck = Checkpoint(step, params, opt, vocab, {**run, "objective_counts": dict(counts)})
            checkpoints.append(ck)
            if checkpoint_dir is not None:
                save_checkpoint(ck, Path(checkpoint_dir) / f"step_{step:06d}")
            log.info("step %d loss %.4f counts %s", step, loss, dict(counts))
    return checkpoints


# -------------------------------------------------------------- fine-tuning

def _epochs(examples: Sequence[Example], rng) -> Iterator[Example]:
    while True:
        for i in rng.permutation(len(examples)):
            yield examples[i]


def predict(params: Params, vocab: Vocab, examples: Sequence[Example], chunk: int = 256,
            max_len: Optional[int] = None) -> list[str]:
    """Greedy predictions for each example, rendered as text."""
    if max_len is None:
        max_len = max((len(e.target) for e in examples), default=1) + 8
    max_len = min(max_len, params.config.max_len)
    out: list[str] = []
    for i in range(0, len(examples), chunk):
        part = examples[i:i + chunk]
        ids = greedy_decode_batch(params, [e.input for e in part], max_len)
        out.extend(decode(vocab, x) for x in ids)
    return out


def gold_text(ex: Example, vocab: Vocab) -> str:
    tgt = ex.target[:-1] if ex.target and ex.target[-1] == EOS else ex.target
    return decode(vocab, tgt)


def score_examples(params: Params, vocab: Vocab, examples: Sequence[Example],
                   metric: Callable[[str, str], float]) -> list[float]:
    preds = predict(params, vocab, examples)
    return [metric(p, gold_text(e, vocab)) for p, e in zip(preds, examples)]


def finetune(cfg: TrainConfig, train_examples: Sequence[Example], val_examples: Sequence[Example],
             metric: Callable[[str, str], float], checkpoint: Checkpoint,
             *, checkpoint_dir=None) -> tuple[Checkpoint, list[dict]]:
    """Fine-tune from ``checkpoint`` with a fresh optimizer; select on validation.

    The validation metric is averaged over ``val_examples`` at every
    ``cfg.checkpoint_every`` steps. The returned checkpoint maximizes it, ties
    going to the earliest step.
    """
    train_examples = list(train_examples)
    val_examples = list(val_examples)
    if not train_examples:
        raise ValueError("fine-tuning needs at least one training example")
    if not val_examples:
        raise ValueError("fine-tuning needs at least one validation example")
    vocab = checkpoint.vocab
    params = checkpoint.params
    opt = OptState.zeros_like(params, lr=cfg.learning_rate)
    rng = np.random.default_rng([cfg.seed, 2])
    batches = make_batches(_epochs(train_examples, rng), cfg.batch_tokens, params.config.max_len)
    run = _run_manifest(cfg, {"finetuned_from_step": checkpoint.step, "base_run": checkpoint.run})

    history: list[dict] = []
    best: Optional[Checkpoint] = None
    best_score = -np.inf
    last_loss = float("nan")
    for step in range(1, cfg.steps + 1):
        batch = next(batches)
        try:
            last_loss, grads = loss_and_grads(params, batch)
        except FloatingPointError as e:
            raise TrainingAborted(f"fine-tune step {step}: {e}", step, [best] if best else []) from e
        params, opt = adam_step(params, grads, opt)
        if step % cfg.checkpoint_every == 0:
            score = float(np.mean(score_examples(params, vocab, val_examples, metric)))
            history.append({"step": step, "loss": last_loss, "val_score": score})
            ck = Checkpoint(step, params, opt, vocab, {**run, "val_score": score})
            if checkpoint_dir is not None:
                save_checkpoint(ck, Path(checkpoint_dir) / f"step_{step:06d}")
            if score > best_score:
                best, best_score = ck, score
            log.info("finetune step %d loss %.4f val %.2f", step, last_loss, score)
    return best, history
