"""Objective-comparison experiments on cipher corpora.

Every arm starts from the same initial parameters and is pre-trained on the
same corpus; the baseline arm is monolingual-only span corruption. Each
pre-trained model is fine-tuned on the downstream translation task in every
data regime, ``runs`` times with different subsamples and seeds, and scored on
the held-out test split.
"""
from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..corpus import ParallelPair, stats_from_items
from ..metrics import average_languages, get_metric, median_of_runs
from ..model import ModelConfig, init_model
from ..objectives import NoiseSpec, Objective, build_nmt
from ..runinfo import environment
from ..sampler import MixtureSpec, mixed_stream
from ..trainer import FINETUNE_BATCH_TOKENS, ObjectiveMap, TrainConfig, finetune, pretrain, score_examples
from ..vocab import build_vocab
from .cipher import CipherCorpus, CorpusSizes, default_cipher_spec, gen_cipher_corpus
from .report import Cell, Report

log = logging.getLogger(__name__)

BASELINE = "+MLM"
DEFAULT_REGIMES = {"few_shot": 100, "low": 1000, "high": 20000}
# larger fine-tuning sets get more steps
DEFAULT_REGIME_STEPS = {"few_shot": 300, "low": 600, "high": 1500}


def few_shot_subsample(examples: Sequence, k: int, rng) -> list:
    """Uniform sample of ``k`` items without replacement."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    if k < 0 or k > len(examples):
        raise ValueError(f"cannot sample {k} of {len(examples)} examples")
    return [examples[i] for i in rng.choice(len(examples), size=k, replace=False)]


@dataclass(frozen=True)
class Arm:
    label: str
    objective: Objective
    parallel_ratio: float


@dataclass
class ExperimentConfig:
    objectives: tuple = (Objective.NMT,)
    mixture: MixtureSpec = MixtureSpec()
    ratio_sweep: tuple = ()
    pretrain: TrainConfig = TrainConfig(batch_tokens=4096, steps=2000, checkpoint_every=2000)
    finetune: TrainConfig = TrainConfig(batch_tokens=FINETUNE_BATCH_TOKENS, steps=300, checkpoint_every=100)
    regimes: dict = field(default_factory=lambda: dict(DEFAULT_REGIMES))
    # fine-tuning steps per regime; regimes not listed use finetune.steps
    regime_steps: dict = field(default_factory=lambda: dict(DEFAULT_REGIME_STEPS))
    metric: str = "em"
    runs: int = 5
    model: dict = field(default_factory=lambda: {"num_layers": 2, "d_model": 64, "num_heads": 4,
                                                 "d_ff": 128, "max_len": 128})
    noise: NoiseSpec = NoiseSpec()
    sentinel_count: int = 100
    sizes: CorpusSizes = CorpusSizes()
    seed: int = 0
    # source languages used for fine-tuning; empty means all. A non-empty subset
    # gives the zero-shot analogue: fine-tune on those, score on the rest.
    finetune_langs: tuple = ()

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError(f"runs must be >= 1, got {self.runs}")
        self.objectives = tuple(Objective(o) for o in self.objectives)
        get_metric(self.metric)

    def arms(self) -> list[Arm]:
        arms = [Arm(BASELINE, Objective.MLM, 0.0)]
        for obj in self.objectives:
            if obj is Objective.MLM:
                continue
            arms.append(Arm(f"+MLM+{obj.value.upper()}", obj, self.mixture.parallel_ratio))
            for r in self.ratio_sweep:
                if r != self.mixture.parallel_ratio:
                    arms.append(Arm(f"+MLM+{obj.value.upper()}@{r:g}", obj, r))
        return arms


def _task_examples(pairs: Sequence[ParallelPair], vocab) -> list:
    return [build_nmt(p, vocab) for p in pairs]


def _pretrain_arm(cfg: ExperimentConfig, arm: Arm, corpus: CipherCorpus, vocab, init):
    stats = stats_from_items(corpus.mono, corpus.parallel)
    spec = dataclasses.replace(cfg.mixture, parallel_ratio=arm.parallel_ratio)
    stream = mixed_stream(corpus.mono, corpus.parallel, stats, spec)
    omap = ObjectiveMap(vocab, parallel=arm.objective if arm.objective is not Objective.MLM else Objective.NMT,
                        noise=cfg.noise)
    history: list = []
    cks = pretrain(cfg.pretrain, stream, omap, init, history=history,
                   run_info={"arm": arm.label, "mixture": dataclasses.asdict(spec)})
    return cks[-1], history


def _regime_label(cfg: ExperimentConfig, regime: str) -> str:
    return f"{regime} (zero-shot-analogue)" if cfg.finetune_langs else regime


def run_experiment(cfg: ExperimentConfig, corpus: Optional[CipherCorpus] = None) -> Report:
    t0 = time.time()
    if corpus is None:
        corpus = gen_cipher_corpus(default_cipher_spec(cfg.seed), cfg.sizes, cfg.seed)
    spec = corpus.spec
    vocab = build_vocab(spec.langs, cfg.sentinel_count)
    model_cfg = ModelConfig(vocab_size=vocab.size, **cfg.model)
    init = init_model(model_cfg, np.random.default_rng([cfg.seed, 3]))
    metric = get_metric(cfg.metric)

    train_pairs = [p for p in corpus.task_train if not cfg.finetune_langs or p.src_lang in cfg.finetune_langs]
    val_pairs = [p for p in corpus.task_val if not cfg.finetune_langs or p.src_lang in cfg.finetune_langs]
    train_pool = _task_examples(train_pairs, vocab)
    val = _task_examples(val_pairs, vocab)
    # in the zero-shot analogue only languages unseen during fine-tuning are scored
    test_pairs = [p for p in corpus.task_test if not cfg.finetune_langs or p.src_lang not in cfg.finetune_langs]
    if not train_pairs or not test_pairs:
        raise ValueError(f"finetune_langs {cfg.finetune_langs} leaves no training or no test languages")
    test = _task_examples(test_pairs, vocab)
    test_langs = [p.src_lang for p in test_pairs]

    arms = cfg.arms()
    regimes = [_regime_label(cfg, r) for r in cfg.regimes]
    report = Report([a.label for a in arms], regimes, BASELINE)
    report.manifest = {"config": _config_dict(cfg), **environment()}
    for arm in arms:
        try:
            base, history = _pretrain_arm(cfg, arm, corpus, vocab, init)
            report.manifests[arm.label] = {**base.run, "final_loss": history[-1]["loss"],
                                           "initial_loss": history[0]["loss"]}
        except Exception as e:  # recorded as a failure marker for every cell of the arm
            log.exception("pre-training failed for %s", arm.label)
            for regime in regimes:
                report.cells[(arm.label, regime)] = Cell(failures=[f"pretrain: {e!r}"])
            continue
        for (regime, k), label in zip(cfg.regimes.items(), regimes):
            cell = Cell()
            per_lang_runs: list[dict] = []
            for run in range(cfg.runs):
                rng = np.random.default_rng([cfg.seed, run, k])
                try:
                    subset = few_shot_subsample(train_pool, min(k, len(train_pool)), rng)
                    ft_cfg = dataclasses.replace(cfg.finetune, seed=cfg.seed * 1000 + run,
                                                 steps=cfg.regime_steps.get(regime, cfg.finetune.steps))
                    best, _ = finetune(ft_cfg, subset, val, metric, base)
                    scores = score_examples(best.params, vocab, test, metric)
                except Exception as e:
                    log.exception("fine-tuning failed: %s / %s / run %d", arm.label, label, run)
                    cell.run_scores.append(None)
                    cell.failures.append(f"run {run}: {e!r}")
                    continue
                by_lang: dict = {}
                for lang, s in zip(test_langs, scores):
                    by_lang.setdefault(lang, []).append(s)
                lang_scores = {lang: float(np.mean(v)) for lang, v in sorted(by_lang.items())}
                per_lang_runs.append(lang_scores)
                cell.run_scores.append(average_languages(lang_scores))
                log.info("%s %s run %d: %.2f", arm.label, label, run, cell.run_scores[-1])
            ok = [s for s in cell.run_scores if s is not None]
            if ok:
                cell.score = median_of_runs(ok)
                cell.lang_scores = {lang: median_of_runs(r[lang] for r in per_lang_runs)
                                    for lang in per_lang_runs[0]}
            report.cells[(arm.label, label)] = cell
    report.manifest["elapsed_seconds"] = round(time.time() - t0, 1)
    return report


def _config_dict(cfg: ExperimentConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["objectives"] = [o.value for o in cfg.objectives]
    d["noise"] = dataclasses.asdict(cfg.noise)
    return d
