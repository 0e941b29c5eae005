"""Command-line entry point: ``python -m deskt5 <subcommand>``.

Every subcommand accepts ``--config FILE`` holding flat ``key = value`` lines;
keys name the subcommand's flags and anything given on the command line wins.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ConfigError, canonical_key, load_config, parse_bool, parse_list
from .corpus import CorpusFormatError, Document, ParallelPair, load_monolingual, load_parallel, stats_from_items
from .metrics import average_languages, get_metric, METRICS
from .model import ModelConfig, init_model
from .objectives import NoiseSpec, Objective, build_example, build_nmt, render_example
from .sampler import MixtureSpec, mixed_stream
from .trainer import FINETUNE_BATCH_TOKENS, PRETRAIN_BATCH_TOKENS, ObjectiveMap, TrainConfig, finetune, predict, pretrain
from .harness.cipher import CorpusSizes
from .harness.experiment import DEFAULT_REGIME_STEPS, DEFAULT_REGIMES
from .vocab import build_vocab

log = logging.getLogger("deskt5")

REGIMES = {k.replace("_", "-"): v for k, v in DEFAULT_REGIMES.items()}
_SIZES = CorpusSizes()


class CLIError(Exception):
    pass


def _csv(item=str):
    def conv(value):
        return parse_list(value, item)
    return conv


def _add_mixture(p):
    p.add_argument("--alpha", type=float, default=0.3, help="language sampling temperature exponent")
    p.add_argument("--parallel-ratio", type=float, default=0.10, help="fraction of parallel examples")
    p.add_argument("--pair-sampling", choices=("pairs", "target"), default="pairs")


def _add_model(p):
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--d-ff", type=int, default=128)
    p.add_argument("--max-len", type=int, default=128)
    p.add_argument("--sentinels", type=int, default=100)


def _add_noise(p):
    p.add_argument("--noise-density", type=float, default=0.15)
    p.add_argument("--mean-span-length", type=float, default=3.0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="deskt5", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def command(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="flat key = value file; command-line flags override it")
        p.add_argument("--seed", type=int, default=0)
        return p

    p = command("build-data", "generate a cipher-language corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--num-words", type=int, default=200)
    p.add_argument("--task-train", type=int, default=_SIZES.task_train, help="downstream training pairs per language")
    p.add_argument("--task-val", type=int, default=_SIZES.task_val)
    p.add_argument("--task-test", type=int, default=_SIZES.task_test)

    p = command("pretrain", "multi-task pre-training from scratch or a checkpoint")
    p.add_argument("--data", required=True, help="corpus directory written by build-data")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--objective", choices=[o.value for o in Objective], default="nmt",
                   help="objective for parallel examples (monolingual ones always use mlm)")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-tokens", type=int, default=PRETRAIN_BATCH_TOKENS)
    p.add_argument("--checkpoint-every", type=int, default=500)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--from", dest="init_from", help="checkpoint to continue from")
    _add_mixture(p)
    _add_model(p)
    _add_noise(p)

    p = command("finetune", "fine-tune a checkpoint on a translation task")
    p.add_argument("--from", dest="init_from", required=True, help="checkpoint directory")
    p.add_argument("--task", required=True, help="parallel TSV of training pairs")
    p.add_argument("--val", required=True, help="parallel TSV of validation pairs")
    p.add_argument("--test", help="parallel TSV to predict after selection")
    p.add_argument("--regime", choices=sorted(REGIMES), default="few-shot")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--batch-tokens", type=int, default=FINETUNE_BATCH_TOKENS)
    p.add_argument("--checkpoint-every", type=int, default=100)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--metric", choices=sorted(METRICS), default="em")

    p = command("evaluate", "score a predictions TSV against a gold TSV")
    p.add_argument("--predictions", required=True, help="id<TAB>lang<TAB>prediction")
    p.add_argument("--gold", required=True, help="id<TAB>lang<TAB>reference")
    p.add_argument("--metric", choices=sorted(METRICS), default="em")
    p.add_argument("--tsv", help="also write the table as TSV here")

    p = command("experiment", "run the objective-comparison matrix")
    p.add_argument("--out", required=True)
    p.add_argument("--data", help="corpus directory; generated from --seed when omitted")
    p.add_argument("--objectives", type=_csv(), default="nmt")
    p.add_argument("--ratio-sweep", type=_csv(float), default="")
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--metric", choices=sorted(METRICS), default="em")
    p.add_argument("--pretrain-steps", type=int, default=2000)
    p.add_argument("--pretrain-batch-tokens", type=int, default=PRETRAIN_BATCH_TOKENS)
    p.add_argument("--finetune-steps", type=int, default=300, help="steps for regimes without their own setting")
    p.add_argument("--finetune-batch-tokens", type=int, default=FINETUNE_BATCH_TOKENS)
    p.add_argument("--finetune-checkpoint-every", type=int, default=100)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--few-shot", type=int, default=REGIMES["few-shot"])
    p.add_argument("--low", type=int, default=REGIMES["low"])
    p.add_argument("--high", type=int, default=REGIMES["high"])
    p.add_argument("--few-shot-steps", type=int, default=DEFAULT_REGIME_STEPS["few_shot"])
    p.add_argument("--low-steps", type=int, default=DEFAULT_REGIME_STEPS["low"])
    p.add_argument("--high-steps", type=int, default=DEFAULT_REGIME_STEPS["high"])
    p.add_argument("--regimes", type=_csv(), default="few_shot,low,high")
    p.add_argument("--finetune-langs", type=_csv(), default="",
                   help="fine-tune on these source languages only and score the rest (zero-shot analogue)")
    p.add_argument("--per-language", type=parse_bool, default=False)
    _add_mixture(p)
    _add_model(p)
    _add_noise(p)

    p = command("inspect-example", "render a training example with specials bracketed")
    p.add_argument("--objective", choices=[o.value for o in Objective], default="mlm")
    p.add_argument("--data", help="monolingual or parallel TSV to take the example from")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--lang", default="en")
    p.add_argument("--text")
    p.add_argument("--tgt-lang")
    p.add_argument("--tgt-text")
    p.add_argument("--langs", type=_csv(), default="", help="vocabulary languages (default: those in the input)")
    p.add_argument("--sentinels", type=int, default=100)
    _add_noise(p)

    p = command("report", "render a saved experiment report")
    p.add_argument("--from", dest="report_from", required=True, help="report.json written by experiment")
    p.add_argument("--tsv", help="also write the TSV twin here")
    p.add_argument("--per-language", type=parse_bool, default=False)
    return ap


def _config_path(argv: Sequence[str]) -> Optional[str]:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(ap: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    """Parse ``argv`` with settings from its ``--config`` file as defaults."""
    path = _config_path(argv)
    command = next((tok for tok in argv if tok in COMMANDS), None)
    if path is None or command is None:
        return ap.parse_args(argv)
    settings = load_config(path)
    sub = ap._subparsers._group_actions[0].choices[command]
    dests = {a.dest: a for a in sub._actions}
    # keys may name the flag ("from") or its destination ("init_from")
    by_flag = {canonical_key(s.lstrip("-")): a.dest for a in sub._actions for s in a.option_strings
               if s.startswith("--")}
    defaults = {}
    for key, value in settings.items():
        dest = by_flag.get(key, key if key in dests else None)
        if dest is None or dest in ("config", "help"):
            raise ConfigError(f"{path}: unknown setting {key!r} for '{command}'")
        action = dests[dest]
        try:
            defaults[dest] = action.type(value) if action.type is not None else value
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{path}: bad value for {key}: {e}") from None
        if action.choices is not None and defaults[dest] not in action.choices:
            raise ConfigError(f"{path}: {key} = {value!r} is not one of {sorted(action.choices)}")
        action.required = False
    sub.set_defaults(**defaults)
    return ap.parse_args(argv)


# ------------------------------------------------------------------ commands

def cmd_build_data(args) -> int:
    from .harness.cipher import default_cipher_spec, gen_cipher_corpus

    spec = default_cipher_spec(args.seed, args.num_words)
    sizes = dataclasses.replace(CorpusSizes(), task_train=args.task_train, task_val=args.task_val,
                                task_test=args.task_test)
    corpus = gen_cipher_corpus(spec, sizes, args.seed, out_dir=args.out)
    _write_gold(Path(args.out) / "task_test_gold.tsv", corpus.task_test)
    print(f"wrote {len(corpus.mono)} monolingual, {len(corpus.parallel)} parallel, "
          f"{len(corpus.task_train)}/{len(corpus.task_val)}/{len(corpus.task_test)} task pairs to {args.out}")
    return 0


def _write_gold(path, pairs) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for i, p in enumerate(pairs):
            f.write(f"{i}\t{p.src_lang}\t{p.tgt_text}\n")


def _model_dict(args) -> dict:
    return {"num_layers": args.layers, "d_model": args.d_model, "num_heads": args.heads,
            "d_ff": args.d_ff, "max_len": args.max_len}


def _read_corpus(data_dir):
    from .harness.cipher import CipherCorpus
    return CipherCorpus.read(data_dir)


def cmd_pretrain(args) -> int:
    corpus = _read_corpus(args.data)
    vocab = build_vocab(corpus.spec.langs, args.sentinels)
    mixture = MixtureSpec(args.alpha, args.parallel_ratio, args.seed, args.pair_sampling)
    noise = NoiseSpec(args.noise_density, args.mean_span_length)
    cfg = TrainConfig(args.batch_tokens, args.steps, args.checkpoint_every, args.learning_rate, args.seed)
    if args.init_from:
        model = load_checkpoint(args.init_from)
        if model.vocab != vocab:
            raise CLIError(f"checkpoint vocabulary {model.vocab.layout()} does not match the corpus languages")
    else:
        model = init_model(ModelConfig(vocab_size=vocab.size, **_model_dict(args)),
                           np.random.default_rng([args.seed, 3]))
    stream = mixed_stream(corpus.mono, corpus.parallel, stats_from_items(corpus.mono, corpus.parallel), mixture)
    history: list = []
    cks = pretrain(cfg, stream, ObjectiveMap(vocab, Objective(args.objective), noise), model,
                   history=history, checkpoint_dir=args.out,
                   run_info={"mixture": dataclasses.asdict(mixture), "noise": dataclasses.asdict(noise)})
    if not cks:
        print("no new steps to run")
        return 0
    final = cks[-1]
    save_checkpoint(final, Path(args.out) / "final")
    with open(Path(args.out) / "history.jsonl", "a", encoding="utf-8") as f:
        for rec in history:
            f.write(json.dumps(rec) + "\n")
    print(f"step {final.step}: loss {history[-1]['loss']:.4f}; "
          f"examples per objective {final.run['objective_counts']}; checkpoint {Path(args.out) / 'final'}")
    return 0


def cmd_finetune(args) -> int:
    base = load_checkpoint(args.init_from)
    vocab = base.vocab
    langs = vocab.lang_codes
    train_pairs = list(load_parallel(args.task, langs))
    k = REGIMES[args.regime]
    if len(train_pairs) < k and args.regime == "few-shot":
        raise CLIError(f"few-shot needs {k} training pairs, {args.task} has {len(train_pairs)}")
    from .harness.experiment import few_shot_subsample
    subset = few_shot_subsample(train_pairs, min(k, len(train_pairs)), np.random.default_rng([args.seed, k]))
    val = [build_nmt(p, vocab) for p in load_parallel(args.val, langs)]
    cfg = TrainConfig(args.batch_tokens, args.steps, args.checkpoint_every, args.learning_rate, args.seed)
    best, history = finetune(cfg, [build_nmt(p, vocab) for p in subset], val, get_metric(args.metric), base)
    out = Path(args.out)
    save_checkpoint(best, out / "best")
    for rec in history:
        print(f"step {rec['step']:5d}  loss {rec['loss']:.4f}  val {args.metric} {rec['val_score']:.1f}")
    print(f"selected step {best.step} ({len(subset)} training pairs); checkpoint {out / 'best'}")
    if args.test:
        test_pairs = list(load_parallel(args.test, langs))
        preds = predict(best.params, vocab, [build_nmt(p, vocab) for p in test_pairs])
        with open(out / "predictions.tsv", "w", encoding="utf-8") as f:
            for i, (p, text) in enumerate(zip(test_pairs, preds)):
                f.write(f"{i}\t{p.src_lang}\t{_one_line(text)}\n")
        print(f"predictions: {out / 'predictions.tsv'}")
    return 0


def _one_line(text: str) -> str:
    return text.replace("\t", " ").replace("\n", " ")


def _read_id_tsv(path) -> dict:
    out = {}
    with open(path, encoding="utf-8", newline="\n") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CorpusFormatError(path, lineno, f"expected 3 tab-separated fields, got {len(parts)}")
            ident, lang, text = parts
            if ident in out:
                raise CorpusFormatError(path, lineno, f"duplicate id {ident!r}")
            out[ident] = (lang, text)
    return out


def evaluate_tsv(pred_path, gold_path, metric: str = "em") -> tuple[list[str], list[list[str]]]:
    preds, gold = _read_id_tsv(pred_path), _read_id_tsv(gold_path)
    missing = sorted(set(gold) - set(preds))
    extra = sorted(set(preds) - set(gold))
    if missing or extra:
        raise CLIError(f"prediction ids do not match gold ids; missing {missing[:5]}, unexpected {extra[:5]}")
    fn = get_metric(metric)
    by_lang: dict[str, list[float]] = {}
    for ident, (lang, ref) in gold.items():
        plang, text = preds[ident]
        if plang != lang:
            raise CLIError(f"id {ident!r}: prediction language {plang!r} but gold language {lang!r}")
        by_lang.setdefault(lang, []).append(fn(text, ref))
    rows = [[lang, str(len(s)), f"{sum(s) / len(s):.1f}"] for lang, s in sorted(by_lang.items())]
    avg = average_languages({lang: sum(s) / len(s) for lang, s in by_lang.items()})
    rows.append(["Avg.", str(sum(len(s) for s in by_lang.values())), f"{avg:.1f}"])
    return ["lang", "n", metric], rows


def cmd_evaluate(args) -> int:
    from .harness.report import _aligned

    header, rows = evaluate_tsv(args.predictions, args.gold, args.metric)
    print(_aligned(header, rows))
    if args.tsv:
        Path(args.tsv).write_text("\n".join("\t".join(r) for r in [header] + rows) + "\n", encoding="utf-8")
    return 0


def experiment_config(args):
    from .harness.experiment import ExperimentConfig

    sizes = {"few_shot": args.few_shot, "low": args.low, "high": args.high}
    unknown = [r for r in args.regimes if r not in sizes]
    if unknown:
        raise CLIError(f"unknown regimes {unknown}; choose from {sorted(sizes)}")
    return ExperimentConfig(
        objectives=tuple(Objective(o) for o in args.objectives),
        mixture=MixtureSpec(args.alpha, args.parallel_ratio, args.seed, args.pair_sampling),
        ratio_sweep=tuple(args.ratio_sweep),
        pretrain=TrainConfig(args.pretrain_batch_tokens, args.pretrain_steps, args.pretrain_steps,
                             args.learning_rate, args.seed),
        finetune=TrainConfig(args.finetune_batch_tokens, args.finetune_steps, args.finetune_checkpoint_every,
                             args.learning_rate, args.seed),
        regimes={r: sizes[r] for r in args.regimes},
        regime_steps={r: getattr(args, f"{r}_steps") for r in args.regimes},
        metric=args.metric,
        runs=args.runs,
        model=_model_dict(args),
        noise=NoiseSpec(args.noise_density, args.mean_span_length),
        sentinel_count=args.sentinels,
        sizes=CorpusSizes(),
        seed=args.seed,
        finetune_langs=tuple(args.finetune_langs),
    )


def cmd_experiment(args) -> int:
    from .harness.experiment import run_experiment
    from .harness.report import render_report

    cfg = experiment_config(args)
    corpus = _read_corpus(args.data) if args.data else None
    report = run_experiment(cfg, corpus)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "report.json")
    text, tsv = render_report(report, per_language=args.per_language)
    (out / "report.txt").write_text(text + "\n", encoding="utf-8")
    (out / "report.tsv").write_text(tsv, encoding="utf-8")
    print(text)
    return 1 if report.failures else 0


def cmd_inspect_example(args) -> int:
    rng = np.random.default_rng(args.seed)
    noise = NoiseSpec(args.noise_density, args.mean_span_length)
    if args.data:
        path = Path(args.data)
        with open(path, "rb") as f:
            first = f.readline().rstrip(b"\n").split(b"\t")
        items = list(load_parallel(path) if len(first) == 4 else load_monolingual(path))
        if not 0 <= args.index < len(items):
            raise CLIError(f"--index {args.index} out of range for {len(items)} items in {path}")
        item = items[args.index]
    elif args.text is None:
        raise CLIError("give either --data or --text")
    elif args.tgt_text is not None:
        if not args.tgt_lang:
            raise CLIError("--tgt-text needs --tgt-lang")
        item = ParallelPair(args.lang, args.tgt_lang, args.text, args.tgt_text)
    else:
        item = Document(args.lang, args.text)
    if isinstance(item, ParallelPair):
        langs = args.langs or (item.src_lang, item.tgt_lang)
    else:
        langs = args.langs or (item.lang,)
    vocab = build_vocab(tuple(langs), args.sentinels)
    ex = build_example(Objective(args.objective), item, vocab, noise, rng)
    if ex is None:
        print("input too short to corrupt; the pipeline skips it")
        return 0
    print(render_example(ex, vocab))
    return 0


def cmd_report(args) -> int:
    from .harness.report import Report, render_report

    text, tsv = render_report(Report.load(args.report_from), per_language=args.per_language)
    print(text)
    if args.tsv:
        Path(args.tsv).write_text(tsv, encoding="utf-8")
    return 0


COMMANDS = {
    "build-data": cmd_build_data,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "evaluate": cmd_evaluate,
    "experiment": cmd_experiment,
    "inspect-example": cmd_inspect_example,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(ap, argv)
    except (ConfigError, OSError, ValueError) as e:
        print(f"deskt5: error: {e}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (CLIError, ConfigError, CorpusFormatError, OSError, ValueError) as e:
        print(f"deskt5: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
