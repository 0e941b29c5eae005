"""Synthetic cipher corpora and objective-comparison experiments."""
from .cipher import (CipherCorpus, CipherSpec, CorpusSizes, DerivedLang, default_cipher_spec,
                     gen_cipher_corpus, rule_based_translate)
from .experiment import BASELINE, DEFAULT_REGIMES, ExperimentConfig, few_shot_subsample, run_experiment
from .report import Cell, Report, parse_report_tsv, render_report

__all__ = [
    "CipherCorpus", "CipherSpec", "CorpusSizes", "DerivedLang", "default_cipher_spec",
    "gen_cipher_corpus", "rule_based_translate", "BASELINE", "DEFAULT_REGIMES", "ExperimentConfig",
    "few_shot_subsample", "run_experiment", "Cell", "Report", "parse_report_tsv", "render_report",
]
