"""Scorers and aggregation on the 0-100 percentage scale."""
from __future__ import annotations

import re
import statistics
from collections import Counter
from typing import Iterable, Mapping, Sequence, Union

QAScore = tuple  # (F1, EM)


def normalize(text: str) -> str:
    """Trim, collapse whitespace runs and casefold. Punctuation is kept."""
    return " ".join(text.split()).casefold()


def exact_match(pred: str, gold: str) -> float:
    return 100.0 if normalize(pred) == normalize(gold) else 0.0


def _f1(overlap: int, n_pred: int, n_gold: int) -> float:
    if overlap == 0:
        return 0.0
    p = overlap / n_pred
    r = overlap / n_gold
    return 100.0 * 2 * p * r / (p + r)


def token_f1(pred: str, gold: str) -> float:
    p_toks = normalize(pred).split()
    g_toks = normalize(gold).split()
    if not p_toks and not g_toks:
        return 100.0
    if not p_toks or not g_toks:
        return 0.0
    overlap = sum((Counter(p_toks) & Counter(g_toks)).values())
    return _f1(overlap, len(p_toks), len(g_toks))


def lcs_length(a: Sequence, b: Sequence) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(pred: str, gold: str) -> float:
    """Sentence-level ROUGE-L F over whitespace tokens (no casefolding)."""
    p_toks = pred.split()
    g_toks = gold.split()
    if not p_toks or not g_toks:
        return 0.0
    return _f1(lcs_length(p_toks, g_toks), len(p_toks), len(g_toks))


_ENTITY = re.compile(r"\[([^\s\[\]]+) ([^\[\]]+?)\]")


def parse_entities(text: str) -> set:
    """Parse ``[TYPE span]`` linearized entities; malformed text gives an empty set."""
    if text.count("[") != text.count("]"):
        return set()
    found = _ENTITY.findall(text)
    if len(found) != text.count("["):
        return set()
    return {(t, " ".join(s.split())) for t, s in found}


def entity_f1(pred_entities: Union[set, str], gold_entities: Union[set, str]) -> float:
    """Micro F1 over exact (type, span) matches."""
    if isinstance(pred_entities, str):
        pred_entities = parse_entities(pred_entities)
    if isinstance(gold_entities, str):
        gold_entities = parse_entities(gold_entities)
    pred, gold = set(pred_entities), set(gold_entities)
    if not pred and not gold:
        return 100.0
    if not pred or not gold:
        return 0.0
    return _f1(len(pred & gold), len(pred), len(gold))


METRICS = {
    "em": exact_match,
    "f1": token_f1,
    "rouge_l": rouge_l,
    "entity_f1": entity_f1,
}


def get_metric(name: str):
    try:
        return METRICS[name]
    except KeyError:
        raise ValueError(f"unknown metric {name!r}; choose from {sorted(METRICS)}") from None


def average_languages(ls: Mapping[str, float]) -> float:
    if not ls:
        raise ValueError("no language scores to average")
    return sum(ls.values()) / len(ls)


def task_contribution(score: Union[float, QAScore]) -> float:
    if isinstance(score, tuple):
        f1, em = score
        return (f1 + em) / 2
    return float(score)


def task_average(ts: Mapping[str, Union[float, QAScore]]) -> float:
    """Mean over tasks; a QA task given as (F1, EM) contributes mean(F1, EM)."""
    if not ts:
        raise ValueError("no task scores to average")
    return sum(task_contribution(s) for s in ts.values()) / len(ts)


def median_of_runs(scores: Iterable[float]) -> float:
    scores = list(scores)
    if not scores:
        raise ValueError("no run scores")
    return float(statistics.median(scores))
