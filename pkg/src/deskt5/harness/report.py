"""Experiment reports: score cells, deltas against the baseline, table rendering."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

FAIL = "FAIL"
AVG = "Avg."


@dataclass
class Cell:
    run_scores: list = field(default_factory=list)   # None marks a failed run
    lang_scores: dict = field(default_factory=dict)  # per-language medians
    score: Optional[float] = None                     # median over successful runs
    failures: list = field(default_factory=list)


@dataclass
class Report:
    arms: list
    regimes: list
    baseline: str
    cells: dict = field(default_factory=dict)      # (arm, regime) -> Cell
    manifests: dict = field(default_factory=dict)  # arm -> pre-training run manifest
    manifest: dict = field(default_factory=dict)

    def score(self, arm: str, regime: str) -> Optional[float]:
        cell = self.cells.get((arm, regime))
        return None if cell is None else cell.score

    def average(self, arm: str) -> Optional[float]:
        scores = [self.score(arm, r) for r in self.regimes]
        if not scores or any(s is None for s in scores):
            return None
        return sum(scores) / len(scores)

    def delta(self, arm: str, regime: str) -> Optional[float]:
        a, b = self.score(arm, regime), self.score(self.baseline, regime)
        return None if a is None or b is None else a - b

    def delta_average(self, arm: str) -> Optional[float]:
        a, b = self.average(arm), self.average(self.baseline)
        return None if a is None or b is None else a - b

    @property
    def failures(self) -> dict:
        return {k: c.failures for k, c in self.cells.items() if c.failures}

    def to_json(self) -> dict:
        return {
            "arms": self.arms, "regimes": self.regimes, "baseline": self.baseline,
            "cells": [{"arm": a, "regime": r, "run_scores": c.run_scores, "lang_scores": c.lang_scores,
                       "score": c.score, "failures": c.failures} for (a, r), c in self.cells.items()],
            "manifests": self.manifests, "manifest": self.manifest,
        }

    @classmethod
    def from_json(cls, data: dict) -> "Report":
        r = cls(data["arms"], data["regimes"], data["baseline"], manifests=data.get("manifests", {}),
                manifest=data.get("manifest", {}))
        for c in data["cells"]:
            r.cells[(c["arm"], c["regime"])] = Cell(c["run_scores"], c["lang_scores"], c["score"], c["failures"])
        return r

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, indent=1, default=str)

    @classmethod
    def load(cls, path) -> "Report":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(json.load(f))


def _fmt(x: Optional[float]) -> str:
    return FAIL if x is None else f"{x:.1f}"


def report_rows(r: Report) -> tuple[list[str], list[list[str]]]:
    header = ["Model"] + list(r.regimes) + ([AVG] if len(r.regimes) > 1 else [])
    rows = []
    for arm in r.arms:
        row = [arm] + [_fmt(r.score(arm, reg)) for reg in r.regimes]
        if len(r.regimes) > 1:
            row.append(_fmt(r.average(arm)))
        rows.append(row)
    for arm in r.arms:
        if arm == r.baseline:
            continue
        row = [f"Δ {arm}"] + [_fmt(r.delta(arm, reg)) for reg in r.regimes]
        if len(r.regimes) > 1:
            row.append(_fmt(r.delta_average(arm)))
        rows.append(row)
    return header, rows


def _aligned(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(str(x[i])) for x in [header] + rows) for i in range(len(header))]
    lines = []
    for j, row in enumerate([header] + rows):
        cells = [str(c).ljust(widths[0]) if i == 0 else str(c).rjust(widths[i]) for i, c in enumerate(row)]
        lines.append(" | ".join(cells))
        if j == 0:
            lines.append("-+-".join("-" * w for w in widths))
    return "\n".join(lines)


def render_report(r: Report, per_language: bool = False) -> tuple[str, str]:
    """Aligned text table and its TSV twin, both at one decimal place."""
    header, rows = report_rows(r)
    text = _aligned(header, rows)
    tsv = "\n".join("\t".join(row) for row in [header] + rows) + "\n"
    fails = r.failures
    if fails:
        text += "\n\nFailures:\n" + "\n".join(f"  {a} / {g}: {'; '.join(msgs)}" for (a, g), msgs in fails.items())
    if per_language:
        for regime in r.regimes:
            langs = sorted({lang for a in r.arms for lang in r.cells.get((a, regime), Cell()).lang_scores})
            if not langs:
                continue
            ph = ["Model"] + langs
            pr = [[a] + [_fmt(r.cells.get((a, regime), Cell()).lang_scores.get(lang)) for lang in langs]
                  for a in r.arms]
            text += f"\n\n{regime} per language:\n" + _aligned(ph, pr)
    return text, tsv


def parse_report_tsv(tsv: str) -> dict:
    """Inverse of the TSV twin: ``{row label: {column: value or None}}``."""
    lines = [line for line in tsv.splitlines() if line]
    header = lines[0].split("\t")
    out = {}
    for line in lines[1:]:
        cells = line.split("\t")
        out[cells[0]] = {h: (None if c == FAIL else float(c)) for h, c in zip(header[1:], cells[1:])}
    return out
