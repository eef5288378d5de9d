"""Sentiment/emotion metrics: binning schemes, MAE, Pearson, seed aggregation.

Binning conventions are this artifact's fixed, documented choice (they ride
along in every report header so numbers are comparable run to run):

  7-class:            round half away from zero to an integer in [-3, 3]
  5-class:            clamp the score to [-2, 2], then round half away from zero
  3-class:            sign, with an exact 0 mapping to neutral
  2 without neutral:  score == 0 is excluded (returns None), else positive iff > 0
  2 with neutral:     positive iff score >= 0
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, UndefinedMetricError

SCHEMES = ("7", "5", "3", "2_with_neutral", "2_without_neutral")

CONVENTIONS = {
    "binning_7": "round half away from zero, classes -3..3",
    "binning_5": "clamp score to [-2,2] then round half away from zero",
    "binning_3": "sign of score, exact 0 is neutral",
    "binning_2_without_neutral": "score==0 excluded; positive iff score>0",
    "binning_2_with_neutral": "positive iff score>=0",
    "std": "population",
}


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else int(math.ceil(x - 0.5))


def bin_sentiment(score: float, scheme: str) -> Optional[int]:
    """Map a real sentiment score in [-3, 3] to a class id (None = excluded)."""
    if scheme not in SCHEMES:
        raise DataError(f"unknown binning scheme {scheme!r}; choose from {SCHEMES}")
    if not -3.0 <= score <= 3.0:
        raise DataError(f"sentiment score {score} outside [-3, 3]")
    if scheme == "7":
        return _round_half_away(score)
    if scheme == "5":
        return _round_half_away(min(2.0, max(-2.0, score)))
    if scheme == "3":
        return 0 if score == 0 else (1 if score > 0 else -1)
    if scheme == "2_without_neutral":
        return None if score == 0 else int(score > 0)
    return int(score >= 0)


def scheme_classes(scheme: str) -> list[int]:
    return {
        "7": list(range(-3, 4)),
        "5": list(range(-2, 3)),
        "3": [-1, 0, 1],
        "2_with_neutral": [0, 1],
        "2_without_neutral": [0, 1],
    }[scheme]


def mae(pred: Sequence[float], gold: Sequence[float]) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    gold = np.asarray(gold, dtype=np.float64)
    if pred.shape != gold.shape or pred.size == 0:
        raise DataError(f"mae needs equal nonempty lists, got {pred.shape} and {gold.shape}")
    return float(np.abs(pred - gold).mean())


def pearson(pred: Sequence[float], gold: Sequence[float]) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    gold = np.asarray(gold, dtype=np.float64)
    if pred.shape != gold.shape or pred.size < 2:
        raise DataError(f"pearson needs equal lists of length >= 2, got {pred.shape} and {gold.shape}")
    px = pred - pred.mean()
    gx = gold - gold.mean()
    denom = math.sqrt(float(px @ px)) * math.sqrt(float(gx @ gx))
    if denom == 0.0:
        raise UndefinedMetricError("pearson correlation undefined for constant input")
    return float(px @ gx) / denom


def accuracy(pred_classes: Sequence[int], gold_classes: Sequence[int]) -> float:
    pred = np.asarray(pred_classes)
    gold = np.asarray(gold_classes)
    if pred.shape != gold.shape or pred.size == 0:
        raise DataError("accuracy needs equal nonempty class lists")
    return float((pred == gold).mean())


def aggregate(per_seed: Sequence[float]) -> tuple[float, float]:
    """(mean, population std) over per-seed metric values."""
    vals = np.asarray(per_seed, dtype=np.float64)
    if vals.size == 0:
        raise DataError("cannot aggregate zero seeds")
    return float(vals.mean()), float(vals.std())


@dataclass
class MetricsReport:
    task: str
    seeds: list[int]
    metrics: dict[str, dict] = field(default_factory=dict)
    conventions: dict[str, str] = field(default_factory=lambda: dict(CONVENTIONS))

    def add(self, name: str, per_seed: Sequence[Optional[float]]) -> None:
        defined = [v for v in per_seed if v is not None]
        entry: dict = {"per_seed": list(per_seed)}
        if defined:
            mean, std = aggregate(defined)
            entry["mean"] = mean
            entry["std"] = std
        else:
            entry["mean"] = None
            entry["std"] = None
        entry["undefined_seeds"] = sum(1 for v in per_seed if v is None)
        self.metrics[name] = entry


def write_report(report: MetricsReport, path) -> None:
    obj = {
        "task": report.task,
        "seeds": report.seeds,
        "metrics": report.metrics,
        "conventions": report.conventions,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_report(path) -> MetricsReport:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    rep = MetricsReport(task=obj["task"], seeds=obj["seeds"], conventions=obj["conventions"])
    rep.metrics = obj["metrics"]
    return rep
