"""Precision@k and NDCG@k with corpus averaging over documents having >= k labels."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoEligibleDocuments

__all__ = [
    "EvalSample",
    "precision_at_k",
    "ndcg_at_k",
    "evaluate_corpus",
    "MetricReport",
]

_NEVER = object()  # padding entry that is never a gold label


@dataclass(frozen=True)
class EvalSample:
    ranking: tuple
    gold: frozenset
    tasks: frozenset = frozenset()  # tasks the gold targets belong to
    doc_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "ranking", tuple(self.ranking))
        object.__setattr__(self, "gold", frozenset(self.gold))
        object.__setattr__(self, "tasks", frozenset(self.tasks))
        if len(set(self.ranking)) != len(self.ranking):
            raise ValueError("ranking contains duplicates")
        if not self.gold:
            raise ValueError("gold label set is empty")

    @property
    def k_y(self):
        return len(self.gold)

    def hits(self, k):
        ranked = list(self.ranking[:k]) + [_NEVER] * max(0, k - len(self.ranking))
        return [1 if r in self.gold else 0 for r in ranked]


def precision_at_k(s: EvalSample, k: int) -> float:
    if k < 1:
        raise ValueError("k must be at least 1")
    return sum(s.hits(k)) / k


def ndcg_at_k(s: EvalSample, k: int) -> float:
    if k < 1:
        raise ValueError("k must be at least 1")
    dcg = sum(y / math.log(n + 1) for n, y in enumerate(s.hits(k), 1))
    ideal = sum(1.0 / math.log(n + 1) for n in range(1, min(k, s.k_y) + 1))
    return dcg / ideal


_METRICS = {"P": precision_at_k, "NDCG": ndcg_at_k}


@dataclass
class MetricReport:
    """Mean metrics per ``(name, k)`` plus per-task value lists."""
    values: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    per_task: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def to_json(self):
        return {
            "metrics": {f"{m}@{k}": v for (m, k), v in sorted(self.values.items())},
            "counts": {f"{m}@{k}": v for (m, k), v in sorted(self.counts.items())},
            "per_task": {
                str(task): {f"{m}@{k}": vals for (m, k), vals in sorted(d.items())}
                for task, d in sorted(self.per_task.items())
            },
        }

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scope", "metric", "k", "value", "n_docs"])
        for (m, k), v in sorted(self.values.items()):
            w.writerow(["global", m, k, repr(v), self.counts[(m, k)]])
        for task, d in sorted(self.per_task.items()):
            for (m, k), vals in sorted(d.items()):
                w.writerow([f"task{task}", m, k, repr(float(np.mean(vals))) if vals else "", len(vals)])
        return buf.getvalue()


def evaluate_corpus(samples, ks=(1, 3, 5), skip_empty=False) -> MetricReport:
    """Average P@k and NDCG@k over samples with at least ``k`` gold labels.

    Raises :class:`NoEligibleDocuments` for a ``k`` no sample qualifies for,
    unless ``skip_empty`` is set, in which case that ``k`` is left out.
    """
    samples = list(samples)
    if not samples and skip_empty:
        return MetricReport()
    if not samples:
        raise NoEligibleDocuments(min(ks) if ks else 1)
    report = MetricReport()
    for k in ks:
        eligible = [s for s in samples if s.k_y >= k]
        if not eligible:
            if skip_empty:
                continue
            raise NoEligibleDocuments(k)
        for name, fn in _METRICS.items():
            vals = [fn(s, k) for s in eligible]
            report.values[(name, k)] = float(math.fsum(vals) / len(vals))
            report.counts[(name, k)] = len(vals)
            for s, v in zip(eligible, vals):
                for task in sorted(s.tasks):
                    report.per_task.setdefault(task, {}).setdefault((name, k), []).append(v)
    return report
