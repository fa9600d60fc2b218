"""Taxonomy-constrained beam search and leaf-score aggregation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UnknownTask
from .tasks import TaskSet
from .taxonomy import Taxonomy

__all__ = [
    "BeamConfig",
    "ScoredPath",
    "LabelScores",
    "beam_extend",
    "aggregate",
    "rank",
]


@dataclass(frozen=True)
class BeamConfig:
    beam_width: int = 10
    max_extension_len: int = 16
    score_interior: bool = False

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam_width must be at least 1")
        if self.max_extension_len < 0:
            raise ValueError("max_extension_len must be non-negative")


@dataclass(frozen=True)
class ScoredPath:
    path: tuple
    log_prob: float
    terminated: bool

    @property
    def prob(self):
        return float(np.exp(self.log_prob))


@dataclass
class LabelScores:
    scores: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)


def _admissible(t: Taxonomy, task: TaskSet, label):
    return [c for c in t.children(label) if c in task.members]


def beam_extend(step_fn, t: Taxonomy, task: TaskSet, prefix, cfg: BeamConfig = BeamConfig()):
    """Extend ``prefix`` inside ``task`` with beam search.

    Parameters
    ----------
    step_fn : callable
        ``step_fn(list_of_paths) -> array (n, |task| + 1)`` giving, for each
        path, probabilities over the task's labels in id order followed by
        STOP. Only the children of the last label that belong to the task,
        and STOP, are admissible; their probabilities are renormalised.
    t, task : the taxonomy and the task to decode in.
    prefix : tuple of label ids starting at the root.

    Returns
    -------
    list of ScoredPath
        Up to ``beam_width`` terminated paths, best first. ``log_prob``
        covers only the extension beyond ``prefix``.
    """
    if not isinstance(task, TaskSet):
        raise UnknownTask(task)
    col = {label: i for i, label in enumerate(task.sorted_members)}
    stop_col = len(col)
    prefix = tuple(prefix)

    def key(h):
        return (-h.log_prob, h.path, h.terminated)

    def done(path):
        return not _admissible(t, task, path[-1]) or len(path) - len(prefix) >= cfg.max_extension_len

    pool = [ScoredPath(prefix, 0.0, done(prefix))]
    while True:
        alive = [h for h in pool if not h.terminated]
        if not alive:
            break
        probs = np.asarray(step_fn([h.path for h in alive]), dtype=np.float64)
        cands = [h for h in pool if h.terminated]
        for h, row in zip(alive, probs):
            kids = _admissible(t, task, h.path[-1])
            cols = [col[c] for c in kids] + [stop_col]
            mass = row[cols]
            total = mass.sum()
            mass = mass / total if total > 0 else np.full(len(cols), 1.0 / len(cols))
            with np.errstate(divide="ignore"):
                logs = np.log(mass)
            for c, lp in zip(kids, logs[:-1]):
                path = h.path + (c,)
                cands.append(ScoredPath(path, h.log_prob + float(lp), done(path)))
            cands.append(ScoredPath(h.path, h.log_prob + float(logs[-1]), True))
        cands.sort(key=key)
        pool = cands[:cfg.beam_width]
    return sorted(pool, key=key)


def aggregate(results, known=(), score_interior=False) -> LabelScores:
    """Sum path probabilities onto the labels the paths end at.

    ``results`` is an iterable of ``(prefix, task_id, [ScoredPath])``.
    Labels in ``known`` are dropped from the output. With
    ``score_interior`` every label added beyond the prefix is credited.
    """
    known = frozenset(known)
    out = LabelScores()
    for prefix, task_id, paths in results:
        for sp in paths:
            p = float(np.exp(sp.log_prob))
            credited = sp.path[len(prefix):] if score_interior else sp.path[-1:]
            for label in credited:
                if label in known:
                    continue
                out.scores[label] = out.scores.get(label, 0.0) + p
                out.provenance.setdefault(label, []).append((sp.path, task_id))
    return out


def rank(scores, k: int) -> list:
    """Top ``k`` labels by decreasing score, ties by increasing label id."""
    if k < 1:
        raise ValueError("k must be at least 1")
    items = scores.scores if isinstance(scores, LabelScores) else scores
    ordered = sorted(items.items(), key=lambda kv: (-kv[1], kv[0]))
    return [label for label, _ in ordered[:k]]
