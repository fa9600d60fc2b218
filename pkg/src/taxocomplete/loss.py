"""Width-adaptive smoothed likelihood loss over a task's labels.

For a next-label distribution ``P`` over a task of width ``w`` and target
``y`` the per-step loss is::

    -[(1 - a) log P(y) + sum_{l != y} a * s(P(l))],   a = eps * w / (1 + w)

with ``s(p) = log(1 - p)`` in the default ``"complement"`` form and ``s(p) = log p`` in the
conventional label-smoothing form. With ``adaptive=False`` the weight
``a`` is the constant ``eps``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import TargetOutsideTask

__all__ = [
    "LossConfig",
    "smoothing_weight",
    "smoothed_loss",
    "tat_loss",
    "batch_loss",
    "clamp_count",
    "PROB_FLOOR",
]

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
_clamps = 0


def clamp_count(reset=False):
    """Number of probabilities clamped at ``PROB_FLOOR`` so far."""
    global _clamps
    n = _clamps
    if reset:
        _clamps = 0
    return n


@dataclass(frozen=True)
class LossConfig:
    epsilon: float = 0.01
    adaptive: bool = True
    smoothing_form: str = "complement"

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError("epsilon must lie in [0, 1)")
        if self.smoothing_form not in ("complement", "conventional"):
            raise ValueError("smoothing_form must be 'complement' or 'conventional'")


def smoothing_weight(width, cfg: LossConfig):
    """Mass moved off the target: ``eps * w / (1 + w)`` or plain ``eps``."""
    width = np.asarray(width, dtype=np.float64)
    if not cfg.adaptive:
        return np.full_like(width, cfg.epsilon)
    return cfg.epsilon * width / (1.0 + width)


def _safe_log(x: Tensor, used) -> Tensor:
    global _clamps
    low = int(((x.data < PROB_FLOOR) & used).sum())
    if low:
        _clamps += low
        log.warning("clamped %d probabilities at %g before log", low, PROB_FLOOR)
    return ad.log(ad.clamp_min(x, PROB_FLOOR))


def smoothed_loss(probs: Tensor, targets, widths, cfg: LossConfig) -> Tensor:
    """Per-row loss for a batch of distributions ``probs`` of shape ``(N, C)``.

    ``targets`` are column indices and ``widths`` the task width of each row.
    """
    probs = probs if isinstance(probs, Tensor) else Tensor(probs)
    N, C = probs.shape
    targets = np.asarray(targets, dtype=np.int64)
    onehot = np.zeros((N, C))
    onehot[np.arange(N), targets] = 1.0
    a = smoothing_weight(widths, cfg).reshape(N, 1) * np.ones((N, 1))
    hit = onehot * (1.0 - a)
    miss = (1.0 - onehot) * a
    if cfg.smoothing_form == "complement":
        logp = _safe_log(probs, hit != 0)
        rest = _safe_log(1.0 - probs, miss != 0)
    else:
        logp = rest = _safe_log(probs, (hit != 0) | (miss != 0))
    total = (logp * hit).sum(axis=1)
    if np.any(miss):
        total = total + (rest * miss).sum(axis=1)
    return -total


def tat_loss(dist, target, task, cfg: LossConfig = LossConfig()) -> Tensor:
    """Loss of one next-label distribution.

    Parameters
    ----------
    dist : NextLabelDistribution
        Distribution over the task's labels (and STOP); its ``tensor`` is
        used when present so the result is differentiable.
    target : int
        A label id listed in ``dist.labels`` (STOP is ``-1``).
    task : TaskSet or int
        The task, or directly its width.
    """
    if target not in dist.labels:
        raise TargetOutsideTask(f"target {target!r} is not among the task's labels")
    width = task if isinstance(task, (int, np.integer)) else task.width
    probs = dist.tensor if dist.tensor is not None else Tensor(dist.probs)
    probs = probs.reshape(1, -1)
    return smoothed_loss(probs, [dist.labels.index(target)], [width], cfg).sum()


def batch_loss(losses) -> Tensor:
    """Flat mean over every (prefix step, task) term."""
    losses = list(losses)
    if not losses:
        raise ValueError("empty batch")
    parts = [l.reshape(-1) for l in losses]
    flat = ad.concat(parts, axis=0) if len(parts) > 1 else parts[0]
    return flat.mean()
