"""Teacher-forced training over (path prefix, next label, relevant task) triples."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .data import TrainConfig
from .errors import DivergenceDetected
from .loss import LossConfig, batch_loss, smoothed_loss
from .model import (
    ModelParameters,
    decode_batch,
    encode_batch,
    generator_logits,
    trainable_parameters,
)
from .paths import paths_from_label_set
from .tasks import TatDecomposition, relevant_tasks
from .taxonomy import Taxonomy

__all__ = ["Example", "AdamW", "TrainResult", "training_pairs", "batch_objective", "train"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Example:
    """A tokenised document with its path-complete label-id set."""
    doc_id: str
    tokens: tuple
    labels: frozenset


def training_pairs(t: Taxonomy, d: TatDecomposition, labels, tasks=None):
    """``[(path, task_ids)]`` for every maximal path with a relevant task."""
    out = []
    for path in paths_from_label_set(t, labels):
        rel = relevant_tasks(d, path)
        if tasks is not None:
            rel = rel & tasks
        if rel:
            out.append((path, tuple(sorted(rel))))
    return out


class AdamW:
    """Adam with decoupled weight decay.

    Tensors without a gradient after the backward pass are skipped entirely
    (no moment update, no decay). A view with ``rows`` only touches those rows.
    """

    def __init__(self, views, lr, weight_decay=0.0, betas=(0.9, 0.999), eps=1e-8):
        self.views = list(views)
        self.lr, self.weight_decay, self.eps = lr, weight_decay, eps
        self.b1, self.b2 = betas
        self.state = {}

    def step(self):
        for view in self.views:
            p = view.tensor
            if p.grad is None:
                continue
            g = p.grad if view.rows is None else p.grad[view.rows]
            st = self.state.get(view.name)
            if st is None:
                st = self.state[view.name] = [np.zeros_like(g), np.zeros_like(g), 0]
            m, v, _ = st
            st[2] += 1
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            mhat = m / (1 - self.b1 ** st[2])
            vhat = v / (1 - self.b2 ** st[2])
            upd = self.lr * (mhat / (np.sqrt(vhat) + self.eps))
            if view.rows is None:
                p.data -= self.lr * self.weight_decay * p.data
                p.data -= upd
            else:
                rows = p.data[view.rows]
                rows -= self.lr * self.weight_decay * rows
                rows -= upd
                p.data[view.rows] = rows

    def zero_grad(self):
        for view in self.views:
            view.tensor.grad = None


def batch_objective(params: ModelParameters, t: Taxonomy, batch, loss_cfg: LossConfig,
                    rng=None, tasks=None):
    """Mean loss over a minibatch.

    ``batch`` is a list of ``(Example, pairs)`` with ``pairs`` from
    :func:`training_pairs`. Returns ``(loss tensor, n_terms, task ids used)``
    or ``(None, 0, ())`` when the batch has no usable triple.
    """
    seqs, by_task = [], {}
    for bi, (_, pairs) in enumerate(batch):
        for path, rel in pairs:
            rel = [k for k in rel if k in params.task_members and (tasks is None or k in tasks)]
            if not rel:
                continue
            si = len(seqs)
            seqs.append((bi, path))
            for k in rel:
                by_task.setdefault(k, []).append(si)
    if not seqs:
        return None, 0, ()

    used_docs = sorted({bi for bi, _ in seqs})
    remap = {bi: i for i, bi in enumerate(used_docs)}
    mem, mem_pad = encode_batch(params, [batch[bi][0].tokens for bi in used_docs], rng)
    doc_idx = np.array([remap[bi] for bi, _ in seqs])
    mem_s = ad.embedding_lookup(mem, doc_idx)
    pad_s = mem_pad[doc_idx]
    y, ids, ppad = decode_batch(params, mem_s, pad_s, [p for _, p in seqs], rng)
    K = ids.shape[1]

    losses, n_terms = [], 0
    for k in sorted(by_task):
        sis = np.array(by_task[k])
        col = params.member_index(k)
        C = len(col) + 1
        rows, targets = [], []
        for r, si in enumerate(sis):
            path = seqs[si][1]
            for j in range(len(path)):
                if j + 1 < len(path):
                    nxt = col.get(path[j + 1])
                    if nxt is None:
                        continue
                else:
                    nxt = C - 1
                rows.append(r * K + j)
                targets.append(nxt)
        if not rows:
            continue
        logits = generator_logits(params, k, ad.embedding_lookup(y, sis), ad.embedding_lookup(mem_s, sis),
                                  pad_s[sis], ids[sis], ppad[sis], rng)
        probs = ad.softmax(logits, axis=-1).reshape(len(sis) * K, C)
        picked = ad.embedding_lookup(probs, np.array(rows))
        losses.append(smoothed_loss(picked, targets, [params.task_widths[k]] * len(rows), loss_cfg))
        n_terms += len(rows)
    if not losses:
        return None, 0, ()
    return batch_loss(losses), n_terms, tuple(sorted(by_task))


@dataclass
class TrainResult:
    params: ModelParameters
    losses: list = field(default_factory=list)  # mean loss per epoch
    initial_loss: float | None = None
    steps: int = 0


def _batches(items, size, rng):
    order = rng.permutation(len(items))
    for start in range(0, len(order), size):
        yield [items[i] for i in order[start:start + size]]


def evaluate_loss(params, t, prepared, loss_cfg, batch_size=64, tasks=None):
    total, n = 0.0, 0
    with ad.no_grad():
        for start in range(0, len(prepared), batch_size):
            loss, terms, _ = batch_objective(params, t, prepared[start:start + batch_size], loss_cfg, tasks=tasks)
            if loss is not None:
                total += loss.item() * terms
                n += terms
    return total / n if n else float("nan")


def train(params: ModelParameters, examples, t: Taxonomy, d: TatDecomposition, cfg: TrainConfig,
          loss_cfg: LossConfig = LossConfig(), scope="all", tasks=None, epochs=None) -> TrainResult:
    """Fit ``params`` in place with AdamW on teacher-forced next-label steps.

    Parameters
    ----------
    scope : ``"all"`` or ``generator_only(task_id)``
        Which tensors are updated; see :func:`trainable_parameters`.
    tasks : set of int, optional
        Restrict training triples to these tasks.
    epochs : int, optional
        Overrides ``cfg.epochs``.
    """
    epochs = cfg.epochs if epochs is None else epochs
    views = trainable_parameters(params, scope)
    trainable = {v.name for v in views}
    frozen = [tn for n, tn in params.tensors.items() if n not in trainable]
    for tensor in frozen:
        tensor.requires_grad = False
    opt = AdamW(views, cfg.learning_rate, cfg.weight_decay, (cfg.beta1, cfg.beta2), cfg.adam_eps)
    rng = np.random.default_rng(cfg.seed)
    drop_rng = np.random.default_rng([cfg.seed, 1]) if params.config.dropout > 0 else None
    prepared = [(ex, training_pairs(t, d, ex.labels, tasks)) for ex in examples]
    prepared = [p for p in prepared if p[1]]
    result = TrainResult(params)
    try:
        result.initial_loss = evaluate_loss(params, t, prepared, loss_cfg, tasks=tasks)
        for epoch in range(epochs):
            total, n = 0.0, 0
            for batch in _batches(prepared, cfg.batch_size, rng):
                loss, terms, _ = batch_objective(params, t, batch, loss_cfg, drop_rng, tasks)
                if loss is None:
                    continue
                value = loss.item()
                if not np.isfinite(value):
                    raise DivergenceDetected(f"non-finite loss {value} at epoch {epoch}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                opt.zero_grad()
                result.steps += 1
                total += value * terms
                n += terms
            result.losses.append(total / n if n else float("nan"))
            log.info("epoch %d loss %.6f", epoch + 1, result.losses[-1])
    finally:
        for tensor in frozen:
            tensor.requires_grad = True
    return result
