"""Label-completion and few-shot protocols, ablation, and run manifests."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .data import RunConfig, Vocabulary, tokenize
from .decode import BeamConfig, LabelScores, aggregate, beam_extend, rank
from .errors import UnknownTask
from .metrics import EvalSample, MetricReport, evaluate_corpus
from .model import (
    ModelParameters,
    add_generator,
    encode_text,
    generator_only,
    init_parameters,
    next_label_probs,
)
from .paths import expand_label_set, inference_prefixes, is_path_complete
from .tasks import TatDecomposition
from .taxonomy import Taxonomy
from .training import Example, TrainResult, train

__all__ = [
    "XmlcoItem",
    "prepare_examples",
    "split_train_test",
    "make_xmlco_split",
    "complete",
    "complete_many",
    "evaluate_xmlco",
    "chance_precision_at_1",
    "random_ranker_precision_at_1",
    "FewShotResult",
    "few_shot_run",
    "AblationResult",
    "ablation_run",
    "build_model",
    "manifest",
    "source_revision",
    "file_digest",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class XmlcoItem:
    example: Example
    known: frozenset
    targets: frozenset


def prepare_examples(docs, t: Taxonomy, vocab: Vocabulary, max_text_len: int, seed: int = 0):
    """Tokenise documents and complete their label sets along the taxonomy.

    One generator seeded with ``seed`` is threaded through all documents in
    order, so expansion tie-breaks are reproducible.
    """
    rng = np.random.default_rng(seed)
    out = []
    for doc in docs:
        labels = t.resolve_all(doc.labels)
        labels = expand_label_set(t, labels, rng) if labels else labels
        out.append(Example(doc.doc_id, tuple(tokenize(doc.text, vocab, max_text_len)), labels))
    return out


def split_train_test(docs, test_fraction: float, seed: int = 0):
    rng = np.random.default_rng([seed, 7])
    order = rng.permutation(len(docs))
    n_test = int(round(len(docs) * test_fraction))
    test_idx = set(order[:n_test].tolist())
    train = [d for i, d in enumerate(docs) if i not in test_idx]
    test = [d for i, d in enumerate(docs) if i in test_idx]
    return train, test


def make_xmlco_split(examples, t: Taxonomy, d: TatDecomposition | None = None):
    """Keep only the root and depth-one labels as known; the rest are targets."""
    general = frozenset({t.root, *t.children(t.root)})
    out = []
    for ex in examples:
        known = ex.labels & general
        out.append(XmlcoItem(ex, known, ex.labels - known))
    return out


def complete(params: ModelParameters, t: Taxonomy, d: TatDecomposition, tokens, known,
             beam: BeamConfig = BeamConfig(), memory=None):
    """Score candidate labels for one document given its known labels.

    Returns ``(LabelScores, per-prefix beam results)``. Known labels that are
    not path complete are expanded first. Prefix/task pairs whose generator
    is absent from ``params`` are skipped.
    """
    known = t.resolve_all(known) or frozenset({t.root})
    if not is_path_complete(t, known):
        known = expand_label_set(t, known, 0)
    with ad.no_grad():
        mem = encode_text(params, tokens) if memory is None else memory
    results = []
    for prefix, task_id in inference_prefixes(t, d, known):
        if task_id not in params.task_members:
            continue

        def step(paths, task_id=task_id):
            return next_label_probs(params, mem, paths, task_id)

        results.append((prefix, task_id, beam_extend(step, t, d.task(task_id), prefix, beam)))
    return aggregate(results, known, beam.score_interior), results


_WORKER = {}


def _worker_init(params, t, d, beam):
    _WORKER.update(params=params, t=t, d=d, beam=beam)


def _worker_complete(job):
    tokens, known = job
    w = _WORKER
    return complete(w["params"], w["t"], w["d"], tokens, known, w["beam"])


def complete_many(params, t, d, jobs, beam=BeamConfig(), workers=1):
    """:func:`complete` over ``[(tokens, known)]``, optionally in worker processes.

    Results come back in input order, so the output does not depend on
    ``workers``.
    """
    jobs = list(jobs)
    if workers <= 1 or len(jobs) < 2:
        return [complete(params, t, d, tok, known, beam) for tok, known in jobs]
    import multiprocessing as mp
    ctx = mp.get_context("fork")
    with ctx.Pool(workers, _worker_init, (params, t, d, beam)) as pool:
        return pool.map(_worker_complete, jobs, chunksize=max(1, len(jobs) // (4 * workers)))


def chance_precision_at_1(items, t: Taxonomy) -> float:
    """Expected P@1 of a uniform random ranking over the unknown labels."""
    vals = [len(it.targets) / (len(t) - len(it.known)) for it in items if it.targets]
    return float(np.mean(vals)) if vals else float("nan")


def random_ranker_precision_at_1(items, t: Taxonomy, seed=0, repeats=20) -> float:
    """Empirical P@1 of seeded uniform random rankings over the unknown labels."""
    rng = np.random.default_rng([seed, 11])
    hits, n = 0, 0
    for _ in range(repeats):
        for it in items:
            if not it.targets:
                continue
            cands = [v for v in range(len(t)) if v not in it.known]
            hits += cands[int(rng.integers(len(cands)))] in it.targets
            n += 1
    return hits / n if n else float("nan")


def _sample_tasks(d, targets):
    out = set()
    for v in targets:
        out |= d.tasks_of(v)
    return frozenset(out)


def evaluate_xmlco(params, t, d, items, ks=(1, 3, 5), beam=BeamConfig(), restrict_to=None,
                   workers=1):
    """Run completion on each item with targets and average P@k / NDCG@k.

    With ``restrict_to`` (a label set), both rankings and gold targets are
    limited to those labels and items without such targets are skipped.
    Returns ``(MetricReport, rankings)`` where rankings holds, per evaluated
    document, ``(doc_id, [(label, score)])``.
    """
    samples, rankings = [], []
    depth = max(ks) if ks else 1
    todo = []
    for it in items:
        targets = it.targets if restrict_to is None else it.targets & restrict_to
        if targets:
            todo.append((it, targets))
    done = complete_many(params, t, d, [(it.example.tokens, it.known) for it, _ in todo], beam, workers)
    for (it, targets), (scores, _) in zip(todo, done):
        if restrict_to is not None:
            scores = LabelScores({k: v for k, v in scores.scores.items() if k in restrict_to})
        order = rank(scores, max(depth, len(scores.scores)) if scores.scores else 1)
        rankings.append((it.example.doc_id, [(v, scores.scores[v]) for v in order]))
        samples.append(EvalSample(order, targets, _sample_tasks(d, targets), it.example.doc_id))
    return evaluate_corpus(samples, ks, skip_empty=True), rankings


def build_model(t, d, vocab, cfg: RunConfig, tasks=None, embeddings=None):
    mcfg = replace(cfg.model, vocab_size=len(vocab), label_smoothing=cfg.loss.epsilon)
    rows = embeddings.rows_for(vocab) if embeddings is not None else None
    return init_parameters(mcfg, t, d, cfg.train.seed, rows, tasks)


# -- few-shot --------------------------------------------------------------

@dataclass
class FewShotResult:
    task_id: int
    phase1: ModelParameters
    params: ModelParameters
    nt_before: MetricReport
    nt_after: MetricReport
    global_metrics: MetricReport
    phase1_result: TrainResult
    finetune_result: TrainResult
    n_phase1_docs: int = 0
    n_finetune_docs: int = 0


def withhold_task(examples, t: Taxonomy, d: TatDecomposition, task_id: int):
    """Drop every label of the task; drop documents left with only the root."""
    members = d.task(task_id).members
    out = []
    for ex in examples:
        labels = ex.labels - members
        if labels - {t.root}:
            out.append(Example(ex.doc_id, ex.tokens, labels))
    return out


def few_shot_run(train_examples, test_examples, t, d, held_out: int, cfg: RunConfig, vocab,
                 ks=(1, 3, 5)) -> FewShotResult:
    """Train without one task, then fit only that task's new generator.

    Phase 1 trains every shared tensor and the other generators on the
    corpus with the task withheld. Phase 2 adds the task's generator and
    fine-tunes it (and its labels' embedding rows) on the training
    documents carrying the task's labels. New-task metrics restrict both
    ranking and gold to the task's labels.
    """
    if not 0 <= held_out < len(d):
        raise UnknownTask(held_out)
    members = d.task(held_out).members
    phase1_docs = withhold_task(train_examples, t, d, held_out)
    params = build_model(t, d, vocab, cfg, tasks=[k for k in range(len(d)) if k != held_out])
    r1 = train(params, phase1_docs, t, d, cfg.train, cfg.loss)
    phase1 = params.copy()

    add_generator(params, d, held_out)
    items = make_xmlco_split(test_examples, t, d)
    nt_before, _ = evaluate_xmlco(params, t, d, items, ks, cfg.decode, restrict_to=members)
    ft_docs = [ex for ex in train_examples if ex.labels & members]
    r2 = train(params, ft_docs, t, d, cfg.train, cfg.loss, scope=generator_only(held_out),
               tasks=frozenset({held_out}), epochs=cfg.train.finetune_epochs)
    nt_after, _ = evaluate_xmlco(params, t, d, items, ks, cfg.decode, restrict_to=members)
    global_metrics, _ = evaluate_xmlco(params, t, d, items, ks, cfg.decode)
    return FewShotResult(held_out, phase1, params, nt_before, nt_after, global_metrics,
                         r1, r2, len(phase1_docs), len(ft_docs))


# -- ablation --------------------------------------------------------------

@dataclass
class AblationResult:
    adaptive: MetricReport
    plain: MetricReport
    runs: dict = field(default_factory=dict)

    def rows(self):
        out = []
        for key in sorted(self.adaptive.values):
            a = self.adaptive.values[key]
            p = self.plain.values.get(key)
            if p is None:
                continue
            diff = a - p
            direction = "adaptive>plain" if diff > 0 else "adaptive<plain" if diff < 0 else "tie"
            out.append({"metric": key[0], "k": key[1], "adaptive": a, "plain": p,
                        "difference": diff, "direction": direction})
        return out

    def to_json(self):
        return {"rows": self.rows(), "adaptive": self.adaptive.to_json(), "plain": self.plain.to_json()}


def ablation_run(train_examples, test_examples, t, d, cfg: RunConfig, vocab, ks=(1, 3, 5)):
    """Two runs that differ only in whether the smoothing weight adapts to task width."""
    reports, runs = {}, {}
    items = make_xmlco_split(test_examples, t, d)
    for name, adaptive in (("adaptive", True), ("plain", False)):
        run_cfg = cfg.updated("loss", adaptive=adaptive)
        params = build_model(t, d, vocab, run_cfg)
        result = train(params, train_examples, t, d, run_cfg.train, run_cfg.loss)
        reports[name], _ = evaluate_xmlco(params, t, d, items, ks, run_cfg.decode)
        runs[name] = result
    return AblationResult(reports["adaptive"], reports["plain"], runs)


# -- manifests -------------------------------------------------------------

def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def source_revision() -> str:
    """Content hash of the package sources, stable across checkouts."""
    h = hashlib.sha256()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return "src-" + h.hexdigest()[:12]


def manifest(command: str, cfg: RunConfig, inputs: dict, decomposition: TatDecomposition | None = None,
             extra: dict | None = None) -> dict:
    out = {
        "command": command,
        "revision": source_revision(),
        "seed": cfg.train.seed,
        "config": cfg.to_dict(),
        "inputs": {k: {"path": str(v), "sha256": file_digest(v)} for k, v in sorted(inputs.items()) if v},
        "loss_reduction": "flat mean over (prefix step, task) terms",
        "beam_width": cfg.decode.beam_width,
    }
    if decomposition is not None:
        out["decomposition"] = decomposition.digest()
    if extra:
        out.update(extra)
    return out


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
