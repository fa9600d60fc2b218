"""Command line front end: one subcommand per pipeline stage.

Exit codes: 0 on success, 1 when an input fails validation (a JSON error
record goes to stderr), 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import statistics
import sys
from pathlib import Path

import numpy as np

from . import checkpoint
from .data import (
    RunConfig,
    Vocabulary,
    build_vocabulary,
    load_config,
    load_corpus,
    load_embeddings,
    tokenize,
    write_corpus,
)
from .decode import rank
from .errors import CheckpointError, TaxoCompleteError, UnknownTask
from .experiment import (
    ablation_run,
    build_model,
    complete_many,
    evaluate_xmlco,
    few_shot_run,
    make_xmlco_split,
    manifest,
    prepare_examples,
    split_train_test,
    write_json,
)
from .model import ModelParameters
from .paths import expand_label_set
from .synthetic import generate_synthetic
from .tasks import decompose
from .taxonomy import Taxonomy, read_taxonomy
from .training import train

log = logging.getLogger("taxocomplete")

ARTIFACT_COMMANDS = {"expand-labels", "synth", "train", "complete", "evaluate", "few-shot", "ablate"}


class UsageError(Exception):
    pass


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="overrides [train] seed")
    common.add_argument("--config", default=None, help="INI config file")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="parallel evaluation workers")
    common.add_argument("-v", "--verbose", action="store_true")

    tax = argparse.ArgumentParser(add_help=False)
    tax.add_argument("--taxonomy", required=True)
    tax.add_argument("--add-synthetic-root", action="store_true",
                     help="join several minimal labels under a new __ROOT__ label")

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--embeddings", default=None)
    run.add_argument("--beam-width", type=int, default=None)
    run.add_argument("--adaptive-loss", choices=("on", "off"), default=None)

    p = argparse.ArgumentParser(prog="taxocomplete", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("validate-taxonomy", parents=[common, tax], help="check and summarise a taxonomy")
    s = sub.add_parser("decompose", parents=[common, tax], help="task decomposition report")
    s.add_argument("--corpus", default=None)
    s = sub.add_parser("expand-labels", parents=[common, tax], help="complete label sets along paths")
    s.add_argument("--corpus", required=True)
    sub.add_parser("synth", parents=[common], help="write a synthetic taxonomy and corpus")
    s = sub.add_parser("train", parents=[common, tax, run], help="train a model")
    s.add_argument("--corpus", required=True)
    for name, helptext in (("complete", "rank missing labels per document"),
                           ("evaluate", "completion metrics on a corpus")):
        s = sub.add_parser(name, parents=[common, run], help=helptext)
        s.add_argument("--model", required=True, help="checkpoint written by 'train'")
        s.add_argument("--corpus", required=True)
        s.add_argument("--k", type=int, default=5)
        if name == "complete":
            s.add_argument("--explain", action="store_true", help="include contributing paths")
    s = sub.add_parser("few-shot", parents=[common, tax, run], help="withheld-task protocol")
    s.add_argument("--corpus", required=True)
    s.add_argument("--task", required=True, help="task id or the name of its root label")
    s.add_argument("--k", type=int, default=5)
    s = sub.add_parser("ablate", parents=[common, tax, run], help="adaptive vs plain smoothing")
    s.add_argument("--corpus", required=True)
    s.add_argument("--k", type=int, default=5)
    return p


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.updated("train", seed=args.seed)
    if getattr(args, "beam_width", None) is not None:
        cfg = cfg.updated("decode", beam_width=args.beam_width)
    if getattr(args, "adaptive_loss", None) is not None:
        cfg = cfg.updated("loss", adaptive=args.adaptive_loss == "on")
    return cfg


def _ks(k):
    if k < 1:
        raise UsageError("--k must be at least 1")
    return tuple(sorted({x for x in (1, 3, 5) if x <= k} | {k}))


def _taxonomy(args) -> Taxonomy:
    return read_taxonomy(args.taxonomy, add_synthetic_root=args.add_synthetic_root)


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _start(args, cfg, inputs, d=None, extra=None):
    """Create --out and write the manifest; returns the output directory."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "manifest.json", manifest(args.command, cfg, inputs, d, extra))
    return out


def _write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _save_model(path, params: ModelParameters, t: Taxonomy, d, vocab: Vocabulary, cfg, steps):
    meta = params.meta()
    meta.update({
        "labels": [lab.name for lab in t.labels],
        "edges": sorted(list(e) for e in t.cover_edges),
        "vocab": list(vocab.tokens),
        "decomposition": d.digest(),
        "run_config": cfg.to_dict(),
        "training_step": steps,
    })
    checkpoint.save(path, params.to_arrays(), meta)


def _load_model(path):
    arrays, meta = checkpoint.load(path)
    if meta is None:
        raise CheckpointError(f"{path}: missing sidecar {checkpoint.sidecar_path(path)}")
    t = Taxonomy(meta["labels"], [tuple(e) for e in meta["edges"]])
    d = decompose(t)
    if d.digest() != meta["decomposition"]:
        raise CheckpointError("decomposition digest does not match the checkpoint")
    return ModelParameters.from_arrays(arrays, meta), t, d, Vocabulary(tuple(meta["vocab"]))


def _task_summary(t, d, docs=None):
    tasks = []
    counts = None
    if docs is not None:
        counts = [0] * len(d)
        for doc in docs:
            hit = set()
            for v in t.resolve_all(doc.labels):
                hit |= d.tasks_of(v)
            for k in hit:
                counts[k] += 1
    for task in d:
        row = {"task_id": task.task_id, "root": t.name(task.root),
               "n_members": len(task), "width": task.width}
        if counts is not None:
            row["n_docs"] = counts[task.task_id]
        tasks.append(row)
    summary = {"n_tats": len(d),
               "avg_tat_width": float(np.mean([task.width for task in d])) if len(d) else 0.0}
    if counts is not None:
        summary["median_docs_per_tat"] = float(statistics.median(counts)) if counts else 0.0
    return {"tasks": tasks, "summary": summary}


# -- commands --------------------------------------------------------------

def cmd_validate_taxonomy(args, cfg):
    t = _taxonomy(args)
    d = decompose(t)
    report = {**t.stats().as_dict(), "n_tats": len(d), "weak_semilattice": t.is_weak_semilattice()}
    if args.out:
        out = _start(args, cfg, {"taxonomy": args.taxonomy}, d)
        write_json(out / "taxonomy_stats.json", report)
    _emit(report)


def cmd_decompose(args, cfg):
    t = _taxonomy(args)
    d = decompose(t)
    docs = load_corpus(args.corpus, t) if args.corpus else None
    report = _task_summary(t, d, docs)
    report["digest"] = d.digest()
    if args.out:
        out = _start(args, cfg, {"taxonomy": args.taxonomy, "corpus": args.corpus}, d)
        write_json(out / "decomposition.json", report)
    _emit(report)


def cmd_expand_labels(args, cfg):
    t = _taxonomy(args)
    docs = load_corpus(args.corpus, t)
    out = _start(args, cfg, {"taxonomy": args.taxonomy, "corpus": args.corpus})
    rng = np.random.default_rng(cfg.train.seed)
    expanded, added = [], []
    for doc in docs:
        before = t.resolve_all(doc.labels)
        after = expand_label_set(t, before, rng) if before else before
        new = sorted(after - before)
        expanded.append(type(doc)(doc.doc_id, doc.text, tuple(t.names(sorted(after)))))
        added.append({"doc_id": doc.doc_id, "added": t.names(new)})
    write_corpus(out / "expanded.jsonl", expanded)
    report = {"n_documents": len(docs), "n_expanded": sum(bool(a["added"]) for a in added),
              "labels_added": sum(len(a["added"]) for a in added), "documents": added}
    write_json(out / "expansion_report.json", report)
    _emit({k: v for k, v in report.items() if k != "documents"})


def cmd_synth(args, cfg):
    seed = cfg.train.seed
    out = _start(args, cfg, {})
    t, docs = generate_synthetic(cfg.synth, seed)
    (out / "taxonomy.tsv").write_text(t.to_tsv(), encoding="utf-8")
    write_corpus(out / "corpus.jsonl", docs)
    tr, te = split_train_test(docs, cfg.data.test_fraction, seed)
    write_corpus(out / "train.jsonl", tr)
    write_corpus(out / "test.jsonl", te)
    _emit({"n_labels": len(t), "n_documents": len(docs), "n_train": len(tr), "n_test": len(te),
           "n_tats": len(decompose(t))})


def _prepare(args, cfg):
    t = _taxonomy(args)
    d = decompose(t)
    docs = load_corpus(args.corpus, t)
    return t, d, docs


def _embeddings(args, cfg):
    if not getattr(args, "embeddings", None):
        return None
    return load_embeddings(args.embeddings, cfg.model.d_text)


def cmd_train(args, cfg):
    t, d, docs = _prepare(args, cfg)
    out = _start(args, cfg, {"taxonomy": args.taxonomy, "corpus": args.corpus,
                             "embeddings": args.embeddings}, d)
    vocab = build_vocabulary([doc.text for doc in docs], cfg.data.min_freq)
    table = _embeddings(args, cfg)
    examples = prepare_examples(docs, t, vocab, cfg.model.max_text_len, cfg.train.seed)
    params = build_model(t, d, vocab, cfg, embeddings=table)
    result = train(params, examples, t, d, cfg.train, cfg.loss)
    _save_model(out / "model.ckpt", params, t, d, vocab, cfg, result.steps)
    curve = {"initial_loss": result.initial_loss, "epoch_losses": result.losses, "steps": result.steps}
    write_json(out / "loss_curve.json", curve)
    info = {"n_documents": len(docs), "vocab_size": len(vocab), "steps": result.steps,
            "initial_loss": result.initial_loss,
            "final_loss": result.losses[-1] if result.losses else None}
    if table is not None:
        info["embedding_coverage"] = table.coverage(vocab)
    _emit(info)


def _ranking_row(t, doc_id, scores, k, provenance=None):
    row = {"doc_id": doc_id,
           "ranking": [{"label": t.name(v), "score": scores.scores[v]} for v in rank(scores, k)]}
    if provenance is not None:
        row["provenance"] = provenance
    return row


def cmd_complete(args, cfg):
    params, t, d, vocab = _load_model(args.model)
    docs = load_corpus(args.corpus, t)
    out = _start(args, cfg, {"model": args.model, "corpus": args.corpus}, d)
    if args.k < 1:
        raise UsageError("--k must be at least 1")
    jobs = [(tuple(tokenize(doc.text, vocab, params.config.max_text_len)), t.resolve_all(doc.labels))
            for doc in docs]
    results = complete_many(params, t, d, jobs, cfg.decode, args.jobs)
    rows = []
    for doc, (scores, per_prefix) in zip(docs, results):
        prov = None
        if args.explain:
            prov = [{"prefix": t.names(prefix), "task": task_id,
                     "paths": [{"path": t.names(sp.path), "prob": sp.prob} for sp in paths]}
                    for prefix, task_id, paths in per_prefix]
        rows.append(_ranking_row(t, doc.doc_id, scores, args.k, prov))
    _write_jsonl(out / "rankings.jsonl", rows)
    sys.stdout.write("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))


def cmd_evaluate(args, cfg):
    params, t, d, vocab = _load_model(args.model)
    docs = load_corpus(args.corpus, t)
    out = _start(args, cfg, {"model": args.model, "corpus": args.corpus}, d)
    ks = _ks(args.k)
    examples = prepare_examples(docs, t, vocab, params.config.max_text_len, cfg.train.seed)
    items = make_xmlco_split(examples, t, d)
    report, rankings = evaluate_xmlco(params, t, d, items, ks, cfg.decode, workers=args.jobs)
    write_json(out / "metrics.json", report.to_json())
    (out / "metrics.csv").write_text(report.to_csv())
    _write_jsonl(out / "rankings.jsonl",
                 [{"doc_id": doc_id, "ranking": [{"label": t.name(v), "score": s} for v, s in r[:args.k]]}
                  for doc_id, r in rankings])
    _emit(report.to_json()["metrics"])


def _resolve_task(t, d, spec):
    try:
        task_id = int(spec)
    except ValueError:
        if spec not in t:
            raise UnknownTask(spec) from None
        task_id = d.task_of_root(t.id(spec))
    d.task(task_id)
    return task_id


def _split_examples(args, cfg, t, docs):
    train_docs, test_docs = split_train_test(docs, cfg.data.test_fraction, cfg.train.seed)
    vocab = build_vocabulary([doc.text for doc in train_docs], cfg.data.min_freq)
    tr = prepare_examples(train_docs, t, vocab, cfg.model.max_text_len, cfg.train.seed)
    te = prepare_examples(test_docs, t, vocab, cfg.model.max_text_len, cfg.train.seed + 1)
    return tr, te, vocab


def cmd_few_shot(args, cfg):
    t, d, docs = _prepare(args, cfg)
    task_id = _resolve_task(t, d, args.task)
    out = _start(args, cfg, {"taxonomy": args.taxonomy, "corpus": args.corpus}, d,
                 {"held_out_task": task_id})
    tr, te, vocab = _split_examples(args, cfg, t, docs)
    res = few_shot_run(tr, te, t, d, task_id, cfg, vocab, _ks(args.k))
    _save_model(out / "phase1.ckpt", res.phase1, t, d, vocab, cfg, res.phase1_result.steps)
    _save_model(out / "model.ckpt", res.params, t, d, vocab, cfg,
                res.phase1_result.steps + res.finetune_result.steps)
    report = {"task": task_id, "root": t.name(d.task(task_id).root),
              "nt_before": res.nt_before.to_json(), "nt": res.nt_after.to_json(),
              "global": res.global_metrics.to_json(),
              "n_phase1_docs": res.n_phase1_docs, "n_finetune_docs": res.n_finetune_docs}
    write_json(out / "few_shot.json", report)
    _emit({"nt_before": report["nt_before"]["metrics"], "nt": report["nt"]["metrics"],
           "global": report["global"]["metrics"]})


def cmd_ablate(args, cfg):
    t, d, docs = _prepare(args, cfg)
    out = _start(args, cfg, {"taxonomy": args.taxonomy, "corpus": args.corpus}, d)
    tr, te, vocab = _split_examples(args, cfg, t, docs)
    res = ablation_run(tr, te, t, d, cfg, vocab, _ks(args.k))
    write_json(out / "ablation.json", res.to_json())
    rows = res.rows()
    lines = ["metric,k,adaptive,plain,difference,direction"]
    lines += [f"{r['metric']},{r['k']},{r['adaptive']!r},{r['plain']!r},{r['difference']!r},{r['direction']}"
              for r in rows]
    (out / "ablation.csv").write_text("\n".join(lines) + "\n")
    _emit(rows)


COMMANDS = {
    "validate-taxonomy": cmd_validate_taxonomy,
    "decompose": cmd_decompose,
    "expand-labels": cmd_expand_labels,
    "synth": cmd_synth,
    "train": cmd_train,
    "complete": cmd_complete,
    "evaluate": cmd_evaluate,
    "few-shot": cmd_few_shot,
    "ablate": cmd_ablate,
}


def _error_record(exc):
    rec = {"error": type(exc).__name__, "module": getattr(exc, "module", "io"),
           "message": Exception.__str__(exc) if isinstance(exc, TaxoCompleteError) else str(exc)}
    for attr in ("cycle", "roots", "label", "doc_id", "line", "task_id"):
        val = getattr(exc, attr, None)
        if val is not None:
            rec[attr] = val
    return rec


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ARTIFACT_COMMANDS and not args.out:
            raise UsageError(f"{args.command} requires --out")
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        cfg = _config(args)
        COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"taxocomplete: error: {exc}", file=sys.stderr)
        return 2
    except (TaxoCompleteError, OSError) as exc:
        print(json.dumps(_error_record(exc), sort_keys=True, default=str), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
