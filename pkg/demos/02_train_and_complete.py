"""
Training on a synthetic corpus and completing label sets
========================================================

Documents are generated from keywords tied to their labels. We train a
small model, hide every label deeper than the first level and ask the
model to fill them back in.
"""

# %%
import time

from taxocomplete.data import RunConfig, SyntheticSpec, build_vocabulary
from taxocomplete.experiment import (
    build_model,
    complete,
    evaluate_xmlco,
    make_xmlco_split,
    prepare_examples,
    random_ranker_precision_at_1,
    split_train_test,
)
from taxocomplete.synthetic import generate_synthetic
from taxocomplete.tasks import decompose
from taxocomplete.training import train

t, docs = generate_synthetic(SyntheticSpec(depth=2, branching=3, docs_per_task=30, vocab_size=40), seed=0)
d = decompose(t)
print(len(t), "labels,", len(d), "tasks,", len(docs), "documents")
print(docs[0])

# %%
# A desk-sized model. The learning rate is raised from the default because
# the corpus is tiny and we only run a few dozen epochs.
cfg = RunConfig.default().updated("train", learning_rate=1e-3, epochs=40)
cfg = cfg.updated("model", d_text=32, d_label=32, n_encoders=1, n_decoders=1, n_heads=4, max_text_len=32)
train_docs, test_docs = split_train_test(docs, 0.2, seed=0)
vocab = build_vocabulary([x.text for x in train_docs], min_freq=1)
train_ex = prepare_examples(train_docs, t, vocab, 32, seed=0)
test_ex = prepare_examples(test_docs, t, vocab, 32, seed=1)

params = build_model(t, d, vocab, cfg)
start = time.perf_counter()
result = train(params, train_ex, t, d, cfg.train, cfg.loss)
print(f"loss {result.initial_loss:.3f} -> {result.losses[-1]:.3f} in {time.perf_counter() - start:.1f}s")

# %%
# Completion: keep the root and first-level labels, rank the rest.
items = make_xmlco_split(test_ex, t, d)
item = items[0]
scores, per_prefix = complete(params, t, d, item.example.tokens, item.known)
best = sorted(scores.scores.items(), key=lambda kv: -kv[1])[:3]
print("known:", t.names(sorted(item.known)), "hidden:", t.names(sorted(item.targets)))
print("top guesses:", [(t.name(v), round(s, 3)) for v, s in best])

# %%
# Corpus-level precision against a random ranker.
report, _ = evaluate_xmlco(params, t, d, items, ks=(1, 2))
print(report.values)
print("random ranker P@1:", round(random_ranker_precision_at_1(items, t), 3))
