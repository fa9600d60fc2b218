"""
Adding a task after training
============================

One branch of the taxonomy is withheld while the shared network trains.
Afterwards a fresh generator is attached for it and only that generator is
fitted, so every other parameter stays exactly as it was.
"""

# %%
import numpy as np

from taxocomplete.data import RunConfig, SyntheticSpec, build_vocabulary
from taxocomplete.experiment import few_shot_run, prepare_examples, split_train_test
from taxocomplete.synthetic import generate_synthetic
from taxocomplete.tasks import decompose

t, docs = generate_synthetic(SyntheticSpec(depth=2, branching=3, docs_per_task=60, vocab_size=40), seed=0)
d = decompose(t)
cfg = RunConfig.default().updated("train", learning_rate=1e-3, epochs=30, finetune_epochs=60)
cfg = cfg.updated("model", d_text=32, d_label=32, n_encoders=1, n_decoders=1, n_heads=4, max_text_len=32)
train_docs, test_docs = split_train_test(docs, 0.2, seed=0)
vocab = build_vocabulary([x.text for x in train_docs], min_freq=1)
train_ex = prepare_examples(train_docs, t, vocab, 32, seed=0)
test_ex = prepare_examples(test_docs, t, vocab, 32, seed=1)

# %%
held_out = 2
res = few_shot_run(train_ex, test_ex, t, d, held_out, cfg, vocab, ks=(1,))
print("withheld task rooted at", t.name(d.task(held_out).root))
print("phase one saw", res.n_phase1_docs, "documents; fine-tuning saw", res.n_finetune_docs)
print("new-task P@1 before/after:", res.nt_before[("P", 1)], res.nt_after[("P", 1)])

# %%
# Compare every tensor outside the new generator with the phase-one copy.
members = d.task(held_out).members
untouched = []
for name, tensor in res.phase1.tensors.items():
    a, b = tensor.data, res.params[name].data
    if name == "label_embedding":
        rows = [r for r in range(a.shape[0]) if r not in members]
        a, b = a[rows], b[rows]
    untouched.append(np.array_equal(a, b))
print("shared tensors unchanged:", all(untouched))
