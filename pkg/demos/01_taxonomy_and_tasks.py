"""
Taxonomies, lower sets and task decomposition
=============================================

A small computer-science taxonomy where ``LLMs`` sits under both ``NLP``
and ``ML``. We check that it has a single root, split it into tasks and
complete a partial label set along the hierarchy.
"""

# %%
# Build the taxonomy from (parent, child) edges. Ids follow first appearance.
from taxocomplete import decompose, expand_label_set, paths_from_label_set, verify_tat
from taxocomplete.taxonomy import load_taxonomy

edges = [
    ("CS", "NLP"), ("CS", "Database"), ("CS", "ML"),
    ("NLP", "Vocabulary"), ("NLP", "LLMs"),
    ("ML", "LLMs"), ("ML", "RL"), ("ML", "Unsupervised"),
]
t = load_taxonomy(edges)
print(t.stats().as_dict())
print("weak semilattice:", t.is_weak_semilattice(), "root:", t.name(t.root))

# %%
# Everything below both Vocabulary and ML is just the root.
low = t.lower_set(t.resolve_all(["Vocabulary", "ML"]))
print("lower set:", t.names(sorted(low)))

# %%
# One task per child of the root: the child together with everything above it.
# LLMs belongs to two tasks.
d = decompose(t)
for task in d:
    print(task.task_id, t.name(task.root), sorted(t.names(task.members)), "width", task.width)
print("valid:", bool(verify_tat(t, d)))

# %%
# A document tagged only with RL and LLMs gets the missing ancestors. When
# several minimal completions exist, a seeded generator picks one.
labels = expand_label_set(t, t.resolve_all(["RL", "LLMs"]), 0)
print("expanded:", sorted(t.names(labels)))
for path in paths_from_label_set(t, labels):
    print(" -> ".join(t.names(path)))
