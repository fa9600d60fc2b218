"""Seeded synthetic taxonomies and keyword-signal corpora."""
from __future__ import annotations

import numpy as np

from .data import Document, SyntheticSpec
from .taxonomy import Taxonomy, load_taxonomy

__all__ = ["generate_synthetic", "synthetic_taxonomy"]

_LETTERS = np.array(list("abcdefghijklmnopqrstuvwxyz"))


def _words(rng, n, taken):
    out = []
    while len(out) < n:
        w = "".join(rng.choice(_LETTERS, size=int(rng.integers(5, 9))))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def synthetic_taxonomy(spec: SyntheticSpec, rng) -> Taxonomy:
    """Graded DAG: ``branching`` children per node for ``depth`` levels.

    Below depth one, each label gets a second parent from a different
    depth-one subtree with probability ``multi_parent_prob``. Edges only join
    consecutive levels, so no edge is transitively redundant.
    """
    levels = [["root"]]
    edges = []
    top_of = {}
    for depth in range(1, spec.depth + 1):
        cur = []
        for parent in levels[-1]:
            for j in range(spec.branching):
                name = f"{parent}.{j}" if depth > 1 else f"c{j}"
                cur.append(name)
                edges.append((parent, name))
                top_of[name] = name if depth == 1 else top_of[parent]
        if depth >= 2 and spec.multi_parent_prob > 0:
            prev = levels[-1]
            for name in cur:
                if rng.random() < spec.multi_parent_prob:
                    others = [p for p in prev if top_of[p] != top_of[name]]
                    if others:
                        edges.append((others[int(rng.integers(len(others)))], name))
        levels.append(cur)
    return load_taxonomy(edges)


def _descend(t: Taxonomy, start, rng, stop_early_prob):
    path = [start]
    while True:
        kids = t.children(path[-1])
        if not kids or (len(path) > 1 and rng.random() < stop_early_prob):
            return path
        path.append(kids[int(rng.integers(len(kids)))])


def generate_synthetic(spec: SyntheticSpec, seed: int = 0):
    """Return ``(taxonomy, documents)``.

    Every non-root label owns two keywords. A document follows one random
    downward path from a depth-one label (and, with ``extra_path_prob``, a
    second one); its text repeats ``signal_strength`` keywords per label on
    its paths plus ``noise_words`` background words, shuffled. Label sets
    are path complete by construction.
    """
    rng = np.random.default_rng(seed)
    t = synthetic_taxonomy(spec, rng)
    taken = set()
    keywords = {v: _words(rng, 2, taken) for v in range(len(t)) if v != t.root}
    noise = _words(rng, spec.vocab_size, taken)
    tops = sorted(t.children(t.root))
    docs = []
    for top in tops:
        for _ in range(spec.docs_per_task):
            paths = [_descend(t, top, rng, spec.stop_early_prob)]
            if rng.random() < spec.extra_path_prob:
                other = tops[int(rng.integers(len(tops)))]
                paths.append(_descend(t, other, rng, spec.stop_early_prob))
            labels = {t.root}
            words = []
            for p in paths:
                for v in p:
                    if v not in labels:
                        words.extend(rng.choice(keywords[v], size=spec.signal_strength))
                    labels.add(v)
            words.extend(rng.choice(noise, size=spec.noise_words))
            words = [str(w) for w in rng.permutation(np.array(words, dtype=object))]
            docs.append((" ".join(words), sorted(labels)))
    order = rng.permutation(len(docs))
    out = []
    for i, j in enumerate(order):
        text, labels = docs[j]
        out.append(Document(f"doc{i:05d}", text, tuple(t.names(labels))))
    return t, out
