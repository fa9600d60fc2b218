"""Conversions between label sets and root-anchored taxonomy paths."""
from __future__ import annotations

import logging
from itertools import combinations

import numpy as np

from .errors import NotPathComplete
from .tasks import TatDecomposition, relevant_tasks
from .taxonomy import Taxonomy

__all__ = [
    "is_valid_path",
    "is_path_complete",
    "orphans",
    "expand_label_set",
    "paths_from_label_set",
    "inference_prefixes",
]

log = logging.getLogger(__name__)

# subsets examined by the exact expansion search before falling back to greedy
EXACT_SEARCH_BUDGET = 200_000


def is_valid_path(t: Taxonomy, path) -> bool:
    path = tuple(path)
    if not path or path[0] != t.root or len(set(path)) != len(path):
        return False
    return all(b in t.children(a) for a, b in zip(path, path[1:]))


def orphans(t: Taxonomy, labels) -> list:
    """Labels of ``labels`` lacking a parent inside the set (root excluded)."""
    labels = frozenset(labels)
    root = t.root
    return sorted(x for x in labels if x != root and not any(p in labels for p in t.parents(x)))


def is_path_complete(t: Taxonomy, labels) -> bool:
    labels = frozenset(labels)
    if not labels:
        return True
    return t.root in labels and not orphans(t, labels)


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def expand_label_set(t: Taxonomy, labels, rng_seed=0) -> frozenset:
    """Add the fewest ancestor labels that make ``labels`` path complete.

    The search is exact: candidate additions are drawn from the strict
    ancestors of the given labels, smallest subsets first, and one of the
    minimum-size completions is picked with the seeded generator. Inputs
    whose ancestor pool is too large for exhaustive search fall back to a
    per-label shortest-path completion.

    Parameters
    ----------
    t : Taxonomy
    labels : iterable of label ids or names
    rng_seed : int or numpy.random.Generator
        Source for tie-breaking between equally small completions.
    """
    labels = t.resolve_all(labels)
    if is_path_complete(t, labels):
        return labels
    rng = _rng(rng_seed)
    root = t.root
    pool = set()
    for x in labels:
        pool |= t.ancestors(x)
    pool -= labels
    mandatory = {root} - labels
    pool = sorted(pool - mandatory)
    base = labels | mandatory

    checked = 0
    for size in range(len(pool) + 1):
        hits = []
        for extra in combinations(pool, size):
            checked += 1
            cand = base.union(extra)
            if not orphans(t, cand):
                hits.append(cand)
            if checked > EXACT_SEARCH_BUDGET:
                break
        if hits:
            return hits[int(rng.integers(len(hits)))] if len(hits) > 1 else hits[0]
        if checked > EXACT_SEARCH_BUDGET:
            log.warning("label-set expansion over %d ancestors exceeds exact-search budget; "
                        "using per-label completion", len(pool))
            return _greedy_expand(t, labels, rng)
    raise NotPathComplete(orphans(t, base)[0])  # pragma: no cover - unreachable for valid taxonomies


def _greedy_expand(t: Taxonomy, labels, rng):
    current = set(labels) | {t.root}
    for x in sorted(labels):
        if _has_path(t, current, x):
            continue
        # cheapest root path: dynamic programme over ancestors in topological order
        best = {t.root: (0 if t.root in current else 1, [(t.root,)])}
        for v in t.topological_order:
            if v == t.root or not ((t.down_mask(x) >> v) & 1):
                continue
            step = 0 if v in current else 1
            opts = [(best[p][0] + step, best[p][1]) for p in t.parents(v) if p in best]
            if not opts:
                continue
            cost = min(c for c, _ in opts)
            paths = [path + (v,) for c, ps in opts if c == cost for path in ps]
            best[v] = (cost, paths)
        paths = sorted(best[x][1])
        chosen = paths[int(rng.integers(len(paths)))]
        current |= set(chosen)
    return frozenset(current)


def _has_path(t, current, x):
    return x == t.root or any(p in current and _has_path(t, current, p) for p in t.parents(x))


def paths_from_label_set(t: Taxonomy, labels) -> list:
    """All maximal root-anchored cover chains inside a path-complete set.

    Paths are tuples of label ids, sorted lexicographically.
    """
    labels = t.resolve_all(labels)
    if not labels:
        return []
    bad = orphans(t, labels)
    if bad:
        raise NotPathComplete(t.name(bad[0]))
    root = t.root
    if root not in labels:
        raise NotPathComplete(t.name(min(labels)))
    out = []
    stack = [(root,)]
    while stack:
        path = stack.pop()
        nxt = [c for c in t.children(path[-1]) if c in labels]
        if not nxt:
            out.append(path)
        for c in nxt:
            stack.append(path + (c,))
    return sorted(out)


def inference_prefixes(t: Taxonomy, d: TatDecomposition, known) -> list:
    """Pair each maximal chain of ``known`` with each task relevant to it.

    A chain made of the root alone is relevant to every task.
    """
    known = t.resolve_all(known)
    if not known:
        raise NotPathComplete("<empty known label set>")
    pairs = []
    for path in paths_from_label_set(t, known):
        tasks = relevant_tasks(d, path) or frozenset(range(len(d)))
        pairs.extend((path, i) for i in sorted(tasks))
    return pairs
