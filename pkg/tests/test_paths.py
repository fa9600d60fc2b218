import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CS, DB, LLMS, ML, NLP, RL, UNSUP, VOCAB
from oracles import (
    closure,
    is_path_complete_bruteforce,
    maximal_chains,
    minimal_completions,
    random_rooted_dag,
)
from taxocomplete.errors import NotPathComplete, UnknownLabel
from taxocomplete.paths import (
    expand_label_set,
    inference_prefixes,
    is_path_complete,
    is_valid_path,
    paths_from_label_set,
)
from taxocomplete.tasks import decompose
from taxocomplete.taxonomy import Taxonomy


@st.composite
def taxonomy_and_labels(draw, max_n=12):
    n = draw(st.integers(1, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    extra = draw(st.floats(0.0, 0.9))
    rng = np.random.default_rng(seed)
    edges = random_rooted_dag(rng, n, extra)
    t = Taxonomy([f"v{i}" for i in range(n)], edges)
    k = draw(st.integers(1, min(n, 3)))
    labels = frozenset(int(x) for x in rng.choice(n, size=k, replace=False))
    return t, labels


def test_expand_llms_both_outcomes(fig1):
    seen = set()
    for seed in range(40):
        out = expand_label_set(fig1, {LLMS}, seed)
        assert out in ({CS, NLP, LLMS}, {CS, ML, LLMS})
        seen.add(out)
    assert len(seen) == 2
    assert expand_label_set(fig1, {LLMS}, 7) == expand_label_set(fig1, {LLMS}, 7)


def test_expand_unchanged_cases(fig1):
    assert expand_label_set(fig1, {CS}, 0) == {CS}
    assert expand_label_set(fig1, {CS, ML, RL}, 0) == {CS, ML, RL}
    assert expand_label_set(fig1, ["CS", "ML"], 0) == {CS, ML}
    with pytest.raises(UnknownLabel):
        expand_label_set(fig1, {"Biology"}, 0)


def test_expand_matches_bruteforce_on_fig1(fig1):
    leq = closure(8, list(fig1.cover_edges))
    for labels in ({LLMS}, {VOCAB, RL}, {LLMS, UNSUP}, {DB, LLMS}):
        best = minimal_completions(8, leq, labels, CS)
        got = expand_label_set(fig1, labels, 3)
        assert got in best


def test_paths_examples(fig1):
    assert paths_from_label_set(fig1, {CS, NLP, ML, LLMS, RL}) == [
        (CS, NLP, LLMS), (CS, ML, LLMS), (CS, ML, RL)]
    assert paths_from_label_set(fig1, {CS}) == [(CS,)]
    assert paths_from_label_set(fig1, {CS, DB}) == [(CS, DB)]
    with pytest.raises(NotPathComplete):
        paths_from_label_set(fig1, {CS, LLMS})


def test_inference_prefixes(fig1, fig1_tasks):
    assert inference_prefixes(fig1, fig1_tasks, {CS, NLP}) == [((CS, NLP), 0)]
    assert inference_prefixes(fig1, fig1_tasks, {CS}) == [((CS,), 0), ((CS,), 1), ((CS,), 2)]
    assert inference_prefixes(fig1, fig1_tasks, {CS, NLP, LLMS}) == [
        ((CS, NLP, LLMS), 0), ((CS, NLP, LLMS), 2)]
    with pytest.raises(NotPathComplete):
        inference_prefixes(fig1, fig1_tasks, set())
    with pytest.raises(NotPathComplete):
        inference_prefixes(fig1, fig1_tasks, {CS, VOCAB})


@settings(max_examples=120, deadline=None)
@given(taxonomy_and_labels())
def test_expansion_minimal_and_idempotent(case):
    t, labels = case
    n = len(t)
    leq = closure(n, list(t.cover_edges))
    out = expand_label_set(t, labels, 0)
    assert out >= labels
    assert is_path_complete(t, out)
    assert is_path_complete_bruteforce(n, leq, out, t.root)
    assert expand_label_set(t, out, 5) == out
    best = minimal_completions(n, leq, labels, t.root, max_extra=n)
    assert len(out) == len(best[0])
    assert out in best


@settings(max_examples=120, deadline=None)
@given(taxonomy_and_labels())
def test_paths_round_trip(case):
    t, labels = case
    full = expand_label_set(t, labels, 1)
    paths = paths_from_label_set(t, full)
    assert paths == sorted(paths)
    assert all(is_valid_path(t, p) for p in paths)
    assert frozenset().union(*map(frozenset, paths)) == full
    leq = closure(len(t), list(t.cover_edges))
    assert paths == maximal_chains(len(t), leq, full, t.root)


@settings(max_examples=80, deadline=None)
@given(taxonomy_and_labels())
def test_prefix_tasks_are_relevant(case):
    t, labels = case
    d = decompose(t)
    full = expand_label_set(t, labels, 2)
    for path, task_id in inference_prefixes(t, d, full):
        members = d.task(task_id).members
        assert len(path) == 1 or any(x in members for x in path)
