import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CS, DB, LLMS, ML, NLP, RL, UNSUP, VOCAB
from oracles import closure, random_rooted_dag, tat_families_bruteforce
from taxocomplete.errors import EmptyPath, NotWeakSemilattice, UnknownTask
from taxocomplete.tasks import (
    TaskSet,
    TatDecomposition,
    decompose,
    relevant_tasks,
    task_width,
    verify_tat,
)
from taxocomplete.taxonomy import Taxonomy


@st.composite
def rooted(draw, max_n=12):
    n = draw(st.integers(1, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    extra = draw(st.floats(0.0, 0.9))
    edges = random_rooted_dag(np.random.default_rng(seed), n, extra)
    return Taxonomy([f"v{i}" for i in range(n)], edges)


def test_fig1_three_tasks(fig1, fig1_tasks):
    members = [task.members for task in fig1_tasks]
    assert members == [{NLP, VOCAB, LLMS}, {DB}, {ML, LLMS, RL, UNSUP}]
    assert [task.root for task in fig1_tasks] == [NLP, DB, ML]
    assert fig1_tasks.tasks_of(LLMS) == {0, 2}
    assert [task.width for task in fig1_tasks] == [2, 0, 3]


def test_fig1_decomposition_is_the_unique_family(fig1, fig1_tasks):
    leq = closure(8, list(fig1.cover_edges))
    families = tat_families_bruteforce(8, leq)
    assert families == [frozenset(task.members for task in fig1_tasks)]


def test_tree_tasks_are_disjoint_subtrees():
    t = Taxonomy(["r", "a", "b", "a1", "a2", "b1"], [(0, 1), (0, 2), (1, 3), (1, 4), (2, 5)])
    d = decompose(t)
    assert [task.members for task in d] == [{1, 3, 4}, {2, 5}]


def test_not_weak_semilattice_rejected():
    t = Taxonomy(["A", "B"], [], require_root=False)
    with pytest.raises(NotWeakSemilattice):
        decompose(t)


def test_verify_reports_conditions(fig1, fig1_tasks):
    assert verify_tat(fig1, fig1_tasks)

    broken = TatDecomposition.from_tasks([
        TaskSet(0, NLP, frozenset({NLP, VOCAB}), 1),
        fig1_tasks.task(1),
        fig1_tasks.task(2),
    ])
    rep = verify_tat(fig1, broken)
    assert not rep and rep.condition == 3
    assert rep.witness == (0, NLP, LLMS)

    dup = TatDecomposition.from_tasks(list(fig1_tasks.tasks) + [fig1_tasks.task(1)])
    rep = verify_tat(fig1, dup)
    assert not rep and rep.condition == 2

    missing = TatDecomposition.from_tasks([fig1_tasks.task(0), fig1_tasks.task(2)])
    rep = verify_tat(fig1, missing)
    assert not rep and rep.condition == 4 and rep.witness == (DB,)

    whole = TatDecomposition.from_tasks([TaskSet(0, CS, frozenset(range(8)), 3)])
    assert verify_tat(fig1, whole).condition == 1


def test_relevant_tasks(fig1_tasks):
    assert relevant_tasks(fig1_tasks, [CS, NLP, LLMS]) == {0, 2}
    assert relevant_tasks(fig1_tasks, [CS]) == frozenset()
    assert relevant_tasks(fig1_tasks, [CS, DB]) == {1}
    with pytest.raises(EmptyPath):
        relevant_tasks(fig1_tasks, [])


def test_unknown_task(fig1_tasks):
    with pytest.raises(UnknownTask):
        fig1_tasks.task(3)
    with pytest.raises(UnknownTask):
        fig1_tasks.task("ML")


def test_digest_is_stable(fig1, fig1_tasks):
    assert decompose(fig1).digest() == fig1_tasks.digest()
    other = decompose(Taxonomy(["r", "a"], [(0, 1)]))
    assert other.digest() != fig1_tasks.digest()


@settings(max_examples=150, deadline=None)
@given(rooted(max_n=30))
def test_decompose_always_verifies(t):
    d = decompose(t)
    assert verify_tat(t, d)
    for task in d:
        assert task.width <= t.width()
        assert task.width == task_width(t, task.members)
        assert all(t.leq(task.root, x) for x in task.members)


@settings(max_examples=60, deadline=None)
@given(rooted(max_n=10))
def test_uniqueness_against_exhaustive_search(t):
    n = len(t)
    leq = closure(n, list(t.cover_edges))
    families = tat_families_bruteforce(n, leq)
    d = decompose(t)
    if n == 1:
        # only the root: no label needs covering and no proper non-empty upset exists
        assert len(d) == 0 and families == []
        return
    assert families == [frozenset(task.members for task in d)]


@settings(max_examples=150, deadline=None)
@given(rooted(max_n=20))
def test_overlap_iff_two_incomparable_depth_one_ancestors(t):
    d = decompose(t)
    tops = set(t.children(t.root))
    for x in range(len(t)):
        if x == t.root:
            continue
        anc = {a for a in tops if t.leq(a, x)}
        assert len(d.tasks_of(x)) == len(anc)
    shared = any(len(d.tasks_of(x)) >= 2 for x in range(len(t)) if x != t.root)
    incomparable = any(
        sum(1 for a in tops if t.leq(a, x)) >= 2 for x in range(len(t)) if x != t.root)
    assert shared == incomparable
