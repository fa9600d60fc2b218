"""Taxonomy-aware task (TAT) decomposition.

Each task is the up-set of one child of the global root. The family of
these up-sets is the only one that is upward closed, free of containment
between distinct members, and covers every non-root label.
"""
from __future__ import annotations

import hashlib
import json
import operator
from dataclasses import dataclass, field

from .errors import EmptyPath, NotWeakSemilattice, UnknownTask
from .taxonomy import Taxonomy

__all__ = [
    "TaskSet",
    "TatDecomposition",
    "VerificationReport",
    "decompose",
    "verify_tat",
    "relevant_tasks",
    "task_width",
]


@dataclass(frozen=True)
class TaskSet:
    task_id: int
    root: int
    members: frozenset
    width: int

    def __contains__(self, label):
        return label in self.members

    def __len__(self):
        return len(self.members)

    @property
    def sorted_members(self) -> tuple:
        return tuple(sorted(self.members))


@dataclass(frozen=True)
class TatDecomposition:
    tasks: tuple
    label_to_tasks: dict = field(compare=False)

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def task(self, task_id) -> TaskSet:
        try:
            i = operator.index(task_id)
        except TypeError:
            raise UnknownTask(task_id) from None
        if not 0 <= i < len(self.tasks):
            raise UnknownTask(task_id)
        return self.tasks[i]

    def task_of_root(self, label) -> int:
        for t in self.tasks:
            if t.root == label:
                return t.task_id
        raise UnknownTask(label)

    def tasks_of(self, label) -> frozenset:
        return self.label_to_tasks.get(label, frozenset())

    def digest(self) -> str:
        payload = [[t.task_id, t.root, sorted(t.members), t.width] for t in self.tasks]
        return hashlib.sha256(json.dumps(payload).encode()).hexdigest()[:16]

    @classmethod
    def from_tasks(cls, tasks):
        tasks = tuple(tasks)
        index = {}
        for t in tasks:
            for m in t.members:
                index.setdefault(m, set()).add(t.task_id)
        return cls(tasks, {k: frozenset(v) for k, v in index.items()})


def task_width(t: Taxonomy, members) -> int:
    members = frozenset(members)
    return max((sum(1 for c in t.children(m) if c in members) for m in members), default=0)


def decompose(t: Taxonomy) -> TatDecomposition:
    """Split a weak-semilattice taxonomy into its taxonomy-aware tasks.

    One task per child of the global root, ordered by the child's label id.
    Members are the child's up-set, so tasks overlap exactly where a label
    has ancestors under several depth-one labels.
    """
    if not t.is_weak_semilattice():
        raise NotWeakSemilattice("taxonomy has no Condorcet winner; cannot decompose")
    tasks = []
    for i, c in enumerate(sorted(t.children(t.root))):
        members = t.up_set(c)
        tasks.append(TaskSet(i, c, members, task_width(t, members)))
    return TatDecomposition.from_tasks(tasks)


@dataclass(frozen=True)
class VerificationReport:
    ok: bool
    condition: int | None = None
    witness: tuple = ()
    message: str = ""

    def __bool__(self):
        return self.ok


def verify_tat(t: Taxonomy, d: TatDecomposition) -> VerificationReport:
    """Check the four task conditions, reporting the first violation.

    1. every task is a proper, non-empty subset of the taxonomy with a
       label below all its members;
    2. no task is contained in a different task (repeats included);
    3. tasks are upward closed;
    4. every label outside the lower set of the whole taxonomy is covered.
    """
    n = len(t)
    sets = [frozenset(task.members) for task in d.tasks]
    for i, s in enumerate(sets):
        if not s or len(s) >= n:
            return VerificationReport(False, 1, (i,), f"task {i} is empty or not a proper subset")
        if not any(all(t.leq(c, x) for x in s) for c in s):
            return VerificationReport(False, 1, (i,), f"task {i} has no Condorcet winner")
    for i, si in enumerate(sets):
        for j, sj in enumerate(sets):
            if i != j and si <= sj:
                return VerificationReport(False, 2, (i, j), f"task {i} is contained in task {j}")
    for i, s in enumerate(sets):
        for x in sorted(s):
            for y in sorted(t.up_set(x)):
                if y not in s:
                    return VerificationReport(
                        False, 3, (i, x, y),
                        f"task {i}: {t.name(x)} <= {t.name(y)} but {t.name(y)} is missing")
    low = t.lower_set(range(n))
    covered = frozenset().union(*sets) if sets else frozenset()
    for x in range(n):
        if x not in low and x not in covered:
            return VerificationReport(False, 4, (x,), f"label {t.name(x)} belongs to no task")
    return VerificationReport(True)


def relevant_tasks(d: TatDecomposition, path) -> frozenset:
    """Ids of tasks holding at least one label of ``path``."""
    path = tuple(path)
    if not path:
        raise EmptyPath("path is empty")
    out = set()
    for label in path:
        out |= d.tasks_of(label)
    return frozenset(out)
