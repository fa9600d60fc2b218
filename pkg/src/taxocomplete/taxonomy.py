"""Label taxonomies as finite posets stored by their cover relation.

A taxonomy keeps only the Hasse (cover) edges of the order. The order itself
is answered from a cached transitive closure stored as one Python-int bitset
per label, so ``leq`` is a single bit test.

Labels are addressed by dense integer ids assigned in order of first
appearance. Every public method accepts an id, a name or a :class:`Label`.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    CycleDetected,
    DuplicateName,
    InvalidEdge,
    MultipleRoots,
    NoRoot,
    UnknownLabel,
)

__all__ = [
    "Label",
    "Taxonomy",
    "TaxonomyStats",
    "load_taxonomy",
    "read_taxonomy",
    "parse_taxonomy_lines",
    "SYNTHETIC_ROOT",
]

SYNTHETIC_ROOT = "__ROOT__"


@dataclass(frozen=True)
class Label:
    id: int
    name: str


@dataclass(frozen=True)
class TaxonomyStats:
    n_labels: int
    width: int
    depth: int
    n_roots: int

    def as_dict(self):
        return {"n_labels": self.n_labels, "width": self.width,
                "depth": self.depth, "n_roots": self.n_roots}


def _bits(mask):
    """Yield the indices of set bits in ascending order."""
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


class Taxonomy:
    """Immutable poset over labels, kept as a transitively reduced DAG.

    Parameters
    ----------
    names : sequence of str
        Label names; position in the sequence is the label id.
    edges : iterable of (int, int)
        ``(parent, child)`` pairs meaning ``parent < child``. Redundant
        (transitively implied) edges are dropped.
    require_root : bool
        When true (the default) the cover graph must have exactly one
        minimal element. Set to false to hold arbitrary finite posets.
    """

    def __init__(self, names: Sequence[str], edges: Iterable[tuple[int, int]],
                 require_root: bool = True):
        names = list(names)
        seen = set()
        for name in names:
            if not isinstance(name, str) or not name:
                raise InvalidEdge(f"label names must be non-empty strings, got {name!r}")
            if name in seen:
                raise DuplicateName(name)
            seen.add(name)
        n = len(names)
        self.labels = tuple(Label(i, nm) for i, nm in enumerate(names))
        self._index = {nm: i for i, nm in enumerate(names)}

        succ = [set() for _ in range(n)]
        for a, b in edges:
            if not (0 <= a < n and 0 <= b < n):
                raise InvalidEdge(f"edge ({a}, {b}) references an unknown label id")
            if a == b:
                raise InvalidEdge(f"self edge on {names[a]!r}")
            succ[a].add(b)

        order = self._toposort(succ, names)
        # descendants (strict) per label, filled in reverse topological order
        desc = [0] * n
        for v in reversed(order):
            m = 0
            for c in succ[v]:
                m |= (1 << c) | desc[c]
            desc[v] = m

        children = [[] for _ in range(n)]
        for a in range(n):
            for c in succ[a]:
                # a -> c is redundant when c is reachable through another child
                if not any((desc[b] >> c) & 1 for b in succ[a] if b != c):
                    children[a].append(c)
        self._children = tuple(tuple(sorted(cs)) for cs in children)
        parents = [[] for _ in range(n)]
        for a, cs in enumerate(self._children):
            for c in cs:
                parents[c].append(a)
        self._parents = tuple(tuple(sorted(ps)) for ps in parents)
        self.cover_edges = frozenset((a, c) for a, cs in enumerate(self._children) for c in cs)
        self._up = tuple(desc[v] | (1 << v) for v in range(n))
        down = [1 << v for v in range(n)]
        for v in range(n):
            for u in _bits(desc[v]):
                down[u] |= 1 << v
        self._down = tuple(down)
        self._order = tuple(order)
        self._all = (1 << n) - 1

        self.minimal = tuple(v for v in range(n) if not self._parents[v])
        if require_root:
            if n == 0:
                raise NoRoot("empty taxonomy")
            if len(self.minimal) > 1:
                raise MultipleRoots([names[v] for v in self.minimal])

    @staticmethod
    def _toposort(succ, names):
        n = len(succ)
        state = [0] * n  # 0 new, 1 on stack, 2 done
        order = []
        for start in range(n):
            if state[start]:
                continue
            stack = [(start, iter(sorted(succ[start])))]
            state[start] = 1
            path = [start]
            while stack:
                v, it = stack[-1]
                nxt = next(it, None)
                if nxt is None:
                    stack.pop()
                    path.pop()
                    state[v] = 2
                    order.append(v)
                elif state[nxt] == 1:
                    cycle = path[path.index(nxt):] + [nxt]
                    raise CycleDetected([names[v] for v in cycle])
                elif state[nxt] == 0:
                    state[nxt] = 1
                    path.append(nxt)
                    stack.append((nxt, iter(sorted(succ[nxt]))))
        order.reverse()
        return order

    # -- addressing ---------------------------------------------------------
    def __len__(self):
        return len(self.labels)

    def __contains__(self, label):
        try:
            self.resolve(label)
        except UnknownLabel:
            return False
        return True

    def __repr__(self):
        return f"Taxonomy(n_labels={len(self)}, cover_edges={len(self.cover_edges)})"

    def resolve(self, label) -> int:
        if isinstance(label, Label):
            label = label.id
        if isinstance(label, str):
            try:
                return self._index[label]
            except KeyError:
                raise UnknownLabel(label) from None
        try:
            i = int(label)
        except (TypeError, ValueError):
            raise UnknownLabel(label) from None
        if not 0 <= i < len(self.labels) or i != label:
            raise UnknownLabel(label)
        return i

    def resolve_all(self, labels) -> frozenset:
        return frozenset(self.resolve(x) for x in labels)

    def id(self, name: str) -> int:
        return self.resolve(name)

    def name(self, label) -> str:
        return self.labels[self.resolve(label)].name

    def names(self, labels) -> list[str]:
        return [self.name(x) for x in labels]

    @property
    def root(self) -> int:
        """The Condorcet winner (the unique minimal label)."""
        if len(self.minimal) != 1:
            raise NoRoot("taxonomy has no unique root")
        return self.minimal[0]

    @property
    def topological_order(self) -> tuple:
        return self._order

    # -- order queries ------------------------------------------------------
    def leq(self, a, b) -> bool:
        """True iff ``a`` is at least as general as ``b``."""
        a, b = self.resolve(a), self.resolve(b)
        return bool((self._up[a] >> b) & 1)

    def lower_set(self, labels) -> frozenset:
        """Labels below every member of ``labels`` (all labels for the empty set)."""
        mask = self._all
        for x in labels:
            mask &= self._down[self.resolve(x)]
        return frozenset(_bits(mask))

    def up_set(self, label) -> frozenset:
        """``label`` together with every more specific label."""
        return frozenset(_bits(self._up[self.resolve(label)]))

    def ancestors(self, label) -> frozenset:
        """Strictly more general labels."""
        i = self.resolve(label)
        return frozenset(_bits(self._down[i] & ~(1 << i)))

    def up_mask(self, label) -> int:
        return self._up[self.resolve(label)]

    def down_mask(self, label) -> int:
        return self._down[self.resolve(label)]

    def is_weak_semilattice(self) -> bool:
        # a poset is a weak semilattice iff some label lies below all others
        return len(self) > 0 and any(self._up[v] == self._all for v in self.minimal)

    def children(self, label) -> tuple:
        return self._children[self.resolve(label)]

    def parents(self, label) -> tuple:
        return self._parents[self.resolve(label)]

    def width(self) -> int:
        return max((len(cs) for cs in self._children), default=0)

    def depth(self) -> int:
        """Length (in edges) of the longest cover chain."""
        height = [0] * len(self)
        for v in reversed(self._order):
            height[v] = max((height[c] + 1 for c in self._children[v]), default=0)
        return max(height, default=0)

    def label_depths(self) -> tuple:
        """Shortest cover-chain distance from the minimal labels."""
        depth = [None] * len(self)
        frontier = list(self.minimal)
        for v in frontier:
            depth[v] = 0
        while frontier:
            nxt = []
            for v in frontier:
                for c in self._children[v]:
                    if depth[c] is None:
                        depth[c] = depth[v] + 1
                        nxt.append(c)
            frontier = nxt
        return tuple(depth)

    def stats(self) -> TaxonomyStats:
        return TaxonomyStats(len(self), self.width(), self.depth(), len(self.minimal))

    def edges_by_name(self) -> list[tuple[str, str]]:
        return [(self.labels[a].name, self.labels[c].name) for a, c in sorted(self.cover_edges)]

    def to_tsv(self) -> str:
        lines = [f"{a}\t{b}" for a, b in self.edges_by_name()]
        if len(self) == 1:
            lines.append(self.labels[0].name)
        return "\n".join(lines) + "\n"

    def __eq__(self, other):
        if not isinstance(other, Taxonomy):
            return NotImplemented
        return (tuple(l.name for l in self.labels) == tuple(l.name for l in other.labels)
                and self.cover_edges == other.cover_edges)

    def __hash__(self):
        return hash((tuple(l.name for l in self.labels), self.cover_edges))


def load_taxonomy(edge_list: Iterable[tuple[str, str]], labels: Iterable[str] = (),
                  require_root: bool = True, add_synthetic_root: bool = False) -> Taxonomy:
    """Build a validated taxonomy from ``(parent, child)`` name pairs.

    Label ids follow first appearance, edges first then the optional extra
    ``labels`` (used for isolated labels). With ``add_synthetic_root`` a new
    label named ``__ROOT__`` is placed above every minimal label when there
    is more than one.
    """
    edge_list = [tuple(e) for e in edge_list]
    names: list[str] = []
    index: dict[str, int] = {}

    def intern(name):
        if not isinstance(name, str) or not name.strip():
            raise InvalidEdge(f"empty label name in edge list: {name!r}")
        if name not in index:
            index[name] = len(names)
            names.append(name)
        return index[name]

    edges = []
    for e in edge_list:
        if len(e) != 2:
            raise InvalidEdge(f"edge must have two endpoints: {e!r}")
        a, b = e
        if a == b:
            raise InvalidEdge(f"self edge on {a!r}")
        edges.append((intern(a), intern(b)))
    for name in labels:
        intern(name)

    if add_synthetic_root:
        probe = Taxonomy(names, edges, require_root=False)
        if len(probe.minimal) > 1:
            if SYNTHETIC_ROOT in index:
                raise DuplicateName(SYNTHETIC_ROOT)
            r = intern(SYNTHETIC_ROOT)
            edges.extend((r, m) for m in probe.minimal)
    return Taxonomy(names, edges, require_root=require_root)


def parse_taxonomy_lines(lines: Iterable[str]):
    """Parse TSV lines into (edges, isolated labels). ``#`` starts a comment."""
    edges, isolated = [], []
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) == 1:
            isolated.append(fields[0])
        elif len(fields) == 2:
            edges.append((fields[0], fields[1]))
        else:
            raise InvalidEdge(f"line {lineno}: expected 'parent<TAB>child', got {line!r}")
    return edges, isolated


def read_taxonomy(path, require_root: bool = True, add_synthetic_root: bool = False) -> Taxonomy:
    with open(Path(path), encoding="utf-8") as fh:
        edges, isolated = parse_taxonomy_lines(fh)
    return load_taxonomy(edges, isolated, require_root=require_root,
                         add_synthetic_root=add_synthetic_root)
