"""Rooted tree structures: plane trees, labeled trees, and bi-measure trees.

Plane trees are stored in depth-first (lexicographic) vertex order, which
makes every subtree a contiguous index range.  All tree objects are treated
as immutable after construction and can be shared freely between workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TreeStructureError",
    "PlaneTree",
    "LabeledRootedTree",
    "BiMeasureTree",
    "SpannedTree",
    "mrca",
    "spanned_subtree",
    "subtree_mass",
    "mirror",
    "mu_skeleton_and_leaves",
    "sample_tree_17",
]


class TreeStructureError(ValueError):
    """A tree encoding violates its structural invariants."""


def _parents_from_child_counts(counts: np.ndarray) -> np.ndarray:
    """Rebuild the parent array of a depth-first vertex ordering.

    ``counts[k]`` is the number of children of the k-th vertex in
    depth-first preorder.  Raises if the sequence does not encode a tree.
    """
    n = len(counts)
    if n == 0:
        raise TreeStructureError("empty tree")
    if counts.sum() != n - 1:
        raise TreeStructureError("child counts must sum to n - 1")
    parent = np.empty(n, dtype=np.int64)
    parent[0] = -1
    # stack of (vertex, remaining unassigned children)
    stack = [[0, int(counts[0])]]
    for k in range(1, n):
        while stack and stack[-1][1] == 0:
            stack.pop()
        if not stack:
            raise TreeStructureError("child counts exhausted before vertex %d" % k)
        stack[-1][1] -= 1
        parent[k] = stack[-1][0]
        stack.append([k, int(counts[k])])
    return parent


class PlaneTree:
    """Rooted ordered tree of ``n`` vertices in lexicographic order.

    ``parent[k]`` is the lexicographic index of the parent of vertex ``k``
    (``parent[0] == -1``), and ``child_count[k]`` its number of children.
    """

    __slots__ = ("parent", "child_count", "_depth", "_subtree_size", "_child_index")

    def __init__(self, parent, validate: bool = True):
        parent = np.asarray(parent, dtype=np.int64)
        n = len(parent)
        if n == 0:
            raise TreeStructureError("empty tree")
        counts = np.bincount(parent[1:] + 0, minlength=n) if n > 1 else np.zeros(1, np.int64)
        self.parent = parent
        self.child_count = counts.astype(np.int64)
        self._depth = None
        self._subtree_size = None
        self._child_index = None
        if validate:
            if parent[0] != -1:
                raise TreeStructureError("parent[0] must be the root sentinel -1")
            if n > 1 and (parent[1:] >= np.arange(1, n)).any():
                raise TreeStructureError("parents must precede children in lex order")
            if n > 1 and (parent[1:] < 0).any():
                raise TreeStructureError("negative parent index")
            # lexicographic order is exactly depth-first preorder
            rebuilt = _parents_from_child_counts(self.child_count)
            if not np.array_equal(rebuilt, parent):
                raise TreeStructureError("vertex order is not depth-first lexicographic")

    # -- constructors -------------------------------------------------

    @classmethod
    def from_child_counts(cls, counts) -> "PlaneTree":
        counts = np.asarray(counts, dtype=np.int64)
        tree = cls.__new__(cls)
        tree.parent = _parents_from_child_counts(counts)
        tree.child_count = counts
        tree._depth = None
        tree._subtree_size = None
        tree._child_index = None
        return tree

    @classmethod
    def from_record(cls, record: dict) -> "PlaneTree":
        n = int(record["n"])
        parents = [-1] + [int(p) for p in record.get("parents", [])]
        if len(parents) != n:
            raise TreeStructureError("record length mismatch")
        return cls(parents)

    def to_record(self) -> dict:
        return {"n": self.n, "parents": [int(p) for p in self.parent[1:]]}

    # -- basic queries ------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.parent)

    @property
    def depth(self) -> np.ndarray:
        if self._depth is None:
            d = np.zeros(self.n, dtype=np.int64)
            par = self.parent
            for k in range(1, self.n):
                d[k] = d[par[k]] + 1
            self._depth = d
        return self._depth

    @property
    def subtree_size(self) -> np.ndarray:
        """Number of vertices in the subtree rooted at each vertex."""
        if self._subtree_size is None:
            s = np.ones(self.n, dtype=np.int64)
            par = self.parent
            for k in range(self.n - 1, 0, -1):
                s[par[k]] += s[k]
            self._subtree_size = s
        return self._subtree_size

    def children(self, v: int) -> np.ndarray:
        """Children of v in left-to-right (increasing lex) order."""
        if self._child_index is None:
            order = np.argsort(self.parent[1:], kind="stable") + 1
            starts = np.searchsorted(self.parent[order], np.arange(self.n))
            self._child_index = (order, np.append(starts, self.n - 1))
        order, bounds = self._child_index
        return order[bounds[v]:bounds[v + 1]]

    def is_ancestor(self, i: int, j: int) -> bool:
        """True iff vertex i lies on the root path of vertex j."""
        # the subtree below i is the contiguous index block [i, i + size)
        return i <= j < i + self.subtree_size[i]

    def __eq__(self, other):
        return isinstance(other, PlaneTree) and np.array_equal(self.parent, other.parent)

    def __hash__(self):
        return hash(self.parent.tobytes())

    def __repr__(self):
        return f"PlaneTree(n={self.n})"


def mrca(tree: PlaneTree, i: int, j: int) -> int:
    """Most recent common ancestor of vertices i and j."""
    n = tree.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError("vertex index out of range")
    depth, par = tree.depth, tree.parent
    while depth[i] > depth[j]:
        i = par[i]
    while depth[j] > depth[i]:
        j = par[j]
    while i != j:
        i, j = par[i], par[j]
    return int(i)


def mirror(tree: PlaneTree) -> PlaneTree:
    """Reverse the order of the children of every vertex.

    An involution on plane trees; unary chains are unchanged.
    """
    counts = tree.child_count
    out = np.empty(tree.n, dtype=np.int64)
    stack = [0]
    pos = 0
    while stack:
        v = stack.pop()
        out[pos] = counts[v]
        pos += 1
        # push in lex order so the rightmost child is visited first
        stack.extend(tree.children(v))
    return PlaneTree.from_child_counts(out)


def mirror_permutation(tree: PlaneTree) -> np.ndarray:
    """perm[new_index] = old lex index under the mirrored ordering.

    The mirrored ordering of ``tree`` is exactly its reverse-lexicographic
    vertex enumeration.
    """
    out = np.empty(tree.n, dtype=np.int64)
    stack = [0]
    pos = 0
    while stack:
        v = stack.pop()
        out[pos] = v
        pos += 1
        stack.extend(tree.children(v))
    return out


@dataclass
class LabeledRootedTree:
    """Rooted tree labeled with 1..n; parent maps every non-root label."""

    n: int
    root: int
    parent: dict

    def __post_init__(self):
        if len(self.parent) != self.n - 1:
            raise TreeStructureError("parent map must cover all non-root labels")
        # check that parent links connect everything to the root; memoized
        # root-path walk keeps this linear in n
        depth = {self.root: 0}
        for v in range(1, self.n + 1):
            chain = []
            x = v
            while x not in depth:
                if x not in self.parent or len(chain) > self.n:
                    raise TreeStructureError("parent links are cyclic or disconnected")
                chain.append(x)
                x = self.parent[x]
            base = depth[x]
            for off, y in enumerate(reversed(chain), start=1):
                depth[y] = base + off

    def child_count_of(self, label: int) -> int:
        return sum(1 for p in self.parent.values() if p == label)

    def to_plane(self):
        """Canonicalize to lex order (children sorted by label).

        Returns (plane_tree, labels) where ``labels[k]`` is the original
        label of lex vertex ``k``.
        """
        kids = {v: [] for v in range(1, self.n + 1)}
        for c, p in self.parent.items():
            kids[p].append(c)
        for v in kids:
            kids[v].sort()
        order, counts = [], []
        stack = [self.root]
        while stack:
            v = stack.pop()
            order.append(v)
            counts.append(len(kids[v]))
            stack.extend(reversed(kids[v]))
        tree = PlaneTree.from_child_counts(np.asarray(counts, dtype=np.int64))
        return tree, np.asarray(order, dtype=np.int64)


@dataclass
class BiMeasureTree:
    """A plane tree with edge lengths, vertex masses, and a pruning measure.

    The pruning measure has a density part (``nu_edge_density`` per unit of
    metric length, on every edge) and per-vertex atoms that may only sit on
    internal vertices.
    """

    shape: PlaneTree
    edge_length: float = 1.0
    mu: np.ndarray = None
    nu_edge_density: float = 0.0
    nu_atoms: np.ndarray = None

    def __post_init__(self):
        n = self.shape.n
        if self.mu is None:
            self.mu = np.full(n, 1.0 / n)
        else:
            self.mu = np.asarray(self.mu, dtype=float)
        if self.nu_atoms is None:
            self.nu_atoms = np.zeros(n)
        else:
            self.nu_atoms = np.asarray(self.nu_atoms, dtype=float)
        if len(self.mu) != n or len(self.nu_atoms) != n:
            raise TreeStructureError("measure arrays must have one entry per vertex")
        if self.edge_length <= 0:
            raise TreeStructureError("edge length must be positive")
        if (self.mu < 0).any() or (self.nu_atoms < 0).any() or self.nu_edge_density < 0:
            raise TreeStructureError("measures must be nonnegative")
        if self.mu.sum() <= 0:
            raise TreeStructureError("total vertex mass must be positive")
        leaves = self.shape.child_count == 0
        if (self.nu_atoms[leaves] > 0).any():
            raise TreeStructureError("pruning atoms are not allowed on leaves")

    @property
    def n(self) -> int:
        return self.shape.n

    def total_mu(self) -> float:
        return float(self.mu.sum())

    def total_nu(self) -> float:
        edge_part = self.nu_edge_density * self.edge_length * (self.n - 1)
        return float(edge_part + self.nu_atoms.sum())

    def to_record(self) -> dict:
        rec = self.shape.to_record()
        rec["mu"] = [float(x) for x in self.mu]
        rec["nu_atoms"] = [float(x) for x in self.nu_atoms]
        rec["nu_edge_density"] = float(self.nu_edge_density)
        rec["edge_length"] = float(self.edge_length)
        return rec

    @classmethod
    def from_record(cls, record: dict) -> "BiMeasureTree":
        shape = PlaneTree.from_record(record)
        return cls(
            shape,
            edge_length=float(record.get("edge_length", 1.0)),
            mu=record.get("mu"),
            nu_edge_density=float(record.get("nu_edge_density", 0.0)),
            nu_atoms=record.get("nu_atoms"),
        )


def subtree_mass(tree: BiMeasureTree, v: int) -> float:
    """Total vertex mass of v and all its descendants."""
    if not 0 <= v < tree.n:
        raise IndexError("vertex index out of range")
    size = tree.shape.subtree_size[v]
    return float(tree.mu[v:v + size].sum())


def mu_skeleton_and_leaves(tree: BiMeasureTree):
    """Partition the subtree spanned by supp(mu) into skeleton and leaves.

    The skeleton contains every atom of mu plus every strict ancestor of a
    support vertex; the leaf set is the rest of the span.  For purely atomic
    mass measures the leaf set is always empty.
    """
    n = tree.n
    par = tree.shape.parent
    supp = tree.mu > 0
    span = supp.copy()
    strict_anc = np.zeros(n, dtype=bool)
    for k in range(n - 1, 0, -1):
        if span[k]:
            span[par[k]] = True
            strict_anc[par[k]] = True
    skeleton = supp | (strict_anc & span)
    leaves = span & ~skeleton
    return np.nonzero(skeleton)[0], np.nonzero(leaves)[0]


@dataclass
class SpannedTree:
    """Reduced tree spanned by the root and a set of marked vertices.

    Vertices are the root, the marked points, and the branch points of the
    union of root paths, in canonical order: root first, marks in sample
    order, remaining branch points in lex order.  Each non-root reduced
    vertex carries its edge to the reduced parent, with the metric length,
    the pruning-density mass of the edge, and the atoms of interior original
    vertices collapsed onto it.
    """

    vertices: np.ndarray          # original lex indices, canonical order
    parent: np.ndarray            # reduced parent index, -1 for root
    marks: np.ndarray             # reduced index of each requested point
    edge_len: np.ndarray          # metric length of edge to parent (0 for root)
    nu_edge: np.ndarray           # density part of nu on the edge to parent
    nu_atom: np.ndarray           # retained atom at the reduced vertex
    interior_atoms: list = field(default_factory=list)
    # interior_atoms[i] is a list of (original_vertex, root_distance, atom)
    # for original vertices strictly inside the edge above vertex i
    root_depth: np.ndarray = None  # metric distance of each vertex from the root

    @property
    def size(self) -> int:
        return len(self.vertices)

    def total_length(self) -> float:
        return float(self.edge_len.sum())

    def edge_nu_total(self, i: int) -> float:
        """Total restricted pruning mass of the edge above reduced vertex i,
        interior atoms included (the atom at i itself is not)."""
        return float(self.nu_edge[i] + sum(a for _, _, a in self.interior_atoms[i]))

    def distance(self, i: int, j: int) -> float:
        """Metric distance between reduced vertices, inherited from the tree."""
        d = self.root_depth
        # walk to the common ancestor inside the reduced tree
        anc_i = {}
        k = i
        while k != -1:
            anc_i[k] = True
            k = self.parent[k]
        k = j
        while k not in anc_i:
            k = self.parent[k]
        return float(d[i] + d[j] - 2 * d[k])

    def distance_matrix(self) -> np.ndarray:
        m = self.size
        out = np.zeros((m, m))
        for i in range(m):
            for j in range(i + 1, m):
                out[i, j] = out[j, i] = self.distance(i, j)
        return out


def spanned_subtree(tree: BiMeasureTree, points) -> SpannedTree:
    """Union of root-to-point paths as a reduced tree.

    The vertex-mass measure is dropped; the pruning measure is restricted to
    the spanned set, keeping the edge density on surviving length and atoms
    on surviving vertices.
    """
    points = list(points)
    if not points:
        raise ValueError("need at least one point to span")
    shape = tree.shape
    n = shape.n
    for p in points:
        if not 0 <= p < n:
            raise IndexError("vertex index out of range")
    par = shape.parent
    depth = shape.depth

    in_span = np.zeros(n, dtype=bool)
    in_span[0] = True
    for p in points:
        v = p
        while v != -1 and not in_span[v]:
            in_span[v] = True
            v = par[v]

    # branch points: span vertices with at least two children inside the span
    span_children = np.zeros(n, dtype=np.int64)
    for v in np.nonzero(in_span)[0]:
        if v != 0:
            span_children[par[v]] += 1

    reduced = {0: 0}
    verts = [0]
    marks = []
    for p in points:
        if p not in reduced:
            reduced[p] = len(verts)
            verts.append(p)
        marks.append(reduced[p])
    for v in np.nonzero(in_span)[0]:
        if span_children[v] >= 2 and v not in reduced:
            reduced[v] = len(verts)
            verts.append(v)

    m = len(verts)
    r_parent = np.full(m, -1, dtype=np.int64)
    edge_len = np.zeros(m)
    nu_edge = np.zeros(m)
    nu_atom = np.array([tree.nu_atoms[v] for v in verts])
    interior = [[] for _ in range(m)]
    el = tree.edge_length
    for i in range(1, m):
        v = verts[i]
        w = par[v]
        inside = []
        while w not in reduced:
            inside.append(w)
            w = par[w]
        r_parent[i] = reduced[w]
        hops = depth[v] - depth[w]
        edge_len[i] = hops * el
        nu_edge[i] = tree.nu_edge_density * edge_len[i]
        for u in inside:
            if tree.nu_atoms[u] > 0:
                interior[i].append((int(u), float(depth[u] * el), float(tree.nu_atoms[u])))

    root_depth = np.array([depth[v] * el for v in verts], dtype=float)
    return SpannedTree(
        vertices=np.asarray(verts, dtype=np.int64),
        parent=r_parent,
        marks=np.asarray(marks, dtype=np.int64),
        edge_len=edge_len,
        nu_edge=nu_edge,
        nu_atom=nu_atom,
        interior_atoms=interior,
        root_depth=root_depth,
    )


def sample_tree_17() -> PlaneTree:
    """Built-in 17-vertex sample tree used by tests and the CLI fixture."""
    parents = [-1, 0, 1, 1, 3, 3, 3, 0, 7, 0, 9, 9, 11, 12, 12, 9, 9]
    return PlaneTree(parents)


def read_jsonl(path):
    """Yield tree records from a JSONL corpus file."""
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def write_jsonl(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
