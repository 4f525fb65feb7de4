"""Coding paths of plane trees and their exact combinatorial identities.

A plane tree of n vertices is encoded by four integer paths: the Lukasiewicz
path ``W_up`` (depth-first child-count-minus-one partial sums, lex order),
its reverse-lex counterpart ``W_down``, the height sequence ``H`` and the
contour sequence ``C``.  The ancestral degree sums ``sigma_up`` decompose
exactly into path values, which the tests exercise vertex by vertex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trees import BiMeasureTree, PlaneTree, mirror_permutation

__all__ = [
    "CodingPaths",
    "SigmaDecomposition",
    "compute_paths",
    "ancestor_by_path",
    "lex_to_revlex",
    "sigma_up",
    "sigma_up_profile",
    "children_split",
    "truncated_split_sums",
    "pruning_profile",
    "StepFunction",
]


@dataclass
class CodingPaths:
    """The four coding sequences of one plane tree.

    ``luk_up`` and ``luk_down`` have length n+1 and end at -1; ``height``
    has length n; ``contour`` has length 2(n-1)+1.
    """

    luk_up: np.ndarray
    luk_down: np.ndarray
    height: np.ndarray
    contour: np.ndarray

    @property
    def n(self) -> int:
        return len(self.height)


@dataclass
class SigmaDecomposition:
    """Exact decomposition sigma = luk_term + rev_term + remainder."""

    sigma: int
    luk_term: int
    rev_term: int
    remainder: int
    rev_index: int
    descendants: int


def _contour(tree: PlaneTree) -> np.ndarray:
    depth = tree.depth
    out = np.empty(2 * (tree.n - 1) + 1, dtype=np.int64)
    pos = 0
    # Euler tour with an explicit stack; a vertex reappears after each child
    stack = [(0, 0)]
    child_lists = [tree.children(v) for v in range(tree.n)]
    while stack:
        v, next_child = stack[-1]
        if next_child == 0:
            out[pos] = depth[v]
            pos += 1
        if next_child < len(child_lists[v]):
            stack[-1] = (v, next_child + 1)
            stack.append((int(child_lists[v][next_child]), 0))
        else:
            stack.pop()
            if stack:
                out[pos] = depth[stack[-1][0]]
                pos += 1
    return out


def compute_paths(tree: PlaneTree) -> CodingPaths:
    """All four coding sequences of a plane tree."""
    counts = tree.child_count
    luk_up = np.concatenate(([0], np.cumsum(counts - 1)))
    rev = mirror_permutation(tree)
    luk_down = np.concatenate(([0], np.cumsum(counts[rev] - 1)))
    return CodingPaths(
        luk_up=luk_up,
        luk_down=luk_down,
        height=tree.depth.copy(),
        contour=_contour(tree),
    )


def _path(paths: CodingPaths, ordering: str) -> np.ndarray:
    if ordering == "lex":
        return paths.luk_up
    if ordering == "revlex":
        return paths.luk_down
    raise ValueError("ordering must be 'lex' or 'revlex'")


def ancestor_by_path(paths: CodingPaths, ordering: str, i: int, j: int) -> bool:
    """Whether the i-th vertex is an ancestor of the j-th, path values only.

    Indices refer to the chosen ordering's vertex enumeration.  The i-th
    vertex is an ancestor of the j-th iff i <= j and the path never drops
    below its value at i on the way to j.
    """
    W = _path(paths, ordering)
    n = paths.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError("index out of range")
    return i <= j and int(W[i:j + 1].min()) == int(W[i])


def lex_to_revlex(tree: PlaneTree, k: int):
    """Reverse-lex index of the k-th lex vertex, with its descendant count.

    k_tilde = n - 1 - k + depth(k) - D(k), where D(k) is the number of
    strict descendants of the vertex.  The map is a bijection of {0..n-1}.
    """
    if not 0 <= k < tree.n:
        raise IndexError("index out of range")
    d = int(tree.subtree_size[k]) - 1
    k_tilde = tree.n - 1 - k + int(tree.depth[k]) - d
    return k_tilde, d


def sigma_up_profile(tree: PlaneTree) -> np.ndarray:
    """sigma_up at every lex vertex: sum of c(v)-1 over non-leaf ancestors."""
    counts = tree.child_count
    par = tree.parent
    g = np.empty(tree.n, dtype=np.int64)
    g[0] = counts[0] - 1
    for k in range(1, tree.n):
        g[k] = g[par[k]] + counts[k] - 1
    return g - np.minimum(counts - 1, 0)


def sigma_up(tree: PlaneTree, k: int, paths: CodingPaths = None,
             profile: np.ndarray = None) -> SigmaDecomposition:
    """Ancestral degree sum at lex vertex k, decomposed into path values.

    ``paths`` and ``profile`` may be passed in when querying many vertices
    of the same tree, avoiding a recomputation per call.
    """
    if not 0 <= k < tree.n:
        raise IndexError("index out of range")
    if paths is None:
        paths = compute_paths(tree)
    sig = int((profile if profile is not None else sigma_up_profile(tree))[k])
    k_tilde, d = lex_to_revlex(tree, k)
    luk_term = int(paths.luk_up[k])
    rev_term = int(paths.luk_down[k_tilde])
    delta = int(paths.luk_up[k + 1] - paths.luk_up[k])
    remainder = delta - min(delta, 0)
    return SigmaDecomposition(
        sigma=sig,
        luk_term=luk_term,
        rev_term=rev_term,
        remainder=remainder,
        rev_index=k_tilde,
        descendants=d,
    )


def children_split(tree: PlaneTree, paths: CodingPaths, ordering: str,
                   i: int, j: int):
    """Children of the i-th vertex visited before/after the j-th vertex.

    Requires the i-th vertex to be an ancestor of the j-th (i < j) in the
    chosen ordering.  Returns (before, after) with
    before = W(i+1) - I(i+1, j) and after = I(i+1, j) - W(i), where I is the
    running minimum of the path on [i+1, j].
    """
    if i >= j:
        raise ValueError("need i < j")
    if not ancestor_by_path(paths, ordering, i, j):
        raise ValueError("vertex i is not an ancestor of vertex j")
    W = _path(paths, ordering)
    I = int(W[i + 1:j + 1].min())
    return int(W[i + 1]) - I, I - int(W[i])


def truncated_split_sums(tree: PlaneTree, paths: CodingPaths, j: int,
                         beta: float):
    """Threshold-truncated before/after sums over strict ancestors of j.

    Splits each strict lex ancestor's contribution by whether its child-count
    increment exceeds ``beta``, and does the same for the after-sums of the
    matching reverse-lex ancestors.  Returns a dict with the four truncated
    sums and the two path values bounding them:

        after_leq + after_gt   = W_up(j)         (exact)
        before_leq             <= W_down(j_tilde) - rev_after_gt

    Both relations are asserted by the identity tests at every vertex.
    """
    W_up, W_down = paths.luk_up, paths.luk_down
    j_tilde, _ = lex_to_revlex(tree, j)
    after_leq = after_gt = before_leq = rev_after_gt = 0
    # strict lex ancestors of j
    S = np.minimum.accumulate(W_up[j::-1])[::-1]
    anc = [k for k in range(j) if W_up[k] == S[k]]
    for k in anc:
        before, after = children_split(tree, paths, "lex", k, j)
        delta = int(W_up[k + 1] - W_up[k])
        if delta > beta:
            after_gt += after
        else:
            after_leq += after
            before_leq += before
    # strict revlex ancestors of the same vertex
    S = np.minimum.accumulate(W_down[j_tilde::-1])[::-1]
    anc_rev = [k for k in range(j_tilde) if W_down[k] == S[k]]
    for k in anc_rev:
        _, after = children_split(tree, paths, "revlex", k, j_tilde)
        delta = int(W_down[k + 1] - W_down[k])
        if delta > beta:
            rev_after_gt += after
    return {
        "after_leq": after_leq,
        "after_gt": after_gt,
        "before_leq": before_leq,
        "rev_after_gt": rev_after_gt,
        "luk_up_j": int(W_up[j]),
        "luk_down_j_tilde": int(W_down[j_tilde]),
    }


class StepFunction:
    """Right-continuous nondecreasing step function given by jump points."""

    def __init__(self, jumps: np.ndarray, sizes: np.ndarray):
        order = np.argsort(jumps, kind="stable")
        self.jumps = np.asarray(jumps, dtype=float)[order]
        self.sizes = np.asarray(sizes, dtype=float)[order]
        self.cum = np.cumsum(self.sizes)

    def __call__(self, delta: float) -> float:
        idx = np.searchsorted(self.jumps, delta, side="right")
        return float(self.cum[idx - 1]) if idx > 0 else 0.0

    def total(self) -> float:
        return float(self.cum[-1]) if len(self.cum) else 0.0


class RampFunction:
    """min(slope * delta, cap): the continuous part of a root-path profile."""

    def __init__(self, slope: float, cap: float):
        self.slope = slope
        self.cap = cap

    def __call__(self, delta: float) -> float:
        return min(self.slope * max(delta, 0.0), self.cap)

    def total(self) -> float:
        return self.cap


def pruning_profile(tree: BiMeasureTree, paths: CodingPaths, k: int):
    """Cumulative pruning mass along the root path of vertex k.

    Returns (atom_profile, density_profile): the atom part jumps at the
    root-distances of the ancestors of u(k), the density part grows linearly
    along the path and saturates at its total length.
    """
    if not 0 <= k < tree.n:
        raise IndexError("index out of range")
    par = tree.shape.parent
    el = tree.edge_length
    jumps, sizes = [], []
    v = k
    while v != -1:
        jumps.append(tree.shape.depth[v] * el)
        sizes.append(tree.nu_atoms[v])
        v = par[v]
    atom = StepFunction(np.asarray(jumps), np.asarray(sizes))
    path_len = float(tree.shape.depth[k]) * el
    density = RampFunction(tree.nu_edge_density, tree.nu_edge_density * path_len)
    return atom, density
