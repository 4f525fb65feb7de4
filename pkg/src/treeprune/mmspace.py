"""Finite pointed metric-measure spaces and the comparison machinery.

Distance-matrix sampling, the exact Prokhorov distance (subset enumeration
and a max-flow feasibility method that must agree), glued metrics with the
correspondence-distortion term, lower-mass functions, and the energy
distance used to compare empirical distance-matrix clouds.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from scipy.spatial.distance import cdist

from .trees import BiMeasureTree, SpannedTree, spanned_subtree

__all__ = [
    "FiniteMMSpace",
    "Correspondence",
    "SpannedSample",
    "space_from_tree",
    "distance_matrix_sample",
    "prokhorov_distance",
    "glue_metric",
    "gp_upper_bound",
    "gp_exhaustive",
    "lower_mass",
    "sample_spanned_bimeasure",
    "energy_distance",
]

_TOL = 1e-12


@dataclass
class FiniteMMSpace:
    """Finite pointed metric measure space.

    ``dist`` is a symmetric matrix with zero diagonal satisfying the
    triangle inequality; ``mass`` the vertex masses; ``root`` the
    distinguished point; ``marked`` the further designated points in order.
    """

    dist: np.ndarray
    mass: np.ndarray
    root: int = 0
    marked: list = field(default_factory=list)
    validate: bool = True

    def __post_init__(self):
        self.dist = np.asarray(self.dist, dtype=float)
        self.mass = np.asarray(self.mass, dtype=float)
        n = len(self.mass)
        if self.dist.shape != (n, n):
            raise ValueError("distance matrix shape mismatch")
        if self.validate:
            if np.abs(np.diag(self.dist)).max(initial=0.0) > _TOL:
                raise ValueError("nonzero diagonal")
            if np.abs(self.dist - self.dist.T).max(initial=0.0) > _TOL:
                raise ValueError("asymmetric distances")
            if (self.dist < -_TOL).any() or (self.mass < 0).any():
                raise ValueError("negative entries")
            for k in range(n):
                if (self.dist > self.dist[:, k:k + 1] + self.dist[k:k + 1, :] + _TOL).any():
                    raise ValueError("triangle inequality fails")
        if not 0 <= self.root < n:
            raise ValueError("root index out of range")

    @property
    def size(self) -> int:
        return len(self.mass)

    def total_mass(self) -> float:
        return float(self.mass.sum())

    def four_point_ok(self, tol: float = 1e-9) -> bool:
        """Whether the metric is tree-like (0-hyperbolic)."""
        d = self.dist
        n = self.size
        for i, j, k, l in itertools.combinations(range(n), 4):
            s = sorted([d[i, j] + d[k, l], d[i, k] + d[j, l], d[i, l] + d[j, k]])
            if s[2] - s[1] > tol:
                return False
        return True

    def to_record(self) -> dict:
        return {
            "dist": [[float(x) for x in row] for row in self.dist],
            "mass": [float(x) for x in self.mass],
            "root": int(self.root),
            "marked": [int(i) for i in self.marked],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "FiniteMMSpace":
        return cls(dist=np.asarray(rec["dist"], dtype=float),
                   mass=np.asarray(rec["mass"], dtype=float),
                   root=int(rec.get("root", 0)),
                   marked=list(rec.get("marked", [])))


@dataclass
class Correspondence:
    """Relation between the points of two spaces; roots must be paired."""

    pairs: list

    def __post_init__(self):
        if not self.pairs:
            raise ValueError("empty correspondence")
        self.pairs = [(int(a), int(b)) for a, b in self.pairs]

    def distortion(self, A: FiniteMMSpace, B: FiniteMMSpace) -> float:
        dis = 0.0
        for (x1, y1) in self.pairs:
            for (x2, y2) in self.pairs:
                dis = max(dis, abs(A.dist[x1, x2] - B.dist[y1, y2]))
        return dis


def _tree_distance_matrix(tree: BiMeasureTree) -> np.ndarray:
    depth = tree.shape.depth.astype(float) * tree.edge_length
    n = tree.n
    # depth of the mrca via ancestor blocks: anc[i, j] iff i is an ancestor of j
    size = tree.shape.subtree_size
    idx = np.arange(n)
    anc = (idx[:, None] <= idx[None, :]) & (idx[None, :] < (idx + size)[:, None])
    mrca_depth = np.max(np.where(anc[:, :, None] & anc[:, None, :],
                                 depth[:, None, None], -np.inf), axis=0)
    return depth[:, None] + depth[None, :] - 2 * mrca_depth


def space_from_tree(tree: BiMeasureTree, marked=()) -> FiniteMMSpace:
    """The tree as a pointed metric measure space (path metric, mu)."""
    return FiniteMMSpace(dist=_tree_distance_matrix(tree), mass=tree.mu.copy(),
                         root=0, marked=list(marked), validate=False)


def distance_matrix_sample(space: FiniteMMSpace, m: int,
                           rng: np.random.Generator) -> np.ndarray:
    """Upper-triangular distance vector of (root, marked, m mu-samples)."""
    total = space.total_mass()
    if total <= 0:
        raise ValueError("zero total mass")
    if m < 1:
        raise ValueError("need m >= 1")
    cum = np.cumsum(space.mass) / total
    cum[-1] = 1.0
    draws = np.searchsorted(cum, rng.random(m), side="right")
    pts = np.concatenate(([space.root], space.marked, draws)).astype(np.int64)
    sub = space.dist[np.ix_(pts, pts)]
    iu = np.triu_indices(len(pts), k=1)
    return sub[iu]


def _subset_sums(mass: np.ndarray) -> np.ndarray:
    """sums[S] = total mass of the bitmask-indexed subset S."""
    n = len(mass)
    sums = np.zeros(1 << n)
    for i in range(n):
        block = 1 << i
        sums[block:2 * block] = sums[:block] + mass[i]
    return sums


def _neighborhood_masses(dist: np.ndarray, mass: np.ndarray, eps: float) -> np.ndarray:
    """out[S] = mass of the closed eps-neighborhood of subset S."""
    n = len(mass)
    balls = [(int(np.sum((dist[i] <= eps + _TOL) << np.arange(n)))) for i in range(n)]
    nb = np.zeros(1 << n, dtype=np.int64)
    for i in range(n):
        block = 1 << i
        nb[block:2 * block] = nb[:block] | balls[i]
    sums = _subset_sums(mass)
    return sums[nb]


def _prokhorov_subsets(dist: np.ndarray, mu_a: np.ndarray, mu_b: np.ndarray) -> float:
    n = len(mu_a)
    sa, sb = _subset_sums(mu_a), _subset_sums(mu_b)
    radii = np.unique(np.concatenate(([0.0], dist[np.triu_indices(n, k=1)])))
    best = np.inf
    for r in radii:
        na = _neighborhood_masses(dist, mu_a, r)
        nb = _neighborhood_masses(dist, mu_b, r)
        # smallest eps that works while the neighborhoods stay those of radius r
        deficit = max(float((sb - na).max()), float((sa - nb).max()), 0.0)
        best = min(best, max(r, deficit))
    return best


def _flow_feasible(dist: np.ndarray, mu_a: np.ndarray, mu_b: np.ndarray,
                   eps: float) -> bool:
    """Whether a sub-coupling on {d <= eps} can move max-total minus eps."""
    need = max(mu_a.sum(), mu_b.sum()) - eps
    if need <= _TOL:
        return True
    n = len(mu_a)
    g = nx.DiGraph()
    for i in range(n):
        g.add_edge("s", ("a", i), capacity=float(mu_a[i]))
        g.add_edge(("b", i), "t", capacity=float(mu_b[i]))
    for i in range(n):
        for j in range(n):
            if dist[i, j] <= eps + _TOL:
                g.add_edge(("a", i), ("b", j))  # infinite capacity
    value, _ = nx.maximum_flow(g, "s", "t")
    return value >= need - 1e-9


def _prokhorov_flow(dist: np.ndarray, mu_a: np.ndarray, mu_b: np.ndarray) -> float:
    n = len(mu_a)
    sa, sb = _subset_sums(mu_a), _subset_sums(mu_b)
    deficits = np.abs(np.concatenate([(sb[:, None] - sa[None, :]).ravel(),
                                      [0.0]]))
    grid = np.unique(np.concatenate([dist[np.triu_indices(n, k=1)], deficits]))
    grid = grid[grid >= 0.0]
    lo, hi = 0, len(grid) - 1
    if _flow_feasible(dist, mu_a, mu_b, float(grid[lo])):
        return float(max(grid[lo], 0.0))
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _flow_feasible(dist, mu_a, mu_b, float(grid[mid])):
            hi = mid
        else:
            lo = mid
    return float(grid[hi])


def prokhorov_distance(dist: np.ndarray, mu_a, mu_b,
                       method: str = "subsets") -> float:
    """Exact two-sided Prokhorov distance between finite measures.

    Both methods search the same finite candidate grid on which the optimum
    must lie; ``subsets`` enumerates all subsets directly (size <= 16),
    ``flow`` decides each candidate by a max-flow feasibility test.
    """
    dist = np.asarray(dist, dtype=float)
    mu_a = np.asarray(mu_a, dtype=float)
    mu_b = np.asarray(mu_b, dtype=float)
    n = len(mu_a)
    if len(mu_b) != n or dist.shape != (n, n):
        raise ValueError("dimension mismatch")
    if n > 16:
        raise ValueError("subset enumeration capped at 16 points")
    if method == "subsets":
        return _prokhorov_subsets(dist, mu_a, mu_b)
    if method == "flow":
        return _prokhorov_flow(dist, mu_a, mu_b)
    raise ValueError("method must be 'subsets' or 'flow'")


def glue_metric(A: FiniteMMSpace, B: FiniteMMSpace, R: Correspondence) -> FiniteMMSpace:
    """Metric on the disjoint union built from a correspondence.

    Cross distances are inf over related pairs (x', y') of
    d_A(x, x') + d_B(y', y) + dis(R)/2, with dis(R) the distortion of R.
    The result carries both mass vectors side by side (A first).
    """
    for (x, y) in R.pairs:
        if not (0 <= x < A.size and 0 <= y < B.size):
            raise ValueError("correspondence index out of range")
    if (A.root, B.root) not in R.pairs:
        raise ValueError("roots must be paired")
    half_dis = 0.5 * R.distortion(A, B)
    na, nb = A.size, B.size
    cross = np.full((na, nb), np.inf)
    for (x1, y1) in R.pairs:
        cand = A.dist[:, x1][:, None] + B.dist[y1, :][None, :] + half_dis
        cross = np.minimum(cross, cand)
    dist = np.zeros((na + nb, na + nb))
    dist[:na, :na] = A.dist
    dist[na:, na:] = B.dist
    dist[:na, na:] = cross
    dist[na:, :na] = cross.T
    mass = np.concatenate([A.mass, B.mass])
    return FiniteMMSpace(dist=dist, mass=mass, root=A.root,
                         marked=list(A.marked) + [na + i for i in B.marked])


def gp_upper_bound(A: FiniteMMSpace, B: FiniteMMSpace, R: Correspondence) -> float:
    """Upper bound for the pointed Gromov-Prokhorov distance via one gluing.

    The glued metric is one admissible extension, so its Prokhorov distance
    plus the root and marked-point distances dominates the infimum.
    """
    if len(A.marked) != len(B.marked):
        raise ValueError("marked point counts differ")
    glued = glue_metric(A, B, R)
    na = A.size
    mu_a = np.concatenate([A.mass, np.zeros(B.size)])
    mu_b = np.concatenate([np.zeros(na), B.mass])
    total = prokhorov_distance(glued.dist, mu_a, mu_b, method="subsets")
    total += glued.dist[A.root, na + B.root]
    for u, v in zip(A.marked, B.marked):
        total += glued.dist[u, na + v]
    return float(total)


def gp_exhaustive(A: FiniteMMSpace, B: FiniteMMSpace) -> float:
    """Minimum of gp_upper_bound over every correspondence (sizes <= 5)."""
    if A.size > 5 or B.size > 5:
        raise ValueError("exhaustive search capped at 5 points per side")
    required = [(A.root, B.root)] + list(zip(A.marked, B.marked))
    optional = [(i, j) for i in range(A.size) for j in range(B.size)
                if (i, j) not in required]
    best = np.inf
    for k in range(len(optional) + 1):
        for extra in itertools.combinations(optional, k):
            R = Correspondence(required + list(extra))
            best = min(best, gp_upper_bound(A, B, R))
    return float(best)


def lower_mass(space: FiniteMMSpace, delta: float, radius: float = np.inf) -> float:
    """inf over support points within radius of the root of the open
    delta-ball mass; infinity when no support point qualifies."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    supp = space.mass > 0
    near = space.dist[space.root] <= radius + _TOL
    centers = np.nonzero(supp & near)[0]
    if len(centers) == 0:
        return np.inf
    open_balls = space.dist[centers] < delta
    return float(np.min((space.mass[None, :] * open_balls).sum(axis=1)))


@dataclass
class SpannedSample:
    """Sampled spanned subtree as a pointed space with its nu summaries."""

    space: FiniteMMSpace
    span: SpannedTree
    nu_edge_totals: np.ndarray  # restricted nu of the edge above each vertex
    nu_atoms: np.ndarray        # retained atom at each reduced vertex


def sample_spanned_bimeasure(tree: BiMeasureTree, n: int,
                             rng: np.random.Generator) -> SpannedSample:
    """Span of n i.i.d. mu-samples with the pruning measure restricted."""
    total = tree.total_mu()
    if total <= 0:
        raise ValueError("zero total mass")
    if n < 1:
        raise ValueError("need n >= 1")
    cum = np.cumsum(tree.mu) / total
    cum[-1] = 1.0
    draws = np.searchsorted(cum, rng.random(n), side="right")
    span = spanned_subtree(tree, draws)
    m = span.size
    edge_totals = np.array([span.edge_nu_total(i) for i in range(m)])
    space = FiniteMMSpace(dist=span.distance_matrix(),
                          mass=np.zeros(m), root=0,
                          marked=list(span.marks), validate=False)
    return SpannedSample(space=space, span=span, nu_edge_totals=edge_totals,
                         nu_atoms=span.nu_atom.copy())


def energy_distance(cloud_a: np.ndarray, cloud_b: np.ndarray) -> float:
    """Two-sample energy statistic between point clouds (rows are points).

    2 E|X - Y| - E|X - X'| - E|Y - Y'| with means over all ordered pairs,
    diagonal included; nonnegative, zero for identical clouds.
    """
    a = np.atleast_2d(np.asarray(cloud_a, dtype=float))
    b = np.atleast_2d(np.asarray(cloud_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("empty cloud")
    if a.shape[1] != b.shape[1]:
        raise ValueError("dimension mismatch")
    cross = cdist(a, b).mean()
    within_a = cdist(a, a).mean()
    within_b = cdist(b, b).mean()
    return float(2.0 * cross - within_a - within_b)
