"""Exact samplers for conditioned Galton-Watson trees and p-trees.

Conditioned sampling draws i.i.d. offspring counts conditioned on their sum
and applies the cycle lemma.  The conditioning step is exact at every size:
closed-form shortcuts for the geometric and Poisson laws (uniform
compositions / multinomial counts), batched rejection for everything else.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .trees import LabeledRootedTree, PlaneTree, TreeStructureError

__all__ = [
    "OffspringLaw",
    "ScalingConstants",
    "PVector",
    "UnreachableError",
    "BudgetError",
    "make_offspring",
    "scaling_constants",
    "make_rng",
    "sample_gw_conditioned",
    "sample_gw_conditioned_many",
    "sample_ptree",
    "enumerate_trees",
]


class UnreachableError(ValueError):
    """The requested tree size has probability zero under the law."""


class BudgetError(RuntimeError):
    """A sampling budget was exhausted; retry with a larger budget."""


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for a (seed, stream...) replica key."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


@dataclass
class OffspringLaw:
    """Critical offspring distribution, finitely truncated.

    ``pmf[k]`` is the probability of k children.  The law must be critical
    (mean one within 1e-12) and, unless flagged, aperiodic in the shifted
    sense: gcd{|k - 1| : pmf[k] > 0, k != 1} = 1.
    """

    pmf: np.ndarray
    kind: str
    alpha: float = 2.0
    cum: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.pmf = np.asarray(self.pmf, dtype=float)
        if (self.pmf < 0).any():
            raise ValueError("negative probabilities")
        mass = math.fsum(self.pmf)
        mean = math.fsum(k * p for k, p in enumerate(self.pmf))
        if abs(mass - 1.0) > 1e-12:
            raise ValueError("pmf mass %.3e is not 1" % mass)
        if abs(mean - 1.0) > 1e-12:
            raise ValueError("pmf mean %.3e is not 1 (criticality)" % mean)
        if self.pmf[0] <= 0:
            raise ValueError("need positive probability of zero children")
        if self.pmf[0] + (self.pmf[1] if len(self.pmf) > 1 else 0.0) >= 1.0 - 1e-15:
            raise ValueError("law must put mass above one child")
        if self.kind != "binary" and self.period() != 1:
            raise ValueError("offspring law is periodic (shifted-support gcd %d)" % self.period())
        self.cum = np.cumsum(self.pmf)
        self.cum[-1] = 1.0

    def period(self) -> int:
        g = 0
        for k in np.nonzero(self.pmf)[0]:
            if k >= 1:
                g = math.gcd(g, int(k))
                if g == 1:
                    break
        return g

    def variance(self) -> float:
        return math.fsum(k * k * p for k, p in enumerate(self.pmf)) - 1.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.searchsorted(self.cum, rng.random(size), side="right")


@lru_cache(maxsize=8)
def _stable_canonical_pmf_cached(alpha: float, tail_tol: float):
    pmf = _stable_canonical_pmf(alpha, tail_tol)
    pmf.setflags(write=False)
    return pmf


def _stable_canonical_pmf(alpha: float, tail_tol: float = 1e-10) -> np.ndarray:
    """pmf of the law with generating function f(s) = s + (1-s)^alpha / alpha.

    eta(0) = 1/alpha, eta(1) = 0, eta(k) = |binom(alpha, k)| / alpha for
    k >= 2, with the ratio recurrence eta(k+1)/eta(k) = (k - alpha)/(k + 1).
    Truncated once the tail drops below ``tail_tol``; mass and mean are then
    repaired exactly by adjusting eta(0) and the last retained entry.
    """
    if not 1.0 < alpha <= 2.0:
        raise ValueError("alpha must lie in (1, 2]")
    if alpha == 2.0:
        return np.array([0.5, 0.0, 0.5])
    eta2 = (alpha - 1.0) / 2.0
    chunks = [np.array([1.0 / alpha, 0.0])]
    k0, val = 2, eta2
    while True:
        size = 1 << 18
        ks = np.arange(k0, k0 + size, dtype=float)
        ratios = (ks - alpha) / (ks + 1.0)
        block = val * np.concatenate(([1.0], np.cumprod(ratios[:-1])))
        chunks.append(block)
        k_end = k0 + size - 1
        # eta(k) ~ c k^{-1-alpha}, so the tail beyond K is about eta(K) K / alpha
        if block[-1] * k_end / alpha < 0.1 * tail_tol:
            break
        val = block[-1] * ratios[-1]
        k0 = k_end + 1
    pmf = np.concatenate(chunks)
    tail = np.cumsum(pmf[::-1])[::-1]  # tail[k] = sum_{j >= k} pmf[j]
    keep = np.nonzero(tail > tail_tol)[0]
    pmf = pmf[:max(int(keep[-1]) + 1, 3)].copy()
    eps_mass = 1.0 - math.fsum(pmf)
    eps_mean = 1.0 - math.fsum(k * p for k, p in enumerate(pmf))
    last = len(pmf) - 1
    b = eps_mean / last
    pmf[last] += b
    pmf[0] += eps_mass - b
    return pmf


def make_offspring(kind: str, alpha: float = None, pmf=None) -> OffspringLaw:
    """Construct a critical offspring law by name.

    Kinds: ``geometric`` (eta(k) = 2^{-k-1}), ``poisson`` (mean one),
    ``binary`` ({0, 2} with equal mass; periodic, so only even progeny
    deficits are reachable), ``stable`` (canonical alpha-stable tail, needs
    ``alpha`` in (1, 2]), ``custom`` (explicit pmf).
    """
    if kind == "geometric":
        ks = np.arange(64)
        return OffspringLaw(0.5 ** (ks + 1.0), "geometric")
    if kind == "poisson":
        ks = np.arange(34, dtype=float)
        p = np.exp(-1.0) / np.array([math.factorial(int(k)) for k in ks])
        return OffspringLaw(p, "poisson")
    if kind == "binary":
        return OffspringLaw([0.5, 0.0, 0.5], "binary")
    if kind == "stable":
        if alpha is None:
            raise ValueError("stable law needs alpha")
        if alpha == 2.0:
            # the boundary case is exactly the binary law
            return OffspringLaw([0.5, 0.0, 0.5], "binary", alpha=2.0)
        return OffspringLaw(_stable_canonical_pmf_cached(float(alpha), 1e-10).copy(),
                            "stable", alpha=float(alpha))
    if kind == "custom":
        if pmf is None:
            raise ValueError("custom law needs a pmf")
        return OffspringLaw(pmf, "custom")
    raise ValueError("unknown offspring kind %r" % kind)


@dataclass
class ScalingConstants:
    """Edge-length and path-height rescaling factors for size N."""

    a_n: float
    b_n: float
    n: int


def scaling_constants(law: OffspringLaw, n: int, ell: float = None) -> ScalingConstants:
    """a_N = l * N^{1/alpha - 1}, b_N = N^{-1/alpha} / l, so a_N b_N = 1/N.

    The constant l defaults to the offspring standard deviation for
    finite-variance laws (alpha = 2) and to 1 for stable laws.
    """
    alpha = law.alpha if law.kind == "stable" else 2.0
    if ell is None:
        ell = math.sqrt(law.variance()) if alpha == 2.0 else 1.0
    a_n = ell * n ** (1.0 / alpha - 1.0)
    b_n = n ** (-1.0 / alpha) / ell
    return ScalingConstants(a_n=a_n, b_n=b_n, n=n)


def _cycle_shift(xi: np.ndarray) -> np.ndarray:
    """Rotate an increment row so its partial sums first hit -1 at the end."""
    s = np.cumsum(xi - 1)
    j = int(np.argmin(s))  # first index attaining the minimum
    return np.roll(xi, -(j + 1))


def _check_reachable(law: OffspringLaw, n: int):
    if n == 1:
        return
    supp = np.nonzero(law.pmf)[0]
    g = 0
    for k in supp:
        if k > 0:
            g = math.gcd(g, int(k))
            if g == 1:
                break
    if g == 0 or (n - 1) % g != 0:
        raise UnreachableError("size %d unreachable under this offspring law" % n)
    if n <= 64:
        # exact reachability: can n draws from the support sum to n - 1?
        small = [int(k) for k in supp[supp <= n - 1]]
        ok = {0}
        for _ in range(n):
            ok = {s + k for s in ok for k in small if s + k <= n - 1}
        if n - 1 not in ok:
            raise UnreachableError("size %d unreachable under this offspring law" % n)


def _conditioned_counts(law: OffspringLaw, n: int, reps: int,
                        rng: np.random.Generator, max_batches: int) -> np.ndarray:
    """reps rows of n offspring counts, i.i.d. conditioned on sum n - 1."""
    if law.kind == "geometric":
        # conditioned geometric rows are uniform compositions of n-1 into n
        # parts: stars and bars with n-1 bars among 2n-2 slots
        out = np.empty((reps, n), dtype=np.int64)
        for r in range(reps):
            bars = np.sort(rng.choice(2 * n - 2, size=n - 1, replace=False))
            out[r, 0] = bars[0]
            out[r, 1:-1] = np.diff(bars) - 1
            out[r, -1] = (2 * n - 3) - bars[-1]
        return out
    if law.kind == "poisson":
        return rng.multinomial(n - 1, np.full(n, 1.0 / n), size=reps).astype(np.int64)
    # batched rejection on the unconditioned i.i.d. sum
    rows = []
    have = 0
    batch = max(1, min((4 << 20) // max(n, 1), 8192))
    for _ in range(max_batches):
        draw = law.sample(rng, batch * n).reshape(batch, n)
        hit = draw[draw.sum(axis=1) == n - 1]
        if len(hit):
            rows.append(hit)
            have += len(hit)
            if have >= reps:
                return np.concatenate(rows)[:reps]
    raise BudgetError("rejection budget exhausted (%d batches of %d rows)"
                      % (max_batches, batch))


def sample_gw_conditioned_many(law: OffspringLaw, n: int, reps: int,
                               rng: np.random.Generator,
                               max_batches: int = 100000) -> list:
    """reps independent Galton-Watson trees conditioned to have n vertices."""
    _check_reachable(law, n)
    if n == 1:
        return [PlaneTree.from_child_counts([0]) for _ in range(reps)]
    counts = _conditioned_counts(law, n, reps, rng, max_batches)
    return [PlaneTree.from_child_counts(_cycle_shift(row)) for row in counts]


def sample_gw_conditioned(law: OffspringLaw, n: int, rng: np.random.Generator,
                          max_batches: int = 100000) -> PlaneTree:
    return sample_gw_conditioned_many(law, n, 1, rng, max_batches)[0]


@dataclass
class PVector:
    """Nonincreasing probability vector on labels 1..N."""

    p: np.ndarray
    sigma_n: float = None

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if (self.p <= 0).any():
            raise ValueError("entries must be positive")
        if abs(self.p.sum() - 1.0) > 1e-12:
            raise ValueError("entries must sum to 1")
        if (np.diff(self.p) > 1e-15).any():
            raise ValueError("entries must be nonincreasing")
        self.sigma_n = float(math.sqrt((self.p ** 2).sum()))

    @property
    def n(self) -> int:
        return len(self.p)

    @classmethod
    def uniform(cls, n: int) -> "PVector":
        return cls(np.full(n, 1.0 / n))


def sample_ptree(p: PVector, rng: np.random.Generator,
                 step_cap: int = 1 << 30) -> LabeledRootedTree:
    """Birthday-sequence p-tree: law pi(tau) = prod p_i^{c_i(tau)}.

    Labels are drawn i.i.d. from p; the first draw is the root and every
    later first occurrence attaches below the draw preceding it.
    """
    n = p.n
    uniform = bool(p.p.max() - p.p.min() < 1e-15)
    cum = None
    if not uniform:
        cum = np.cumsum(p.p)
        cum[-1] = 1.0

    def draw(size):
        if uniform:
            return rng.integers(0, n, size=size)
        return np.searchsorted(cum, rng.random(size), side="right")

    # coupon-collector scale: about sum_i 1/(n p_i) draws in the uniform case
    block = max(64, int(n * (math.log(n) + 4.0) * max(1.0, 1.0 / (n * p.p.min()))))
    draws = draw(min(block, step_cap))
    while True:
        labels, first = np.unique(draws, return_index=True)
        if len(labels) == n:
            break
        if len(draws) > step_cap:
            raise BudgetError("birthday construction exceeded the step cap")
        block = min(2 * block, step_cap)
        draws = np.concatenate([draws, draw(block)])
    root = int(draws[0]) + 1
    parent = {}
    for lab, idx in zip(labels, first):
        if idx > 0:
            parent[int(lab) + 1] = int(draws[idx - 1]) + 1
    return LabeledRootedTree(n=n, root=root, parent=parent)


def _enumerate_plane_shapes(n: int):
    """All child-count sequences of plane trees with n vertices."""
    out = []

    def rec(prefix, open_slots):
        # open_slots = vertices promised but not yet placed
        used = len(prefix)
        if used == n:
            if open_slots == 0:
                out.append(tuple(prefix))
            return
        if open_slots == 0 or open_slots > n - used:
            return
        for c in range(0, n - used):
            prefix.append(c)
            rec(prefix, open_slots - 1 + c)
            prefix.pop()

    rec([], 1)
    return out


def enumerate_trees(n: int, kind: str, law: OffspringLaw = None,
                    p: PVector = None):
    """Exhaustive small-size tree lists with exact probabilities.

    ``plane`` needs an offspring law (conditioned weights, n <= 8);
    ``labeled`` needs a p-vector (birthday-tree weights, n <= 5).
    """
    if kind == "plane":
        if n > 8:
            raise ValueError("plane enumeration capped at n = 8")
        if law is None:
            raise ValueError("plane enumeration needs an offspring law")
        shapes = _enumerate_plane_shapes(n)
        weights = []
        for counts in shapes:
            w = 1.0
            for c in counts:
                w *= law.pmf[c] if c < len(law.pmf) else 0.0
            weights.append(w)
        total = math.fsum(weights)
        if total <= 0:
            raise UnreachableError("size %d unreachable under this law" % n)
        return [(PlaneTree.from_child_counts(np.array(s)), w / total)
                for s, w in zip(shapes, weights)]
    if kind == "labeled":
        if n > 5:
            raise ValueError("labeled enumeration capped at n = 5")
        if p is None:
            raise ValueError("labeled enumeration needs a p-vector")
        out = []
        labels = list(range(1, n + 1))
        for root in labels:
            others = [v for v in labels if v != root]
            for parents in itertools.product(labels, repeat=len(others)):
                pmap = dict(zip(others, parents))
                try:
                    tree = LabeledRootedTree(n=n, root=root, parent=pmap)
                except TreeStructureError:
                    continue
                w = 1.0
                for v in labels:
                    w *= p.p[v - 1] ** tree.child_count_of(v)
                out.append((tree, w))
        total = math.fsum(w for _, w in out)
        return [(t, w / total) for t, w in out]
    raise ValueError("kind must be 'plane' or 'labeled'")
