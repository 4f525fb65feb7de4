"""Poisson pruning dynamics on bi-measure trees.

Cuts arrive at rate one per unit of pruning mass; each cut removes the
subtree hanging below it and the process keeps the root component with the
restricted measures.  The jump chain (competing exponentials) is exact; the
fixed-time marginal has an independent-thinning description used as an
oracle in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .trees import BiMeasureTree, PlaneTree

__all__ = [
    "CutEvent",
    "PruneState",
    "Trajectory",
    "make_pruning_measure",
    "initial_state",
    "sample_next_cut",
    "apply_cut",
    "prune_trajectory",
    "percolation_marginal",
]


def make_pruning_measure(shape: PlaneTree, kind: str, *, a_n: float = None,
                         b_n: float = None, sigma_n: float = None,
                         mu=None, p_lex=None) -> BiMeasureTree:
    """Attach a pruning measure of the given kind to a tree shape.

    Galton-Watson mode (pass ``a_n``/``b_n``): edges get length ``a_n``,
    ``ske`` puts density 1 per unit of rescaled length, ``bra`` puts atoms
    b_n * (c(v) - 1) on internal vertices, ``mix`` is the sum; the vertex
    mass is uniform unless ``mu`` is given.

    p-tree mode (pass ``sigma_n`` and ``p_lex``, the probability weights in
    lex order): edges get length ``sigma_n``, ``bra`` atoms are
    p_v / sigma_n on internal vertices, and mu = p_lex.
    """
    if kind not in ("ske", "bra", "mix"):
        raise ValueError("kind must be one of ske, bra, mix")
    n = shape.n
    if p_lex is not None:
        if sigma_n is None:
            raise ValueError("p-tree mode needs sigma_n")
        edge_length = sigma_n
        mu = np.asarray(p_lex, dtype=float)
        bra_atoms = mu / sigma_n
    else:
        if a_n is None or b_n is None:
            raise ValueError("Galton-Watson mode needs a_n and b_n")
        edge_length = a_n
        if mu is None:
            mu = np.full(n, 1.0 / n)
        bra_atoms = b_n * (shape.child_count - 1.0)
    internal = shape.child_count >= 1
    atoms = np.where(internal, bra_atoms, 0.0) if kind in ("bra", "mix") else np.zeros(n)
    atoms = np.maximum(atoms, 0.0)
    density = 1.0 if kind in ("ske", "mix") else 0.0
    return BiMeasureTree(shape, edge_length=edge_length, mu=mu,
                         nu_edge_density=density, nu_atoms=atoms)


@dataclass
class CutEvent:
    """One Poisson cut: a vertex atom or an interior point of an edge.

    Edge cuts are identified by the child vertex of the edge; ``offset`` is
    the distance of the cut point from the parent endpoint.
    """

    time: float
    vertex: int = None
    edge_child: int = None
    offset: float = None

    @property
    def is_vertex(self) -> bool:
        return self.vertex is not None


@dataclass
class PruneState:
    """Root component at a given time: alive mask plus mass summaries."""

    alive: np.ndarray
    mass_mu: float
    mass_nu: float
    time: float
    empty: bool = False

    def alive_count(self) -> int:
        return int(self.alive.sum())


@dataclass
class Trajectory:
    """Jump-chain record of one pruning run."""

    tree: BiMeasureTree
    horizon: float
    events: list = field(default_factory=list)  # (CutEvent, mass_mu, mass_nu, height)
    final: PruneState = None


def _nu_weights(tree: BiMeasureTree) -> np.ndarray:
    """Per-vertex pruning mass: the atom plus the edge above the vertex."""
    w = tree.nu_atoms.copy()
    w[1:] += tree.nu_edge_density * tree.edge_length
    return w


def initial_state(tree: BiMeasureTree) -> PruneState:
    return PruneState(
        alive=np.ones(tree.n, dtype=bool),
        mass_mu=tree.total_mu(),
        mass_nu=tree.total_nu(),
        time=0.0,
    )


def sample_next_cut(state: PruneState, tree: BiMeasureTree,
                    rng: np.random.Generator):
    """Next cut of the restricted Poisson process, or None when nu is gone."""
    if state.empty or state.mass_nu <= 0:
        return None
    atom_w = np.where(state.alive, tree.nu_atoms, 0.0)
    edge_mass = tree.nu_edge_density * tree.edge_length
    edge_w = np.zeros(tree.n)
    if edge_mass > 0:
        edge_w[1:] = np.where(state.alive[1:], edge_mass, 0.0)
    total = atom_w.sum() + edge_w.sum()
    if total <= 0:
        return None
    wait = rng.exponential(1.0 / total)
    u = rng.random() * total
    cum = np.cumsum(atom_w + edge_w)
    v = int(np.searchsorted(cum, u, side="right"))
    prev = cum[v - 1] if v > 0 else 0.0
    if u - prev < atom_w[v]:
        return CutEvent(time=state.time + wait, vertex=v)
    offset = rng.random() * tree.edge_length
    return CutEvent(time=state.time + wait, edge_child=v, offset=offset)


def apply_cut(state: PruneState, tree: BiMeasureTree, event: CutEvent) -> PruneState:
    """Remove the subtree below the cut and restrict both measures."""
    v = event.vertex if event.is_vertex else event.edge_child
    if not state.alive[v]:
        raise ValueError("cut location is not alive")
    if event.is_vertex and v == 0:
        return PruneState(alive=np.zeros(tree.n, dtype=bool), mass_mu=0.0,
                          mass_nu=0.0, time=event.time, empty=True)
    alive = state.alive.copy()
    size = tree.shape.subtree_size[v]
    alive[v:v + size] = False
    weights = _nu_weights(tree)
    return PruneState(
        alive=alive,
        mass_mu=float(tree.mu[alive].sum()),
        mass_nu=float(weights[alive].sum()),
        time=event.time,
    )


def _height(state: PruneState, tree: BiMeasureTree) -> float:
    if state.empty or not state.alive.any():
        return 0.0
    return float(tree.shape.depth[state.alive].max()) * tree.edge_length


def prune_trajectory(tree: BiMeasureTree, horizon: float,
                     rng: np.random.Generator) -> Trajectory:
    """Run the jump chain until the horizon or until nothing can be cut."""
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    state = initial_state(tree)
    traj = Trajectory(tree=tree, horizon=horizon)
    while True:
        event = sample_next_cut(state, tree, rng)
        if event is None or event.time > horizon:
            break
        state = apply_cut(state, tree, event)
        traj.events.append((event, state.mass_mu, state.mass_nu,
                            _height(state, tree)))
        if state.empty:
            break
    state.time = min(horizon, state.time) if state.empty else horizon
    traj.final = state
    return traj


def percolation_marginal(tree: BiMeasureTree, t: float,
                         rng: np.random.Generator) -> PruneState:
    """Fixed-time marginal by independent thinning of the nu carriers.

    Each edge dies with probability 1 - exp(-t * edge nu-mass) and each atom
    vertex with probability 1 - exp(-t * atom); the root component of what
    survives has the same law as the trajectory state at time t.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    n = tree.n
    atom_die = rng.random(n) < -np.expm1(-t * tree.nu_atoms)
    edge_mass = tree.nu_edge_density * tree.edge_length
    edge_die = np.zeros(n, dtype=bool)
    if edge_mass > 0:
        edge_die[1:] = rng.random(n - 1) < -np.expm1(-t * edge_mass)
    kills = atom_die | edge_die
    if kills[0]:
        return PruneState(alive=np.zeros(n, dtype=bool), mass_mu=0.0,
                          mass_nu=0.0, time=t, empty=True)
    # a killed vertex takes its whole contiguous subtree block with it
    diff = np.zeros(n + 1)
    killed = np.nonzero(kills)[0]
    np.add.at(diff, killed, 1.0)
    np.add.at(diff, killed + tree.shape.subtree_size[killed], -1.0)
    alive = np.cumsum(diff[:n]) == 0
    weights = _nu_weights(tree)
    return PruneState(
        alive=alive,
        mass_mu=float(tree.mu[alive].sum()),
        mass_nu=float(weights[alive].sum()),
        time=t,
    )
