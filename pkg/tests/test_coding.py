import numpy as np
import pytest

import treeprune as tp
from treeprune.coding import truncated_split_sums
from treeprune.trees import mirror_permutation

WUP_17 = [0, 2, 3, 2, 4, 3, 2, 1, 1, 0, 3, 2, 2, 3, 2, 1, 0, -1]
WDOWN_17 = [0, 2, 5, 4, 3, 3, 4, 3, 2, 1, 1, 0, 1, 3, 2, 1, 0, -1]
H_17 = [0, 1, 2, 2, 3, 3, 3, 1, 2, 1, 2, 2, 3, 4, 4, 2, 2]


def random_tree(rng, n, law=None):
    law = law or tp.make_offspring("geometric")
    return tp.sample_gw_conditioned(law, n, rng)


def strict_ancestors(tree, j):
    out = []
    v = int(tree.parent[j])
    while v != -1:
        out.append(v)
        v = int(tree.parent[v])
    return out


class TestComputePaths:
    def test_fixture(self):
        paths = tp.compute_paths(tp.sample_tree_17())
        assert paths.luk_up.tolist() == WUP_17
        assert paths.luk_down.tolist() == WDOWN_17
        assert paths.height.tolist() == H_17

    def test_single_vertex(self):
        paths = tp.compute_paths(tp.PlaneTree([-1]))
        assert paths.luk_up.tolist() == [0, -1]
        assert paths.luk_down.tolist() == [0, -1]
        assert paths.height.tolist() == [0]
        assert paths.contour.tolist() == [0]

    def test_excursion_property(self):
        rng = tp.make_rng(20)
        for _ in range(25):
            t = random_tree(rng, int(rng.integers(2, 300)))
            paths = tp.compute_paths(t)
            for w in (paths.luk_up, paths.luk_down):
                assert (w[:-1] >= 0).all()
                assert w[-1] == -1
                assert (np.diff(w) >= -1).all()

    def test_contour_invariants(self):
        rng = tp.make_rng(21)
        for _ in range(15):
            t = random_tree(rng, int(rng.integers(2, 200)))
            c = tp.compute_paths(t).contour
            assert len(c) == 2 * (t.n - 1) + 1
            assert c[0] == 0 and c[-1] == 0
            assert (c >= 0).all()
            assert set(np.abs(np.diff(c)).tolist()) <= {1}
            # every depth appears as often as its vertex multiplicity demands
            assert c.max() == t.depth.max()

    def test_height_step_bound(self):
        rng = tp.make_rng(22)
        t = random_tree(rng, 200)
        h = tp.compute_paths(t).height
        assert h[0] == 0
        assert (np.diff(h) <= 1).all()

    def test_mirror_identity_exact(self):
        rng = tp.make_rng(23)
        for _ in range(20):
            t = random_tree(rng, int(rng.integers(2, 500)))
            paths = tp.compute_paths(t)
            mirrored = tp.compute_paths(tp.mirror(t))
            assert np.array_equal(paths.luk_down, mirrored.luk_up)
            assert np.array_equal(paths.luk_up, mirrored.luk_down)


class TestAncestorByPath:
    def test_fixture_cases(self):
        paths = tp.compute_paths(tp.sample_tree_17())
        assert tp.ancestor_by_path(paths, "lex", 9, 13)
        assert not tp.ancestor_by_path(paths, "lex", 1, 13)
        for k in range(17):
            assert tp.ancestor_by_path(paths, "lex", k, k)
            assert tp.ancestor_by_path(paths, "lex", 0, k)

    def test_agrees_with_parent_chains(self):
        rng = tp.make_rng(24)
        for _ in range(6):
            t = random_tree(rng, int(rng.integers(2, 120)))
            paths = tp.compute_paths(t)
            perm = mirror_permutation(t)
            pos = np.empty(t.n, dtype=int)
            pos[perm] = np.arange(t.n)
            for j in range(t.n):
                anc = set(strict_ancestors(t, j)) | {j}
                for i in range(t.n):
                    assert tp.ancestor_by_path(paths, "lex", i, j) == (i in anc)
                    assert tp.ancestor_by_path(
                        paths, "revlex", int(pos[i]), int(pos[j])) == (i in anc)

    def test_out_of_range(self):
        paths = tp.compute_paths(tp.sample_tree_17())
        with pytest.raises(IndexError):
            tp.ancestor_by_path(paths, "lex", 0, 17)


class TestLexToRevlex:
    def test_fixture(self):
        t = tp.sample_tree_17()
        assert tp.lex_to_revlex(t, 13) == (7, 0)
        assert tp.lex_to_revlex(t, 16) == (2, 0)
        assert tp.lex_to_revlex(t, 0) == (0, 16)

    def test_bijection_and_increment_match(self):
        rng = tp.make_rng(25)
        for _ in range(12):
            t = random_tree(rng, int(rng.integers(2, 300)))
            paths = tp.compute_paths(t)
            images = []
            for k in range(t.n):
                k_tilde, d = tp.lex_to_revlex(t, k)
                images.append(k_tilde)
                assert d == t.subtree_size[k] - 1
                assert (paths.luk_down[k_tilde + 1] - paths.luk_down[k_tilde]
                        == paths.luk_up[k + 1] - paths.luk_up[k])
            assert sorted(images) == list(range(t.n))

    def test_matches_mirror_permutation(self):
        # the index map is exactly the inverse of the mirrored enumeration
        t = tp.sample_tree_17()
        perm = mirror_permutation(t)
        for k in range(t.n):
            k_tilde, _ = tp.lex_to_revlex(t, k)
            assert perm[k_tilde] == k


class TestSigmaUp:
    def test_fixture_values(self):
        t = tp.sample_tree_17()
        dec = tp.sigma_up(t, 13)
        assert (dec.sigma, dec.luk_term, dec.rev_term, dec.remainder) == (6, 3, 3, 0)
        assert dec.rev_index == 7
        assert tp.sigma_up(t, 0).sigma == 2

    def test_path_leaf(self):
        t = tp.PlaneTree([-1, 0, 1])
        assert tp.sigma_up(t, 2).sigma == 0

    def test_decomposition_everywhere(self):
        rng = tp.make_rng(26)
        for law in (tp.make_offspring("geometric"), tp.make_offspring("stable", alpha=1.5)):
            for _ in range(8):
                t = random_tree(rng, int(rng.integers(3, 250)), law)
                profile = tp.sigma_up_profile(t)
                for k in range(t.n):
                    dec = tp.sigma_up(t, k)
                    assert dec.sigma == profile[k]
                    assert dec.sigma == dec.luk_term + dec.rev_term + dec.remainder
                    # independent recount over non-leaf ancestors
                    manual = sum(int(t.child_count[a]) - 1
                                 for a in strict_ancestors(t, k) + [k]
                                 if t.child_count[a] >= 1)
                    assert dec.sigma == manual


class TestChildrenSplit:
    def test_fixture_root_to_13(self):
        t = tp.sample_tree_17()
        paths = tp.compute_paths(t)
        assert tp.children_split(t, paths, "lex", 0, 13) == (2, 0)

    def test_non_ancestor_rejected(self):
        t = tp.sample_tree_17()
        paths = tp.compute_paths(t)
        with pytest.raises(ValueError):
            tp.children_split(t, paths, "lex", 1, 13)
        with pytest.raises(ValueError):
            tp.children_split(t, paths, "lex", 5, 5)

    def test_split_counts_children(self):
        rng = tp.make_rng(27)
        t = random_tree(rng, 150)
        paths = tp.compute_paths(t)
        for j in range(1, t.n):
            for i in strict_ancestors(t, j):
                before, after = tp.children_split(t, paths, "lex", i, j)
                assert before >= 0 and after >= 0
                assert before + after == t.child_count[i] - 1
                # recount directly: children of i on either side of the path
                kids = t.children(i)
                on_path = [c for c in kids if t.is_ancestor(int(c), j)][0]
                assert before == int((kids < on_path).sum())
                assert after == int((kids > on_path).sum())

    def test_telescoping_identities(self):
        rng = tp.make_rng(28)
        for law_kind in ("geometric", "stable"):
            law = (tp.make_offspring("stable", alpha=1.5) if law_kind == "stable"
                   else tp.make_offspring(law_kind))
            for _ in range(6):
                t = random_tree(rng, int(rng.integers(3, 200)), law)
                paths = tp.compute_paths(t)
                for j in range(t.n):
                    sums = truncated_split_sums(t, paths, j, beta=float("inf"))
                    assert sums["after_gt"] == 0
                    assert sums["after_leq"] == sums["luk_up_j"]
                    assert sums["before_leq"] == sums["luk_down_j_tilde"]

    def test_truncated_bounds(self):
        rng = tp.make_rng(29)
        t = random_tree(rng, 120)
        paths = tp.compute_paths(t)
        for j in range(t.n):
            for beta in (0.0, 1.0, 2.0, 3.0):
                s = truncated_split_sums(t, paths, j, beta)
                assert s["after_leq"] <= s["luk_up_j"] - s["after_gt"]
                assert s["before_leq"] <= s["luk_down_j_tilde"] - s["rev_after_gt"]


class TestBranchingCounts:
    def test_p1_p2(self):
        # the path values count children of strict ancestors branching to
        # the right (lex) or left (revlex) of the root path
        rng = tp.make_rng(30)
        for _ in range(8):
            t = random_tree(rng, int(rng.integers(2, 300)))
            paths = tp.compute_paths(t)
            for m in range(t.n):
                right = left = 0
                for a in strict_ancestors(t, m):
                    kids = t.children(a)
                    on_path = [c for c in kids if t.is_ancestor(int(c), m)][0]
                    right += int((kids > on_path).sum())
                    left += int((kids < on_path).sum())
                assert paths.luk_up[m] == right
                m_tilde, _ = tp.lex_to_revlex(t, m)
                assert paths.luk_down[m_tilde] == left


class TestPruningProfile:
    def test_fixture_k13(self):
        t = tp.sample_tree_17()
        bt = tp.make_pruning_measure(t, "mix", a_n=1.0, b_n=1.0)
        paths = tp.compute_paths(t)
        atom, density = tp.pruning_profile(bt, paths, 13)
        assert atom(0.0) == pytest.approx(2.0)
        assert density(0.0) == 0.0
        for delta, expect in [(0.5, 2.0), (1.0, 5.0), (2.0, 5.0), (3.0, 6.0), (10.0, 6.0)]:
            assert atom(delta) == pytest.approx(expect)
        for delta in (0.5, 1.7, 3.2):
            assert density(delta) == pytest.approx(min(delta, 4.0))
        assert atom.total() == pytest.approx(6.0)
        assert density.total() == pytest.approx(4.0)

    def test_profile_gap_bounded(self):
        # the sup gap between the two profiles is at most the sup of the
        # rescaled sigma/height discrepancy along the path
        rng = tp.make_rng(31)
        law = tp.make_offspring("geometric")
        t = random_tree(rng, 120)
        sc = tp.scaling_constants(law, 120)
        bt = tp.make_pruning_measure(t, "mix", a_n=sc.a_n, b_n=sc.b_n)
        paths = tp.compute_paths(t)
        sig = tp.sigma_up_profile(t)
        bound = np.abs(sc.b_n * sig - sc.a_n * t.depth).max()
        for k in range(0, t.n, 7):
            atom, density = tp.pruning_profile(bt, paths, k)
            grid = np.linspace(0, t.depth[k] * bt.edge_length + 1, 50)
            gap = max(abs(atom(d) - density(d)) for d in grid)
            # one extra edge length of slack covers the in-edge offset
            assert gap <= bound + sc.a_n + 1e-9
