"""Acceptance suite: one test (and one pass/fail line) per criterion.

Each criterion prints an explicit verdict line and enforces its own
wall-clock budget, so a plain ``pytest -v tests/test_acceptance.py`` reads
as a ten-line scorecard.
"""

import contextlib
import json
import time

import numpy as np
import pytest
from scipy import stats as sstats

import treeprune as tp
from treeprune import pruning
from treeprune.cli import run
from treeprune.coding import truncated_split_sums
from treeprune.trees import mirror_permutation

WUP_17 = [0, 2, 3, 2, 4, 3, 2, 1, 1, 0, 3, 2, 2, 3, 2, 1, 0, -1]
WDOWN_17 = [0, 2, 5, 4, 3, 3, 4, 3, 2, 1, 1, 0, 1, 3, 2, 1, 0, -1]


@contextlib.contextmanager
def criterion(num, label, budget_s):
    start = time.monotonic()
    try:
        yield
    except BaseException:
        print("criterion %2d (%s): FAIL" % (num, label))
        raise
    elapsed = time.monotonic() - start
    assert elapsed < budget_s, "criterion %d exceeded %.0fs budget (%.1fs)" % (
        num, budget_s, elapsed)
    print("criterion %2d (%s): PASS in %.1fs" % (num, label, elapsed))


def test_criterion_01_fixture_paths():
    with criterion(1, "fixture coding paths", 1.0):
        paths = tp.compute_paths(tp.sample_tree_17())
        assert paths.luk_up.tolist() == WUP_17
        assert paths.luk_down.tolist() == WDOWN_17


def _branching_counts(tree):
    """Direct per-vertex counts of children of strict ancestors branching
    to the right/left of the root path, by downward accumulation."""
    n = tree.n
    right = np.zeros(n, dtype=int)
    left = np.zeros(n, dtype=int)
    for m in range(1, n):
        par = int(tree.parent[m])
        kids = tree.children(par)
        pos = int(np.searchsorted(kids, m))
        left[m] = left[par] + pos
        right[m] = right[par] + len(kids) - pos - 1
    return right, left


def _check_identities_everywhere(tree):
    paths = tp.compute_paths(tree)
    profile = tp.sigma_up_profile(tree)
    perm = mirror_permutation(tree)
    right, left = _branching_counts(tree)
    images = np.empty(tree.n, dtype=int)
    for k in range(tree.n):
        k_tilde, d = tp.lex_to_revlex(tree, k)
        images[k] = k_tilde
        assert d == tree.subtree_size[k] - 1
        # increment transport across the index bijection
        assert (paths.luk_down[k_tilde + 1] - paths.luk_down[k_tilde]
                == paths.luk_up[k + 1] - paths.luk_up[k])
        # order recovery: the bijection inverts the mirrored enumeration
        assert perm[k_tilde] == k
        # ancestral degree-sum decomposition
        dec = tp.sigma_up(tree, k, paths=paths, profile=profile)
        assert dec.sigma == profile[k]
        assert dec.sigma == dec.luk_term + dec.rev_term + dec.remainder
        assert dec.luk_term == paths.luk_up[k]
        assert dec.rev_term == paths.luk_down[k_tilde]
        assert dec.remainder == max(paths.luk_up[k + 1] - paths.luk_up[k], 0)
        # branch-count sums against both paths, exactly and truncated
        sums = truncated_split_sums(tree, paths, k, beta=float("inf"))
        assert sums["after_gt"] == 0 and sums["rev_after_gt"] == 0
        assert sums["after_leq"] == sums["luk_up_j"]
        assert sums["before_leq"] == sums["luk_down_j_tilde"]
        trunc = truncated_split_sums(tree, paths, k, beta=1.0)
        assert trunc["after_leq"] <= trunc["luk_up_j"] - trunc["after_gt"]
        assert (trunc["before_leq"]
                <= trunc["luk_down_j_tilde"] - trunc["rev_after_gt"])
        # direct branching recounts
        assert paths.luk_up[k] == right[k]
        assert paths.luk_down[k_tilde] == left[k]
    assert sorted(images.tolist()) == list(range(tree.n))


def test_criterion_02_exact_identities():
    with criterion(2, "exact path identities", 120.0):
        rng = tp.make_rng(201)
        for law, lo in ((tp.make_offspring("geometric"), 2),
                        (tp.make_offspring("stable", alpha=1.5), 3)):
            checked = 0
            while checked < 500:
                n = int(rng.integers(lo, 301))
                batch = min(25, 500 - checked)
                for tree in tp.sample_gw_conditioned_many(law, n, batch, rng):
                    _check_identities_everywhere(tree)
                checked += batch


def test_criterion_03_conditioned_gw_exactness():
    with criterion(3, "conditioned GW exactness", 30.0):
        law = tp.make_offspring("geometric")
        reps = 100000
        trees = tp.sample_gw_conditioned_many(law, 4, reps, tp.make_rng(202))
        counts = {}
        for t in trees:
            key = tuple(t.child_count.tolist())
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 5
        for key, c in counts.items():
            assert abs(c / reps - 0.2) < 0.01, key


def test_criterion_04_ptree_exactness():
    with criterion(4, "p-tree exactness", 30.0):
        p = tp.PVector([0.5, 0.3, 0.2])
        enum = tp.enumerate_trees(3, "labeled", p=p)
        reps = 100000
        rng = tp.make_rng(203)
        counts = {}
        for _ in range(reps):
            t = tp.sample_ptree(p, rng)
            key = (t.root, tuple(sorted(t.parent.items())))
            counts[key] = counts.get(key, 0) + 1
        tv = 0.5 * sum(abs(counts.get((t.root, tuple(sorted(t.parent.items()))), 0)
                           / reps - w)
                       for t, w in enum)
        assert tv < 0.02


def _alive_law_p_value(bt, t, reps, seed):
    rng_a, rng_b = tp.make_rng(seed, 0), tp.make_rng(seed, 1)
    counts = {}
    for _ in range(reps):
        key_a = tuple(pruning.prune_trajectory(bt, t, rng_a).final.alive.astype(int))
        key_b = tuple(pruning.percolation_marginal(bt, t, rng_b).alive.astype(int))
        row = counts.setdefault(key_a, [0, 0]); row[0] += 1
        row = counts.setdefault(key_b, [0, 0]); row[1] += 1
    table = np.array(list(counts.values()))
    if table.shape[0] < 2:
        return 1.0  # a single outcome on both sides
    return float(sstats.chi2_contingency(table)[1])


def test_criterion_05_pruning_marginal_oracle():
    with criterion(5, "pruning marginal oracle", 120.0):
        path = tp.PlaneTree([-1, 0, 1, 2])
        for kind in ("ske", "bra", "mix"):
            bt = pruning.make_pruning_measure(path, kind, a_n=1.0, b_n=1.0)
            for t in (0.3, 1.0):
                p = _alive_law_p_value(bt, t, 100000, seed=204)
                assert p > 0.001, (kind, t, p)


def test_criterion_06_prokhorov_agreement():
    with criterion(6, "Prokhorov dual methods", 60.0):
        rng = tp.make_rng(205)
        for _ in range(200):
            n = int(rng.integers(2, 9))
            pts = rng.random((n, 2)) * rng.choice([0.5, 1.0, 5.0])
            dist = np.sqrt(((pts[:, None] - pts[None, :]) ** 2).sum(-1))
            mu_a = rng.random(n) * rng.choice([0.5, 1.0, 2.0])
            mu_b = rng.random(n)
            if rng.random() < 0.25:
                mu_a[rng.integers(0, n)] = 0.0
            s = tp.prokhorov_distance(dist, mu_a, mu_b, "subsets")
            f = tp.prokhorov_distance(dist, mu_a, mu_b, "flow")
            assert abs(s - f) < 1e-9
        for d, expect in [(0.5, 0.5), (3.0, 1.0)]:
            dd = np.array([[0.0, d], [d, 0.0]])
            assert tp.prokhorov_distance(dd, [1, 0], [0, 1]) == pytest.approx(expect)
        far = np.array([[0.0, 9.0], [9.0, 0.0]])
        assert tp.prokhorov_distance(far, [1, 0], [0.5, 0.5]) == pytest.approx(0.5)


def test_criterion_07_lower_mass():
    with criterion(7, "lower mass function", 10.0):
        space = tp.space_from_tree(tp.BiMeasureTree(tp.sample_tree_17()))
        assert tp.lower_mass(space, 1.5) == pytest.approx(2 / 17)
        assert tp.lower_mass(space, 0.5) == pytest.approx(1 / 17)
        t = tp.sample_tree_17()
        mu = np.where(t.depth >= 3, 1.0, 0.0)
        deep = tp.space_from_tree(tp.BiMeasureTree(t, mu=mu))
        assert tp.lower_mass(deep, 1.0, radius=1.0) == np.inf


def test_criterion_08_brownian_diagnostic():
    with criterion(8, "Brownian sigma diagnostic", 900.0):
        law = tp.make_offspring("geometric")
        report = tp.exp_brownian_sigma(law, [500, 5000, 50000], reps=100, seed=206)
        medians = report.series["medians"]
        assert all(b < a for a, b in zip(medians, medians[1:])), medians
        assert medians[-1] <= 0.5 * medians[0], medians
        assert report.verdicts["decreasing"]


def test_criterion_09_span_cloud_diagnostic():
    with criterion(9, "spanned-subtree cloud diagnostic", 1200.0):
        ns = [500, 2000, 8000]
        reps = 2000
        seed = 207
        geo = tp.make_offspring("geometric")
        stb = tp.make_offspring("stable", alpha=1.5)
        reports = []
        for law in (geo, stb):
            pools = {n: tp.sample_gw_conditioned_many(law, n, reps,
                                                      tp.make_rng(seed, 13, n))
                     for n in ns}
            reports.append(tp.exp_span_cloud("gw", ns, reps, seed, law=law,
                                             pools=pools))
        ppools = {n: [tp.sample_ptree(tp.PVector.uniform(n),
                                      tp.make_rng(seed, 13, n, r))
                      for r in range(reps)]
                  for n in ns}
        reports.append(tp.exp_span_cloud("ptree", ns, reps, seed, pools=ppools))
        for report in reports:
            for kind in ("ske", "bra", "mix"):
                series = report.series["energy_%s" % kind]
                key = (report.config["source"], report.config["law"], kind)
                assert all(b < a for a, b in zip(series, series[1:])), (key, series)
                assert report.verdicts["decreasing_%s" % kind], key


def test_criterion_10_cli_determinism(tmp_path):
    with criterion(10, "CLI determinism", 120.0):
        cases = [
            ["sample-gw", "--law", "stable:1.5", "--n", "60", "--reps", "5",
             "--seed", "8"],
            ["sample-ptree", "--p", "uniform:40", "--reps", "5", "--seed", "8"],
            ["prune", "--fixture", "sample17", "--measure", "mix",
             "--horizon", "2.0", "--reps", "10", "--seed", "8"],
        ]
        for i, argv in enumerate(cases):
            a = tmp_path / ("a%d.out" % i)
            b = tmp_path / ("b%d.out" % i)
            assert run(argv + ["--out", str(a)]) == 0
            assert run(argv + ["--out", str(b)]) == 0
            assert a.read_bytes() == b.read_bytes(), argv
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"law": "geometric", "ns": [20, 40],
                                   "t_grid": [0.5], "reps": 10}))
        d1, d2 = tmp_path / "e1", tmp_path / "e2"
        for d in (d1, d2):
            assert run(["experiment", "--name", "pruning-mass", "--config",
                        str(cfg), "--seed", "8", "--out", str(d)]) == 0
        assert (d1 / "report.json").read_bytes() == (d2 / "report.json").read_bytes()
        assert (d1 / "series.csv").read_bytes() == (d2 / "series.csv").read_bytes()
