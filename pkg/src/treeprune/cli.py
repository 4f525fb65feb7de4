"""Command-line surface: sampling, coding, pruning, comparison, experiments.

All randomness derives from the single --seed flag through named substreams,
so identical invocations produce byte-identical outputs.  Exit codes:
0 success, 1 configuration error, 2 runtime/budget error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import coding, diagnostics, mmspace, pruning
from .samplers import (BudgetError, PVector, UnreachableError, make_offspring,
                       make_rng, sample_gw_conditioned, sample_ptree,
                       scaling_constants)
from .trees import BiMeasureTree, PlaneTree, read_jsonl, sample_tree_17

__all__ = ["main", "run"]


class ConfigError(ValueError):
    pass


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("TREEPRUNE_THREADS", "1")))
    except ValueError:
        return 1


def _parse_law(text: str):
    if text in ("geometric", "poisson", "binary"):
        return make_offspring(text)
    if text.startswith("stable:"):
        return make_offspring("stable", alpha=float(text.split(":", 1)[1]))
    raise ConfigError("unknown law %r" % text)


def _parse_pvec(text: str) -> PVector:
    if text.startswith("uniform:"):
        return PVector.uniform(int(text.split(":", 1)[1]))
    with open(text) as fh:
        return PVector(json.load(fh))


def _open_out(path):
    return open(path, "w") if path else sys.stdout


def _load_trees(args) -> list:
    if getattr(args, "fixture", None):
        if args.fixture != "sample17":
            raise ConfigError("unknown fixture %r" % args.fixture)
        return [sample_tree_17()]
    if not getattr(args, "infile", None):
        raise ConfigError("need --in FILE or --fixture sample17")
    return [PlaneTree.from_record(rec) for rec in read_jsonl(args.infile)]


def _load_bimeasure(args) -> list:
    if getattr(args, "fixture", None):
        if args.fixture != "sample17":
            raise ConfigError("unknown fixture %r" % args.fixture)
        return [BiMeasureTree(sample_tree_17())]
    if not getattr(args, "infile", None):
        raise ConfigError("need --in FILE or --fixture sample17")
    return [BiMeasureTree.from_record(rec) for rec in read_jsonl(args.infile)]


def _cmd_sample_gw(args) -> int:
    law = _parse_law(args.law)
    out = _open_out(args.out)
    try:
        for r in range(args.reps):
            tree = sample_gw_conditioned(law, args.n, make_rng(args.seed, 1, r))
            out.write(json.dumps(tree.to_record(), sort_keys=True) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _cmd_sample_ptree(args) -> int:
    p = _parse_pvec(args.p)
    out = _open_out(args.out)
    try:
        for r in range(args.reps):
            tree = sample_ptree(p, make_rng(args.seed, 2, r))
            plane, labels = tree.to_plane()
            rec = plane.to_record()
            rec["labels"] = [int(x) for x in labels]
            out.write(json.dumps(rec, sort_keys=True) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _cmd_code(args) -> int:
    trees = _load_trees(args)
    out = _open_out(args.out)
    try:
        if args.format == "json":
            for tree in trees:
                paths = coding.compute_paths(tree)
                out.write(json.dumps({
                    "n": tree.n,
                    "Wup": paths.luk_up.tolist(),
                    "Wdown": paths.luk_down.tolist(),
                    "H": paths.height.tolist(),
                    "C": paths.contour.tolist(),
                }, sort_keys=True) + "\n")
        else:
            writer = csv.writer(out)
            writer.writerow(["tree", "index", "Wup", "Wdown", "H", "C"])
            for t, tree in enumerate(trees):
                paths = coding.compute_paths(tree)
                rows = max(len(paths.luk_up), len(paths.contour))
                for i in range(rows):
                    writer.writerow([
                        t, i,
                        paths.luk_up[i] if i < len(paths.luk_up) else "",
                        paths.luk_down[i] if i < len(paths.luk_down) else "",
                        paths.height[i] if i < len(paths.height) else "",
                        paths.contour[i] if i < len(paths.contour) else "",
                    ])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _cmd_prune(args) -> int:
    shapes = _load_trees(args)
    snaps = [float(x) for x in args.snap.split(",")] if args.snap else []
    out = _open_out(args.out)
    snap_fh = open(args.snap_out, "w") if args.snap_out else None
    try:
        writer = csv.writer(out)
        writer.writerow(["tree", "rep", "time", "massMu", "massNu",
                         "aliveCount", "height"])
        for t, shape in enumerate(shapes):
            bt = pruning.make_pruning_measure(shape, args.measure,
                                              a_n=args.a, b_n=args.b)

            def one_rep(r):
                rng = make_rng(args.seed, 3, t, r)
                return pruning.prune_trajectory(bt, args.horizon, rng)

            # replicas own independent RNG streams; output stays ordered by
            # replica index, so the worker count never changes the bytes
            with ThreadPoolExecutor(max_workers=_threads()) as pool:
                trajs = list(pool.map(one_rep, range(args.reps)))
            for r, traj in enumerate(trajs):
                for ev, mu, nu, h in traj.events:
                    writer.writerow([t, r, "%.12g" % ev.time, "%.12g" % mu,
                                     "%.12g" % nu, "", "%.12g" % h])
                if snap_fh is not None:
                    for s in snaps:
                        st = pruning.percolation_marginal(
                            bt, s, make_rng(args.seed, 4, t, r, int(s * 1e6)))
                        snap_fh.write(json.dumps({
                            "tree": t, "rep": r, "t": s,
                            "massMu": st.mass_mu, "massNu": st.mass_nu,
                            "alive": int(st.alive.sum()),
                        }, sort_keys=True) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
        if snap_fh is not None:
            snap_fh.close()
    return 0


def _read_space(path) -> mmspace.FiniteMMSpace:
    with open(path) as fh:
        return mmspace.FiniteMMSpace.from_record(json.load(fh))


def _cmd_compare(args) -> int:
    out = _open_out(args.out)
    try:
        if args.mode == "prokhorov":
            with open(args.in_a) as fh:
                rec = json.load(fh)
            dist = np.asarray(rec["dist"], dtype=float)
            d_sub = mmspace.prokhorov_distance(dist, rec["mass_a"], rec["mass_b"],
                                               method="subsets")
            d_flow = mmspace.prokhorov_distance(dist, rec["mass_a"], rec["mass_b"],
                                                method="flow")
            out.write(json.dumps({"subsets": d_sub, "flow": d_flow},
                                 sort_keys=True) + "\n")
        elif args.mode == "gp-bound":
            A, B = _read_space(args.in_a), _read_space(args.in_b)
            R = mmspace.Correspondence(
                [(A.root, B.root)] + list(zip(A.marked, B.marked)))
            out.write(json.dumps({"gp_upper_bound": mmspace.gp_upper_bound(A, B, R)},
                                 sort_keys=True) + "\n")
        elif args.mode == "nu-cloud":
            with open(args.in_a) as fh:
                a = json.load(fh)["cloud"]
            with open(args.in_b) as fh:
                b = json.load(fh)["cloud"]
            out.write(json.dumps({"energy_distance": mmspace.energy_distance(a, b)},
                                 sort_keys=True) + "\n")
        else:
            raise ConfigError("unknown compare mode %r" % args.mode)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _cmd_mass_bound(args) -> int:
    trees = _load_bimeasure(args)
    radius = np.inf if args.radius in (None, "inf") else float(args.radius)
    out = _open_out(args.out)
    try:
        writer = csv.writer(out)
        writer.writerow(["tree", "delta", "radius", "lower_mass"])
        for t, bt in enumerate(trees):
            space = mmspace.space_from_tree(bt)
            val = mmspace.lower_mass(space, args.delta, radius)
            writer.writerow([t, "%.12g" % args.delta,
                             "inf" if np.isinf(radius) else "%.12g" % radius,
                             "inf" if np.isinf(val) else "%.12g" % val])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


_EXPERIMENT_KEYS = {
    "brownian-sigma": {"law", "alpha", "ns", "reps"},
    "reverse-path": {"law", "alpha", "ns", "reps"},
    "span-cloud": {"source", "law", "alpha", "ns", "reps", "kinds"},
    "mass-bound": {"law", "alpha", "ns", "deltas", "horizon", "reps"},
    "pruning-mass": {"law", "alpha", "ns", "t_grid", "reps", "kind"},
}


def _cmd_experiment(args) -> int:
    with open(args.config) as fh:
        cfg = json.load(fh)
    if args.name not in _EXPERIMENT_KEYS:
        raise ConfigError("unknown experiment %r" % args.name)
    unknown = set(cfg) - _EXPERIMENT_KEYS[args.name]
    if unknown:
        raise ConfigError("unknown config keys: %s" % sorted(unknown))
    law = None
    if cfg.get("law"):
        law = (_parse_law("stable:%s" % cfg["alpha"]) if cfg["law"] == "stable"
               else _parse_law(cfg["law"]))
    seed = args.seed
    if args.name == "brownian-sigma":
        report = diagnostics.exp_brownian_sigma(law, cfg["ns"], cfg["reps"], seed)
    elif args.name == "reverse-path":
        report = diagnostics.exp_reverse_path(law, cfg["ns"], cfg["reps"], seed)
    elif args.name == "span-cloud":
        report = diagnostics.exp_span_cloud(
            cfg.get("source", "gw"), cfg["ns"], cfg["reps"], seed,
            kinds=tuple(cfg.get("kinds", ("ske", "bra", "mix"))), law=law)
    elif args.name == "mass-bound":
        report = diagnostics.exp_mass_bound(
            law, cfg["ns"], cfg["deltas"], cfg.get("horizon", 0.5),
            cfg["reps"], seed)
    else:
        report = diagnostics.exp_pruning_mass(
            law, cfg["ns"], cfg["t_grid"], cfg["reps"], seed,
            kind=cfg.get("kind", "mix"))
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    with open(os.path.join(args.out, "series.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["series", "step", "value"])
        for name, values in sorted(report.series.items()):
            for i, v in enumerate(values):
                writer.writerow([name, i, "%.12g" % v])
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="treeprune")
    sub = parser.add_subparsers(dest="cmd")

    p = sub.add_parser("sample-gw")
    p.add_argument("--law", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("sample-ptree")
    p.add_argument("--p", required=True)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    p = sub.add_parser("code")
    p.add_argument("--in", dest="infile")
    p.add_argument("--fixture")
    p.add_argument("--format", choices=["json", "csv"], default="csv")
    p.add_argument("--out")

    p = sub.add_parser("prune")
    p.add_argument("--in", dest="infile")
    p.add_argument("--fixture")
    p.add_argument("--measure", choices=["ske", "bra", "mix"], required=True)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--snap")
    p.add_argument("--snap-out", dest="snap_out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--out")

    p = sub.add_parser("compare")
    p.add_argument("--mode", choices=["nu-cloud", "gp-bound", "prokhorov"],
                   required=True)
    p.add_argument("--in-a", dest="in_a", required=True)
    p.add_argument("--in-b", dest="in_b")
    p.add_argument("--out")

    p = sub.add_parser("mass-bound")
    p.add_argument("--in", dest="infile")
    p.add_argument("--fixture")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--radius", default="inf")
    p.add_argument("--out")

    p = sub.add_parser("experiment")
    p.add_argument("--name", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


_HANDLERS = {
    "sample-gw": _cmd_sample_gw,
    "sample-ptree": _cmd_sample_ptree,
    "code": _cmd_code,
    "prune": _cmd_prune,
    "compare": _cmd_compare,
    "mass-bound": _cmd_mass_bound,
    "experiment": _cmd_experiment,
}


def run(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if args.cmd is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _HANDLERS[args.cmd](args)
    except (ConfigError, UnreachableError, ValueError, OSError,
            json.JSONDecodeError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except (BudgetError, diagnostics.GateError, RuntimeError) as exc:
        print("runtime error: %s" % exc, file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))
