"""Command line entry point (``bsrecon``)."""
from __future__ import annotations

import argparse
import json
import sys

from . import __version__


def _dump(obj) -> None:
    json.dump(obj, sys.stdout, indent=1, sort_keys=True, default=lambda o: o.item() if hasattr(o, "item") else str(o))
    sys.stdout.write("\n")


def _config(args):
    from .pipeline import ExperimentConfig, load_config

    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    over = {}
    if getattr(args, "manifold", None):
        over["manifold"] = json.loads(args.manifold)
    for flag, key in (("mesh_h", "mesh_h"), ("cutoff", "delta_inv"), ("eta", "eta"), ("seed", "seed"), ("out_dir", "out_dir")):
        v = getattr(args, flag, None)
        if v is not None:
            over[key] = v
    return cfg.replace(**over) if over else cfg


def _add_common(p, out_dir=False):
    p.add_argument("--config", help="experiment config JSON (defaults: interval of length pi)")
    p.add_argument("--manifold", help='manifold JSON, e.g. {"variant": "rectangle", "params": {"lx": 3.14, "ly": 3.14}}')
    p.add_argument("--mesh-h", dest="mesh_h", type=float, help="boundary mesh spacing")
    p.add_argument("--cutoff", type=float, help="eigenvalue cutoff (1/delta)")
    p.add_argument("--eta", type=float, help="partition scale")
    if out_dir:
        p.add_argument("--out-dir", dest="out_dir", help="artifact directory")


def cmd_generate(args) -> int:
    from .pipeline import stage_generate
    from .spectral import save_dataset

    cfg = _config(args)
    d = stage_generate(cfg)
    save_dataset(d, args.output)
    _dump({"output": args.output, "n_eigenvalues": len(d), "mesh_nodes": d.mesh.size})
    return 0


def cmd_perturb(args) -> int:
    from .spectral import load_dataset, perturb_dataset, save_dataset

    d = load_dataset(args.dataset)
    cutoff = args.cutoff if args.cutoff is not None else d.cutoff
    dp = perturb_dataset(d, {"eig_abs": args.eig_abs, "trace_l2": args.trace_l2}, cutoff, args.seed)
    save_dataset(dp, args.output)
    _dump({"output": args.output, "n_eigenvalues": len(dp)})
    return 0


def cmd_reconstruct(args) -> int:
    from .distnet import save_net
    from .pipeline import stage_net, stage_reconstruct
    from .reconstruct import export_reconstruction
    from .spectral import load_dataset

    cfg = _config(args)
    d = load_dataset(args.dataset)
    net, p = stage_net(cfg, d)
    save_net(net, args.prefix + "_net.json")
    rec = stage_reconstruct(cfg, net, p)
    paths = export_reconstruction(rec, args.prefix)
    _dump({"net": args.prefix + "_net.json", **paths, "net_size": len(net), "Y_size": rec.space.n, "edge_methods": rec.method_counts()})
    return 0


def cmd_grade(args) -> int:
    from .distnet import hausdorff_to_truth, load_net
    from .gh import gh_distance_bounds, load_csv
    from .pipeline import make_manifold, make_mesh, make_partition, probe_points, true_net_space
    from .wave import BoundaryPartition

    cfg = _config(args)
    out = {}
    if args.Y:
        lo, hi = gh_distance_bounds(load_csv(args.Y), true_net_space(cfg), starts=cfg.gh_starts)
        out.update(gh_lower=lo, gh_upper=hi)
    if args.net:
        net = load_net(args.net)
        mesh = make_mesh(cfg)
        p = BoundaryPartition.from_dict(net.partition, mesh) if net.partition else make_partition(cfg, mesh)
        out["d_H"] = hausdorff_to_truth(net, make_manifold(cfg), probe_points(cfg), p)
    if not out:
        print("grade: nothing to grade (give --Y and/or --net)", file=sys.stderr)
        return 2
    _dump(out)
    return 0


def cmd_run(args) -> int:
    from .pipeline import run_pipeline

    _dump(run_pipeline(_config(args)))
    return 0


def cmd_sweep(args) -> int:
    from .pipeline import stability_sweep

    cfg = _config(args)
    values = [float(v) for v in args.values.split(",") if v.strip()]
    rows = stability_sweep(cfg, args.axis, values, out_csv=args.output)
    _dump(rows)
    return 0 if all(r["error"] is None for r in rows) else 1


def cmd_spectral_dist(args) -> int:
    from .spectral import load_dataset
    from .topology import spectral_distance

    a, b = load_dataset(args.a), load_dataset(args.b)
    _dump({"spectral_distance": spectral_distance(a, b, tol=args.tol)})
    return 0


def cmd_gh_dist(args) -> int:
    from .gh import gh_distance_bounds, gh_distance_exact, load_csv

    X, Y = load_csv(args.x), load_csv(args.y)
    if args.exact:
        _dump({"gh_exact": gh_distance_exact(X, Y)})
    else:
        lo, hi = gh_distance_bounds(X, Y, starts=args.starts)
        _dump({"gh_lower": lo, "gh_upper": hi})
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bsrecon", description="Boundary spectral data, approximate reconstruction and stability grading.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="compute boundary spectral data for a model manifold")
    _add_common(p)
    p.add_argument("-o", "--output", required=True, help="dataset file to write")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("perturb", help="truncate and add seeded bounded noise to a dataset")
    p.add_argument("dataset")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--eig-abs", dest="eig_abs", type=float, default=0.0, help="max eigenvalue shift")
    p.add_argument("--trace-l2", dest="trace_l2", type=float, default=0.0, help="boundary L2 size of each trace perturbation")
    p.add_argument("--cutoff", type=float, help="keep eigenvalues below this (default: dataset cutoff)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("reconstruct", help="distance net and finite metric space from a dataset")
    _add_common(p)
    p.add_argument("dataset")
    p.add_argument("--prefix", required=True, help="output prefix for net JSON, distance CSV, labels and audit")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("grade", help="GH bounds of a reconstruction and d_H of a net against the true manifold")
    _add_common(p)
    p.add_argument("--Y", help="reconstructed distance matrix CSV")
    p.add_argument("--net", help="distance net JSON")
    p.set_defaults(func=cmd_grade)

    p = sub.add_parser("run", help="full pipeline with content-addressed artifacts")
    _add_common(p, out_dir=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="stability sweep along one axis")
    _add_common(p)
    p.add_argument("--axis", required=True, choices=["delta_inv", "noise", "eps_degeneration"])
    p.add_argument("--values", required=True, help="comma separated, strictly monotone")
    p.add_argument("-o", "--output", help="CSV table to write")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("spectral-dist", help="boundary spectral distance between two datasets")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--tol", type=float, default=1e-4, help="bisection tolerance")
    p.set_defaults(func=cmd_spectral_dist)

    p = sub.add_parser("gh-dist", help="Gromov-Hausdorff distance between two distance matrix CSVs")
    p.add_argument("x")
    p.add_argument("y")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--exact", action="store_true", help="exhaustive search (at most 6 points each)")
    g.add_argument("--bounds", action="store_true", help="lower and upper bounds (default)")
    p.add_argument("--starts", type=int, default=64, help="greedy starts for the upper bound")
    p.set_defaults(func=cmd_gh_dist)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"bsrecon {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
