"""Command-line entry point: generate, train, train-nn, smooth, bench, render, report."""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import MeshsmithError

LOSS_CHOICES = ("metric", "minmax", "ar", "cos")
ALGOS = ("laplacian", "smart-laplacian", "angle", "cvt", "optim", "nn", "gmsnet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def default_seed(fallback: int = 0) -> int:
    env = os.environ.get("MESHSMITH_SEED")
    if env is None or env == "":
        return fallback
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"MESHSMITH_SEED must be an integer, got {env!r}") from None


def _load_manifest(path):
    from .mesh import load_m2d
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    base = path.parent
    return {split: [load_m2d(base / f) for f in doc["splits"][split]] for split in ("train", "val", "test")}


def cmd_generate(args) -> int:
    from .delaunay import DatasetSpec, mesh_params, random_square_mesh, split_counts
    from .mesh import save_m2d
    seed = args.seed if args.seed is not None else default_seed()
    spec = DatasetSpec(mesh_count=args.count, node_count_range=(args.min_nodes, args.max_nodes), seed=seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = mesh_params(spec)
    counts = split_counts(spec.mesh_count, spec.split)
    names = ["train"] * counts[0] + ["val"] * counts[1] + ["test"] * counts[2]
    seen = {"train": 0, "val": 0, "test": 0}
    manifest = {"seed": seed, "split": list(spec.split), "files": [],
                "splits": {"train": [], "val": [], "test": []}}
    for split, (nc, side, mseed) in zip(names, params):
        fname = f"{split}_{seen[split]:03d}.m2d"
        seen[split] += 1
        save_m2d(random_square_mesh(nc, side, mseed), out / fname)
        manifest["files"].append({"file": fname, "split": split, "node_count": nc,
                                  "side": side, "seed": mseed})
        manifest["splits"][split].append(fname)
    (out / "dataset.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(params)} meshes to {out}")
    return 0


def cmd_train(args) -> int:
    from .gmsnet import save_checkpoint
    from .training import TrainConfig, train_gmsnet
    data = _load_manifest(args.dataset)
    seed = args.seed if args.seed is not None else default_seed()
    cfg = TrainConfig(epochs=args.epochs, loss_kind=args.loss, hidden_dim=args.hidden, seed=seed)

    def progress(ep, tl, vl, lr, tc):
        if not args.quiet:
            print(f"epoch {ep:4d} train {tl:.6f} val {vl:.6f} lr {lr:.2e} trunc {tc}", flush=True)

    params, trace = train_gmsnet(data["train"], data["val"], cfg, progress=progress)
    save_checkpoint(params, args.out, {"loss": cfg.loss_kind, "epochs": cfg.epochs})
    trace_path = args.trace or str(Path(args.out).with_suffix(".csv"))
    trace.to_csv(trace_path)
    print(f"checkpoint {args.out}, trace {trace_path}")
    return 0


def cmd_train_nn(args) -> int:
    from .nnsmoothing import nn_generate_labels, nn_train_and_step
    data = _load_manifest(args.dataset)
    seed = args.seed if args.seed is not None else default_seed()
    labels = nn_generate_labels(data["train"])
    model = nn_train_and_step(labels, epochs=args.epochs, seed=seed)
    model.save(args.out)
    print(f"NN-Smoothing models for degrees {sorted(model.models)} -> {args.out}")
    return 0


def _models(args):
    model = nn = None
    if args.algo == "gmsnet":
        if not args.model:
            raise UsageError("--algo gmsnet requires --model <checkpoint>")
        from .gmsnet import load_checkpoint
        model = load_checkpoint(args.model)
    elif args.algo == "nn":
        if not args.model:
            raise UsageError("--algo nn requires --model <nn-smoothing file>")
        from .nnsmoothing import NNSmoother
        nn = NNSmoother.load(args.model)
    return model, nn


def cmd_smooth(args) -> int:
    from .bench import smooth_mesh
    from .mesh import load_m2d, save_m2d
    model, nn = _models(args)
    mesh = load_m2d(args.mesh)
    res = smooth_mesh(mesh, args.algo, args.sweeps, model=model, nn=nn)
    save_m2d(res.mesh, args.out)
    print(f"{res.sweeps} sweeps, {res.truncations} truncated updates -> {args.out}")
    return 0


def cmd_bench(args) -> int:
    from .bench import CSV_FIELDS, csv_line, format_header, format_row, run_experiment, summary_row
    from .mesh import load_m2d, quality_report
    model, nn = _models(args)
    mesh = load_m2d(args.mesh)
    name = Path(args.mesh).stem
    origin = summary_row(name, "origin", quality_report(mesh), 0.0)
    _, row = run_experiment(mesh, args.algo, args.runs, args.sweeps, model=model, nn=nn, mesh_name=name)
    print(format_header())
    print(format_row(origin))
    print(format_row(row))
    print()
    print(",".join(CSV_FIELDS))
    print(csv_line(origin))
    print(csv_line(row))
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(",".join(CSV_FIELDS) + "\n" + csv_line(origin) + "\n" + csv_line(row) + "\n")
    return 0


def cmd_render(args) -> int:
    from .bench import render_svg
    from .mesh import load_m2d
    render_svg(load_m2d(args.mesh), args.out)
    return 0


def cmd_report(args) -> int:
    from .mesh import HIST_BINS, load_m2d, quality_report, weighted_quality
    rep = quality_report(load_m2d(args.mesh))
    print("bin_lo,bin_hi,count")
    for k, c in enumerate(rep.histogram):
        print(f"{k / HIST_BINS:.2f},{(k + 1) / HIST_BINS:.2f},{c}")
    for key, val in rep.as_row().items():
        print(f"# {key}={val!r}")
    print(f"# weighted_quality={weighted_quality(rep)!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="meshsmith", description="Triangle mesh smoothing with a graph network and classical baselines.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("generate", help="random square meshes plus a dataset.json manifest")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, default=20)
    g.add_argument("--min-nodes", type=int, default=200)
    g.add_argument("--max-nodes", type=int, default=800)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="label-free training of the graph smoother")
    t.add_argument("--dataset", required=True)
    t.add_argument("--loss", choices=LOSS_CHOICES, default="metric")
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--hidden", type=int, default=32)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True)
    t.add_argument("--trace")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    n = sub.add_parser("train-nn", help="supervised per-degree baseline on optimisation labels")
    n.add_argument("--dataset", required=True)
    n.add_argument("--epochs", type=int, default=300)
    n.add_argument("--seed", type=int)
    n.add_argument("--out", required=True)
    n.set_defaults(func=cmd_train_nn)

    for name, fn in (("smooth", cmd_smooth), ("bench", cmd_bench)):
        s = sub.add_parser(name)
        s.add_argument("--mesh", required=True)
        s.add_argument("--algo", required=True, choices=ALGOS)
        s.add_argument("--model")
        s.add_argument("--sweeps", type=int, default=100)
        if name == "smooth":
            s.add_argument("--out", required=True)
        else:
            s.add_argument("--runs", type=int, default=10)
            s.add_argument("--csv")
        s.set_defaults(func=fn)

    r = sub.add_parser("render", help="SVG coloured by element quality")
    r.add_argument("--mesh", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_render)

    q = sub.add_parser("report", help="quality histogram CSV")
    q.add_argument("--mesh", required=True)
    q.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"meshsmith: error: {exc}", file=sys.stderr)
        return 1
    except (MeshsmithError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"meshsmith: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
