"""Command line entry point: ``rrgff <subcommand> [options]``.

Exit codes: 0 all checks passed, 1 a statistical check failed, 2 bad
configuration or runtime error.
"""

from __future__ import annotations

import argparse
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__, extremes, gff, graphgen, green, io
from .config import ExperimentConfig, dump_config, load_config
from .errors import RRGFFError
from .pipeline import RunReport, run
from .seeding import STAGE_GRAPH, STAGE_SAMPLE, stage_seed

log = logging.getLogger("rrgff")

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="YAML or JSON experiment config")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out-dir", type=Path, help="output directory")
    p.add_argument("--format", choices=("csv", "json"), help="tabular output format")
    p.add_argument("--manifest", action="store_true", help="write provenance manifest.json")
    p.add_argument("--n", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="rrgff", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-graph", parents=[common], help="sample a random regular graph")

    p = sub.add_parser("green", parents=[common], help="zero-average Green operator of a graph")
    p.add_argument("--graph", type=Path, help="edge-list file (default: generate)")
    p.add_argument("--method", default="shift-invert",
                   choices=("shift-invert", "eigendecomposition", "iterative"))

    p = sub.add_parser("census", parents=[common], help="ell-good census and structural report")
    p.add_argument("--graph", type=Path)
    p.add_argument("--ell", type=int)

    p = sub.add_parser("sample", parents=[common], help="draw field samples")
    p.add_argument("--mode", choices=("tree", "graph", "iid"))
    p.add_argument("--graph", type=Path)
    p.add_argument("--replicas", type=int)
    p.add_argument("--binary", action="store_true", help="write GAGF binary instead of CSV")

    p = sub.add_parser("extremes", parents=[common], help="extremal statistics of sampled fields")
    p.add_argument("--samples", type=Path, required=True, help="samples CSV from `sample`")
    p.add_argument("--variances", type=Path, help="GAGF Green matrix for per-vertex normalisation")

    sub.add_parser("compare", parents=[common], help="Gaussian comparison suite")

    p = sub.add_parser("pipeline", parents=[common], help="full pipeline")
    p.add_argument("--mode", choices=("tree", "graph", "iid"))
    p.add_argument("--replicas", type=int)
    p.add_argument("--ell", type=int)
    return parser


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {"master_seed": args.seed, "out_dir": args.out_dir and str(args.out_dir),
                 "format": args.format, "n": args.n, "r": args.r,
                 "mode": getattr(args, "mode", None), "replicas": getattr(args, "replicas", None),
                 "ell": getattr(args, "ell", None)}
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    return cfg


def _graph(args, cfg: ExperimentConfig) -> graphgen.RegularGraph:
    if getattr(args, "graph", None):
        return io.read_edge_list(args.graph)
    return graphgen.generate_simple(cfg.n, cfg.r, stage_seed(cfg.master_seed, STAGE_GRAPH))


def manifest(cfg: ExperimentConfig) -> dict:
    return {
        "versions": {"rrgff": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "seeds": {"master_seed": cfg.master_seed,
                  "graph_seed": stage_seed(cfg.master_seed, STAGE_GRAPH),
                  "sample_seed": stage_seed(cfg.master_seed, STAGE_SAMPLE)},
        "tolerances": cfg.tolerances,
        "config": cfg.to_dict(),
    }


def _write_report(report: RunReport, cfg: ExperimentConfig, out: Path) -> None:
    io.write_json(report.to_dict(), out / "report.json")
    if cfg.format == "csv":
        for name, rows in report.tables.items():
            io.write_table_csv(rows, out / f"{name}.csv")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.manifest:
            io.write_json(manifest(cfg), out / "manifest.json")
        return _dispatch(args, cfg, out)
    except (RRGFFError, OSError, ValueError) as e:
        print(f"rrgff: error: {e}", file=sys.stderr)
        return EXIT_ERROR


def _dispatch(args, cfg: ExperimentConfig, out: Path) -> int:
    cmd = args.command
    if cmd == "gen-graph":
        g = _graph(args, cfg)
        io.write_edge_list(g, out / "graph.edges")
        print(out / "graph.edges")
        return EXIT_PASS

    if cmd == "green":
        g = _graph(args, cfg)
        G = green.zero_average_green(g, args.method)
        io.write_gagf(G.matrix, out / "green.bin")
        io.write_json({**G.summary(), **G.invariant_errors()}, out / "green.json")
        return EXIT_PASS

    if cmd == "census":
        g = _graph(args, cfg)
        ell = cfg.census_radius() if args.ell is None else args.ell
        c = graphgen.vertex_census(g, ell)
        G = green.zero_average_green(g) if graphgen.is_connected(g) else None
        rep = graphgen.structural_report(g, cfg.k1, cfg.K1, cfg.k3, green=G)
        io.write_json(c, out / "census.json")
        io.write_json(rep, out / "structure.json")
        ok = all(v is not False for v in rep.checks_passed.values())
        return EXIT_PASS if ok else EXIT_FAIL

    if cmd == "sample":
        mode = cfg.mode if cfg.mode in ("tree", "graph", "iid") else "tree"
        seed = stage_seed(cfg.master_seed, STAGE_SAMPLE)
        ids = list(range(cfg.replicas))
        if mode == "tree":
            X = gff.sample_tree_gff_batch(gff.build_subtree(cfg.r, cfg.n), seed, ids)
        elif mode == "graph":
            f = gff.factor_green(green.zero_average_green(_graph(args, cfg)))
            X = gff.sample_graph_gff_batch(f, seed, ids)
        else:
            X = gff.sample_iid_batch(cfg.n, seed, ids)
        if args.binary:
            io.write_gagf(X, out / "samples.bin")
            io.write_json({"stream_ids": ids, "sample_seed": seed, "mode": mode}, out / "samples.ids.json")
        else:
            io.write_samples_csv(X, ids, out / "samples.csv")
        return EXIT_PASS

    if cmd == "extremes":
        X, ids = io.read_samples_csv(args.samples)
        consts = extremes.rescaling_constants(X.shape[1], cfg.r)
        norm = np.diag(io.read_gagf(args.variances)) if args.variances else None
        pts = extremes.rescale(X, consts, norm)
        intervals = [tuple(iv) for iv in cfg.intervals]
        maxima = pts.max(axis=1)
        ks = extremes.ks_gumbel(maxima, min_replicas=1)
        tests = extremes.ppp_interval_test(pts, intervals)
        rows = [{"stream_id": int(i), "M_N": float(m),
                 **{f"count_{a}_{b}": int(np.count_nonzero((p > a) & (p < b))) for a, b in intervals}}
                for i, m, p in zip(ids, maxima, pts)]
        io.write_table_csv(rows, out / "extremes.csv")
        io.write_json({"constants": consts, "ks": ks, "intervals": tests,
                       "tolerances": cfg.tolerances}, out / "extremes.json")
        return EXIT_PASS if ks.pvalue > cfg.tolerances["ks_pvalue_min"] else EXIT_FAIL

    # compare / pipeline
    if cmd == "compare":
        cfg.mode = "compare"
    cfg.validate()
    dump_config(cfg, out / "config.yaml")
    report = run(cfg)
    _write_report(report, cfg, out)
    print(io.dumps(report.passed))
    return EXIT_PASS if report.ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
