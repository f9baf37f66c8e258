"""Command-line entry point.

Subcommands: bench, discover, align, eval, run, report. Exit codes:
0 success, 2 validation failure, 3 runtime failure. A JSON config file may
supply any flag's value; explicit command-line flags win.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .benchmark import BenchmarkSpec, make_benchmark
from .embeddings import load_embeddings, save_embeddings
from .errors import CodaError, ValidationError
from .pipeline import (
    RunConfig,
    align,
    discover,
    evaluate_sets,
    grid_report_rows,
    run_pipeline,
    write_grid_csv,
    _write_json,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coda", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out", dest="out_dir", default=None)

    io_args = argparse.ArgumentParser(add_help=False)
    io_args.add_argument("--embeddings", default=None)
    io_args.add_argument("--format", choices=["binary", "csv"], default=None)
    io_args.add_argument("--labels", default=None)

    discover_args = argparse.ArgumentParser(add_help=False)
    discover_args.add_argument("--ipc", type=int, default=None)
    discover_args.add_argument("--min-cluster-size", type=int, default=None)
    discover_args.add_argument("--min-samples", type=int, default=None)
    discover_args.add_argument("--preprocess", choices=["pca", "none"], default=None)
    discover_args.add_argument("--dim", dest="reduce_dim", type=int, default=None)

    align_args = argparse.ArgumentParser(add_help=False)
    align_args.add_argument("--gamma", type=float, default=None)
    align_args.add_argument("--pis", type=int, default=None)
    align_args.add_argument("--steps", type=int, default=None)
    align_args.add_argument("--cfg", dest="cfg_scale", type=float, default=None)

    bench_args = argparse.ArgumentParser(add_help=False)
    bench_args.add_argument("--classes", type=int, default=None)
    bench_args.add_argument("--modes", type=int, default=None)
    bench_args.add_argument("--points", type=int, default=None)
    bench_args.add_argument("--bench-dim", type=int, default=None)
    bench_args.add_argument("--separation", type=float, default=None)
    bench_args.add_argument("--noise-fraction", type=float, default=None)
    bench_args.add_argument("--test-points", type=int, default=None)

    sub.add_parser("bench", parents=[common, bench_args], help="generate a synthetic benchmark")
    sub.add_parser("discover", parents=[common, io_args, discover_args], help="select representatives")
    sub.add_parser(
        "align",
        parents=[common, io_args, discover_args, align_args],
        help="guided generation (runs the deterministic discovery stage first)",
    )
    p_eval = sub.add_parser("eval", parents=[common], help="evaluate a distilled set")
    p_eval.add_argument("--train", required=True)
    p_eval.add_argument("--test", required=True)
    sub.add_parser(
        "run",
        parents=[common, io_args, discover_args, align_args, bench_args],
        help="full pipeline (discover, align, eval)",
    )
    p_report = sub.add_parser("report", parents=[common], help="provenance-vs-grid CSV")
    p_report.add_argument("--grid", required=True)
    return parser


_CONFIG_FIELDS = [
    "embeddings", "labels", "format", "out_dir", "ipc", "min_cluster_size",
    "min_samples", "preprocess", "reduce_dim", "gamma", "pis", "steps",
    "cfg_scale", "seed", "score_components",
]

_BENCH_FIELDS = {
    "classes": "classes",
    "modes": "modes_per_class",
    "points": "points_per_class",
    "bench_dim": "dim",
    "separation": "separation",
    "noise_fraction": "noise_fraction",
    "test_points": "test_points_per_class",
}


def _merge_config(args: argparse.Namespace) -> RunConfig:
    file_values: dict = {}
    if getattr(args, "config", None):
        file_values = json.loads(Path(args.config).read_text())
    config = RunConfig()
    for name in _CONFIG_FIELDS:
        if name in file_values:
            setattr(config, name, file_values[name])
        flag = getattr(args, name, None)
        if flag is not None:
            setattr(config, name, flag)
    bench_file = file_values.get("bench", {})
    bench_flags = {
        spec_name: getattr(args, flag_name)
        for flag_name, spec_name in _BENCH_FIELDS.items()
        if getattr(args, flag_name, None) is not None
    }
    if bench_file or bench_flags:
        config.bench = BenchmarkSpec(**{**bench_file, **bench_flags})
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except CodaError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


def _dispatch(args: argparse.Namespace) -> int:
    config = _merge_config(args)
    out = Path(config.out_dir)

    if args.command == "bench":
        if config.bench is None:
            config.bench = BenchmarkSpec()
        bench = make_benchmark(config.bench, config.seed)
        out.mkdir(parents=True, exist_ok=True)
        save_embeddings(bench.train, out / "benchmark.bin")
        _write_json(out / "benchmark.manifest.json", bench.manifest())
        if bench.test is not None:
            save_embeddings(bench.test, out / "test.bin")
        print(f"benchmark written to {out}")
        return 0

    if args.command == "discover":
        config.validate()
        emb = load_embeddings(config.embeddings, config.format, config.labels)
        result = discover(emb, config)
        save_embeddings(result.representative_set(), out / "discovery" / "repset.bin")
        _write_json(out / "discovery" / "repset.json", result.manifest(config))
        print(f"representatives written to {out / 'discovery'}")
        return 0

    if args.command == "align":
        config.validate()
        emb = load_embeddings(config.embeddings, config.format, config.labels)
        discovery = discover(emb, config)
        result = align(emb, discovery, config)
        save_embeddings(result.sample_set(), out / "alignment" / "samples.bin")
        _write_json(out / "alignment" / "manifest.json", result.manifest(config))
        print(f"guided samples written to {out / 'alignment'}")
        return 0

    if args.command == "eval":
        train = load_embeddings(args.train, config.format)
        test = load_embeddings(args.test, config.format)
        report = evaluate_sets(train, test, config)
        _write_json(out / "eval" / "report.json", report.to_json())
        print(f"accuracy {report.accuracy:.4f} -> {out / 'eval' / 'report.json'}")
        return 0

    if args.command == "run":
        report = run_pipeline(config)
        print(f"accuracy {report.accuracy:.4f} -> {out}")
        return 0

    if args.command == "report":
        rows = grid_report_rows(Path(args.grid))
        csv_path = out / "grid.csv"
        write_grid_csv(rows, csv_path)
        print(f"{len(rows)} grid rows -> {csv_path}")
        return 0

    raise ValidationError(f"unknown command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
