"""Command-line entry point: ingest / train / discover / bench / sweep.

Exit codes: 0 success, 1 user or input error, 2 numeric failure. All
randomness flows from --seed (env var UD_SEED as fallback); help output is
rendered at a fixed width so it is stable across terminals.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from udisc import bench as bench_mod
from udisc.embed import EmbedderConfig
from udisc.errors import NumericFailure, UdiscError, UnknownAttribute
from udisc.ingest import IngestConfig, clean, load_csv, write_csv
from udisc.train import (
    TrainConfig,
    load_pipeline,
    run_training,
    save_pipeline,
    score_new_data,
)
from udisc.types import ColumnKind

DEFAULT_SEED = 42


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; the CLI contract reserves 2 for numeric failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _formatter(prog):
    return argparse.HelpFormatter(prog, width=96)


def _seed_default() -> int:
    env = os.environ.get("UD_SEED")
    return int(env) if env else DEFAULT_SEED


def _add_ingest_flags(p):
    p.add_argument("--delimiter", default=",", help="field delimiter (default: ,)")
    p.add_argument("--no-header", action="store_true", help="input has no header row")
    p.add_argument("--label-column", default=None, help="column holding observed utility labels")
    p.add_argument("--missing-token", action="append", default=None, metavar="TOK",
                   help="value treated as missing; repeatable (default: '', NA, NaN, null)")
    p.add_argument("--type-inference-sample", type=int, default=None, metavar="N",
                   help="rows used to infer column kinds (default: all)")
    p.add_argument("--negate", action="append", default=None, metavar="ATTR",
                   help="negate a minimization attribute at ingest; repeatable")


def _add_train_flags(p):
    p.add_argument("--lr", type=float, default=0.01, help="gradient-descent learning rate (default: 0.01)")
    p.add_argument("--epochs", type=int, default=500, help="gradient-descent epochs (default: 500)")
    p.add_argument("--ridge", type=float, default=1e-3, help="ridge strength (default: 0.001)")
    p.add_argument("--k", type=int, default=10, help="selection size (default: 10)")
    p.add_argument("--embed-dim", type=int, default=64, help="text embedding dimension (default: 64)")
    p.add_argument("--ngram-min", type=int, default=2, help="smallest hashed n-gram (default: 2)")
    p.add_argument("--ngram-max", type=int, default=3, help="largest hashed n-gram (default: 3)")
    p.add_argument("--no-lowercase", action="store_true", help="do not lowercase text before hashing")


def _add_ranking_flags(p):
    p.add_argument("--ranking", default=None, metavar="FILE",
                   help="ranking file: one attribute per line, best first, '#' comments")
    p.add_argument("--rank", action="append", default=None, metavar="ATTR",
                   help="ranked attribute, best first; repeatable alternative to --ranking")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="udisc", formatter_class=_formatter,
                     description="Utility-driven data discovery from a one-shot attribute ranking.")
    parser.add_argument("--seed", type=int, default=None,
                        help="global random seed (default: env UD_SEED or 42)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("ingest", formatter_class=_formatter,
                       help="load, type, and clean a CSV; print a summary")
    p.add_argument("input", help="input CSV path")
    _add_ingest_flags(p)
    p.add_argument("--output", default=None, help="write the cleaned dataset as CSV")

    p = sub.add_parser("train", formatter_class=_formatter,
                       help="fit the two-stage utility model and write a model file")
    p.add_argument("input", help="training CSV path")
    _add_ingest_flags(p)
    _add_ranking_flags(p)
    _add_train_flags(p)
    p.add_argument("--model-out", required=True, metavar="FILE", help="model JSON output path")
    p.add_argument("--dump-graph", default=None, metavar="FILE", help="write the attribute graph as JSON")
    p.add_argument("--dump-embeddings", default=None, metavar="FILE",
                   help="write pre-pass text embeddings as CSV (tuple_id, attr, v0..)")

    p = sub.add_parser("discover", formatter_class=_formatter,
                       help="score a CSV with a trained model and emit the top-k")
    p.add_argument("input", help="CSV to score")
    p.add_argument("--model", required=True, metavar="FILE", help="model JSON from 'train'")
    p.add_argument("--k", type=int, default=None, help="selection size (default: from model)")
    p.add_argument("--output", default=None, help="result path (default: stdout)")
    p.add_argument("--format", choices=["json", "csv"], default="json", help="result format")
    _add_ingest_flags(p)

    p = sub.add_parser("bench", formatter_class=_formatter,
                       help="run the precision/stability/runtime comparison protocol")
    p.add_argument("input", nargs="?", default=None, help="labeled CSV (or use --synthetic)")
    _add_ingest_flags(p)
    _add_ranking_flags(p)
    _add_train_flags(p)
    p.add_argument("--synthetic", default=None, metavar="SPEC",
                   help="synthetic spec, e.g. n=1000,m=5,text=1,signal=1,noise=0.05,weights=0.5:0.3:0.2")
    p.add_argument("--algos", "--algo", default="gnn,plod,bod,topk,skyline,moo", metavar="LIST",
                   help="comma-separated algorithms (default: all six)")
    p.add_argument("--runs", type=int, default=10, help="stability re-runs (default: 10)")
    p.add_argument("--subsample", type=float, default=0.8, help="stability subsample fraction (default: 0.8)")
    p.add_argument("--emit-fixture", action="store_true",
                   help="write the published reference tables next to the report")
    p.add_argument("--output", default=None, help="report JSON path (default: stdout)")

    p = sub.add_parser("sweep", formatter_class=_formatter,
                       help="benchmark across dataset sizes and emit plot data")
    _add_train_flags(p)
    p.add_argument("--synthetic", required=True, metavar="SPEC", help="synthetic spec (see bench)")
    p.add_argument("--sizes", required=True, metavar="LIST", help="comma-separated ascending sizes")
    p.add_argument("--algos", "--algo", default="gnn,plod,bod,topk,skyline,moo", metavar="LIST",
                   help="comma-separated algorithms (default: all six)")
    p.add_argument("--runs", type=int, default=10, help="stability re-runs (default: 10)")
    p.add_argument("--subsample", type=float, default=0.8, help="stability subsample fraction (default: 0.8)")
    p.add_argument("--output-dir", default=".", help="directory for per-size reports and plot CSV")

    return parser


def _ingest_config(args) -> IngestConfig:
    tokens = frozenset(args.missing_token) if args.missing_token else IngestConfig().missing_tokens
    return IngestConfig(
        delimiter=args.delimiter,
        has_header=not args.no_header,
        label_column=args.label_column,
        type_inference_sample=args.type_inference_sample,
        missing_tokens=tokens,
    )


def _train_config(args, seed: int) -> TrainConfig:
    return TrainConfig(learning_rate=args.lr, epochs=args.epochs, ridge_lambda=args.ridge,
                       seed=seed, k=args.k)


def _embed_config(args) -> EmbedderConfig:
    return EmbedderConfig(dim=args.embed_dim, ngram_min=args.ngram_min, ngram_max=args.ngram_max,
                          lowercase=not args.no_lowercase)


def _load_clean(args) -> tuple:
    config = _ingest_config(args)
    lds = clean(load_csv(args.input, config), config)
    if args.negate:
        for name in args.negate:
            col = lds.dataset.column(name)
            if col.kind is not ColumnKind.NUMERIC:
                raise UdiscError(f"--negate needs a numeric attribute, {name!r} is text")
            col.numeric_values *= -1.0
    return lds, config


def _ranking_order(args, lds) -> list[str]:
    if args.ranking and args.rank:
        raise UdiscError("give either --ranking FILE or repeated --rank, not both")
    if args.ranking:
        lines = Path(args.ranking).read_text(encoding="utf-8").splitlines()
        order = [ln.strip() for ln in lines if ln.strip() and not ln.strip().startswith("#")]
    elif args.rank:
        order = list(args.rank)
    else:
        raise UdiscError("a ranking is required: --ranking FILE or repeated --rank ATTR")
    return order


def _parse_synthetic(text: str, seed: int) -> bench_mod.SyntheticSpec:
    fields = {}
    for part in text.split(","):
        if not part:
            continue
        if "=" not in part:
            raise UdiscError(f"bad synthetic spec entry {part!r}; expected key=value")
        key, value = part.split("=", 1)
        fields[key.strip()] = value.strip()
    weights = tuple(float(w) for w in fields["weights"].split(":")) if "weights" in fields else ()
    try:
        return bench_mod.SyntheticSpec(
            n_rows=int(fields.get("n", 1000)),
            n_numeric=int(fields.get("m", 5)),
            n_text=int(fields.get("text", 0)),
            true_weights=weights,
            noise_sigma=float(fields.get("noise", 0.0)),
            text_signal=fields.get("signal", "0") not in ("0", "false", ""),
            seed=int(fields.get("seed", seed)),
        )
    except (KeyError, ValueError) as exc:
        raise UdiscError(f"bad synthetic spec {text!r}: {exc}") from exc


def _write_or_print(text: str, path: str | None):
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        print(text, end="" if text.endswith("\n") else "\n")


def _cmd_ingest(args, seed: int) -> int:
    config = _ingest_config(args)
    raw = load_csv(args.input, config)
    cleaned = clean(raw, config)
    ds = cleaned.dataset
    print(f"dataset: {ds.name}")
    print(f"rows: {raw.dataset.row_count} raw -> {ds.row_count} clean "
          f"({raw.dataset.row_count - ds.row_count} duplicates dropped)")
    imputed = int(sum(c.missing_mask.sum() for c in raw.dataset.columns))
    print(f"imputed cells: {imputed}")
    for col in ds.columns:
        print(f"  {col.name}: {col.kind.value}")
    if cleaned.labels is not None:
        print(f"labels: {args.label_column} (n={len(cleaned.labels)})")
    if args.output:
        write_csv(cleaned, args.output, config)
        print(f"wrote cleaned CSV to {args.output}")
    return 0


def _cmd_train(args, seed: int) -> int:
    lds, _ = _load_clean(args)
    order = _ranking_order(args, lds)
    config = _train_config(args, seed)
    embed_config = _embed_config(args)
    run = run_training(lds, order, config, embed_config, label_column=args.label_column)
    pipeline = run.pipeline

    save_pipeline(pipeline, args.model_out)
    print(f"model written to {args.model_out}")
    print("attribute weights:")
    for name in pipeline.ranking.order:
        print(f"  {name}: {pipeline.ranking.weights[name]:.6f}")
    print(f"SSE_num: {pipeline.sse_num:.6g}")
    print(f"SSE_text: {pipeline.sse_text:.6g}")
    for stage, model in (("synthetic", pipeline.synthetic), ("real", pipeline.real)):
        print(f"{stage}: intercept {model.intercept:.6g}, "
              f"{len(model.numeric_coeffs)} numeric coeffs, {len(model.text_coeffs)} text coeffs")
        for name, value in model.numeric_coeffs.items():
            print(f"  {name}: {value:.6g}")

    if args.dump_graph:
        graph = pipeline.graph
        doc = {"nodes": graph.nodes,
               "adjacency": {a: {b: graph.adjacency[i, j]
                                 for j, b in enumerate(graph.nodes) if graph.adjacency[i, j] != 0.0}
                             for i, a in enumerate(graph.nodes)},
               "degenerate": list(graph.degenerate)}
        Path(args.dump_graph).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        print(f"graph written to {args.dump_graph}")
    if args.dump_embeddings:
        lines = ["tuple_id,attr," + ",".join(f"v{d}" for d in range(embed_config.dim))]
        for attr, mat in run.pre_embeddings.items():
            for i, row in enumerate(mat):
                lines.append(f"{i},{attr}," + ",".join(repr(float(v)) for v in row))
        Path(args.dump_embeddings).write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"embeddings written to {args.dump_embeddings}")
    return 0


def _cmd_discover(args, seed: int) -> int:
    pipeline = load_pipeline(args.model)
    if args.label_column is None and pipeline.label_column:
        args.label_column = pipeline.label_column  # drop the training label if present
    config = _ingest_config(args)
    try:
        lds = clean(load_csv(args.input, config), config)
    except UnknownAttribute:
        if args.label_column is None:
            raise
        # the label column may legitimately be absent from scoring data
        config = replace(config, label_column=None)
        lds = clean(load_csv(args.input, config), config)
    k = args.k if args.k is not None else pipeline.train_config.k
    result = score_new_data(pipeline, lds, k)
    _write_or_print(result.to_json() + "\n" if args.format == "json" else result.to_csv(),
                    args.output)
    return 0


def _algos(args) -> list[str]:
    return [a.strip() for a in args.algos.split(",") if a.strip()]


def _cmd_bench(args, seed: int) -> int:
    config = _train_config(args, seed)
    embed_config = _embed_config(args)
    if (args.input is None) == (args.synthetic is None):
        raise UdiscError("bench needs exactly one of an input CSV or --synthetic SPEC")
    if args.synthetic:
        spec = _parse_synthetic(args.synthetic, seed)
        lds = bench_mod.generate(spec, embed_config)
        order = bench_mod.ranking_order_for(spec)
    else:
        if args.label_column is None:
            raise UdiscError("bench on a CSV needs --label-column for ground truth")
        lds, _ = _load_clean(args)
        order = _ranking_order(args, lds)

    report = bench_mod.run_benchmark(lds, order, _algos(args), config, embed_config,
                                     runs=args.runs, subsample=args.subsample, base_seed=seed)
    doc = report.to_dict()
    bench_mod.validate_report(doc)
    _write_or_print(json.dumps(doc, indent=2) + "\n", args.output)
    for warning in report.warnings:
        print(warning, file=sys.stderr)
    if args.emit_fixture:
        fixture_path = (Path(args.output).with_suffix(".reference.json")
                        if args.output else Path("paper_reference.json"))
        fixture_path.write_text(json.dumps(bench_mod.paper_reference_tables(), indent=2) + "\n",
                                encoding="utf-8")
        print(f"reference tables written to {fixture_path}", file=sys.stderr)
    return 0


def _cmd_sweep(args, seed: int) -> int:
    config = _train_config(args, seed)
    embed_config = _embed_config(args)
    spec = _parse_synthetic(args.synthetic, seed)
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    reports = bench_mod.sweep_tuples(spec, sizes, _algos(args), config, embed_config,
                                     runs=args.runs, subsample=args.subsample, base_seed=seed)
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    for rep in reports:
        doc = rep.to_dict()
        bench_mod.validate_report(doc)
        path = outdir / f"report-{rep.n_rows}.json"
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {path}")
    plot_path = outdir / "plot_data.csv"
    plot_path.write_text(bench_mod.plot_data_csv(reports), encoding="utf-8")
    print(f"wrote {plot_path}")
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "train": _cmd_train,
    "discover": _cmd_discover,
    "bench": _cmd_bench,
    "sweep": _cmd_sweep,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    seed = args.seed if args.seed is not None else _seed_default()
    try:
        return _COMMANDS[args.command](args, seed)
    except NumericFailure as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (UdiscError, FileNotFoundError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
