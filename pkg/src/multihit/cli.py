"""Command-line pipeline: preprocess -> pack -> search -> verify/convert,
plus a bench sweep. Set MULTIHIT_LOG=debug|info|warning for verbosity."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path
from typing import NoReturn

from multihit import bitmat, cover, ingest, metrics, synthetic
from multihit.search import DEFAULT_ALPHA
from multihit.sched import round_executor

log = logging.getLogger("multihit")


def fail(message: str) -> NoReturn:
    print(f"multihit: error: {message}", file=sys.stderr)
    sys.exit(1)


def _parse_synthetic(text: str):
    parts = text.split(",")
    if len(parts) != 5:
        fail("--synthetic expects G,T,N,sparsity,seed")
    try:
        genes, tumors, normals = int(parts[0]), int(parts[1]), int(parts[2])
        sparsity = float(parts[3])
        seed = int(parts[4])
    except ValueError:
        fail("--synthetic expects integers G,T,N and float sparsity")
    return synthetic.random_matrix(genes, tumors, normals, sparsity, seed)


def _load_matrix(args) -> "bitmat.MutationMatrix":
    if args.synthetic:
        if args.input:
            fail("give either an input file or --synthetic, not both")
        matrix, _ = bitmat.sort_by_sparsity(_parse_synthetic(args.synthetic))
        return matrix
    if not args.input:
        fail("an input packed matrix (or --synthetic) is required")
    try:
        with open(args.input, "rb") as fh:
            return bitmat.read_packed(fh)
    except FileNotFoundError:
        fail(f"input file not found: {args.input}")
    except bitmat.PackedFormatError as exc:
        fail(f"{args.input}: {exc}")


def _validate_run_flags(args) -> None:
    if args.hits < 2:
        fail("--hits must be >= 2")
    if args.alpha <= 0:
        fail("--alpha must be > 0")
    if args.leaders < 1 or args.workers < 1:
        fail("--leaders and --workers must be >= 1")
    if args.chunk < 1:
        fail("--chunk must be >= 1")
    if args.max_rounds < 1:
        fail("--max-rounds must be >= 1")


def cmd_preprocess(args) -> int:
    paths = []
    for item in args.inputs:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(q for q in p.iterdir() if q.is_file()))
        elif p.is_file():
            paths.append(p)
        else:
            fail(f"input not found: {item}")
    if not paths:
        fail("no input files found")
    classify = ingest.classify_tcga_barcode
    if args.tumor_samples or args.normal_samples:
        if not (args.tumor_samples and args.normal_samples):
            fail("--tumor-samples and --normal-samples must be given together")
        tumors = Path(args.tumor_samples).read_text().split()
        normals = Path(args.normal_samples).read_text().split()
        classify = ingest.classifier_from_lists(tumors, normals)
    columns = ingest.MafColumns(args.gene_col, args.class_col, args.sample_col)
    exclude = [c for c in args.exclude_classes.split(",") if c]

    records = []
    total = ingest.ParseSummary()
    for path in paths:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                file_records, summary = ingest.parse_maf(fh, columns)
            except ingest.MafFormatError as exc:
                fail(f"{path}: {exc}")
        records.extend(file_records)
        total.records += summary.records
        total.comments += summary.comments
        total.malformed += summary.malformed
        if summary.malformed:
            log.warning("%s: skipped %d malformed lines (e.g. %s)",
                        path, summary.malformed, summary.malformed_lines[:5])
    cohort, csummary = ingest.build_cohort(records, classify, exclude)
    if not cohort.tumor_samples:
        fail("no tumor samples found after classification")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tumor_path = out_dir / "tumor_matrix.txt"
    normal_path = out_dir / "normal_list.txt"
    with open(tumor_path, "w", encoding="utf-8") as fh:
        ingest.write_tumor_matrix(fh, cohort)
    with open(normal_path, "w", encoding="utf-8") as fh:
        ingest.write_normal_list(fh, cohort)
    print(
        f"parsed {total.records} records from {len(paths)} file(s); "
        f"skipped {total.malformed} malformed, {total.comments} comments"
    )
    print(
        f"kept {csummary.kept} calls ({csummary.dropped_excluded} excluded-class, "
        f"{csummary.unclassified} unclassifiable); "
        f"{len(cohort.tumor_samples)} tumor / {len(cohort.normal_samples)} normal samples, "
        f"{len(cohort.gene_to_samples)} genes"
    )
    print(f"wrote {tumor_path} and {normal_path}")
    return 0


def cmd_pack(args) -> int:
    try:
        with open(args.tumor_matrix, "r", encoding="utf-8") as tfh, open(
            args.normal_list, "r", encoding="utf-8"
        ) as nfh:
            cohort = ingest.cohort_from_intermediates(tfh, nfh)
    except FileNotFoundError as exc:
        fail(str(exc))
    except ValueError as exc:
        fail(str(exc))
    try:
        matrix, gene_map = ingest.pack_cohort(cohort)
    except ValueError as exc:
        fail(str(exc))
    with open(args.out, "wb") as fh:
        bitmat.write_packed(matrix, fh)
    with open(args.gene_map, "w", encoding="utf-8") as fh:
        bitmat.write_gene_map(fh, gene_map)
    print(
        f"packed {matrix.num_genes} genes x {matrix.num_samples} samples "
        f"({matrix.num_tumor} tumor, {matrix.num_normal} normal) -> {args.out}"
    )
    print(f"gene map -> {args.gene_map}")
    return 0


def cmd_search(args) -> int:
    _validate_run_flags(args)
    matrix = _load_matrix(args)
    if matrix.num_tumor < 1:
        fail("matrix has no tumor samples")
    rows: list = []
    executor = round_executor(
        (args.leaders, args.workers),
        chunk_size=args.chunk,
        seed=args.seed,
        prune=not args.no_prune,
        stealing=not args.no_steal,
        transport=args.transport,
        metrics_sink=rows,
    )
    started = time.perf_counter()
    solution = cover.greedy_cover(matrix, args.hits, args.alpha, executor, args.max_rounds)
    wall = time.perf_counter() - started
    with open(args.output, "w", encoding="utf-8") as fh:
        cover.write_solution(fh, solution)
    with open(args.metrics, "w", encoding="utf-8", newline="") as fh:
        metrics.write_metrics_csv(fh, rows)
    summary = metrics.summarize([m for _, m in rows], matrix.num_genes, args.hits)
    print(
        f"rounds={len(solution.rounds)} complete={str(solution.complete).lower()} "
        f"wall_seconds={wall:.3f} visited={summary.total_visited} "
        f"pruned={summary.total_pruned} visited_fraction={summary.visited_fraction:.3e}"
    )
    if not solution.complete:
        print(f"stall: {solution.stall_reason}")
    print(f"solution -> {args.output}")
    print(f"metrics -> {args.metrics}")
    if args.figures:
        from multihit import figures

        fig_path = Path(args.metrics).with_suffix(".busy.png")
        figures.save_busy_histogram(rows, fig_path)
        print(f"figure -> {fig_path}")
    return 0


def cmd_verify(args) -> int:
    gene_map = None
    if args.gene_map:
        with open(args.gene_map, "r", encoding="utf-8") as fh:
            gene_map = bitmat.read_gene_map(fh)
    try:
        with open(args.solution, "r", encoding="utf-8") as sfh, open(
            args.tumor_matrix, "r", encoding="utf-8"
        ) as tfh, open(args.normal_list, "r", encoding="utf-8") as nfh:
            report = metrics.verify_cover(sfh, tfh, nfh, gene_map)
    except FileNotFoundError as exc:
        fail(str(exc))
    except ValueError as exc:
        fail(str(exc))
    print(
        f"covered {report.covered_tumor}/{report.total_tumor} tumor samples "
        f"({100.0 * report.tumor_fraction:.2f}%)"
    )
    print(f"covered {report.covered_normal}/{report.total_normal} normal samples")
    if report.uncovered_tumor_ids:
        print("uncovered tumor samples:")
        for sample in report.uncovered_tumor_ids:
            print(f"  {sample}")
    return 0


def cmd_convert(args) -> int:
    out_path = args.out or f"{args.solution}.named"
    try:
        with open(args.gene_map, "r", encoding="utf-8") as fh:
            gene_map = bitmat.read_gene_map(fh)
        with open(args.solution, "r", encoding="utf-8") as sfh, open(
            out_path, "w", encoding="utf-8"
        ) as ofh:
            count = metrics.convert_indices(sfh, gene_map, ofh)
    except FileNotFoundError as exc:
        fail(str(exc))
    except ValueError as exc:
        fail(str(exc))
    print(f"converted {count} combinations -> {out_path}")
    return 0


def cmd_bench(args) -> int:
    if args.alpha <= 0:
        fail("--alpha must be > 0")
    matrix = _load_matrix(args)
    try:
        hit_sizes = [int(h) for h in args.hits_list.split(",") if h]
        topologies = []
        for item in args.topologies.split(","):
            if not item:
                continue
            leaders_text, _, workers_text = item.partition("x")
            topologies.append((int(leaders_text), int(workers_text)))
    except ValueError:
        fail("could not parse --hits-list / --topologies")
    if not hit_sizes or not topologies:
        fail("empty bench sweep")
    if any(h < 2 for h in hit_sizes):
        fail("--hits-list entries must be >= 2")
    if any(l < 1 or w < 1 for l, w in topologies):
        fail("--topologies entries must be LxW with counts >= 1")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for hits in hit_sizes:
        for leaders, workers in topologies:
            sink: list = []
            executor = round_executor(
                (leaders, workers),
                chunk_size=args.chunk,
                seed=args.seed,
                transport="channel",
                metrics_sink=sink,
            )
            work_matrix = matrix.copy()
            started = time.perf_counter()
            solution = cover.greedy_cover(work_matrix, hits, args.alpha, executor, args.max_rounds)
            wall = time.perf_counter() - started
            summary = metrics.summarize([m for _, m in sink], matrix.num_genes, hits)
            row = {
                "hits": hits,
                "leaders": leaders,
                "workers_per_leader": workers,
                "total_workers": leaders * workers,
                "rounds": len(solution.rounds),
                "complete": solution.complete,
                "wall_seconds": round(wall, 6),
                "visited": summary.total_visited,
                "pruned": summary.total_pruned,
                "visited_fraction": summary.visited_fraction,
                "busy_stddev": round(summary.busy_stddev, 6),
            }
            rows.append(row)
            print(
                f"hits={hits} topology={leaders}x{workers} wall={wall:.3f}s "
                f"rounds={row['rounds']} visited_fraction={row['visited_fraction']:.3e}"
            )
    import csv as _csv

    csv_path = out_dir / "bench.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = _csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    from multihit import figures

    figure_paths = figures.save_bench_figures(rows, out_dir)
    print(f"bench table -> {csv_path}")
    for p in figure_paths:
        print(f"figure -> {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multihit",
        description="Multi-hit combination discovery: pruned search + greedy weighted set cover",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="parse MAF-like TSV files into cohort intermediates")
    p.add_argument("inputs", nargs="+", help="MAF files or a directory of them")
    p.add_argument("--out-dir", default=".", help="directory for the intermediate files")
    p.add_argument("--gene-col", default="Hugo_Symbol")
    p.add_argument("--class-col", default="Variant_Classification")
    p.add_argument("--sample-col", default="Tumor_Sample_Barcode")
    p.add_argument("--exclude-classes", default="Silent",
                   help="comma-separated variant classes to drop (case-insensitive)")
    p.add_argument("--tumor-samples", help="file of tumor sample IDs (bypasses barcode rule)")
    p.add_argument("--normal-samples", help="file of normal sample IDs (bypasses barcode rule)")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("pack", help="pack cohort intermediates into the binary solver input")
    p.add_argument("tumor_matrix")
    p.add_argument("normal_list")
    p.add_argument("--out", default="packed.bin")
    p.add_argument("--gene-map", default="packed.gene_map")
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("search", help="run the greedy cover over a packed matrix")
    p.add_argument("input", nargs="?", help="packed matrix file")
    p.add_argument("--synthetic", help="G,T,N,sparsity,seed random matrix instead of a file")
    p.add_argument("--hits", type=int, default=2, help="genes per combination (2-9 typical)")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--no-prune", action="store_true", help="exhaustive baseline")
    p.add_argument("--leaders", type=int, default=1)
    p.add_argument("--workers", type=int, default=1, help="workers per leader")
    p.add_argument("--chunk", type=int, default=1024, help="lambda chunk size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-rounds", type=int, default=cover.DEFAULT_MAX_ROUNDS)
    p.add_argument("--transport", choices=["channel", "socket"], default="channel")
    p.add_argument("--no-steal", action="store_true", help="disable work stealing")
    p.add_argument("--output", default="output.txt")
    p.add_argument("--metrics", default="metrics.csv")
    p.add_argument("--figures", action="store_true", help="render a busy-time figure")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("verify", help="recheck a solution's coverage from raw intermediates")
    p.add_argument("solution")
    p.add_argument("tumor_matrix")
    p.add_argument("normal_list")
    p.add_argument("--gene-map", help="required when the solution uses gene indices")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("convert", help="replace gene indices with names in a solution file")
    p.add_argument("solution")
    p.add_argument("gene_map")
    p.add_argument("--out", help="output path (default: <solution>.named)")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("bench", help="sweep topologies and hit sizes, write CSV + figures")
    p.add_argument("input", nargs="?", help="packed matrix file")
    p.add_argument("--synthetic", help="G,T,N,sparsity,seed random matrix instead of a file")
    p.add_argument("--hits-list", default="2,3")
    p.add_argument("--topologies", default="1x1,1x2,2x2")
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--chunk", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-rounds", type=int, default=cover.DEFAULT_MAX_ROUNDS)
    p.add_argument("--out-dir", default="bench_out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("MULTIHIT_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
