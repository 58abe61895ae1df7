"""Command-line entry point: ``diffclust {train,presets,negatives}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .evaluate import kmeans, metrics
from .graph import DatasetError, KernelParams, ValidationError, build_knn_graph, load_dataset
from .objective import build_operators, negative_adjacency
from .presets import OVERSIZED, PRESETS, get_preset
from .trainer import VARIANTS, TrainConfig, TrainingDiverged, train

log = logging.getLogger("diffclust")

CSV_HEADER = ("dataset", "variant", "seed", "acc", "nmi", "ari", "f1", "final_loss", "wall_clock_s")

# flags that override single TrainConfig fields
OVERRIDES = {
    "beta": float,
    "gamma": float,
    "k": int,
    "time": float,
    "dt": float,
    "hidden": int,
    "epochs": int,
    "lr_theta": float,
    "lr_phi": float,
    "kmeans_restarts": int,
}


@dataclass
class RunRecord:
    dataset: str
    variant: str
    seed: int
    acc: float
    nmi: float
    ari: float
    f1: float
    final_loss: float
    wall_clock_s: float

    def csv_fields(self) -> list[str]:
        return [
            self.dataset,
            self.variant,
            str(self.seed),
            *(repr(float(getattr(self, k))) for k in CSV_HEADER[3:]),
        ]

    def csv_row(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow(self.csv_fields())
        return buf.getvalue()


def run_seed(graph, cfg: TrainConfig, seed: int, clusters: int, operators=None, dump_dir=None):
    """Train, cluster and score one seed.  Returns ``(RunRecord, json_record)``."""
    cfg = cfg.replace(seed=seed)
    start = time.perf_counter()
    result = train(graph, cfg, operators)
    clustering = kmeans(result.Z, clusters, restarts=cfg.kmeans_restarts, seed=seed)
    report = metrics(clustering.assignments, graph.labels)
    elapsed = time.perf_counter() - start
    record = RunRecord(
        dataset=graph.name,
        variant=cfg.variant,
        seed=seed,
        final_loss=result.final_terms.total,
        wall_clock_s=elapsed,
        **report.to_dict(),
    )
    if dump_dir is not None:
        path = Path(dump_dir) / f"{graph.name}_{cfg.variant}_seed{seed}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, result.Z, delimiter=",", fmt="%.17g")
    payload = asdict(record) | {
        "config": cfg.to_mapping(),
        "clusters": clusters,
        "inertia": clustering.inertia,
        "history": [asdict(r) for r in result.history.records],
    }
    return record, payload


def _run_seed_job(args):
    graph, cfg, seed, clusters, operators, dump_dir = args
    try:
        return run_seed(graph, cfg, seed, clusters, operators, dump_dir)
    except TrainingDiverged as exc:
        return exc


def _parse_seeds(args) -> list[int]:
    if args.seed_list:
        return [int(tok) for tok in args.seed_list.split(",") if tok.strip()]
    return list(range(args.seeds))


def _resolve_config(args, parser) -> tuple[TrainConfig, str | None]:
    preset_name = None
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(data, dict):
            parser.error("config file must hold a JSON object")
        base = get_preset(args.preset) if args.preset else TrainConfig()
        try:
            cfg = TrainConfig.from_mapping(data, base)
        except KeyError as exc:
            parser.error(str(exc.args[0]))
        except (TypeError, ValueError) as exc:
            parser.error(f"invalid config: {exc}")
        preset_name = args.preset
    elif args.preset:
        try:
            cfg = get_preset(args.preset)
        except KeyError as exc:
            parser.error(str(exc.args[0]))
        preset_name = args.preset.lower()
    else:
        parser.error("one of --preset or --config is required")

    changes = {k: getattr(args, k) for k in OVERRIDES if getattr(args, k) is not None}
    if args.variant:
        changes["variant"] = args.variant
    try:
        cfg = cfg.replace(**changes)
    except ValueError as exc:
        parser.error(f"invalid configuration: {exc}")
    return cfg, preset_name


def _append_outputs(out: Path, records, payloads) -> None:
    new_file = not out.exists() or out.stat().st_size == 0
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("a", newline="") as fh:
        if new_file:
            fh.write(",".join(CSV_HEADER) + "\n")
        for rec in records:
            fh.write(rec.csv_row())
    with out.with_suffix(".jsonl").open("a") as fh:
        for payload in payloads:
            fh.write(json.dumps(payload, sort_keys=True) + "\n")


def summarize(records) -> str:
    parts = []
    for key in ("acc", "nmi", "ari", "f1"):
        vals = np.array([getattr(r, key) for r in records])
        parts.append(f"{key} {vals.mean():.4f} ± {vals.std():.4f}")
    return f"{len(records)} seed(s): " + "  ".join(parts)


def cmd_train(args, parser) -> int:
    cfg, preset_name = _resolve_config(args, parser)
    if preset_name in OVERSIZED:
        log.warning(
            "preset %r uses dense n x n trainable matrices; the run may exceed "
            "desk-scale memory",
            preset_name,
        )
    try:
        graph = load_dataset(args.dataset_dir)
    except (DatasetError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    clusters = args.clusters if args.clusters is not None else graph.num_classes
    if clusters is None:
        print("error: dataset has no labels.txt; pass --clusters", file=sys.stderr)
        return 1
    if graph.labels is None:
        print("error: metrics need ground-truth labels (labels.txt)", file=sys.stderr)
        return 1
    if cfg.k >= graph.n:
        print(f"error: k={cfg.k} must be smaller than the node count {graph.n}", file=sys.stderr)
        return 1

    seeds = _parse_seeds(args)
    operators = build_operators(graph, cfg.kernel)
    jobs = [(graph, cfg, s, clusters, operators, args.dump_embedding) for s in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_run_seed_job, jobs))
    else:
        outcomes = [_run_seed_job(job) for job in jobs]

    records, payloads, failed = [], [], 0
    for seed, outcome in zip(seeds, outcomes):
        if isinstance(outcome, TrainingDiverged):
            failed += 1
            print(f"seed {seed}: {outcome}", file=sys.stderr)
            continue
        records.append(outcome[0])
        payloads.append(outcome[1])

    if args.out:
        _append_outputs(Path(args.out), records, payloads)
        summary_stream = sys.stdout
    else:
        sys.stdout.write(",".join(CSV_HEADER) + "\n")
        for rec in records:
            sys.stdout.write(rec.csv_row())
        summary_stream = sys.stderr
    if records:
        print(summarize(records), file=summary_stream)
    return 0 if failed == 0 else 1


def format_presets() -> str:
    lines = [f"{'name':<10}{'beta':>6}{'gamma':>7}{'k':>5}{'time':>6}{'hidden':>8}{'epochs':>8}"]
    for name, cfg in PRESETS.items():
        lines.append(
            f"{name:<10}{cfg.beta:>6g}{cfg.gamma:>7g}{cfg.k:>5d}{cfg.time:>6g}"
            f"{cfg.hidden:>8d}{cfg.epochs:>8d}"
        )
    return "\n".join(lines)


def cmd_presets(args, parser) -> int:
    print(format_presets())
    return 0


def negative_pairs(graph, kernel: KernelParams) -> np.ndarray:
    """Upper-triangle ``(i, j)`` pairs of the negative-sample adjacency."""
    Wneg = negative_adjacency(graph, build_knn_graph(graph.X, kernel))
    i, j = np.nonzero(np.triu(Wneg, k=1))
    return np.column_stack([i, j])


def cmd_negatives(args, parser) -> int:
    if args.k is None and args.preset is None:
        parser.error("pass --k or --preset")
    try:
        k = args.k if args.k is not None else get_preset(args.preset).k
    except KeyError as exc:
        parser.error(str(exc.args[0]))
    try:
        graph = load_dataset(args.dataset_dir)
        kernel = KernelParams(k=k, v=args.dof, sigma=args.sigma)
        pairs = negative_pairs(graph, kernel)
    except (DatasetError, ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    text = "".join(f"{i}\t{j}\n" for i, j in pairs)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    per_node = np.bincount(pairs.ravel(), minlength=graph.n)
    print(
        f"negative pairs: {len(pairs)}; nodes with zero negatives: {int(np.sum(per_node == 0))}",
        file=sys.stderr,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffclust",
        description="Self-contrastive graph diffusion embeddings for node clustering.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train, cluster and evaluate over one or more seeds")
    tr.add_argument("dataset_dir", help="directory with edges.tsv, features.csv, labels.txt")
    tr.add_argument("--preset", help=f"built-in hyperparameters ({', '.join(PRESETS)})")
    tr.add_argument("--config", help="JSON file with run configuration keys")
    group = tr.add_mutually_exclusive_group()
    group.add_argument("--seeds", type=int, default=1, help="run seeds 0..N-1 (default 1)")
    group.add_argument("--seed-list", help="comma-separated explicit seeds")
    tr.add_argument("--clusters", type=int, help="cluster count (default: number of label classes)")
    tr.add_argument("--variant", choices=VARIANTS)
    tr.add_argument("--jobs", type=int, default=1, help="seeds to run in parallel")
    tr.add_argument("--out", help="CSV file to append to (JSON records go next to it as .jsonl)")
    tr.add_argument("--dump-embedding", metavar="DIR", help="write each final embedding as CSV")
    for name, typ in OVERRIDES.items():
        tr.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ)
    tr.set_defaults(func=cmd_train)

    pr = sub.add_parser("presets", help="list built-in presets")
    pr.set_defaults(func=cmd_presets)

    ng = sub.add_parser("negatives", help="dump the negative-sample pairs as a TSV edge list")
    ng.add_argument("dataset_dir")
    ng.add_argument("--k", type=int)
    ng.add_argument("--preset")
    ng.add_argument("--sigma", type=float, default=0.5)
    ng.add_argument("--dof", type=float, default=1.0)
    ng.add_argument("--out")
    ng.set_defaults(func=cmd_negatives)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args, parser)


if __name__ == "__main__":
    sys.exit(main())
