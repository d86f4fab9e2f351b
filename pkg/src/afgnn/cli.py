"""``afgnn`` command line: one subcommand per pipeline stage plus ``pipeline``.

Exit status is 0 on success, 1 for usage or parameter errors and 2 for
problems with the input data.  A JSON config file (``--config``) may supply
any long option, spelled with underscores; flags on the command line win.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .cluster import ClusteringResult
from .corpus import (
    atomic_write,
    read_afgs,
    read_json,
    read_matrix,
    read_snippets,
    read_truth,
    write_afg_text,
    write_afgs,
    write_json,
    write_jsonl,
    write_matrix,
)
from .embed import EmbeddingConfig, attach_features, make_provider
from .errors import AfgnnError
from .gnn import load_params, save_params
from .metrics import (
    THRESHOLD_GRID,
    adjusted_mutual_info,
    adjusted_rand,
    confusion_metrics,
    detect,
    format_sweep,
    mutual_info,
    rand_index,
    threshold_sweep,
)
from .pipeline import NORMALIZATIONS, build_stage, cluster_stage, default_jobs, embed_stage, prune_stage
from .pretrain import TrainConfig, train
from .prune import EDGE_MODES

log = logging.getLogger("afgnn")

# option name -> default, applied after the config file
DEFAULTS = {
    "api": None,
    "dim": 64,
    "seed": 0,
    "jobs": None,
    "provider": "lexical",
    "vectors": None,
    "birch_threshold": 3.0,
    "size_threshold_pct": 10.0,
    "k": None,
    "max_k": 50,
    "normalize": "none",
    "edge_mode": "none",
    "skip_errors": False,
    "no_sequence": False,
    "format": "jsonl",
    "checkpoint": None,
    "clustering": None,
    "truth": None,
    "total": None,
    "history": None,
    "variant": "RGCN",
    "lr": 5e-5,
    "batch": 64,
    "epochs": 100,
    "patience": 5,
    "layers": 5,
    "k1": 2,
    "r1": 1,
    "r2": 3,
    "negatives": 1,
    "final_activation": False,
    "sweep": False,
    "embeddings": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser, *names: str) -> None:
    """Register shared options; defaults stay ``None`` so config values can fill them."""
    spec = {
        "in": dict(dest="inp", metavar="PATH", help="input file"),
        "out": dict(metavar="PATH", help="output file (directory for pipeline)"),
        "api": dict(help="target API as Type.method"),
        "dim": dict(type=int, help="embedding width d"),
        "seed": dict(type=int, help="seed for every random choice"),
        "jobs": dict(type=int, help="worker processes (default: $AFGNN_JOBS or 1)"),
        "provider": dict(choices=("lexical", "external"), help="node feature source"),
        "vectors": dict(metavar="PATH", help="external vectors file (JSON lines)"),
        "birch-threshold": dict(type=float, help="BIRCH radius threshold T"),
        "size-threshold-pct": dict(type=float, help="clusters smaller than this share are flagged"),
        "k": dict(type=int, help="fixed cluster count instead of DB selection"),
        "max-k": dict(type=int, help="largest cluster count tried"),
        "normalize": dict(choices=NORMALIZATIONS, help="row normalisation of graph vectors"),
        "checkpoint": dict(metavar="PATH", help="pre-trained model checkpoint"),
        "truth": dict(metavar="PATH", help="ground truth, JSON lines {id, misuse}"),
    }
    for name in names:
        p.add_argument(f"--{name}", default=None, **spec[name])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="afgnn", description="API misuse detection over API flow graphs.")
    parser.add_argument("--version", action="version", version=f"afgnn {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--config", metavar="PATH", help="JSON file of option defaults")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("afg", help="snippets -> raw AFG corpus")
    _common(p, "in", "out", "api", "jobs", "seed")
    p.add_argument("--no-sequence", action="store_true", default=None, help="omit SE edges")
    p.add_argument("--format", choices=("jsonl", "text"), default=None)
    p.add_argument("--skip-errors", action="store_true", default=None)

    p = sub.add_parser("prune", help="AFG corpus -> pruned corpus")
    _common(p, "in", "out", "api", "jobs", "seed")
    p.add_argument("--edge-mode", choices=EDGE_MODES, default=None)
    p.add_argument("--format", choices=("jsonl", "text"), default=None)
    p.add_argument("--skip-errors", action="store_true", default=None)

    p = sub.add_parser("embed", help="pruned corpus + checkpoint -> embedding matrix")
    _common(p, "in", "out", "checkpoint", "dim", "seed", "provider", "vectors", "normalize", "jobs")

    p = sub.add_parser("pretrain", help="AFG corpus -> checkpoint and history")
    _common(p, "in", "out", "dim", "seed", "provider", "vectors", "jobs")
    p.add_argument("--history", metavar="PATH", default=None, help="history log (default OUT.history.jsonl)")
    p.add_argument("--variant", choices=("GCN", "RGCN"), default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--k1", type=int, default=None)
    p.add_argument("--r1", type=int, default=None)
    p.add_argument("--r2", type=int, default=None)
    p.add_argument("--negatives", type=int, default=None)

    p = sub.add_parser("cluster", help="embedding matrix -> clustering report")
    _common(p, "in", "out", "birch-threshold", "k", "max-k", "seed", "jobs")

    p = sub.add_parser("detect", help="embedding matrix + clustering -> detection report")
    _common(p, "in", "out", "size-threshold-pct", "seed", "jobs")
    p.add_argument("--clustering", metavar="PATH", default=None, required=False)
    p.add_argument("--total", type=int, default=None, help="corpus size for the cutoff (default: clustered points)")

    p = sub.add_parser("eval", help="report + truth -> metrics")
    _common(p, "in", "out", "truth", "seed", "jobs")
    p.add_argument("--sweep", action="store_true", default=None, help="threshold sweep over 5%%..40%%")
    p.add_argument("--embeddings", metavar="PATH", default=None, help="matrix the report was built from (for --sweep)")
    p.add_argument("--clustering", metavar="PATH", default=None, help="clustering report (for --sweep)")

    p = sub.add_parser("pipeline", help="run every stage with one config")
    _common(p, "in", "out", "api", "dim", "seed", "jobs", "provider", "vectors", "birch-threshold",
            "size-threshold-pct", "k", "max-k", "normalize", "checkpoint", "truth")
    p.add_argument("--edge-mode", choices=EDGE_MODES, default=None)
    p.add_argument("--skip-errors", action="store_true", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    return parser


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset options from the config file, then from :data:`DEFAULTS`."""
    config = {}
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(config, dict):
            raise UsageError(f"config {args.config} must hold a JSON object")
        config = {k.replace("-", "_"): v for k, v in config.items()}
        if "in" in config:
            config["inp"] = config.pop("in")
    for key, value in config.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    for key, value in DEFAULTS.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    if args.jobs is None:
        args.jobs = default_jobs()
    return args


def _need(args, *names):
    for name in names:
        if getattr(args, name, None) in (None, ""):
            flag = "--in" if name == "inp" else "--" + name.replace("_", "-")
            raise UsageError(f"{args.command}: {flag} is required")


def _provider(args):
    cfg = EmbeddingConfig(args.dim, args.provider, args.seed)
    return make_provider(cfg, args.vectors)


def _write_graphs(path, graphs, fmt):
    if fmt == "text":
        write_afg_text(path, [g for g, _ in graphs])
    else:
        write_afgs(path, graphs)


# ---------------------------------------------------------------------------
# subcommands


def cmd_afg(args):
    _need(args, "inp", "out")
    records = read_snippets(args.inp)
    graphs = build_stage(records, args.api, jobs=args.jobs, sequence=not args.no_sequence,
                         skip_errors=args.skip_errors)
    _write_graphs(args.out, graphs, args.format)
    log.info("wrote %d AFGs to %s", len(graphs), args.out)


def cmd_prune(args):
    _need(args, "inp", "out")
    graphs = prune_stage(read_afgs(args.inp), args.api, edge_mode=args.edge_mode, jobs=args.jobs,
                         skip_errors=args.skip_errors)
    _write_graphs(args.out, graphs, args.format)
    log.info("wrote %d pruned AFGs to %s", len(graphs), args.out)


def cmd_embed(args):
    _need(args, "inp", "out", "checkpoint")
    params = load_params(args.checkpoint, expect_dim=args.dim)
    ids, matrix = embed_stage([g for g, _ in read_afgs(args.inp)], params, _provider(args),
                              normalize=args.normalize)
    write_matrix(args.out, ids, matrix)


def _train_config(args) -> TrainConfig:
    return TrainConfig(lr=args.lr, batch=args.batch, patience=args.patience, k1=args.k1, r1=args.r1,
                       r2=args.r2, negatives=args.negatives, seed=args.seed, max_epochs=args.epochs,
                       variant=args.variant, dim=args.dim, num_layers=args.layers,
                       final_activation=args.final_activation)


def _pretrain(graphs, args, out: Path, history: Path):
    cfg = _train_config(args)
    provider = _provider(args)
    featured = [attach_features(g, provider) for g in graphs]
    result = train(featured, cfg)
    save_params(result.params, out)
    write_jsonl(history, result.history)
    log.info("best epoch %d, val accuracy %.4f", result.best_epoch,
             result.params.metadata.get("best_val_accuracy", float("nan")))
    return result


def cmd_pretrain(args):
    _need(args, "inp", "out")
    _train_config(args)  # reject bad hyper-parameters before touching the data
    history = Path(args.history or f"{args.out}.history.jsonl")
    _cleanup_on_failure([Path(args.out), history],
                        lambda: _pretrain([g for g, _ in read_afgs(args.inp)], args, Path(args.out), history))


def _cluster_report(ids, result: ClusteringResult) -> dict:
    d = result.to_dict()
    d["ids"] = list(ids)
    return d


def cmd_cluster(args):
    _need(args, "inp", "out")
    ids, matrix = read_matrix(args.inp)
    result = cluster_stage(matrix, args.birch_threshold, k=args.k, max_k=args.max_k)
    write_json(args.out, _cluster_report(ids, result))
    print(f"K={result.k} sizes={result.sizes.tolist()} db_score={result.db_score}")


def _detect_report(ids, matrix, clustering, pct, total, truth: Optional[dict] = None) -> dict:
    report = detect(ids, matrix, clustering, pct, total)
    if truth is not None:
        report.summary = confusion_metrics(report.verdicts(), _aligned(truth, ids))
    return report.to_dict()


def _aligned(truth: dict, ids) -> list[bool]:
    missing = [i for i in ids if i not in truth]
    if missing:
        raise AfgnnError(f"no ground truth for {len(missing)} example(s), e.g. {missing[0]!r}")
    return [truth[i] for i in ids]


def cmd_detect(args):
    _need(args, "inp", "out", "clustering")
    ids, matrix = read_matrix(args.inp)
    clustering = ClusteringResult.from_dict(read_json(args.clustering))
    out = _detect_report(ids, matrix, clustering, args.size_threshold_pct, args.total)
    write_json(args.out, out)
    flagged = sum(r["verdict"] == "potential-misuse" for r in out["rows"])
    print(f"{flagged} of {len(out['rows'])} flagged as potential misuse (cutoff size {out['cutoff']})")


def _eval(report: dict, truth_path: str, sweep_inputs=None) -> tuple[dict, str]:
    truth_recs = read_truth(truth_path)
    metrics: dict = {}
    text = []
    if "rows" in report:
        ids = [r["id"] for r in report["rows"]]
        pred = [r["verdict"] == "potential-misuse" for r in report["rows"]]
        c = confusion_metrics(pred, _aligned(truth_recs, ids))
        metrics["detection"] = c.to_dict()
        text.append(format_sweep([(report["threshold_pct"], c)]))
    elif "labels" in report:
        ids = report.get("ids") or [str(i) for i in range(len(report["labels"]))]
        u = np.asarray(report["labels"])
        v = np.asarray(_aligned(truth_recs, ids))
        metrics["clustering"] = {"rand_index": rand_index(u, v), "adjusted_rand": adjusted_rand(u, v),
                                 "mutual_info": mutual_info(u, v), "adjusted_mutual_info": adjusted_mutual_info(u, v)}
        text.append("".join(f"{k}: {val:.6f}\n" for k, val in metrics["clustering"].items()))
    else:
        raise AfgnnError("input is neither a detection nor a clustering report")
    if sweep_inputs is not None:
        ids, matrix, clustering, total = sweep_inputs
        rows = threshold_sweep(ids, matrix, clustering, _aligned(truth_recs, ids), THRESHOLD_GRID, total)
        metrics["sweep"] = [{"threshold_pct": pct, **c.to_dict()} for pct, c in rows]
        text.append(format_sweep(rows))
    return metrics, "".join(text)


def cmd_eval(args):
    _need(args, "inp", "truth")
    report = read_json(args.inp)
    sweep = None
    if args.sweep:
        _need(args, "embeddings", "clustering")
        ids, matrix = read_matrix(args.embeddings)
        sweep = (ids, matrix, ClusteringResult.from_dict(read_json(args.clustering)), report.get("total"))
    metrics, text = _eval(report, args.truth, sweep)
    if args.out:
        write_json(args.out, metrics)
    sys.stdout.write(text)


PIPELINE_FILES = ("afg.jsonl", "pruned.jsonl", "checkpoint.bin", "checkpoint.bin.history.jsonl",
                  "embeddings.mat", "clustering.json", "detection.json", "truth.jsonl", "metrics.json",
                  "sweep.txt")


def cmd_pipeline(args):
    _need(args, "inp", "out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    targets = [out / name for name in PIPELINE_FILES]
    existing = {p for p in targets if p.exists()}
    _cleanup_on_failure([p for p in targets if p not in existing], lambda: _run_pipeline(args, out))


def _run_pipeline(args, out: Path):
    records = read_snippets(args.inp)
    graphs = build_stage(records, args.api, jobs=args.jobs, skip_errors=args.skip_errors)
    write_afgs(out / "afg.jsonl", graphs)
    pruned = prune_stage(graphs, args.api, edge_mode=args.edge_mode, jobs=args.jobs, skip_errors=args.skip_errors)
    write_afgs(out / "pruned.jsonl", pruned)

    if args.checkpoint:
        params = load_params(args.checkpoint, expect_dim=args.dim)
    else:
        ck = out / "checkpoint.bin"
        params = _pretrain([g for g, _ in graphs], args, ck, Path(f"{ck}.history.jsonl")).params
    ids, matrix = embed_stage([g for g, _ in pruned], params, _provider(args), normalize=args.normalize)
    write_matrix(out / "embeddings.mat", ids, matrix)

    # stages below read back what was written so the run matches the manual sequence
    ids, matrix = read_matrix(out / "embeddings.mat")
    clustering = cluster_stage(matrix, args.birch_threshold, k=args.k, max_k=args.max_k)
    write_json(out / "clustering.json", _cluster_report(ids, clustering))
    clustering = ClusteringResult.from_dict(read_json(out / "clustering.json"))
    report = _detect_report(ids, matrix, clustering, args.size_threshold_pct, None)
    write_json(out / "detection.json", report)

    truth_path = args.truth
    if truth_path is None and all(r.misuse is not None for r in records):
        truth_path = out / "truth.jsonl"
        write_jsonl(truth_path, [{"id": r.snippet.id, "misuse": bool(r.misuse)} for r in records])
    if truth_path is not None:
        metrics, text = _eval(report, truth_path, (ids, matrix, clustering, report["total"]))
        write_json(out / "metrics.json", metrics)
        with atomic_write(out / "sweep.txt") as fh:
            fh.write(text)
        sys.stdout.write(text)
    flagged = sum(r["verdict"] == "potential-misuse" for r in report["rows"])
    print(f"K={clustering.k} sizes={clustering.sizes.tolist()}; {flagged} of {len(ids)} flagged")


def _cleanup_on_failure(paths, fn):
    try:
        return fn()
    except BaseException:
        for p in paths:
            try:
                Path(p).unlink()
            except FileNotFoundError:
                pass
        raise


COMMANDS = {
    "afg": cmd_afg,
    "prune": cmd_prune,
    "embed": cmd_embed,
    "pretrain": cmd_pretrain,
    "cluster": cmd_cluster,
    "detect": cmd_detect,
    "eval": cmd_eval,
    "pipeline": cmd_pipeline,
}


def run(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("afgnn: a subcommand is required (see --help)")
        args = resolve(args)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args)
        return 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (AfgnnError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: invalid parameter: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
