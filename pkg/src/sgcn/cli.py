"""Command-line entry point: ``sgcn {train,cluster,paths,gradcheck}``.

Exit codes: 0 success, 1 config or data error, 2 training diverged,
3 gradient check above tolerance.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .evaluation import ari, kmeans, nmi
from .graphstore import GraphFormatError, SplitError
from .synthetic import toy_graph
from .training import DivergenceError, grad_check, predict, train

log = logging.getLogger("sgcn")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_GRADCHECK = 0, 1, 2, 3
GRADCHECK_TOLERANCE = 1e-3
GRADCHECK_DEFAULTS = {"K": "2", "d_out": "8", "L": "2", "T": "2", "lambda": "1", "dropout": "0"}


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_kv(path: Path, items: dict) -> None:
    path.write_text("".join(f"{k}={_fmt(v)}\n" for k, v in items.items()), encoding="utf-8")


def read_kv(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out


def write_embeddings(path: Path, logits: np.ndarray) -> None:
    np.savetxt(path, logits, fmt="%.17g", delimiter="\t")


def cluster_scores(embeddings: np.ndarray, labels: np.ndarray, num_clusters: int, seed: int,
                   restarts: int = 20, average: str = "arithmetic") -> tuple[float, float]:
    result = kmeans(embeddings, num_clusters, seed=seed, restarts=restarts)
    return nmi(result.assignments, labels, average), ari(result.assignments, labels)


def run_training(cfg: RunConfig, out: Path, graph=None, **changes):
    """Train per ``cfg`` and write report.txt, summary.kv and embeddings.tsv into ``out``."""
    start = time.perf_counter()
    graph = graph or cfg.load_graph()
    routing, tconf = cfg.routing(), cfg.training(**changes)
    if graph.multilabel != (tconf.task == "multi-label"):
        raise ConfigError(f"task={tconf.task} does not match {'multi' if graph.multilabel else 'single'}-label data")
    params, report = train(graph, routing, tconf)
    out.mkdir(parents=True, exist_ok=True)

    summary = {"dataset": graph.name, "seed": tconf.seed, "K": routing.K, "L": routing.L, "T": routing.T,
               "C": tconf.C, "lambda": tconf.lam, "best_epoch": report.best_epoch,
               "val_metric": report.best_val_metric, **report.test_metrics}
    if not graph.multilabel:
        summary["nmi"], summary["ari"] = cluster_scores(report.logits, graph.labels, graph.num_classes,
                                                        tconf.seed, cfg["cluster_restarts"], cfg["nmi_average"])
    summary["wall_seconds"] = time.perf_counter() - start

    lines = [f"{k}={_fmt(v)}" for k, v in sorted(cfg.values.items())]
    if graph.report is not None:
        lines += graph.report.to_text().splitlines()
    lines += report.lines()
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_kv(out / "summary.kv", summary)
    write_embeddings(out / "embeddings.tsv", report.logits)
    return graph, params, report, summary


def cmd_train(cfg: RunConfig, out: Path) -> int:
    _, _, _, summary = run_training(cfg, out)
    for k, v in summary.items():
        print(f"{k}={_fmt(v)}")
    return EXIT_OK


def cmd_cluster(cfg: RunConfig, out: Path, embeddings_path, labels_path=None) -> int:
    path = Path(embeddings_path)
    if not path.is_file():
        raise ConfigError(f"embeddings file not found: {path}")
    embeddings = np.loadtxt(path, delimiter="\t", ndmin=2)
    if labels_path is not None:
        labels = np.loadtxt(labels_path, dtype=np.int64, ndmin=1)
        num_clusters = cfg["num_classes"] or len(np.unique(labels))
    else:
        graph = cfg.load_graph()
        labels, num_clusters = graph.labels, graph.num_classes
    if len(labels) != len(embeddings):
        raise ConfigError(f"{len(embeddings)} embeddings but {len(labels)} labels")
    score_nmi, score_ari = cluster_scores(embeddings, labels, num_clusters, cfg["seed"],
                                          cfg["cluster_restarts"], cfg["nmi_average"])
    out.mkdir(parents=True, exist_ok=True)
    result = {"clusters": num_clusters, "nmi": score_nmi, "ari": score_ari}
    write_kv(out / "cluster.kv", result)
    for k, v in result.items():
        print(f"{k}={_fmt(v)}")
    return EXIT_OK


def cmd_paths(cfg: RunConfig, out: Path) -> int:
    """Path-type histogram of a trained model plus a neighbor-cap accuracy sweep."""
    graph, params, _, _ = run_training(cfg, out)
    result = predict(graph, params, cfg.routing(), cfg.training())
    hist_lines = []
    if result.paths is not None:
        hist = result.paths.entries().type_histogram()
        hist_lines = [f"{k1},{k2},{hist[k1, k2]}" for k1 in range(hist.shape[0]) for k2 in range(hist.shape[1])]
    (out / "paths.txt").write_text("".join(line + "\n" for line in hist_lines), encoding="utf-8")
    for line in hist_lines:
        print(line)

    metric_key = "test_micro_f1" if graph.multilabel else "test_acc"
    rows = ["C\tmean_" + metric_key + "\tstd\truns"]
    for cap in cfg["sweep_C"]:
        scores = []
        for seed in cfg["sweep_seeds"]:
            _, _, report, _ = run_training(cfg, out / f"sweep_C{cap}_seed{seed}", graph=graph, C=cap, seed=seed)
            scores.append(report.test_metrics[metric_key])
        rows.append(f"{cap}\t{_fmt(float(np.mean(scores)))}\t{_fmt(float(np.std(scores)))}\t{len(scores)}")
    (out / "sweep.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    for row in rows:
        print(row)
    return EXIT_OK


def cmd_gradcheck(cfg: RunConfig, out: Path | None = None, samples: int = 10) -> int:
    graph = toy_graph(cfg["seed"])
    errors = grad_check(graph, cfg.routing(), cfg.training(), samples=samples, seed=cfg["seed"])
    worst = max(errors.values())
    lines = [f"{name}={_fmt(err)}" for name, err in errors.items()] + [f"max={_fmt(worst)}"]
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "gradcheck.kv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    if worst > GRADCHECK_TOLERANCE:
        print(f"gradient check failed: max relative error {worst:.3g} > {GRADCHECK_TOLERANCE}", file=sys.stderr)
        return EXIT_GRADCHECK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgcn", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--out", help="output directory (overrides config key 'out')")
        p.add_argument("--seed", type=int, help="random seed (overrides config key 'seed')")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    common(sub.add_parser("train", help="train a model and write report.txt, summary.kv, embeddings.tsv"))
    p = common(sub.add_parser("cluster", help="K-Means NMI/ARI on stored embeddings"))
    p.add_argument("--embeddings", required=True)
    p.add_argument("--labels", help="one class id per line; default: labels of the configured dataset")
    common(sub.add_parser("paths", help="path-type histogram and neighbor-cap sweep"))
    p = common(sub.add_parser("gradcheck", help="finite-difference gradient check on a toy graph"))
    p.add_argument("--samples", type=int, default=10)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        if args.out is not None:
            overrides.append(f"out={args.out}")
        defaults = GRADCHECK_DEFAULTS if args.command == "gradcheck" else None
        cfg = RunConfig.load(args.config, overrides, defaults)
        out = Path(cfg["out"])
        if args.command == "train":
            return cmd_train(cfg, out)
        if args.command == "cluster":
            return cmd_cluster(cfg, out, args.embeddings, args.labels)
        if args.command == "paths":
            return cmd_paths(cfg, out)
        return cmd_gradcheck(cfg, out if args.out else None, args.samples)
    except (ConfigError, GraphFormatError, SplitError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
