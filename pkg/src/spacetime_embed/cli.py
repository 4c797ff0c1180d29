"""``spacetime-embed`` command line: generate | train | eval | sweep | toy | heatmap."""
from __future__ import annotations

import argparse
import csv
import functools
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .config import ConfigError, ExperimentConfig
from .evaluation import evaluate, heatmap, write_heatmap_csv
from .graphs import EdgeListError, NegativeSamplingError, is_dag, make_dataset, save_edge_list
from .manifolds import Kind, ManifoldSpec, ProjectionError
from .optimizer import TrainingDivergedError, load_checkpoint, save_checkpoint, train

log = logging.getLogger("spacetime_embed")

TOY_TRIALS = {"cycle5": 20, "chain10": 10, "transitive10": 10, "tripartite": 10}


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config, args.set)
    if args.seed is not None:
        cfg.set_seed(args.seed)
    if args.out is not None:
        cfg.sections["output"]["dir"] = str(args.out)
    return cfg


def _dataset(cfg: ExperimentConfig):
    d = cfg.sections["data"]
    graph = cfg.graph()
    return graph, make_dataset(graph, float(d["train_frac"]), float(d["valid_frac"]),
                               cfg.train_config().neg_ratio, int(d["split_seed"]))


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    graph = cfg.graph()
    path = cfg.output_dir / "graph.tsv"
    save_edge_list(graph, path)
    print(f"nodes={graph.num_nodes} edges={graph.num_edges} dag={str(is_dag(graph)).lower()} -> {path}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = cfg.output_dir
    _, dataset = _dataset(cfg)
    spec = cfg.spec()
    lik = cfg.likelihood()
    tcfg = cfg.train_config()
    log.info("training %s, %d nodes, %d training edges", spec.kind.value, dataset.num_nodes,
             len(dataset.train_pos))
    # per-epoch test AP lets best-epoch numbers be reported alongside the final one
    epoch_ap = []
    test_edges = np.concatenate([dataset.test_pos, dataset.test_neg])
    labels = np.r_[np.ones(len(dataset.test_pos)), np.zeros(len(dataset.test_neg))]

    def track(epoch, table, mean):
        from .evaluation import average_precision, score_edges

        epoch_ap.append(average_precision(zip(score_edges(table, lik, test_edges), labels)))
        if epoch % 50 == 0 or epoch == tcfg.epochs - 1:
            log.info("epoch %d loss %.6f test AP %.4f", epoch, mean, epoch_ap[-1])

    table, losses = train(dataset.train_pos, dataset.num_nodes, spec, lik, tcfg, callback=track)
    save_checkpoint(table, out / "checkpoint.tsv")
    with open(out / "loss.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "test_ap"])
        for i, (loss, ap) in enumerate(zip(losses, epoch_ap)):
            w.writerow([i, repr(float(loss)), repr(float(ap))])
    metrics = evaluate(table, lik, dataset)
    doc = metrics.to_dict()
    doc.update(reported_epoch="final", best_epoch_ap=max(epoch_ap) if epoch_ap else None,
               k=lik.k, manifold=spec.kind.value, ambient_dim=spec.ambient_dim)
    _write_json(out / "metrics.json", doc)
    cfg.write(out / "config.ini")
    print(f"AP={metrics.average_precision:.4f} F1={metrics.f1:.4f} test_nll={metrics.test_nll:.4f} -> {out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    table = load_checkpoint(args.checkpoint)
    spec = cfg.spec()
    if table.spec != spec:
        raise ConfigError(f"checkpoint manifold {table.spec} does not match config {spec}")
    _, dataset = _dataset(cfg)
    if len(table) < dataset.num_nodes:
        raise ConfigError("checkpoint has fewer nodes than the graph")
    metrics = evaluate(table, cfg.likelihood(), dataset)
    _write_json(cfg.output_dir / "metrics.json", metrics.to_dict())
    print(f"AP={metrics.average_precision:.4f} F1={metrics.f1:.4f} test_nll={metrics.test_nll:.4f}")
    return 0


def _sweep_trial(sections: dict, point: dict, seed: int) -> float:
    """One sweep run; module-level so worker processes can unpickle it."""
    cfg = ExperimentConfig(sections).with_values(point)
    cfg.set_seed(seed)
    cfg.validate()
    _, dataset = _dataset(cfg)
    lik = cfg.likelihood()
    try:
        table, _ = train(dataset.train_pos, dataset.num_nodes, cfg.spec(), lik, cfg.train_config())
    except TrainingDivergedError:
        return float("nan")
    metrics = evaluate(table, lik, dataset)
    return metrics.f1 if cfg.sections["sweep"]["metric"] == "f1" else metrics.average_precision


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    axes = cfg.sweep_axes()
    sw = cfg.sections["sweep"]
    trials = int(sw["trials"])
    workers = int(sw["workers"]) or None
    fn = functools.partial(_sweep_trial, cfg.sections)
    rows = ex.sweep(axes, trials, fn, workers=workers)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    keys = list(axes)
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", *keys, f"median_{sw['metric']}", "scores"])
        for rank, (point, med, scores) in enumerate(rows, 1):
            w.writerow([rank, *(point[k] for k in keys), repr(med), " ".join(repr(float(s)) for s in scores)])
    cfg.write(out / "config.ini")
    for rank, (point, med, _) in enumerate(rows, 1):
        desc = ", ".join(f"{k}={v}" for k, v in point.items()) or "(single point)"
        print(f"{rank:3d}  median {sw['metric']}={med:.4f}  {desc}")
    return 0


def _toy_summary(results) -> dict:
    best = ex.best_seed(results)
    nlls = [r.nll for r in results]
    return {"best_seed": best.seed, "best_nll": best.nll if np.isfinite(best.nll) else "inf",
            "median_nll": float(np.median(nlls)), "diverged": sum(r.diverged for r in results),
            "best": best.to_dict()}


def cmd_toy(args) -> int:
    name = args.name
    seeds = range(args.trials if args.trials else TOY_TRIALS[name])
    report = {"toy": name, "seeds": len(seeds)}
    if name == "cycle5":
        res = ex.run_cycle_toy(seeds)
        report["manifolds"] = {m: _toy_summary(rs) for m, rs in res.items()}
        for m, s in report["manifolds"].items():
            print(f"{m:24s} best NLL {s['best_nll']:.3f} (seed {s['best_seed']}), median {s['median_nll']:.3f}")
    elif name == "tripartite":
        res = ex.run_tripartite_toy(seeds)
        report["manifolds"] = {}
        for m, (focal, rs) in res.items():
            report["manifolds"][m] = {"focal_probability": focal,
                                      "median_focal_probability": float(np.median(focal)),
                                      **_toy_summary(rs)}
            print(f"{m:24s} focal-pair probability median {np.median(focal):.3f}")
    else:
        graph = {"chain10": "chain", "transitive10": "transitive_chain"}[name]
        res = ex.run_alpha_toy(graph, seeds)
        report["alphas"] = {repr(a): _toy_summary(rs) for a, rs in res.items()}
        for a, s in report["alphas"].items():
            print(f"{graph} alpha={a:<6s} median NLL {s['median_nll']:.3f}, best {s['best_nll']:.3f}")
    path = Path(args.out or "runs/toys") / f"{name}.json"
    _write_json(path, report)
    print(f"-> {path}")
    return 0


def cmd_heatmap(args) -> int:
    cfg = _load_config(args)
    kind = Kind.parse(cfg.sections["manifold"]["kind"])
    if kind not in (Kind.MINKOWSKI, Kind.EUCLIDEAN):
        raise ConfigError("heatmaps are drawn on 2-D Minkowski or Euclidean space")
    spec = ManifoldSpec.from_embedding_dim(kind, 2)
    lik = cfg.likelihood_unscaled()
    t0, t1, x0, x1 = args.bounds
    xs, ys, probs = heatmap(lik, spec, ((t0, t1), (x0, x1)), args.resolution)
    path = Path(args.out or ".") / args.file
    write_heatmap_csv(path, xs, ys, probs)
    print(f"{args.resolution}x{args.resolution} grid -> {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI experiment config")
    common.add_argument("--seed", type=int, help="training seed (overrides [train] seed)")
    common.add_argument("--out", type=Path, help="output directory (overrides [output] dir)")
    common.add_argument("--quiet", action="store_true", help="only print results and errors")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config value; repeatable")

    parser = argparse.ArgumentParser(prog="spacetime-embed", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write a synthetic graph as an edge list")
    sub.add_parser("train", parents=[common], help="split, train, evaluate, write artefacts")
    p = sub.add_parser("eval", parents=[common], help="evaluate a saved checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    sub.add_parser("sweep", parents=[common], help="grid search over comma-separated config values")
    p = sub.add_parser("toy", parents=[common], help="run a canned toy experiment")
    p.add_argument("name", choices=ex.TOYS)
    p.add_argument("--trials", type=int, help="number of seeds")
    p = sub.add_parser("heatmap", parents=[common], help="edge probability from the origin on a grid")
    p.add_argument("--bounds", type=float, nargs=4, default=[-1.0, 1.0, -1.0, 1.0],
                   metavar=("T0", "T1", "X0", "X1"))
    p.add_argument("--resolution", type=int, default=101)
    p.add_argument("--file", default="heatmap.csv", help="CSV name inside --out")
    return parser


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep,
            "toy": cmd_toy, "heatmap": cmd_heatmap}

_EXPECTED = (ConfigError, EdgeListError, NegativeSamplingError, TrainingDivergedError, ProjectionError,
             ValueError, OSError, IndexError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except _EXPECTED as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
