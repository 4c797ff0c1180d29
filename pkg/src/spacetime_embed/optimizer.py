"""Pseudo-Riemannian SGD training of node embeddings."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import kernels
from .graphs import DirectedGraph, sample_negatives
from .likelihood import Likelihood, edge_nll
from .manifolds import Kind, ManifoldSpec, exp_map, random_point, tangent_project, validate_point

__all__ = [
    "TrainConfig",
    "EmbeddingTable",
    "TrainingDivergedError",
    "epoch_lr",
    "build_batches",
    "train",
    "grad_check",
    "save_checkpoint",
    "load_checkpoint",
]

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "# spacetime-embed checkpoint v1"


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.02
    epochs: int = 200
    burnin_epochs: int = 10
    burnin_factor: float = 0.01
    batch_size: int = 2
    neg_ratio: int = 4
    lr_final_fraction: float = 0.25
    seed: int = 0
    init_scale: float = 1e-3
    # "sampled": fresh target-corrupted negatives per epoch; "all": every
    # non-edge is a negative example (small toy graphs)
    negatives: str = "sampled"

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.epochs < 0 or self.burnin_epochs < 0:
            raise ValueError("epoch counts must be non-negative")
        if not 0.0 < self.burnin_factor <= 1.0:
            raise ValueError("burnin_factor must lie in (0, 1]")
        if not 0.0 < self.lr_final_fraction <= 1.0:
            raise ValueError("lr_final_fraction must lie in (0, 1]")
        if self.batch_size < 1 or self.neg_ratio < 1:
            raise ValueError("batch_size and neg_ratio must be >= 1")
        if self.negatives not in ("sampled", "all"):
            raise ValueError("negatives must be 'sampled' or 'all'")


@dataclass
class EmbeddingTable:
    """One manifold point per node; row ``i`` of ``coords`` is node ``i``."""

    spec: ManifoldSpec
    coords: np.ndarray

    def __getitem__(self, node):
        return self.coords[node]

    def __len__(self):
        return len(self.coords)

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.spec, self.coords.copy())

    def is_valid(self, tol: float = 1e-9) -> bool:
        return validate_point(self.spec, self.coords, tol)


@dataclass
class TrainResult:
    table: EmbeddingTable
    losses: list[float] = field(default_factory=list)


def epoch_lr(cfg: TrainConfig, epoch: int) -> float:
    """Learning rate of an epoch: scaled during burn-in, then linear decay."""
    if not 0 <= epoch < cfg.epochs:
        raise IndexError(f"epoch {epoch} outside [0, {cfg.epochs})")
    if epoch < cfg.burnin_epochs:
        return cfg.lr * cfg.burnin_factor
    span = cfg.epochs - 1 - cfg.burnin_epochs
    frac = (epoch - cfg.burnin_epochs) / span if span > 0 else 1.0
    return cfg.lr * (1.0 - frac * (1.0 - cfg.lr_final_fraction))


def build_batches(pos: np.ndarray, neg: np.ndarray, batch_size: int, ratio: int):
    """Interleave positives with their anchored negatives into batches.

    Batch b holds positives ``b*bs .. (b+1)*bs - 1`` followed by their
    negatives.  Each positive and its negatives form one training tuple; the
    batch loss is the mean over tuples, so every example in a batch carries
    weight ``1 / positives_in_batch``.  Returns
    ``(us, vs, labels, batch_ptr, batch_weight)``.
    """
    n_pos = len(pos)
    pos_batch = np.arange(n_pos) // batch_size
    neg_batch = (np.arange(len(neg)) // ratio) // batch_size
    key = np.concatenate([2 * pos_batch, 2 * neg_batch + 1])
    order = np.argsort(key, kind="stable")
    ex = np.concatenate([pos, neg])[order]
    labels = np.concatenate([np.ones(n_pos, np.uint8), np.zeros(len(neg), np.uint8)])[order]
    n_batches = int(pos_batch[-1]) + 1 if n_pos else 0
    ptr = np.searchsorted(key[order] // 2, np.arange(n_batches + 1))
    weight = 1.0 / np.bincount(pos_batch, minlength=n_batches).astype(float)
    return (np.ascontiguousarray(ex[:, 0]), np.ascontiguousarray(ex[:, 1]), labels,
            ptr.astype(np.int64), weight)


def _fixed_batches(examples, labels, batch_size, rng):
    perm = rng.permutation(len(examples))
    ex = examples[perm]
    ptr = np.append(np.arange(0, len(ex), batch_size), len(ex)).astype(np.int64)
    # no tuple structure here: plain mean over the batch
    weight = 1.0 / np.diff(ptr).astype(float)
    return (np.ascontiguousarray(ex[:, 0]), np.ascontiguousarray(ex[:, 1]),
            labels[perm], ptr, weight)


_STATUS = {
    kernels.NONFINITE_LOSS: "non-finite loss",
    kernels.COORD_BLOWUP: "coordinate magnitude above 1e6",
    kernels.REPAIR_FAILED: "point drifted off the manifold",
}


def train(train_edges, num_nodes: int, spec: ManifoldSpec, likelihood: Likelihood,
          cfg: TrainConfig, callback: Callable[[int, EmbeddingTable, float], None] | None = None,
          init: np.ndarray | None = None, backend: str | None = None):
    """Fit embeddings to the training edges; returns ``(table, per-epoch mean NLL)``.

    ``callback(epoch, table, mean_loss)`` runs after every epoch (the table is
    live; copy it to keep a snapshot).
    """
    pos = np.asarray(train_edges, dtype=np.int64).reshape(-1, 2)
    if len(pos) == 0:
        raise ValueError("no training edges")
    impl = kernels.get_impl(backend)
    rng_init, rng_neg = (np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(2))
    if init is None:
        X = random_point(spec, cfg.init_scale, rng_init, size=num_nodes)
    else:
        X = np.array(init, dtype=float, copy=True)
    X = np.ascontiguousarray(X)
    table = EmbeddingTable(spec, X)
    graph = DirectedGraph(num_nodes, pos)
    params = likelihood.as_array()
    m = likelihood.effective_m(spec)

    if cfg.negatives == "all":
        non_edges = graph.non_edges()
        all_ex = np.concatenate([pos, non_edges])
        all_lab = np.concatenate([np.ones(len(pos), np.uint8), np.zeros(len(non_edges), np.uint8)])

    losses = []
    for epoch in range(cfg.epochs):
        lr = epoch_lr(cfg, epoch)
        if cfg.negatives == "all":
            us, vs, labels, ptr, bw = _fixed_batches(all_ex, all_lab, cfg.batch_size, rng_neg)
        else:
            shuffled = pos[rng_neg.permutation(len(pos))]
            neg = sample_negatives(graph, shuffled, cfg.neg_ratio, rng_neg)
            us, vs, labels, ptr, bw = build_batches(shuffled, neg, cfg.batch_size, cfg.neg_ratio)
        total, status, batch = impl.run_epoch(spec.code, spec.circ, likelihood.code, params, m,
                                              X, us, vs, labels, ptr, bw, lr)
        if status != kernels.OK:
            raise TrainingDivergedError(
                f"{_STATUS.get(status, 'failure')} at epoch {epoch}, batch {batch}")
        mean = total / len(us)
        losses.append(mean)
        if callback is not None:
            callback(epoch, table, mean)
    return table, losses


def _directions(spec: ManifoldSpec, x: np.ndarray) -> np.ndarray:
    """Perturbation directions that keep the point on its manifold."""
    eye = np.eye(spec.ambient_dim)
    if spec.is_flat:
        return eye
    return np.array([tangent_project(spec, x, e) for e in eye])


def grad_check(spec: ManifoldSpec, likelihood: Likelihood, p, q, label: int,
               step: float = 1e-5, backend: str | None = None) -> float:
    """Max relative error between kernel differentials and central differences.

    Compares directional derivatives along on-manifold perturbations of p and
    of q.  Components are compared relative to ``max(|a|, |b|)``, floored at
    ``1e-4`` of the largest analytic component so that exact zeros do not
    divide by round-off.
    """
    impl = kernels.get_impl(backend)
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    X = np.stack([p, q])
    one = np.array([0], np.int64)
    two = np.array([1], np.int64)
    lab = np.array([label], np.uint8)
    _, gp, gq = impl.pair_gradients(spec.code, spec.circ, likelihood.code, likelihood.as_array(),
                                    likelihood.effective_m(spec), X, one, two, lab)

    def loss(a, b):
        return float(edge_nll(likelihood.probability(spec, a, b), label))

    analytic = []
    numeric = []
    for which, base, grad in ((0, p, gp[0]), (1, q, gq[0])):
        for d in _directions(spec, base):
            plus = exp_map(spec, base, step * d, project=False)
            minus = exp_map(spec, base, -step * d, project=False)
            if which == 0:
                fd = (loss(plus, q) - loss(minus, q)) / (2 * step)
            else:
                fd = (loss(p, plus) - loss(p, minus)) / (2 * step)
            analytic.append(float(grad @ d))
            numeric.append(fd)
    a = np.array(analytic)
    b = np.array(numeric)
    floor = 1e-4 * max(np.max(np.abs(a)), 1e-12)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def save_checkpoint(table: EmbeddingTable, path) -> None:
    """Versioned header, then one tab-separated line of coordinates per node."""
    spec = table.spec
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CHECKPOINT_MAGIC + "\n")
        fh.write(f"# kind={spec.kind.value}\tspatial_dim={spec.spatial_dim}\t"
                 f"circumference={spec.circumference if spec.circumference is not None else ''}\t"
                 f"nodes={len(table)}\n")
        for row in table.coords:
            fh.write("\t".join(repr(float(x)) for x in row) + "\n")


def load_checkpoint(path) -> EmbeddingTable:
    with open(path, encoding="utf-8") as fh:
        magic = fh.readline().rstrip("\n")
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint (header {magic!r})")
        meta = dict(item.split("=", 1) for item in fh.readline().lstrip("# ").rstrip("\n").split("\t"))
        rows = [[float(x) for x in line.split("\t")] for line in fh if line.strip()]
    circ = float(meta["circumference"]) if meta.get("circumference") else None
    spec = ManifoldSpec(Kind.parse(meta["kind"]), int(meta["spatial_dim"]), circ)
    coords = np.array(rows, dtype=float).reshape(-1, spec.ambient_dim)
    if len(coords) != int(meta["nodes"]):
        raise ValueError(f"{path}: expected {meta['nodes']} nodes, found {len(coords)}")
    return EmbeddingTable(spec, coords)
