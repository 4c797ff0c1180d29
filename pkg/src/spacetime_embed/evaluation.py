"""Link-prediction metrics, probability heatmaps and the disk-embedding check."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graphs import SplitDataset
from .likelihood import Likelihood, TfdParams, edge_nll, tfd
from .manifolds import Kind, ManifoldSpec

__all__ = [
    "Metrics",
    "average_precision",
    "best_f1_threshold",
    "f1_at",
    "score_edges",
    "evaluate",
    "heatmap",
    "write_heatmap_csv",
    "disk_boundary_check",
    "disk_containment_check",
]


@dataclass
class Metrics:
    average_precision: float
    f1: float
    f1_threshold: float
    test_nll: float
    threshold_source: str
    per_edge: list = field(default_factory=list)

    def to_dict(self, include_edges: bool = True) -> dict:
        out = {
            "average_precision": self.average_precision,
            "f1": self.f1,
            "f1_threshold": _json_float(self.f1_threshold),
            "test_nll": self.test_nll,
            "threshold_source": self.threshold_source,
        }
        if include_edges:
            out["per_edge"] = [
                {"source": int(u), "target": int(v), "label": int(y), "probability": float(p)}
                for u, v, y, p in self.per_edge
            ]
        return out


def _json_float(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def _as_arrays(scored):
    scored = list(scored)
    if not scored:
        return np.zeros(0), np.zeros(0, dtype=bool)
    s, y = zip(*scored)
    return np.asarray(s, dtype=float), np.asarray(y).astype(bool)


def average_precision(scored) -> float:
    """Step-interpolated area under the precision-recall curve.

    ``scored`` is an iterable of ``(score, label)``; ties keep input order.
    """
    scores, labels = _as_arrays(scored)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    precision = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float(np.sum(precision[hits]) / n_pos)


def f1_at(scores, labels, threshold: float) -> float:
    pred = np.asarray(scores) > threshold
    labels = np.asarray(labels).astype(bool)
    tp = int(np.sum(pred & labels))
    if tp == 0:
        return 0.0
    return 2.0 * tp / (int(pred.sum()) + int(labels.sum()))


def best_f1_threshold(valid_scored):
    """Line search over gap midpoints (plus +-inf) for the F1-maximising threshold.

    Scores strictly above the threshold are predicted positive.  Ties in F1
    go to the lowest threshold.
    """
    scores, labels = _as_arrays(valid_scored)
    if labels.all() or not labels.any():
        raise ValueError("threshold search needs both classes")
    distinct = np.unique(scores)
    candidates = np.concatenate([[-np.inf], (distinct[1:] + distinct[:-1]) / 2.0, [np.inf]])
    # candidates never coincide with a score, so the top-n_pred of the
    # descending order are exactly the predicted positives
    order = np.argsort(-scores, kind="stable")
    tp_cum = np.concatenate([[0], np.cumsum(labels[order])])
    n_pred = len(scores) - np.searchsorted(np.sort(scores), candidates, side="right")
    tp = tp_cum[n_pred]
    f1 = np.where(tp > 0, 2.0 * tp / np.maximum(n_pred + labels.sum(), 1), 0.0)
    best = int(np.argmax(f1))  # first maximum = lowest threshold
    return float(candidates[best]), float(f1[best])


def score_edges(table, likelihood: Likelihood, edges) -> np.ndarray:
    """Edge probabilities for ``(u, v)`` rows of ``edges``."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= len(table.coords)):
        raise IndexError("edge endpoint outside the embedding table")
    X = table.coords
    return likelihood.probability(table.spec, X[edges[:, 0]], X[edges[:, 1]])


def evaluate(table, likelihood: Likelihood, dataset: SplitDataset) -> Metrics:
    """AP, NLL and F1 of the held-out test pool.

    The F1 threshold comes from the validation pool when there is one, and
    from the test pool otherwise (``threshold_source = "in-sample-threshold"``).
    """
    edges = np.concatenate([dataset.test_pos, dataset.test_neg])
    labels = np.concatenate([np.ones(len(dataset.test_pos), int), np.zeros(len(dataset.test_neg), int)])
    probs = score_edges(table, likelihood, edges)
    ap = average_precision(zip(probs, labels))
    nll = float(np.mean(edge_nll(probs, labels)))
    if len(dataset.valid_pos) and len(dataset.valid_neg):
        v_edges = np.concatenate([dataset.valid_pos, dataset.valid_neg])
        v_labels = np.concatenate([np.ones(len(dataset.valid_pos), int),
                                   np.zeros(len(dataset.valid_neg), int)])
        threshold, _ = best_f1_threshold(zip(score_edges(table, likelihood, v_edges), v_labels))
        f1 = f1_at(probs, labels, threshold)
        source = "validation"
    else:
        threshold, f1 = best_f1_threshold(zip(probs, labels))
        source = "in-sample-threshold"
    per_edge = [(int(u), int(v), int(y), float(p)) for (u, v), y, p in zip(edges, labels, probs)]
    return Metrics(ap, f1, threshold, nll, source, per_edge)


def heatmap(likelihood: Likelihood, spec: ManifoldSpec, bounds=((-1.0, 1.0), (-1.0, 1.0)),
            resolution: int = 101):
    """Probability of an edge from the origin to every q on a 2-D grid.

    Returns ``(x0, x1, probs)`` with ``probs[i, j]`` at ``(x0[i], x1[j])``;
    ``x0`` is the time coordinate.
    """
    if spec.ambient_dim != 2 or spec.kind not in (Kind.MINKOWSKI, Kind.EUCLIDEAN,
                                                  Kind.CYLINDRICAL_MINKOWSKI,
                                                  Kind.CYLINDRICAL_EUCLIDEAN):
        raise ValueError("heatmaps need a flat 2-coordinate manifold")
    (t_lo, t_hi), (x_lo, x_hi) = bounds
    x0 = np.linspace(t_lo, t_hi, resolution)
    x1 = np.linspace(x_lo, x_hi, resolution)
    T, S = np.meshgrid(x0, x1, indexing="ij")
    q = np.stack([T, S], axis=-1)
    p = np.zeros(2)
    if spec.is_cylindrical:
        q = q.copy()
        q[..., 0] = np.mod(q[..., 0], spec.circumference)
    return x0, x1, likelihood.probability(spec, p, q)


def write_heatmap_csv(path, x0, x1, probs) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x0", "x1", "prob"])
        for i, a in enumerate(x0):
            for j, b in enumerate(x1):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(probs[i, j]))])


def _disk_samples(tau1, tau2, num_samples, seed):
    rng = np.random.default_rng(seed)
    D = rng.uniform(0.0, 5.0, num_samples)
    T = rng.uniform(-5.0, 5.0, num_samples)
    params = TfdParams(tau1, tau2, alpha=0.0, r=0.0, k=1.0, wrap_m=0)
    F = tfd(params, D * D - T * T, T)
    return D, T, F


def disk_boundary_check(tau1: float, tau2: float, num_samples: int = 10_000, seed: int = 0) -> int:
    """Count samples where ``F >= 1/2`` disagrees with the closed-form disk bound.

    Uses ``alpha = 0, r = 0, k = 1`` on flat Minkowski; pairs within 1e-9 of
    ``F = 1/2`` are skipped.
    """
    D, T, F = _disk_samples(tau1, tau2, num_samples, seed)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        e = np.exp(-T / tau2)
        ratio = (3.0 - e) / (1.0 + e)
        inside = tau1 * np.log(ratio) + T * T
        bound = np.where(ratio > 0, inside, -np.inf)
    predicted = (bound >= 0) & (D * D <= bound)
    keep = np.abs(F - 0.5) > 1e-9
    return int(np.sum((F[keep] >= 0.5) != predicted[keep]))


def disk_containment_check(tau1: float, tau2: float, num_samples: int = 10_000, seed: int = 0) -> int:
    """Count pairs inside the disk-inclusion cone ``0 <= D <= T`` with ``F < 1/2``."""
    D, T, F = _disk_samples(tau1, tau2, num_samples, seed)
    cone = (T >= 0) & (D <= T)
    return int(np.sum(cone & (F < 0.5 - 1e-12)))
