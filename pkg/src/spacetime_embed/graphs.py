"""Directed graphs: generators, edge-list files, splits and negative sampling."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DirectedGraph",
    "DupDivParams",
    "SplitDataset",
    "NegativeSamplingError",
    "EdgeListError",
    "generate_duplication_divergence",
    "generate_chain",
    "generate_cycle",
    "generate_transitive_chain",
    "generate_common_neighbors",
    "load_edge_list",
    "save_edge_list",
    "split",
    "sample_negatives",
    "make_dataset",
    "is_dag",
]

log = logging.getLogger(__name__)

MAX_REJECTION_ATTEMPTS = 1000


class EdgeListError(ValueError):
    pass


class NegativeSamplingError(RuntimeError):
    pass


@dataclass
class DirectedGraph:
    """Directed graph without self-loops or repeated edges.

    ``edges`` is an ``(E, 2)`` integer array of ``(source, target)`` rows in
    insertion order.
    """

    num_nodes: int
    edges: np.ndarray
    node_names: list[str] | None = None
    duplicates_dropped: int = 0

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            if e.min() < 0 or e.max() >= self.num_nodes:
                raise ValueError("edge endpoint outside [0, num_nodes)")
            if np.any(e[:, 0] == e[:, 1]):
                raise ValueError("self-loops are not allowed")
            codes = e[:, 0] * self.num_nodes + e[:, 1]
            if np.unique(codes).size != codes.size:
                raise ValueError("duplicate edges")
        self.edges = e
        if self.node_names is not None and len(self.node_names) != self.num_nodes:
            raise ValueError("node_names must name every node")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def edge_codes(self) -> np.ndarray:
        """Sorted ``source * num_nodes + target`` codes for fast membership tests."""
        return np.sort(self.edges[:, 0] * self.num_nodes + self.edges[:, 1])

    def has_edges(self, u, v) -> np.ndarray:
        return _contains(self.edge_codes(), np.asarray(u) * self.num_nodes + np.asarray(v))

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(a), int(b)) for a, b in self.edges}

    def name(self, i: int) -> str:
        return self.node_names[i] if self.node_names is not None else str(i)

    def non_edges(self) -> np.ndarray:
        """Every ordered pair (u, v), u != v, that is not an edge."""
        n = self.num_nodes
        u, v = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        mask = u != v
        mask[self.edges[:, 0], self.edges[:, 1]] = False
        return np.stack([u[mask], v[mask]], axis=1)


def _contains(sorted_codes: np.ndarray, codes: np.ndarray) -> np.ndarray:
    if sorted_codes.size == 0:
        return np.zeros(np.shape(codes), dtype=bool)
    idx = np.clip(np.searchsorted(sorted_codes, codes), 0, sorted_codes.size - 1)
    return sorted_codes[idx] == codes


@dataclass(frozen=True)
class DupDivParams:
    n_i: int = 3
    n_f: int = 100
    p1: float = 0.7
    p2: float = 0.7
    seed: int = 0
    dag_seed: bool = False

    def __post_init__(self):
        if not 2 <= self.n_i <= self.n_f:
            raise ValueError("need 2 <= n_i <= n_f")
        if not (0.0 <= self.p1 <= 1.0 and 0.0 <= self.p2 <= 1.0):
            raise ValueError("p1 and p2 must be probabilities")


def generate_duplication_divergence(params: DupDivParams) -> DirectedGraph:
    """Grow a graph by repeated node duplication with partial edge inheritance.

    The seed is the complete digraph on ``n_i`` nodes, or the transitive
    tournament ``i -> j (i < j)`` when ``dag_seed`` is set.  Each step copies a
    uniformly chosen node: every in- and out-edge of the original is inherited
    with probability ``p1`` and the edge duplicate -> original is added with
    probability ``p2``.
    """
    rng = np.random.default_rng(params.seed)
    out = [set() for _ in range(params.n_f)]
    inn = [set() for _ in range(params.n_f)]
    edges: list[tuple[int, int]] = []

    def add(a, b):
        out[a].add(b)
        inn[b].add(a)
        edges.append((a, b))

    for a in range(params.n_i):
        for b in range(params.n_i):
            if a != b and (not params.dag_seed or a < b):
                add(a, b)
    for new in range(params.n_i, params.n_f):
        orig = int(rng.integers(new))
        for w in sorted(inn[orig]):
            if rng.random() < params.p1:
                add(w, new)
        for w in sorted(out[orig]):
            if rng.random() < params.p1:
                add(new, w)
        if rng.random() < params.p2:
            add(new, orig)
    return DirectedGraph(params.n_f, np.array(edges, dtype=np.int64).reshape(-1, 2))


def _need(n, lo=2):
    if n < lo:
        raise ValueError(f"need at least {lo} nodes, got {n}")


def generate_chain(n: int) -> DirectedGraph:
    _need(n)
    return DirectedGraph(n, np.stack([np.arange(n - 1), np.arange(1, n)], axis=1))


def generate_cycle(n: int) -> DirectedGraph:
    _need(n)
    return DirectedGraph(n, np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1))


def generate_transitive_chain(n: int) -> DirectedGraph:
    _need(n)
    i, j = np.triu_indices(n, k=1)
    return DirectedGraph(n, np.stack([i, j], axis=1))


def generate_common_neighbors(n_pred: int, n_succ: int) -> DirectedGraph:
    """Unconnected focal pair (nodes 0 and 1) with shared predecessors and successors.

    Predecessors are nodes ``2 .. 2+n_pred-1``, successors follow them.
    """
    if n_pred < 1 or n_succ < 1:
        raise ValueError("need at least one predecessor and one successor")
    edges = []
    preds = range(2, 2 + n_pred)
    succs = range(2 + n_pred, 2 + n_pred + n_succ)
    for w in preds:
        edges += [(w, 0), (w, 1)]
    for w in succs:
        edges += [(0, w), (1, w)]
    return DirectedGraph(2 + n_pred + n_succ, np.array(edges))


def load_edge_list(path) -> DirectedGraph:
    """Read ``source<TAB>target`` lines; ``#`` comments and blank lines are skipped.

    Node ids are assigned in order of first appearance.  Repeated edges are
    dropped and counted in ``duplicates_dropped``.
    """
    ids: dict[str, int] = {}
    seen: set[tuple[int, int]] = set()
    edges = []
    dups = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise EdgeListError(f"{path}:{lineno}: expected 'source<TAB>target', got {line!r}")
            a, b = parts
            if a == b:
                raise EdgeListError(f"{path}:{lineno}: self-loop on {a!r}")
            ia = ids.setdefault(a, len(ids))
            ib = ids.setdefault(b, len(ids))
            if (ia, ib) in seen:
                dups += 1
                continue
            seen.add((ia, ib))
            edges.append((ia, ib))
    if not edges:
        raise EdgeListError(f"{path}: no edges")
    if dups:
        log.warning("%s: dropped %d duplicate edges", path, dups)
    return DirectedGraph(len(ids), np.array(edges, dtype=np.int64), list(ids), dups)


def save_edge_list(graph: DirectedGraph, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for a, b in graph.edges:
            fh.write(f"{graph.name(a)}\t{graph.name(b)}\n")


@dataclass
class SplitDataset:
    """Train/validation/test partition of a graph's edges with fixed negatives."""

    num_nodes: int
    train_pos: np.ndarray
    valid_pos: np.ndarray
    test_pos: np.ndarray
    test_neg: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    valid_neg: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    split_seed: int = 0
    neg_ratio: int = 4

    def train_graph(self) -> DirectedGraph:
        return DirectedGraph(self.num_nodes, self.train_pos)


def split(graph: DirectedGraph, train_frac: float, valid_frac: float = 0.0, seed: int = 0):
    """Uniform random partition of the edges into train/valid/test arrays."""
    if not 0.0 < train_frac < 1.0 or not 0.0 <= valid_frac < 1.0 or train_frac + valid_frac > 1.0:
        raise ValueError("fractions must satisfy 0 < train < 1, 0 <= valid, train + valid <= 1")
    E = graph.num_edges
    n_train = int(round(train_frac * E))
    n_valid = int(round(valid_frac * E))
    n_test = E - n_train - n_valid
    if n_train < 1 or n_test < 1 or (valid_frac > 0 and n_valid < 1):
        raise ValueError(f"split of {E} edges gives empty part (train={n_train}, valid={n_valid}, test={n_test})")
    perm = np.random.default_rng(seed).permutation(E)
    e = graph.edges[perm]
    return e[:n_train], e[n_train:n_train + n_valid], e[n_train + n_valid:]


def sample_negatives(graph: DirectedGraph, anchor_edges, ratio: int, rng) -> np.ndarray:
    """Corrupt the target of each anchor edge ``ratio`` times.

    Rejects self-loops, edges of ``graph`` and repeats among the draws of the
    same anchor.  Output rows are grouped by anchor in input order.
    """
    if ratio < 1:
        raise ValueError("ratio must be >= 1")
    rng = np.random.default_rng(rng)
    anchors = np.asarray(anchor_edges, dtype=np.int64).reshape(-1, 2)
    n = graph.num_nodes
    codes = graph.edge_codes()
    u = np.repeat(anchors[:, 0], ratio).reshape(-1, ratio)
    v = rng.integers(0, n, size=u.shape)

    def invalid(u, v):
        bad = (u == v) | _contains(codes, u * n + v)
        # repeats within a row: every occurrence after the first is bad
        order = np.argsort(v, axis=1, kind="stable")
        sv = np.take_along_axis(v, order, axis=1)
        rep = np.zeros_like(bad)
        rep[:, 1:] = sv[:, 1:] == sv[:, :-1]
        dup = np.zeros_like(bad)
        np.put_along_axis(dup, order, rep, axis=1)
        return bad | dup

    bad = invalid(u, v)
    attempts = 0
    while bad.any():
        attempts += 1
        if attempts > MAX_REJECTION_ATTEMPTS:
            row = int(np.argwhere(bad)[0, 0])
            raise NegativeSamplingError(
                f"no valid negative for anchor ({anchors[row, 0]}, {anchors[row, 1]}) after "
                f"{MAX_REJECTION_ATTEMPTS} attempts; graph too dense")
        v[bad] = rng.integers(0, n, size=int(bad.sum()))
        bad = invalid(u, v)
    return np.stack([u.ravel(), v.ravel()], axis=1)


def make_dataset(graph: DirectedGraph, train_frac: float = 0.85, valid_frac: float = 0.0,
                 neg_ratio: int = 4, seed: int = 0) -> SplitDataset:
    """Split the edges and draw the fixed test (and validation) negatives."""
    train, valid, test = split(graph, train_frac, valid_frac, seed)
    ss = np.random.SeedSequence(seed)
    rng_test, rng_valid = (np.random.default_rng(s) for s in ss.spawn(2))
    test_neg = sample_negatives(graph, test, neg_ratio, rng_test)
    valid_neg = (sample_negatives(graph, valid, neg_ratio, rng_valid) if len(valid)
                 else np.zeros((0, 2), dtype=np.int64))
    return SplitDataset(graph.num_nodes, train, valid, test, test_neg, valid_neg, seed, neg_ratio)


def is_dag(graph: DirectedGraph) -> bool:
    """Kahn's algorithm: True iff every node can be removed in topological order."""
    n = graph.num_nodes
    indeg = np.bincount(graph.edges[:, 1], minlength=n) if graph.num_edges else np.zeros(n, int)
    order = np.argsort(graph.edges[:, 0], kind="stable")
    src = graph.edges[order, 0]
    dst = graph.edges[order, 1]
    starts = np.searchsorted(src, np.arange(n + 1))
    stack = [i for i in range(n) if indeg[i] == 0]
    removed = 0
    while stack:
        a = stack.pop()
        removed += 1
        for b in dst[starts[a]:starts[a + 1]]:
            indeg[b] -= 1
            if indeg[b] == 0:
                stack.append(int(b))
    return removed == n
