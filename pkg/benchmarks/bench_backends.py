"""Time one training epoch with the numba and NumPy kernels.

    python3 benchmarks/bench_backends.py [--epochs 5] [--dim 10]

Both backends run the same batches from the same starting table; the script
also reports the largest coordinate difference after the timed epochs.
"""
import argparse
import time

import numpy as np

from spacetime_embed import kernels
from spacetime_embed.experiments import DUPDIV_PRESETS, dupdiv_dataset
from spacetime_embed.graphs import sample_negatives
from spacetime_embed.manifolds import random_point
from spacetime_embed.optimizer import build_batches


def bench(name, preset, dataset, dim, epochs):
    spec = preset.spec(dim)
    lik = preset.likelihood.calibrated(spec)
    rng = np.random.default_rng(0)
    X0 = random_point(spec, 0.1, rng, size=dataset.num_nodes)
    graph = dataset.train_graph()
    batches = []
    for _ in range(epochs):
        pos = dataset.train_pos[rng.permutation(len(dataset.train_pos))]
        neg = sample_negatives(graph, pos, 4, rng)
        batches.append(build_batches(pos, neg, preset.batch_size, 4))
    args = (spec.code, spec.circ, lik.code, lik.as_array(), lik.effective_m(spec))
    out = {}
    for backend in ("numba", "numpy"):
        impl = kernels.get_impl(backend)
        X = X0.copy()
        if backend == "numba":  # compile outside the timed region
            impl.run_epoch(*args, X.copy(), *batches[0], 1e-9)
        t0 = time.perf_counter()
        for b in batches:
            impl.run_epoch(*args, X, *b, preset.lr)
        out[backend] = ((time.perf_counter() - t0) / epochs, X)
    diff = float(np.max(np.abs(out["numba"][1] - out["numpy"][1])))
    t_nb, t_np = out["numba"][0], out["numpy"][0]
    print(f"{name:24s} numba {t_nb * 1e3:8.2f} ms  numpy {t_np * 1e3:9.2f} ms  "
          f"speed-up {t_np / t_nb:6.1f}x  max |dX| {diff:.2e}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--dim", type=int, default=10)
    args = ap.parse_args()
    dataset = dupdiv_dataset()
    print(f"dup-div graph: {dataset.num_nodes} nodes, {len(dataset.train_pos)} training edges, "
          f"d={args.dim}, mean over {args.epochs} epochs")
    for name, preset in DUPDIV_PRESETS.items():
        bench(name, preset, dataset, args.dim, args.epochs)


if __name__ == "__main__":
    main()
