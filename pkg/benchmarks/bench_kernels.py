"""Compare the numba and pure-numpy kernel backends.

Times each inner-loop kernel on the same random instances, checks that both
backends produce matching factors, and then times a few full a2psgd epochs
with each backend switched in.

    python benchmarks/bench_kernels.py [--nnz 200000] [--rank 16] [--epochs 3]
"""

import argparse
import time

import numpy as np

from hdsf import _kernels
from hdsf.core import TrainConfig
from hdsf.ingest import split
from hdsf.synthetic import power_law
from hdsf.trainers import train


def kernel_inputs(nnz, rank, seed=0):
    rng = np.random.default_rng(seed)
    n_rows, n_cols = max(nnz // 50, 10), max(nnz // 40, 10)
    rows = rng.integers(0, n_rows, nnz)
    cols = rng.integers(0, n_cols, nnz)
    vals = rng.normal(size=nnz)
    m = rng.uniform(0, 1 / np.sqrt(rank), (n_rows, rank))
    n = rng.uniform(0, 1 / np.sqrt(rank), (n_cols, rank))
    return m, n, rows, cols, vals, rng.permutation(nnz)


def time_kernel(ns, name, inputs, repeats):
    m0, n0, rows, cols, vals, idx = inputs
    best = float("inf")
    for _ in range(repeats):
        m, n = m0.copy(), n0.copy()
        phi, psi = np.zeros_like(m), np.zeros_like(n)
        fn = getattr(ns, name)
        t0 = time.perf_counter()
        if name == "nag_run":
            fn(m, n, phi, psi, rows, cols, vals, idx, 1e-3, 1e-2, 0.9)
        else:
            fn(m, n, rows, cols, vals, idx, 1e-3, 1e-2)
        best = min(best, time.perf_counter() - t0)
    return best, m, n


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--nnz", type=int, default=200_000, help="instances per kernel call (default: %(default)s)")
    ap.add_argument("--rank", type=int, default=16, help="latent dimension (default: %(default)s)")
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=3, help="a2psgd epochs per backend (default: %(default)s)")
    ap.add_argument("--threads", type=int, default=4)
    args = ap.parse_args()

    if _kernels.numba_kernels is None:
        raise SystemExit("numba is not installed; nothing to compare")
    backends = (_kernels.numba_kernels, _kernels.numpy_kernels)
    _kernels.warm_up(_kernels.numba_kernels)

    inputs = kernel_inputs(args.nnz, args.rank)
    print(f"kernels: {args.nnz} instances, rank {args.rank}, best of {args.repeats}")
    print(f"{'kernel':<14}{'numba s':>10}{'numpy s':>10}{'speedup':>9}{'max |diff|':>12}")
    for name in _kernels.KERNEL_NAMES:
        (tn, mn, nn), (tp, mp, np_) = (time_kernel(ns, name, inputs, args.repeats) for ns in backends)
        diff = max(float(np.abs(mn - mp).max()), float(np.abs(nn - np_).max()))
        print(f"{name:<14}{tn:>10.4f}{tp:>10.4f}{tp / tn:>8.1f}x{diff:>12.2e}")

    p = power_law(n_rows=5000, n_cols=5000, nnz=args.nnz, seed=0)
    ds = split(p.triples(), 0.7, seed=0)
    cfg = TrainConfig(algorithm="a2psgd", lam=1e-2, eta=2e-3, gamma=0.9, d=args.rank,
                      threads=args.threads, max_epochs=args.epochs, seed=0, patience=0)
    print(f"\na2psgd: {ds.train.nnz} train instances, {args.threads} threads, {args.epochs} epochs")
    saved = _kernels.kernels
    try:
        for ns in backends:
            _kernels.kernels = ns
            _, logs = train(ds, cfg)
            per_epoch = logs[-1].wall_time_s / args.epochs
            print(f"{ns.name:<8} {per_epoch:.3f} s/epoch  final RMSE {logs[-1].rmse:.4f}")
    finally:
        _kernels.kernels = saved


if __name__ == "__main__":
    main()
