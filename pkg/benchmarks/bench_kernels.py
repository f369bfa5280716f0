"""Time the numba kernels against their pure-numpy fallbacks.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel is called once before timing so that JIT compilation is not
counted. Both variants are checked for agreement on the same inputs.
"""

import argparse
import time

import numpy as np

from deepfrechet import kernels
from deepfrechet._accel import HAVE_NUMBA
from deepfrechet.manifold import knn_graph
from deepfrechet.simharness import gen_network


def best_of(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    y = np.cumsum(rng.normal(size=101)) + rng.normal(scale=3.0, size=101)
    Y = rng.normal(size=(100, 101)).cumsum(axis=1) + rng.normal(scale=3.0, size=(100, 101))

    pts = rng.normal(size=(300, 101))
    D = np.sqrt(kernels.pairwise_sqdist_numpy(pts))
    g = knn_graph(D, 10)
    indptr, indices, weights = g.csr()

    net = gen_network(1, 10, seed=1).responses[0].reshape(10, 10)
    M = net + rng.normal(scale=0.3, size=(10, 10))
    M = 0.5 * (M + M.T)

    return [
        ("pava (G=101)", kernels.pava_numba, kernels.pava_numpy, (y,)),
        ("pava_rows (100 x 101)", kernels.pava_rows_numba, kernels.pava_rows_numpy, (Y,)),
        ("dijkstra all-pairs (n=300, k=10)", kernels.dijkstra_all_pairs_numba, kernels.dijkstra_all_pairs_numpy,
         (indptr, indices, weights, g.n)),
        ("dykstra laplacian (m=10)", kernels.dykstra_laplacian_numba, kernels.dykstra_laplacian_numpy,
         (M, 1.0, 1e-8, 10000)),
        ("pairwise sqdist (300 x 101)", kernels.pairwise_sqdist_numba, kernels.pairwise_sqdist_numpy, (pts,)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<36}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}  agree")
    for name, fast, slow, inputs in cases(rng):
        t_fast = best_of(fast, inputs, args.repeat)
        t_slow = best_of(slow, inputs, args.repeat)
        a, b = fast(*inputs), slow(*inputs)
        a = a[0] if isinstance(a, tuple) else a
        b = b[0] if isinstance(b, tuple) else b
        agree = np.allclose(a, b, rtol=1e-12, atol=1e-12)
        print(f"{name:<36}{1e3 * t_fast:>12.3f}{1e3 * t_slow:>12.3f}{t_slow / t_fast:>9.1f}x  {agree}")


if __name__ == "__main__":
    main()
