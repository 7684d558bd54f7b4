"""Compare the compiled and pure-Python entry sweeps.

Usage::

    python benchmarks/bench_kernels.py [--nnz 50000] [--ranks 3,3,3] [--repeats 5]

Times one full sweep (residuals, factor partials and the core sum) over
random observed entries for every available backend and checks that the
backends agree.
"""

import argparse
import time

import numpy as np

from streamtucker import kernels


def bench(backend, idx, vals, projected, core, repeats):
    kernels.sweep(idx, vals, projected, core, want_core=True, backend=backend)  # warm-up
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = kernels.sweep(idx, vals, projected, core, want_core=True, backend=backend)
        times.append(time.perf_counter() - t0)
    return float(np.median(times)), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dims", default="500,500,50")
    p.add_argument("--ranks", default="3,3,3")
    p.add_argument("--nnz", type=int, default=50_000)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    dims = tuple(int(v) for v in args.dims.split(","))
    ranks = tuple(int(v) for v in args.ranks.split(","))

    rng = np.random.default_rng(args.seed)
    idx = np.stack([rng.integers(0, d, args.nnz) for d in dims], axis=1)
    vals = rng.random(args.nnz)
    projected = [rng.random((d, r)) for d, r in zip(dims, ranks)]
    core = rng.random(ranks)

    results = {}
    for name in sorted(kernels.BACKENDS):
        results[name] = bench(name, idx, vals, projected, core, args.repeats)
        print(f"{name:>9}: {results[name][0] * 1e3:9.2f} ms per sweep "
              f"({args.nnz} entries, ranks {ranks})")
    if len(results) == 2:
        (_, (t_c, out_c)), (_, (t_p, out_p)) = sorted(results.items())
        diff = max(float(np.max(np.abs(a - b))) for a, b in zip(out_c, out_p))
        print(f"  speed-up: {t_p / t_c:.1f}x, max abs difference {diff:.2e}")
    else:
        print("  compiled backend not built; only the Python sweep was timed")


if __name__ == "__main__":
    main()
