"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py --sizes 256 1024 4096 --repeat 5

The first numba call is excluded (JIT compile, or cache load). Each row also
reports the largest difference between the two results.
"""
import argparse
import time

import numpy as np

from yamabe_oc import _kernels
from yamabe_oc.discretization import build_symmetric_sphere


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_assembly(size, repeat):
    nodes = np.linspace(0.0, np.pi, size)
    gx, gw = _kernels.GAUSS_X, _kernels.GAUSS_W
    _kernels.assemble_p1_numba(nodes, 2.0, gx, gw)
    t_nb, a = best_of(lambda: _kernels.assemble_p1_numba(nodes, 2.0, gx, gw), repeat)
    t_np, b = best_of(lambda: _kernels.assemble_p1_numpy(nodes, 2.0), repeat)
    diff = max(float(np.abs(x - y).max()) for x, y in zip(a, b))
    return t_nb, t_np, diff


def bench_psor(size, repeat, sweeps):
    a = build_symmetric_sphere(3, size).operator
    lower = 1.0 + 0.5 * np.cos(np.linspace(0.0, np.pi, size))
    diag = a.diagonal()

    def run(fn):
        v = lower.copy()
        fn(a.indptr, a.indices, a.data, diag, lower, v, 1.9, sweeps, 0.0)
        return v

    run(_kernels.psor_numba)
    t_nb, v1 = best_of(lambda: run(_kernels.psor_numba), repeat)
    t_np, v2 = best_of(lambda: run(_kernels.psor_numpy), max(1, repeat // 2))
    return t_nb, t_np, float(np.abs(v1 - v2).max())


def bench_pcg(size, repeat):
    a = build_symmetric_sphere(3, size).operator
    b = np.random.default_rng(0).normal(size=size)

    def run(fn):
        x = np.zeros(size)
        fn(a.indptr, a.indices, a.data, b, x, 1e-12, 50 * size)
        return x

    run(_kernels.pcg_numba)
    t_nb, x1 = best_of(lambda: run(_kernels.pcg_numba), repeat)
    t_np, x2 = best_of(lambda: run(_kernels.pcg_numpy), repeat)
    return t_nb, t_np, float(np.abs(x1 - x2).max() / np.abs(x2).max())


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[256, 1024, 4096])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--sweeps", type=int, default=20, help="PSOR sweeps per timing")
    args = parser.parse_args()
    if _kernels.psor_numba is None:
        raise SystemExit("numba is not installed")
    print(f"{'kernel':<10} {'N':>6} {'numba [s]':>11} {'numpy [s]':>11} {'speedup':>8} {'max diff':>10}")
    for size in args.sizes:
        for name, res in (
            ("assembly", bench_assembly(size, args.repeat)),
            ("psor", bench_psor(size, args.repeat, args.sweeps)),
            ("pcg", bench_pcg(size, args.repeat)),
        ):
            t_nb, t_np, diff = res
            print(f"{name:<10} {size:>6} {t_nb:>11.2e} {t_np:>11.2e} {t_np / t_nb:>7.1f}x {diff:>10.1e}")


if __name__ == "__main__":
    main()
