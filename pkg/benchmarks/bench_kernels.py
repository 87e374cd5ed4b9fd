"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--res 256] [--sites 300] [--repeat 3]

Both backends run on identical inputs; outputs are checked for bitwise
equality before timings are reported.
"""
import argparse
import time

import numpy as np

from anisovoro import kernels
from anisovoro.diagram import CellTensors, site_tensors
from anisovoro.grid import Grid
from anisovoro.metric import MetricField


def _time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def run(res, n_sites, repeat, threads):
    grid = Grid.unit(res)
    field = MetricField.swirl()
    cells = CellTensors.build(field, grid)
    sites = np.random.default_rng(0).random((n_sites, 2))
    qsites = site_tensors(field, sites)
    rows = []
    results = {}
    for backend in ("python", "compiled"):
        if backend not in kernels.available_backends():
            print(f"{backend}: not available")
            continue
        prev = kernels.use_backend(backend)
        try:
            t_dw, (lab_dw, _) = _time(lambda: kernels.label_sites(cells.centers, cells.q, sites,
                                                                   None, False), repeat)
            t_ls, (lab_ls, _) = _time(lambda: kernels.label_sites(cells.centers, None, sites,
                                                                   qsites, True), repeat)
            t_cc, (comp, _) = _time(lambda: kernels.label_components(lab_dw, grid.res), repeat)
        finally:
            kernels.use_backend(prev)
        results[backend] = (lab_dw, lab_ls, comp)
        rows.append((backend, t_dw, t_ls, t_cc))
    if len(results) == 2:
        same = all(np.array_equal(a, b) for a, b in zip(results["python"], results["compiled"]))
        print(f"outputs identical: {same}")
    print(f"grid {res}x{res}, {n_sites} sites, threads={threads}, best of {repeat}")
    print(f"{'backend':<10}{'label DW':>12}{'label LS':>12}{'components':>12}")
    for name, a, b, c in rows:
        print(f"{name:<10}{a:>11.4f}s{b:>11.4f}s{c:>11.4f}s")
    if len(rows) == 2:
        print(f"{'speedup':<10}{rows[0][1] / rows[1][1]:>11.1f}x{rows[0][2] / rows[1][2]:>11.1f}x"
              f"{rows[0][3] / rows[1][3]:>11.1f}x")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--res", type=int, default=256)
    p.add_argument("--sites", type=int, default=300)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--threads", type=int, default=None)
    args = p.parse_args()
    kernels.set_threads(args.threads)
    run(args.res, args.sites, args.repeat, kernels.threads())


if __name__ == "__main__":
    main()
