"""Compare the compiled and pure-Python max-flow kernels on GrabCut-shaped grid graphs.

    python3 benchmarks/bench_maxflow.py [--sizes 32 64 128] [--repeat 3]
"""
import argparse
import time

import numpy as np

from timelinekit.segment import maxflow
from timelinekit.segment.maxflow import FlowNetwork, max_flow


def grid_network(n, seed):
    rng = np.random.default_rng(seed)
    ids = np.arange(n * n).reshape(n, n)
    net = FlowNetwork(n * n)
    # terminal weights from a noisy disk, pairwise weights contrast-like
    yy, xx = np.mgrid[:n, :n]
    inside = (yy - n / 2) ** 2 + (xx - n / 2) ** 2 < (n / 3) ** 2
    fg = np.where(inside, 8.0, 2.0) + rng.random((n, n)) * 4
    net.add_tedges(ids.ravel(), fg.ravel(), (12.0 - fg).ravel())
    net.add_edges(ids[:, :-1], ids[:, 1:], rng.random((n, n - 1)) * 3, rng.random((n, n - 1)) * 3)
    net.add_edges(ids[:-1], ids[1:], rng.random((n - 1, n)) * 3, rng.random((n - 1, n)) * 3)
    return net


def best_time(n, backend, repeat):
    times, value = [], None
    for r in range(repeat):
        net = grid_network(n, r)
        t0 = time.perf_counter()
        _, v = max_flow(net, backend)
        times.append(time.perf_counter() - t0)
        value = v if r == 0 else value
    return min(times), value


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args(argv)
    backends = ["python"] + (["cython"] if maxflow.BACKEND == "cython" else [])
    if len(backends) == 1:
        print("compiled kernel not built; timing the pure-Python kernel only")
    print(f"{'grid':>8}  {'nodes':>7}  " + "  ".join(f"{b + ' s':>10}" for b in backends) + "  speedup")
    for n in a.sizes:
        res = {b: best_time(n, b, a.repeat) for b in backends}
        vals = {round(v, 6) for _, v in res.values()}
        assert len(vals) == 1, f"backends disagree on {n}x{n}: {res}"
        cols = "  ".join(f"{res[b][0]:>10.4f}" for b in backends)
        speed = f"{res['python'][0] / res['cython'][0]:>7.1f}x" if "cython" in res else "      -"
        print(f"{n:>4}x{n:<3}  {n * n:>7}  {cols}  {speed}")


if __name__ == "__main__":
    main()
