"""Compare the numba and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Reports per-call times of the two hot kernels on S3-sized and larger node
batches, then the wall time of one full S3 DWLSF run (L = 10) with each
backend selected through ``CVMTRACK_BACKEND`` in a fresh interpreter.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from cvmtrack import kernels

END_TO_END = """
import time
import numpy as np
from cvmtrack.filter_distributed import run_dwlsf
from cvmtrack.network import generate_scan
from cvmtrack.scenarios import build_truth, draw_priors, get_scenario
cfg = get_scenario("s3")
truth = build_truth(cfg)
net = cfg.build_network()
models = cfg.models(net)
pr = draw_priors(cfg, truth[0], net.size, np.random.default_rng(0))
scans = [generate_scan(t, net, cfg.shape, cfg.measurement_rate, 0, k) for k, t in enumerate(truth)]
run_dwlsf(pr.nodes, net.topology, scans[:2], cfg.consensus(net.topology, 10), models)  # warm-up
t0 = time.perf_counter()
run_dwlsf(pr.nodes, net.topology, scans, cfg.consensus(net.topology, 10), models)
print(time.perf_counter() - t0)
"""


def _inputs(n: int, rng: np.random.Generator):
    def spd(k, scale):
        a = rng.standard_normal((n, k, k))
        return scale * (a @ a.transpose(0, 2, 1) + k * np.eye(k))

    xm = np.column_stack([rng.normal(0, 100, (n, 2)), rng.normal(3, 1, (n, 2))])
    pm = np.column_stack([rng.uniform(20, 40, (n, 2)), rng.uniform(-1, 1, n)])
    cv = spd(2, 5.0)
    y = xm[:, :2] + rng.normal(0, 30, (n, 2))
    return (xm, spd(4, 1.0), pm, spd(3, 1e-3), np.eye(2) / 4, cv, y, np.ones(n, dtype=bool))


def _ring(n: int) -> np.ndarray:
    a = np.zeros((n, n))
    idx = np.arange(n)
    a[idx, (idx + 1) % n] = a[(idx + 1) % n, idx] = 1.0
    return a


def _best(fn, repeat: int) -> float:
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--skip-end-to-end", action="store_true")
    args = parser.parse_args(argv)

    backends = {name: kernels.load(name) for name in ("numba", "numpy")}
    rng = np.random.default_rng(0)
    rows = []
    for n in (9, 64):
        inp = _inputs(n, rng)
        for b in backends.values():
            b.node_terms(*inp)  # compile / warm up
        rows.append((f"node_terms N={n}",
                     *[_best(lambda b=b: b.node_terms(*inp), args.repeat) for b in backends.values()]))
    for n, L in ((9, 10), (9, 500), (64, 100)):
        vals = rng.normal(size=(n, 32))
        adj = _ring(n)
        for b in backends.values():
            b.average_consensus(vals, adj, 0.325, 1)
        rows.append((f"consensus N={n} L={L}",
                     *[_best(lambda b=b: b.average_consensus(vals, adj, 0.325, L), args.repeat)
                       for b in backends.values()]))
    if not args.skip_end_to_end:
        e2e = []
        for name in backends:
            env = {**os.environ, kernels.ENV_FLAG: name}
            out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, check=True,
                                 capture_output=True, text=True)
            e2e.append(float(out.stdout.strip()))
        rows.append(("S3 DWLSF run, L=10", *e2e))

    print(f"{'case':<24}{'numba':>12}{'numpy':>12}{'speedup':>10}")
    for label, t_numba, t_numpy in rows:
        print(f"{label:<24}{t_numba * 1e3:>10.3f}ms{t_numpy * 1e3:>10.3f}ms{t_numpy / t_numba:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
