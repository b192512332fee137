"""Compiled vs pure-numpy kernel timings.

Times the hot kernels (tree build, tree predict, SMO solve) on growing
problem sizes with both backends in one process, then runs a full chain
per backend in subprocesses so the end-to-end gap is visible too.

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --sizes 200,1000 --repeat 3 --no-chain
"""

import argparse
import subprocess
import sys
import timeit

import numpy as np

from spatocc.learners import _pykern
from spatocc.learners.svr import rbf_kernel

try:
    from spatocc.learners import _ckern
except ImportError:
    _ckern = None

TREE_HP = (6, 10, 1e-6)
SMO_HP = (3.0, 0.1, 1e-4, 200)

CHAIN_SNIPPET = """
import time
import numpy as np
from conftest_free_dataset import build
from spatocc.learners import LearnerSpec, backend_name
from spatocc.sampler import McmcConfig, run_chain

data = build(300)
t0 = time.monotonic()
run_chain(data, LearnerSpec("tree"), McmcConfig(n_iter=400, burn_in=100,
                                                thin=3, seed=0))
print(f"{backend_name()}: {time.monotonic() - t0:.2f}s")
"""

DATASET_SNIPPET = '''
"""Dataset builder importable from the chain snippet."""
import numpy as np
from spatocc.model import DetectionHistory, OccupancyDataset, Site


def build(n, seed=0):
    rng = np.random.default_rng(seed)
    coords = rng.random((n, 2))
    z = rng.random(n) < 0.6
    y = (rng.random((n, 3)) < 0.5 * z[:, None]).astype(int)
    sites = [Site(f"s{i}", tuple(coords[i])) for i in range(n)]
    hists = [DetectionHistory(f"s{i}", tuple(y[i])) for i in range(n)]
    return OccupancyDataset(sites, hists)
'''


def best_ms(fn, repeat):
    return 1e3 * min(timeit.repeat(fn, number=1, repeat=repeat))


def tree_case(n, rng):
    x0, x1 = rng.random(n), rng.random(n)
    y = rng.standard_normal(n)
    q0, q1 = rng.random(10_000), rng.random(10_000)
    return x0, x1, y, q0, q1


def bench_tree(kern, n, rng, repeat):
    x0, x1, y, q0, q1 = tree_case(n, rng)
    build = best_ms(lambda: kern.tree_build(x0, x1, y, *TREE_HP), repeat)
    tree = kern.tree_build(x0, x1, y, *TREE_HP)
    pred = best_ms(lambda: kern.tree_predict(*tree, q0, q1), repeat)
    return build, pred


def bench_smo(kern, n, rng, repeat):
    coords = rng.random((n, 2))
    K = rbf_kernel(coords, coords, 5.0)
    y = rng.standard_normal(n)
    return best_ms(lambda: kern.smo_solve(K, y, *SMO_HP), repeat)


def row(label, py_ms, c_ms):
    if c_ms is None:
        print(f"  {label:<26} {py_ms:>9.2f} ms        (no compiled backend)")
    else:
        print(f"  {label:<26} {py_ms:>9.2f} ms {c_ms:>9.2f} ms {py_ms / c_ms:>6.1f}x")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="200,500,1000",
                    help="comma-separated training sizes")
    ap.add_argument("--repeat", type=int, default=5,
                    help="timing repeats; the best is reported")
    ap.add_argument("--no-chain", action="store_true",
                    help="skip the end-to-end chain comparison")
    args = ap.parse_args(argv)
    sizes = [int(s) for s in args.sizes.split(",")]

    hdr = f"  {'kernel':<26} {'python':>12} {'compiled':>12} {'gain':>6}"
    print(hdr)
    print("  " + "-" * (len(hdr) - 2))
    for n in sizes:
        rng = np.random.default_rng(1)
        py_b, py_p = bench_tree(_pykern, n, rng, args.repeat)
        c_b = c_p = None
        if _ckern is not None:
            rng = np.random.default_rng(1)
            c_b, c_p = bench_tree(_ckern, n, rng, args.repeat)
        row(f"tree_build n={n}", py_b, c_b)
        row(f"tree_predict n={n} q=10k", py_p, c_p)
    for n in sizes:
        rng = np.random.default_rng(2)
        py = bench_smo(_pykern, n, rng, args.repeat)
        c = None
        if _ckern is not None:
            rng = np.random.default_rng(2)
            c = bench_smo(_ckern, n, rng, args.repeat)
        row(f"smo_solve n={n}", py, c)

    if args.no_chain:
        return 0
    print("\n  full tree chain, 300 sites, 400 iterations:")
    import os
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        with open(os.path.join(tmp, "conftest_free_dataset.py"), "w") as fh:
            fh.write(DATASET_SNIPPET)
        with open(os.path.join(tmp, "chain.py"), "w") as fh:
            fh.write(CHAIN_SNIPPET)
        for pure in ("0", "1"):
            env = dict(os.environ, SPATOCC_PURE_KERNELS=pure)
            out = subprocess.run([sys.executable, "chain.py"], cwd=tmp,
                                 env=env, capture_output=True, text=True)
            print("  " + (out.stdout.strip() or out.stderr.strip()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
