"""Time the numba and numpy kernels on packed codes.

    python3 benchmarks/bench_kernels.py --queries 2000 --gallery 18000 --bits 64
"""

import argparse
import timeit

import numpy as np

from xmhash import _accel, _kernels
from xmhash.retrieval import DEFAULT_RECALL_GRID, pack_codes


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--queries", type=int, default=500)
    ap.add_argument("--gallery", type=int, default=5000)
    ap.add_argument("--bits", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    r = np.random.default_rng(args.seed)
    Q = pack_codes(np.where(r.random((args.queries, args.bits)) < 0.5, -1, 1))
    G = pack_codes(np.where(r.random((args.gallery, args.bits)) < 0.5, -1, 1))
    R = r.random((args.queries, args.gallery)) < 0.2
    grid = np.asarray(DEFAULT_RECALL_GRID)

    backends = [False] + ([True] if _accel.HAVE_NUMBA else [])
    if _accel.HAVE_NUMBA:
        # compile outside the timed region
        D = _kernels.hamming_matrix(Q[:2], G[:2], use_numba=True)
        _kernels.ranked_metrics(D, R[:2, :2], args.bits, grid, use_numba=True)

    print(f"queries={args.queries} gallery={args.gallery} bits={args.bits} (best of {args.repeat})")
    results = {}
    for nb in backends:
        name = "numba" if nb else "numpy"
        D = _kernels.hamming_matrix(Q, G, use_numba=nb)
        t_ham = best_of(lambda: _kernels.hamming_matrix(Q, G, use_numba=nb), args.repeat)
        t_map = best_of(lambda: _kernels.ranked_metrics(D, R, args.bits, grid, use_numba=nb), args.repeat)
        results[name] = _kernels.ranked_metrics(D, R, args.bits, grid, use_numba=nb)[0]
        print(f"{name:>6}  hamming {t_ham * 1e3:9.2f} ms   map+pr {t_map * 1e3:9.2f} ms")
    if len(results) == 2:
        print(f"max |AP numba - AP numpy| = {np.abs(results['numba'] - results['numpy']).max():.1e}")


if __name__ == "__main__":
    main()
