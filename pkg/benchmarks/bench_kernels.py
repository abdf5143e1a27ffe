"""Time the compiled kernels against their numpy counterparts.

    python benchmarks/bench_kernels.py [--repeat 5] [--seed 0]

Both implementations run in the same process on the same inputs; the table
reports the best wall time of each and checks that the outputs agree.
"""

import argparse
import math
import time

import numpy as np

from dtrans import kernels
from dtrans._accel import HAVE_NUMBA


def _best(fn, args, repeat):
    fn(*args)  # warm-up (JIT compile, caches)
    best = math.inf
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, out


def _flat(out):
    if isinstance(out, tuple):
        return np.concatenate([np.ravel(np.asarray(x, dtype=np.float64)) for x in out])
    return np.ravel(np.asarray(out, dtype=np.float64))


def cases(rng):
    N = 14
    B = rng.random((N, N)) + 0.1
    A = rng.standard_normal((8, 8))
    scores = kernels._permutation_scores_numpy(A, math.factorial(8))
    log_norm = float(np.log(np.sum(np.exp(scores - scores.max()))) + scores.max())
    C = rng.random((200, 200))
    m, k = 60, 80
    a = rng.dirichlet(np.ones(m))
    b = rng.dirichlet(np.ones(k))
    T = rng.random((m, k))
    tol = 1e-12
    it = 50 * (m + k) ** 2
    total = math.factorial(8)
    return [
        ("permanent_minors N=14", kernels._permanent_minors_numba, kernels._permanent_minors_numpy, (B,)),
        ("permutation_scores N=8", kernels._permutation_scores_numba, kernels._permutation_scores_numpy, (A, total)),
        ("pair_marginals N=8", kernels._pair_marginals_numba, kernels._pair_marginals_numpy, (A, log_norm, total)),
        ("assignment 200x200", kernels._assignment_numba, kernels._assignment_numpy, (C,)),
        ("transport 60x80", kernels._transport_numba, kernels._transport_numpy, (T, a, b, tol, it)),
    ]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<26}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}{'rel diff':>12}")
    for name, fast, slow, fargs in cases(rng):
        t_fast, out_fast = _best(fast, fargs, args.repeat)
        t_slow, out_slow = _best(slow, fargs, args.repeat)
        ref = _flat(out_slow)
        diff = float(np.max(np.abs(_flat(out_fast) - ref)) / max(1.0, np.max(np.abs(ref))))
        print(f"{name:<26}{1e3 * t_fast:>12.3f}{1e3 * t_slow:>12.3f}{t_slow / t_fast:>10.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
