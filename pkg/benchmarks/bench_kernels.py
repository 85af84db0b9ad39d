"""Compare the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from cpkern import _pykernels

try:
    from cpkern import _ckernels
except ImportError:
    _ckernels = None


def _stack(rng, labels, m, r):
    A = rng.standard_normal((labels, r, m, m)) + 1j * rng.standard_normal((labels, r, m, m))
    return np.ascontiguousarray(A / np.sqrt(2 * r * m)), np.full(labels, r, dtype=np.int_)


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    for m in (2, 4, 9):
        stack, counts = _stack(rng, 2, m, 3)
        path = rng.integers(0, 2, size=10_000).astype(np.int_)
        word = path[:200]
        eye = np.eye(m, dtype=np.complex128)
        T = eye + 0.1 * stack[0, 0] @ stack[0, 0].conj().T
        yield f"psi_apply m={m} x1000", lambda k, s=stack, t=T: [k.psi_apply(s[0], t) for _ in range(1000)]
        yield f"fold_word m={m} |w|=200", lambda k, s=stack, c=counts, w=word, e=eye: k.fold_word(s, c, w, e)
        yield f"reversed_log_norms m={m} n=1e4", lambda k, s=stack, c=counts, p=path: k.reversed_log_norms(s, c, p, True)
        gam = np.ascontiguousarray(stack[0] / 1.5)
        yield f"fixed_point_iteration m={m}", lambda k, g=gam: k.fixed_point_iteration(g, 500, 1e-12)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    rng = np.random.Generator(np.random.PCG64(0))
    print(f"{'case':38s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s}")
    for name, fn in cases(rng):
        tp = _best(lambda: fn(_pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:38s} {tp:11.4f} {'n/a':>11s} {'':>8s}")
            continue
        tc = _best(lambda: fn(_ckernels), args.repeat)
        print(f"{name:38s} {tp:11.4f} {tc:11.4f} {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()
