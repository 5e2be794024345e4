"""Compare the compiled permutation kernel against the pure-Python fallback.

Run:  python3 benchmarks/bench_enumerate.py [max_n]

The enumeration hot loop walks n! candidate orders and filters them against
precedence pairs; the compiled kernel does this in C. The pure kernel is the
import-time fallback when no compiler was available at install time.
"""
import random
import sys
import time

from conflow import _permkernel_py

try:
    from conflow import _permkernel

    kernels = [("compiled", _permkernel), ("python", _permkernel_py)]
except ImportError:
    kernels = [("python", _permkernel_py)]


def make_constraints(rng, n):
    pairs = set()
    for _ in range(n):
        a, b = rng.sample(range(n), 2)
        pairs.add((min(a, b), max(a, b)))
    return sorted(pairs)


def main():
    max_n = int(sys.argv[1]) if len(sys.argv) > 1 else 10
    rng = random.Random(42)
    print(f"{'n':>3} {'constraints':>11} " +
          " ".join(f"{name:>12}" for name, _ in kernels) + "   speedup")
    for n in range(6, max_n + 1):
        constraints = make_constraints(rng, n)
        times = []
        counts = set()
        for _, kernel in kernels:
            t = time.perf_counter()
            result = kernel.valid_permutations(n, constraints)
            times.append(time.perf_counter() - t)
            counts.add(len(result))
        assert len(counts) == 1, "kernels disagree"
        row = f"{n:>3} {len(constraints):>11} "
        row += " ".join(f"{t * 1000:>10.1f}ms" for t in times)
        if len(times) == 2:
            row += f"   {times[1] / times[0]:>6.1f}x"
        print(row + f"   ({counts.pop()} valid orders)")


if __name__ == "__main__":
    main()
