"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from randecoc import kernels


def cases(rng):
    seeds = np.arange(20_000, dtype=np.uint64)
    codes = rng.choice(np.array([-1, 1], dtype=np.int8), size=(20_000, 10, 50))
    words = rng.choice(np.array([-1, 1], dtype=np.int8), size=(20_000, 50))
    shared = codes[:1]
    return {
        "counter_signs 20000x10x50": lambda impl: kernels.counter_signs(seeds, 10, 50, impl=impl),
        "nearest per-word codes": lambda impl: kernels.nearest(codes, words, impl=impl),
        "nearest shared code": lambda impl: kernels.nearest(shared, words, impl=impl),
        "loo_nearest per-word codes": lambda impl: kernels.loo_nearest(codes[:5000], words[:5000], impl=impl),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    names = ["python"] + (["native"] if kernels.BACKEND == "native" else [])
    impls = {n: kernels.backend(n) for n in names}
    print(f"{'kernel':<30}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) == 2 else ""))
    for label, fn in cases(np.random.default_rng(0)).items():
        outs = {n: fn(impl) for n, impl in impls.items()}
        if len(outs) == 2:
            a, b = outs.values()
            same = all(np.array_equal(x, y) for x, y in zip(a, b)) if isinstance(a, tuple) else np.array_equal(a, b)
            assert same, f"backends disagree on {label}"
        times = {n: min(timeit.repeat(lambda: fn(impl), number=1, repeat=args.repeat)) for n, impl in impls.items()}
        row = f"{label:<30}" + "".join(f"{times[n] * 1e3:>10.1f}ms" for n in names)
        if len(names) == 2:
            row += f"{times['python'] / times['native']:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
