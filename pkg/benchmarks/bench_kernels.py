"""Compiled kernels vs the numpy fallback on the decimal-weighted preset.

    python benchmarks/bench_kernels.py [--rows 100000] [--repeat 5]
"""
import argparse
import time

import numpy as np

from cmslab import kernels
from cmslab.presets import load_preset


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=100_000)
    ap.add_argument("--word-length", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    sys_ = load_preset("decimal-weighted")
    pack = sys_.pack
    gen = np.random.default_rng(0)
    n = args.rows
    X = gen.random((n, 1))
    V = np.zeros(n, dtype=np.int32)
    U = gen.random(n)
    words = gen.integers(0, pack.n_edges, (n, args.word_length), dtype=np.int32)
    cases = {
        "eval_batch (p_0)": lambda b: kernels.eval_batch(pack, pack.prob_prog[0], X, backend_name=b),
        "edge_prob_matrix": lambda b: kernels.edge_prob_matrix(pack, X, V, backend_name=b),
        "chain_step": lambda b: kernels.chain_step(pack, X, V, U, backend_name=b),
        f"compose_words (L={args.word_length})":
            lambda b: kernels.compose_words(pack, X, words, backend_name=b),
    }
    names = list(kernels.BACKENDS)
    if "compiled" not in names:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':<26}" + "".join(f"{b:>12}" for b in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in cases.items():
        t = {b: best_of(lambda: fn(b), args.repeat) for b in names}
        row = f"{label:<26}" + "".join(f"{t[b] * 1e3:>10.2f}ms" for b in names)
        if len(names) > 1:
            row += f"{t['python'] / t['compiled']:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
