"""Time the numba and numpy kernel backends on the same workloads.

    python3 benchmarks/bench_kernels.py [--symbols N] [--repeat R]
"""

import argparse
import time

import numpy as np

from lzanomaly import _kernels
from lzanomaly.model import new_model, train


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def workloads(n_symbols, k=7):
    rng = np.random.default_rng(0)
    train_seq = rng.integers(0, k, size=n_symbols)
    probe = rng.integers(0, k, size=n_symbols // 4)
    model = train(new_model(k), [train_seq])
    return {
        "train": lambda: train(new_model(k), [train_seq]),
        "score": lambda: model.log_probability(probe),
        "windows(L=20)": lambda: model.window_log_probabilities(probe, 20),
        "sample": lambda: model.sample(n_symbols // 4, 1),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--symbols", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    backends = ["numpy"] + (["numba"] if _kernels.numba is not None else [])
    results = {}
    for name in backends:
        _kernels.set_backend(name)
        jobs = workloads(args.symbols)
        for fn in jobs.values():
            fn()  # compile / warm caches
        results[name] = {job: best_of(fn, args.repeat) for job, fn in jobs.items()}

    print(f"{'kernel':<16}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for job in results["numpy"]:
        row = f"{job:<16}" + "".join(f"{results[b][job] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            row += f"{results['numpy'][job] / results['numba'][job]:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
