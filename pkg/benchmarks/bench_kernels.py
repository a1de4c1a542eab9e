"""Compare the numba and numpy kernel paths.

    python benchmarks/bench_kernels.py [--batch 32] [--repeat 5]

Part 1 times each kernel in-process. Part 2 times a full forward + backward
of the default network in two subprocesses, one per ``TUNET_NUMBA`` setting.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from tunet import kernels

MODEL_SNIPPET = """
import time, numpy as np
from tunet import model
cfg = model.TUnetConfig()
p = model.build(cfg, 32)
x = np.random.default_rng(0).standard_normal(({batch}, 52, 192)).astype(np.float32)
logits, cache = model.forward(p, x, cfg)   # warm-up / JIT
model.backward(p, cache, np.ones_like(logits), cfg)
best = float("inf")
for _ in range({repeat}):
    t = time.perf_counter()
    logits, cache = model.forward(p, x, cfg)
    model.backward(p, cache, np.ones_like(logits), cfg)
    best = min(best, time.perf_counter() - t)
print(best)
"""


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def kernel_table(batch, repeat):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((batch, 128, 98)).astype(np.float32)
    lout = 96
    cols = rng.standard_normal((128 * 3, batch * lout)).astype(np.float32)
    pooled = rng.standard_normal((batch, 128, 48)).astype(np.float32)
    _, idx = kernels.NUMPY_KERNELS["maxpool_fwd"](x[:, :, :96], 2, 2, 48)
    cases = {
        "im2col": lambda k: k["im2col"](x, 3, 1, lout),
        "col2im": lambda k: k["col2im"](cols, batch, 128, 98, 3, 1, lout),
        "maxpool_fwd": lambda k: k["maxpool_fwd"](np.ascontiguousarray(x[:, :, :96]), 2, 2, 48),
        "maxpool_bwd": lambda k: k["maxpool_bwd"](pooled, idx, 96),
    }
    print(f"kernel timings, batch {batch}, 128 channels, best of {repeat}")
    print(f"{'kernel':<12} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name, case in cases.items():
        t_np = best_of(lambda: case(kernels.NUMPY_KERNELS), repeat)
        t_nb = best_of(lambda: case(kernels.NUMBA_KERNELS), repeat)
        print(f"{name:<12} {t_np * 1e3:10.2f} {t_nb * 1e3:10.2f} {t_np / t_nb:8.2f}")


def model_table(batch, repeat):
    print(f"\nforward + backward, default network, batch {batch}")
    for flag in ("0", "1"):
        env = {**os.environ, "TUNET_NUMBA": flag}
        code = MODEL_SNIPPET.format(batch=batch, repeat=repeat)
        out = subprocess.run([sys.executable, "-c", code], env=env, check=True, capture_output=True, text=True)
        label = "numba" if flag == "1" else "numpy"
        print(f"TUNET_NUMBA={flag} ({label}): {float(out.stdout.strip()) * 1e3:8.1f} ms")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=32)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not kernels.USE_NUMBA:
        print("note: TUNET_NUMBA=0 in this process, the 'numba' column runs uncompiled Python loops")
    kernel_table(args.batch, args.repeat)
    model_table(args.batch, args.repeat)


if __name__ == "__main__":
    main()
