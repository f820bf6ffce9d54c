"""Compare the compiled and NumPy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat N]

Also times one training step end to end under each backend (the step
uses the backend chosen at import, so each is run in a subprocess).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from specden.kernels import available_backends, get_backend

STEP = """
import time, numpy as np
from specden.model import ModelConfig
from specden.train import TrainConfig, init_state, train_step
from specden.pairs import NoisePair
st = init_state(ModelConfig(), TrainConfig())
g = np.random.default_rng(0)
pair = NoisePair(g.random((8, 1, 32, 32)), g.random((8, 1, 32, 32)), False, 0.0, 0.0)
train_step(st, pair)
t = time.perf_counter()
for _ in range(5):
    train_step(st, pair)
print((time.perf_counter() - t) / 5)
"""


def cases():
    g = np.random.default_rng(0)
    xpad = g.standard_normal((8, 32, 34, 34))
    cols = g.standard_normal((8, 32 * 9, 32 * 32))
    mu = g.random(128 * 128) * 29.0
    u = g.random(mu.size)
    return {
        "im2col  8x32x32x32 k3": lambda b: b.im2col(xpad, 3, 32, 32),
        "col2im  8x32x32x32 k3": lambda b: b.col2im(cols, 32, 3, 32, 32),
        "poisson 128x128 mu<30": lambda b: b.poisson_inversion(mu, np.exp(-mu), u, 200),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    names = available_backends()
    print(f"{'kernel':24s}" + "".join(f"{n:>12s}" for n in names) + ("    speedup" if len(names) > 1 else ""))
    for label, fn in cases().items():
        times = [min(timeit.repeat(lambda: fn(get_backend(n)), number=1, repeat=args.repeat)) for n in names]
        line = f"{label:24s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times)
        if len(times) > 1:
            line += f"    {times[0] / times[1]:6.2f}x"
        print(line)
    for n in names:
        env = dict(os.environ, SPECDEN_KERNELS=n)
        out = subprocess.run([sys.executable, "-c", STEP], env=env, capture_output=True, text=True, check=True)
        print(f"train_step batch 8, 32x32 [{n}]: {float(out.stdout) * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
