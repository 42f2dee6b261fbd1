"""Compare the numba and pure-numpy GRU kernels.

    python3 benchmarks/bench_kernels.py [--steps 200] [--hidden 32 64 128] [--repeat 20]

Both paths run the same source; the numpy path is the uncompiled function.
Prints one row per hidden size and checks that the two paths agree.
"""

import argparse
import time

import numpy as np

from kpgan.kernels import compiled_kernels, gru_backward_numpy, gru_forward_numpy


def _inputs(steps, hidden, rng):
    xp = rng.normal(size=(steps, 3 * hidden))
    h0 = rng.normal(size=hidden) * 0.1
    wh_zr = rng.normal(size=(hidden, 2 * hidden)) / np.sqrt(hidden)
    wh_n = rng.normal(size=(hidden, hidden)) / np.sqrt(hidden)
    d_out = rng.normal(size=(steps, hidden))
    return xp, h0, wh_zr, wh_n, d_out


def _time(forward, backward, args, repeat):
    xp, h0, wh_zr, wh_n, d_out = args
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        out, zs, rs, ns = forward(xp, h0, wh_zr, wh_n)
        grads = backward(d_out, h0, out, zs, rs, ns, wh_zr, wh_n)
        best = min(best, time.perf_counter() - start)
    return best, out, grads


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=200)
    parser.add_argument("--hidden", type=int, nargs="+", default=[32, 64, 128])
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args(argv)

    jit_forward, jit_backward = compiled_kernels()
    rng = np.random.default_rng(0)
    warm = _inputs(4, 8, rng)
    jit_backward(warm[4], warm[1], *jit_forward(*warm[:4]), warm[2], warm[3])

    print(f"GRU forward+backward, {args.steps} steps, best of {args.repeat}")
    print(f"{'hidden':>8}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}{'max diff':>12}")
    for hidden in args.hidden:
        data = _inputs(args.steps, hidden, rng)
        t_np, out_np, g_np = _time(gru_forward_numpy, gru_backward_numpy, data, args.repeat)
        t_jit, out_jit, g_jit = _time(jit_forward, jit_backward, data, args.repeat)
        diff = max(np.abs(a - b).max() for a, b in zip((out_np, *g_np), (out_jit, *g_jit)))
        print(f"{hidden:>8}{t_np * 1e3:>12.3f}{t_jit * 1e3:>12.3f}{t_np / t_jit:>10.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
