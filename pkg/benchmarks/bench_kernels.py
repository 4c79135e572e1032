"""Benchmark the compiled convolution backend against the numpy reference.

Runs the forward and backward convolution kernels on shapes matching the
classifier's four blocks and reports per-call time and throughput for each
backend.  Usage:

    python3 benchmarks/bench_kernels.py [--res 32] [--repeats 5]
"""

import argparse
import importlib
import sys
import time

import numpy as np


def _load_backends():
    backends = {}
    from voxelform.kernels import _reference

    backends["python"] = _reference
    try:
        from voxelform.kernels import _compiled

        backends["compiled"] = _compiled
    except ImportError:
        pass
    return backends


def _block_shapes(res):
    """(x_shape, w_shape) per conv block at kernel 3, padding 1, stride 1."""
    channels = [1, 8, 16, 32, 64]
    shapes = []
    size = res
    for cin, cout in zip(channels, channels[1:]):
        shapes.append(((1, cin, size, size, size), (cout, cin, 3, 3, 3)))
        size //= 2
    return shapes


def _conv_flops(x_shape, w_shape, stride=1, padding=1):
    n, cin, d, h, w = x_shape
    cout, _, kd, kh, kw = w_shape
    od = (d + 2 * padding - kd) // stride + 1
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    return 2.0 * n * cout * od * oh * ow * cin * kd * kh * kw


def _time_call(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--res", type=int, default=32)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args(argv)

    backends = _load_backends()
    if "compiled" not in backends:
        print("note: compiled extension not importable; timing python only")

    rng = np.random.default_rng(0)
    rows = []
    for block, (x_shape, w_shape) in enumerate(_block_shapes(args.res), start=1):
        x = rng.standard_normal(x_shape)
        w = rng.standard_normal(w_shape)
        xp = np.pad(x, ((0, 0), (0, 0)) + ((1, 1),) * 3)
        flops = _conv_flops(x_shape, w_shape)
        results = {}
        checks = {}
        for name, impl in backends.items():
            fwd = _time_call(lambda: impl.conv3d_forward_padded(xp, w, 1), args.repeats)
            y = impl.conv3d_forward_padded(xp, w, 1)
            gy = np.ascontiguousarray(rng.standard_normal(y.shape))
            bwd = _time_call(lambda: impl.conv3d_backward_padded(xp, w, gy, 1),
                             args.repeats)
            results[name] = (fwd, bwd)
            checks[name] = y
        if len(checks) == 2:
            gap = np.max(np.abs(checks["python"] - checks["compiled"]))
            assert gap <= 1e-12, f"backends disagree by {gap}"
        rows.append((block, x_shape, flops, results))

    print(f"{'block':>5} {'input':>22} {'backend':>9} {'fwd ms':>9} "
          f"{'bwd ms':>9} {'fwd GFLOP/s':>12}")
    totals = {name: [0.0, 0.0] for name in backends}
    for block, x_shape, flops, results in rows:
        shape_text = "x".join(str(s) for s in x_shape)
        for name, (fwd, bwd) in results.items():
            totals[name][0] += fwd
            totals[name][1] += bwd
            print(f"{block:>5} {shape_text:>22} {name:>9} {fwd * 1e3:>9.2f} "
                  f"{bwd * 1e3:>9.2f} {flops / fwd / 1e9:>12.2f}")
    for name, (fwd, bwd) in totals.items():
        print(f"total {name}: forward {fwd * 1e3:.2f} ms, backward {bwd * 1e3:.2f} ms")
    if len(totals) == 2:
        speedup = ((totals["python"][0] + totals["python"][1])
                   / (totals["compiled"][0] + totals["compiled"][1]))
        print(f"compiled speedup over python: {speedup:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
