"""Compiled kernels vs the numpy fallback on a disk field.

    python benchmarks/bench_kernels.py [--n 256] [--repeat 20]
"""
import argparse
import importlib
import timeit

import numpy as np

from glchains import kernels
from glchains.energy import stencil
from glchains.fields import make_boundary_datum


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=20)
    a = ap.parse_args()

    u = make_boundary_datum({"kind": "disk", "degree": 2, "n": a.n})
    st = stencil(u)
    flat = np.ascontiguousarray(u.values.reshape(-1, u.m))
    phase = np.ascontiguousarray(np.random.default_rng(0).uniform(-np.pi, np.pi, (a.n * a.n, 17)))
    py = importlib.import_module("glchains._kernels_py")
    backends = {"numpy": py}
    try:
        backends["cython"] = importlib.import_module("glchains._kernels")
    except ImportError:
        print("compiled extension not built; numpy only")
    cases = {
        "dirichlet": lambda m: m.dirichlet(flat, st.weights, st.strides),
        "wells": lambda m: m.wells(flat, st.node_w),
        "wrapped_sums": lambda m: m.wrapped_sums(phase),
    }
    print(f"field {a.n}x{a.n}, active backend: {kernels.BACKEND}")
    print(f"{'kernel':<14}" + "".join(f"{b:>12}" for b in backends) + "     speedup")
    for name, fn in cases.items():
        ref = fn(py)
        times = {}
        for b, m in backends.items():
            out = fn(m)
            for x, y in zip(ref, out):
                np.testing.assert_allclose(x, y, rtol=1e-10, atol=1e-12)
            times[b] = min(timeit.repeat(lambda: fn(m), number=1, repeat=a.repeat)) * 1e3
        sp = times["numpy"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:<14}" + "".join(f"{t:>10.3f}ms" for t in times.values()) + f"{sp:>11.1f}x")


if __name__ == "__main__":
    main()
