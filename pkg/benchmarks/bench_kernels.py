"""Time the numba kernels against their numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeat N]

The numba versions are warmed up once so compile time is excluded.  Run
with HEATSHEET_DISABLE_NUMBA=1 to time the plain-python loop versions
instead (slow; use a small --repeat).
"""
import argparse
import timeit

import numpy as np

from heatsheet import _kernels as K
from heatsheet._accel import backend


def cases(rng):
    vals = rng.standard_normal((2000, 65))
    u1, u2 = 1 - rng.random((2000, 64)), 1 - rng.random((2000, 64))
    pts = rng.standard_normal((1500, 3))
    kmat = K.riesz_matrix_numpy(pts[:400], 1.0, 50.0)
    w0 = np.full(400, 1 / 400)
    field = rng.standard_normal((500, 65, 3))
    center = np.array([0.3, 0.3, 0.3])
    return {
        "bridge_sup": (lambda: K.bridge_sup_loop(vals, u1, u2, 1.0, 1 / 64),
                       lambda: K.bridge_sup_numpy(vals, u1, u2, 1.0, 1 / 64)),
        "riesz_matrix": (lambda: K.riesz_matrix_loop(pts, 1.0, 50.0),
                         lambda: K.riesz_matrix_numpy(pts, 1.0, 50.0)),
        "frank_wolfe": (lambda: K.frank_wolfe_loop(kmat, w0, 2000, 1e-9, 500),
                        lambda: K.frank_wolfe_numpy(kmat, w0, 2000, 1e-9, 500)),
        "ball_distance": (lambda: K.ball_distance_loop(field, center, 0.1),
                          lambda: K.ball_distance_numpy(field, center, 0.1)),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    print(f"loop backend: {backend()}")
    print(f"{'kernel':<15}{'loop ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, (loop, vec) in cases(np.random.default_rng(0)).items():
        loop()  # compile
        vec()
        t_loop = min(timeit.repeat(loop, number=1, repeat=args.repeat)) * 1e3
        t_vec = min(timeit.repeat(vec, number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<15}{t_loop:>12.2f}{t_vec:>12.2f}{t_vec / t_loop:>10.1f}x")


if __name__ == "__main__":
    main()
