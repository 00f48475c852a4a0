"""Time the numba and numpy kernel paths on a large star graph.

Usage: python benchmarks/bench_kernels.py [--density 400] [--repeat 50]
"""
import argparse
import time

import numpy as np

from nlsgraph import _kernels as K, graph_core as gc


def _time(f, args, repeat):
    f(*args)  # compile / warm caches
    t0 = time.perf_counter()
    for _ in range(repeat):
        f(*args)
    return (time.perf_counter() - t0) / repeat


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--density", type=float, default=400.0)
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args(argv)
    g = gc.star(3, 1.0, density=args.density, truncation=80)
    ci, cj, h, inv_h = g.cells
    u = np.random.default_rng(0).random(g.n_dof)
    w = g.weights
    a, b = u[ci], np.where(cj >= 0, u[np.maximum(cj, 0)], 0.0)
    cases = {
        "kinetic": ((u, ci, cj, inv_h), K.np_kinetic, getattr(K, "nb_kinetic", None)),
        "stiffness_apply": ((u, ci, cj, inv_h), K.np_stiffness_apply, getattr(K, "nb_stiffness_apply", None)),
        "power_sum": ((u, w, 4.0), K.np_power_sum, getattr(K, "nb_power_sum", None)),
        "euclidean_gradient": ((u, ci, cj, inv_h, w, 4.0), K.np_euclidean_gradient,
                               getattr(K, "nb_euclidean_gradient", None)),
        "pl_power_integrals": ((a, b, h, 4.0), K.np_pl_power_integrals, getattr(K, "nb_pl_power_integrals", None)),
    }
    print(f"n_dof = {g.n_dof}, active backend = {K.backend()}")
    print(f"{'kernel':20s} {'numpy [us]':>12s} {'numba [us]':>12s} {'speedup':>8s}")
    for name, (fargs, f_np, f_nb) in cases.items():
        t_np = _time(f_np, fargs, args.repeat)
        if f_nb is None:
            print(f"{name:20s} {t_np * 1e6:12.1f} {'n/a':>12s}")
            continue
        t_nb = _time(f_nb, fargs, args.repeat)
        print(f"{name:20s} {t_np * 1e6:12.1f} {t_nb * 1e6:12.1f} {t_np / t_nb:8.2f}")


if __name__ == "__main__":
    main()
