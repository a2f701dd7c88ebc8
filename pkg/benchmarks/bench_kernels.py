"""Time the compiled and NumPy likelihood kernels on simulation-sized inputs.

Usage::

    python benchmarks/bench_kernels.py [--repeat 20]

The inputs match one replicate of the concordance study: 90 panellists,
each rating 3 formulations on 2 attributes, 5-point scale.  Both backends
are also checked to agree before timing.
"""
import argparse
import timeit

import numpy as np

from sensilogit import kernels
from sensilogit.mixed import gauss_hermite


def make_inputs(n_groups=90, per_group=6, K=4, seed=0):
    rng = np.random.default_rng(seed)
    n = n_groups * per_group
    alpha = np.array([-2.0, -0.7, 0.7, 2.0])[:K]
    eta = alpha[None, :] + rng.normal(0, 1, (n, 1))
    y = rng.integers(1, K + 2, n).astype(np.int64)
    offsets = np.arange(0, n + 1, per_group, dtype=np.int64)
    return np.ascontiguousarray(eta), y, offsets


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--quad-order", type=int, default=10)
    args = ap.parse_args(argv)

    eta, y, offsets = make_inputs()
    rule = gauss_hermite(args.quad_order)
    calls = {
        "fixed": lambda m: m.fixed_loglik_grad(eta, y),
        "mixed": lambda m: m.mixed_loglik_grad(eta, y, offsets, 1.2, rule.nodes,
                                               rule.log_weights, True),
    }
    if "cython" not in kernels.BACKENDS:
        print("compiled extension not built; timing the NumPy backend only")
    ref = {k: f(kernels.BACKENDS["python"]) for k, f in calls.items()}
    if "cython" in kernels.BACKENDS:
        for k, f in calls.items():
            out = f(kernels.BACKENDS["cython"])
            assert abs(np.sum(out[0]) - np.sum(ref[k][0])) < 1e-9, k

    print(f"{'kernel':8s} {'backend':8s} {'ms/call':>10s}")
    times = {}
    for k, f in calls.items():
        for name, mod in kernels.BACKENDS.items():
            t = min(timeit.repeat(lambda: f(mod), number=5, repeat=args.repeat)) / 5
            times[k, name] = t
            print(f"{k:8s} {name:8s} {1e3 * t:10.3f}")
    if "cython" in kernels.BACKENDS:
        for k in calls:
            print(f"{k}: compiled is {times[k, 'python'] / times[k, 'cython']:.1f}x faster")


if __name__ == "__main__":
    main()
