"""Time the cost-effective greedy on random instances, per backend and strategy.

Example::

    python benchmarks/bench_ceg.py --sizes 200 500 1000 --repeat 3
"""
import argparse
import time

import numpy as np

from weakfuse.selection import BACKENDS, ceg, cosine_kernel, normalized_costs


def make_instance(n, dim, n_classes, rng):
    feats = rng.normal(size=(n, dim))
    post = rng.dirichlet(np.full(n_classes, 0.5), size=n)
    return cosine_kernel(feats), normalized_costs(post).costs


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[200, 500, 1000])
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--eta", type=float, default=0.8)
    p.add_argument("--gamma", type=float, default=3.0)
    p.add_argument("--ratio-mode", choices=["per_cost", "uniform"], default="per_cost")
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--skip-naive-above", type=int, default=1000,
                   help="skip the naive greedy for larger n (it is quadratic per step)")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    backends = sorted(BACKENDS)
    print(f"backends available: {backends}")
    print(f"{'n':>6} {'backend':>8} {'strategy':>8} {'seconds':>10} {'|S|':>6}")
    for n in args.sizes:
        kernel, costs = make_instance(n, args.dim, args.classes, rng)
        budget = args.eta * costs.sum()
        reference = None
        for backend in backends:
            for lazy in (True, False):
                if not lazy and n > args.skip_naive_above:
                    continue
                secs, res = best_time(
                    lambda: ceg(kernel, costs, budget, args.gamma, args.ratio_mode,
                                lazy=lazy, backend=backend),
                    args.repeat,
                )
                if reference is None:
                    reference = res.indices
                elif res.indices != reference:
                    raise SystemExit(f"n={n}: {backend} lazy={lazy} disagrees with the first run")
                print(f"{n:>6} {backend:>8} {'lazy' if lazy else 'naive':>8} {secs:>10.4f} {len(res.indices):>6}")


if __name__ == "__main__":
    main()
