"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N] [--json FILE]
"""
import argparse
import json
import sys
import timeit

import numpy as np

from definetti import BandPolicy, BarrierPolicy, SimConfig
from definetti._backend import available
from definetti.hjb import _coefficients, jump_weights
from definetti.montecarlo import path_stream, _bands, _jump_params
from definetti.reproduce import am_model, brownian_model


def cases():
    am = am_model()
    t = np.linspace(0.05, 20.0, 40)

    n, h = 2000, 30.0 / 2000
    w, e = jump_weights(am, n, h)
    coef = _coefficients(am, 0.1, h, "upwind")
    x = np.arange(n + 1) * h
    pay = ((x < 1.8) | (x > 10.2)).astype(np.uint8)
    pay[0] = 0
    v = np.linspace(2.0, 40.0, n + 1)

    def sim(kern, model, policy, paths):
        cfg = SimConfig(model, 5.0, policy, q=0.1, paths=paths, seed=1)
        lam, k, mu = _jump_params(model)
        bb, ba = _bands(policy)
        args = (model.sigma, model.drift, lam, k, mu, 5.0, cfg.horizon, cfg.step, 0.1,
                bb, ba, True, np.inf)
        def run():
            for i in range(paths):
                kern.simulate_path(path_stream(1, i), *args)
        return run

    return {
        "talbot (64 nodes, 40 points)":
            lambda kern: lambda: kern.talbot_tilted(0.0, 21.4, 10.0, 1.0, 2, 0.0396, 0.1, t, 64),
        "jump_integrals (n=2000)":
            lambda kern: lambda: kern.jump_integrals(w, e, v),
        "evaluate_policy (n=2000)":
            lambda kern: lambda: kern.evaluate_policy(pay, w, e, *coef[:2], coef[2], am.lam, h,
                                                      False),
        "simulate_path CL bands (200 paths)":
            lambda kern: sim(kern, am, BandPolicy(((0.0, 0.0), (1.805, 10.22))), 200),
        "simulate_path Brownian barrier (50 paths)":
            lambda kern: sim(kern, brownian_model(), BarrierPolicy(2.82), 50),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--json", help="write timings to this file")
    args = p.parse_args(argv)
    kernels = available()
    if "compiled" not in kernels:
        print("compiled core not built; nothing to compare", file=sys.stderr)
        return 1
    rows = []
    print(f"{'kernel':44s} {'compiled':>12s} {'python':>12s} {'speedup':>9s}")
    for name, make in cases().items():
        best = {}
        for label in ("compiled", "python"):
            fn = make(kernels[label])
            fn()  # warm up
            best[label] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        ratio = best["python"] / best["compiled"]
        rows.append({"kernel": name, **best, "speedup": ratio})
        print(f"{name:44s} {best['compiled']*1e3:10.2f}ms {best['python']*1e3:10.2f}ms "
              f"{ratio:8.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
