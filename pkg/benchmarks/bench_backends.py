"""Time the numba kernels against the pure-numpy fallback.

Each backend runs in its own interpreter because the choice is fixed at
import time by ``L0NSAF_DISABLE_JIT``. Usage::

    python benchmarks/bench_backends.py [--T 40000] [--L 100] [--N 4] [--repeat 3]
"""

import argparse
import json
import os
import subprocess
import sys

import numpy as np

_WORKER = r"""
import json, sys, time
import numpy as np
from l0nsaf import BACKEND
from l0nsaf.engine import AlgoConfig, ResetConfig
from l0nsaf.filterbank import make_bank
from l0nsaf.signals import gen_ar1, gen_sparse_system, system_output
from l0nsaf.stream import prepare, run_filter

T, L, N, repeat = (int(a) for a in sys.argv[1:5])
x = gen_ar1(T, 0)
h = gen_sparse_system(L, 4, 0).coeffs
d = system_output(x, h) + 0.01 * np.random.default_rng(1).standard_normal(T)
prep = prepare(make_bank(N), x, d, L)
cfgs = [AlgoConfig(mode="fixed", mu=0.2, rho=1e-5),
        AlgoConfig(mode="vss_known", noise_var=1e-4, rho=4e-5, r=1.4, reset=ResetConfig.default(L)),
        AlgoConfig(mode="vss_unknown", rho=1e-4, r=1.8, reset=ResetConfig.default(L))]
t0 = time.perf_counter()
for c in cfgs:
    run_filter(prep, c, h)
warm = time.perf_counter() - t0
best = float("inf")
for _ in range(repeat):
    t0 = time.perf_counter()
    out = [run_filter(prep, c, h) for c in cfgs]
    best = min(best, time.perf_counter() - t0)
print(json.dumps({"backend": BACKEND, "first_s": warm, "best_s": best,
                  "w": [o.w.tolist() for o in out]}))
"""


def run_backend(disable_jit, args):
    env = dict(os.environ)
    env.pop("L0NSAF_DISABLE_JIT", None)
    if disable_jit:
        env["L0NSAF_DISABLE_JIT"] = "1"
    argv = [sys.executable, "-c", _WORKER, str(args.T), str(args.L), str(args.N), str(args.repeat)]
    out = subprocess.run(argv, env=env, check=True, capture_output=True, text=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--T", type=int, default=40000)
    ap.add_argument("--L", type=int, default=100)
    ap.add_argument("--N", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    jit = run_backend(False, args)
    ref = run_backend(True, args)
    dev = max(float(np.max(np.abs(np.subtract(a, b)))) for a, b in zip(jit["w"], ref["w"]))
    frames = 3 * (args.T // args.N)
    print(f"workload: 3 filters x {args.T // args.N} decimated steps (L={args.L}, N={args.N})")
    for r in (jit, ref):
        print(f"  {r['backend']:<6s} first call {r['first_s']:7.2f} s   "
              f"best {r['best_s']:7.3f} s   {frames / r['best_s']:10.0f} steps/s")
    if jit["backend"] == "numba":
        print(f"  speed-up {ref['best_s'] / jit['best_s']:.1f}x")
    print(f"  max final-weight difference {dev:.1e}")


if __name__ == "__main__":
    main()
