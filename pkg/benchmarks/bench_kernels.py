"""Compare the compiled and numpy smooth-surrogate kernels.

Times one objective+gradient evaluation and a fixed-length descent on the
same problem with both backends, and checks they agree.

    python benchmarks/bench_kernels.py [--K 3 --N 3 --L 2] [--iters 2000] [--repeat 5]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from cranbf import _kernels_py, scfa
from cranbf.core import LinkMatrix, solve_p2
from cranbf.model import SystemParams, sample_feasible_problem


def _load_compiled():
    try:
        from cranbf import _ckernels
    except ImportError:
        return None
    return _ckernels


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--K", type=int, default=3)
    ap.add_argument("--N", type=int, default=3)
    ap.add_argument("--L", type=int, default=2)
    ap.add_argument("--iters", type=int, default=2000, help="descent iterations")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    compiled = _load_compiled()
    if compiled is None:
        print("compiled kernels not built; only the numpy backend is available")
    params = SystemParams(K=args.K, N=args.N, L=args.L)
    _, problem = sample_feasible_problem(params, np.random.default_rng(args.seed))
    cfg = scfa.ScfaConfig()
    kargs = scfa._args(problem, cfg)
    full = solve_p2(problem, LinkMatrix.full(args.K, args.N))
    W = full.beamformers.w.reshape(args.K, -1)  # the SCFA starting point

    backends = [("python", _kernels_py)] + ([("cython", compiled)] if compiled else [])
    # q_t = 0 disables early termination so every backend runs exactly --iters steps
    descent = (cfg.a0, cfg.mu1, args.iters, cfg.tau, cfg.xi, 0.0, cfg.delta_win)
    results = {}
    for name, mod in backends:
        def evaluate():
            mod.objective(W, 0.1, *kargs)
            mod.gradient(W, 0.1, *kargs)
        t_eval = min(timeit.repeat(evaluate, number=200, repeat=args.repeat)) / 200
        t_desc = min(timeit.repeat(lambda: mod.descend(W, *kargs, *descent), number=1,
                                   repeat=args.repeat))
        results[name] = (t_eval, t_desc, mod.descend(W, *kargs, *descent)[0])
        print(f"{name:7s} eval+grad {t_eval * 1e6:10.2f} us   descent({args.iters}) {t_desc:8.4f} s")

    if compiled is not None:
        py, cy = results["python"], results["cython"]
        print(f"speedup  eval+grad {py[0] / cy[0]:8.1f}x   descent {py[1] / cy[1]:8.1f}x")
        gp = _kernels_py.gradient(W, 0.1, *kargs)
        gc = compiled.gradient(W, 0.1, *kargs)
        print(f"gradient max rel diff {np.max(np.abs(gp - gc)) / np.max(np.abs(gp)):.2e}   "
              f"descent endpoint diff {np.max(np.abs(py[2] - cy[2])):.2e}")


if __name__ == "__main__":
    main()
