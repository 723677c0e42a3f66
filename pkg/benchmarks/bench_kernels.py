"""Time the compiled and pure-Python kernels on the same posteriors.

Usage: ``python3 benchmarks/bench_kernels.py [--sweeps N] [--repeats R]``.
Prints one row per (problem, algorithm, backend) with seconds per sweep and
per-proposal throughput, plus the speed-up of the compiled kernel.
"""

import argparse
import time

import numpy as np

from cmrf import _backend
from cmrf.forward import build_operator
from cmrf.lattice import Lattice
from cmrf.posterior import Posterior
from cmrf.priors import PriorSpec
from cmrf.samplers import SamplerConfig, sample

PROBLEMS = {
    "1d-200 cauchy_diff1": (Lattice.line(67), Lattice.line(200), 1 / 500,
                            PriorSpec("cauchy_diff1_1d", lam=0.01, gamma=1.0)),
    "1d-200 cauchy_spde": (Lattice.line(67), Lattice.line(200), 1 / 500,
                           PriorSpec("cauchy_spde", ell=0.015 ** 2, xi=0.01, h_spde=1 / 199)),
    "2d-32 cauchy_iso1": (Lattice.grid(16), Lattice.grid(32), 1 / 100,
                          PriorSpec("cauchy_iso1_2d", lam=0.03, gamma=1.0)),
}


def build(data, recon, s, prior, seed=0):
    F = build_operator(data, recon, s)
    rng = np.random.default_rng(seed)
    y = F @ rng.normal(size=recon.size) + 0.01 * rng.normal(size=data.size)
    return Posterior(F, y, 0.01, prior)


def time_run(p, algorithm, sweeps, repeats):
    cfg = SamplerConfig(algorithm=algorithm, n_samples=sweeps, n_adapt=sweeps, seed=1)
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        chain = sample(p, np.zeros(p.dim), cfg)
        best = min(best, time.perf_counter() - start)
    return best / (2 * sweeps), chain


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sweeps", type=int, default=200)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args(argv)
    backends = ["python"] + (["compiled"] if _backend.compiled_kernels is not None else [])
    if len(backends) == 1:
        print("compiled kernels not built; timing the Python fallback only")
    previous = _backend.BACKEND
    print(f"{'problem':24s} {'algo':5s} {'backend':9s} {'ms/sweep':>10s} {'proposals/s':>12s} {'speed-up':>9s}")
    try:
        for name, spec in PROBLEMS.items():
            p = build(*spec)
            for algo in ("mwg", "ram"):
                times, chains = {}, {}
                for b in backends:
                    _backend.use(b)
                    times[b], chains[b] = time_run(p, algo, args.sweeps, args.repeats)
                    proposals = p.dim * (3 if algo == "ram" else 1)
                    ratio = times["python"] / times[b]
                    print(f"{name:24s} {algo:5s} {b:9s} {1e3 * times[b]:10.3f} "
                          f"{proposals / times[b]:12.0f} {ratio:8.1f}x")
                if len(chains) == 2 and not np.array_equal(chains["python"].samples,
                                                           chains["compiled"].samples):
                    raise SystemExit(f"backends disagree on {name} / {algo}")
    finally:
        _backend.use(previous)


if __name__ == "__main__":
    main()
