import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cmrf.lattice import Lattice  # noqa: E402
from cmrf.priors import PriorSpec  # noqa: E402

# Moderate parameters keep every term well conditioned for finite differences.
SPECS_1D = {
    "cauchy_diff1_1d": PriorSpec("cauchy_diff1_1d", lam=0.3, gamma=1.0),
    "cauchy_diff2_1d": PriorSpec("cauchy_diff2_1d", lam=0.2, gamma=1.0, gamma_prime=0.5),
    "cauchy_spde": PriorSpec("cauchy_spde", ell=2e-4, xi=0.7),
    "cauchy_laplace_only": PriorSpec("cauchy_laplace_only", ell=-6.1e-3, xi=0.7),
    "gauss_spde": PriorSpec("gauss_spde", ell=2e-4, sigma_w=1.3),
    "gauss_diff1": PriorSpec("gauss_diff1", sigma0=2.0, sigma1=0.4),
    "gauss_diff2": PriorSpec("gauss_diff2", sigma0=2.0, sigma1=0.5, sigma2=0.3),
    "tv1": PriorSpec("tv1", zeta=1.5, zeta_prime=0.2, delta=0.3),
    "tv2": PriorSpec("tv2", zeta=1.5, zeta_prime=0.2, psi=0.1, delta=0.3),
}

SPECS_2D = {
    "cauchy_iso1_2d": PriorSpec("cauchy_iso1_2d", lam=0.3, gamma=1.0),
    "cauchy_aniso1_2d": PriorSpec("cauchy_aniso1_2d", lam=0.3, gamma=1.0),
    "cauchy_iso2_2d": PriorSpec("cauchy_iso2_2d", lam=0.2, gamma=1.0, gamma_prime=0.5),
    "cauchy_aniso2_2d": PriorSpec("cauchy_aniso2_2d", lam=0.2, gamma=1.0, gamma_prime=0.5),
    "cauchy_sheet": PriorSpec("cauchy_sheet", lam=0.3, gamma=1.0),
    "cauchy_spde": PriorSpec("cauchy_spde", ell=1e-3, xi=0.7),
    "cauchy_laplace_only": PriorSpec("cauchy_laplace_only", ell=-6.1e-3, xi=0.7),
    "gauss_spde": PriorSpec("gauss_spde", ell=1e-3, sigma_w=1.3),
    "gauss_diff1": PriorSpec("gauss_diff1", sigma0=2.0, sigma1=0.4),
    "gauss_diff2": PriorSpec("gauss_diff2", sigma0=2.0, sigma1=0.5, sigma2=0.3),
    "tv1": PriorSpec("tv1", zeta=1.5, zeta_prime=0.2, delta=0.3),
    "tv2": PriorSpec("tv2", zeta=1.5, zeta_prime=0.2, psi=0.1, delta=0.3),
}

# Every (lattice, spec) case; the 14 named variants each appear at least once.
CASES = ([(f"{k}-1d", Lattice.line(50), s) for k, s in SPECS_1D.items()]
         + [(f"{k}-2d", Lattice.grid(16), s) for k, s in SPECS_2D.items()])
CASE_IDS = [c[0] for c in CASES]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_posterior(lattice, spec, seed=0, sigma=0.05):
    """Blur posterior on a coarser data grid with synthetic data."""
    from cmrf.forward import build_operator
    from cmrf.posterior import Posterior

    data = Lattice.line(20) if lattice.dims == 1 else Lattice.grid(8)
    s = 1 / 200 if lattice.dims == 1 else 1 / 100
    F = build_operator(data, lattice, s)
    r = np.random.default_rng(seed)
    y = F @ r.normal(size=lattice.size) + sigma * r.normal(size=data.size)
    return Posterior(F, y, sigma, spec)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        status, title, seconds, detail = mod.RESULTS[number]
        info = ", ".join(f"{k}={_fmt(v)}" for k, v in detail.items())
        tr.write_line(f"criterion {number:2d} {status}  {title} ({seconds:.1f} s) {info}")


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)
