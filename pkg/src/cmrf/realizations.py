"""Prior realizations: Cauchy and Gaussian random walks and SPDE fields."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse.linalg as spla

from cmrf.lattice import Lattice
from cmrf.priors import PriorSpec, spde_matrix

log = logging.getLogger(__name__)

FAMILIES = ("cauchy", "gaussian")


@dataclass(frozen=True)
class NoiseSpec:
    """Symmetric stable noise: Cauchy (alpha=1) or Gaussian (alpha=2)."""

    family: str = "cauchy"
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if self.scale <= 0:
            raise ValueError("noise scale must be > 0")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def to_dict(self) -> dict:
        return asdict(self)


def cauchy_quantile(u, scale: float = 1.0):
    """Inverse CDF of the centred Cauchy law: ``scale * tan(pi (u - 1/2))``."""
    return scale * np.tan(np.pi * (np.asarray(u, dtype=np.float64) - 0.5))


def sample_cauchy(scale: float, rng: np.random.Generator, size=None):
    """Cauchy draws by the inverse-CDF method."""
    if scale <= 0:
        raise ValueError("scale must be > 0")
    out = cauchy_quantile(rng.random(size), scale)
    return float(out) if size is None else out


def _increments(noise: NoiseSpec, count: int, h: float, rng) -> np.ndarray:
    if noise.family == "cauchy":
        # alpha = 1: scale h^(1/alpha) = h
        return sample_cauchy(noise.scale * h, rng, count)
    return noise.scale * np.sqrt(h) * rng.standard_normal(count)


def random_walk_1d(order: int, noise: NoiseSpec, n: int, h: float,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Random walk of ``n`` nodes started at zero.

    Order 1 is the cumulative sum of ``n - 1`` iid increments. Order 2 is the
    integrated walk with ``u[0] = u[1] = 0`` whose second differences are the
    ``n - 2`` iid increments.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if n < 2:
        raise ValueError("need n >= 2")
    if h <= 0:
        raise ValueError("h must be > 0")
    rng = noise.rng() if rng is None else rng
    e = _increments(noise, n - order, h, rng)
    u = np.concatenate([np.zeros(order), e])
    for _ in range(order):
        u = np.cumsum(u)
    return u


def spde_operator(lattice: Lattice, ell: float, h: float | None = None):
    """Sparse ``(I - ell * Lap)`` with zero-Dirichlet extension."""
    if ell <= 0:
        raise ValueError("ell must be > 0")
    return spde_matrix(PriorSpec("gauss_spde", ell=ell, sigma_w=1.0, h_spde=h), lattice)


def solve_spde(A, m, tol: float = 1e-10) -> np.ndarray:
    """Direct sparse solve; conjugate gradients if the factorization fails."""
    m = np.asarray(m, dtype=np.float64)
    try:
        u = spla.splu(A.tocsc()).solve(m)
    except RuntimeError as err:
        log.warning("sparse LU failed (%s), falling back to conjugate gradients", err)
        u, info = spla.cg(A, m, rtol=tol, atol=0.0, maxiter=10 * A.shape[0])
        if info != 0:
            raise FloatingPointError(f"conjugate gradients did not converge (info={info})")
    return u


def spde_realization(lattice: Lattice, ell: float, noise: NoiseSpec, h: float | None = None,
                     normalize: bool = False, rng: np.random.Generator | None = None,
                     return_noise: bool = False):
    """Solve ``(I - ell Lap) u = m`` for iid noise ``m`` on every node.

    The noise scale is used verbatim per node, so Cauchy realizations depend
    on the mesh.
    """
    rng = noise.rng() if rng is None else rng
    A = spde_operator(lattice, ell, h)
    if noise.family == "cauchy":
        m = sample_cauchy(noise.scale, rng, lattice.size)
    else:
        m = noise.scale * rng.standard_normal(lattice.size)
    u = solve_spde(A, m)
    if normalize:
        u = normalize_max_abs(u)
    return (u, m) if return_noise else u


def normalize_max_abs(u) -> np.ndarray:
    """Rescale to unit max-abs (zero fields are returned unchanged)."""
    u = np.asarray(u, dtype=np.float64)
    peak = np.abs(u).max()
    return u / peak if peak > 0 else u.copy()
