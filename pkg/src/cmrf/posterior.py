"""Gaussian-likelihood posterior with cached residuals for single-site updates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from cmrf import _backend
from cmrf.forward import ForwardOperator, grad_log_likelihood, log_likelihood
from cmrf.lattice import Lattice, check_field
from cmrf.priors import PriorSpec, TermTable, build_terms

REFRESH_EVERY = 10_000


@dataclass(frozen=True, eq=False)
class Posterior:
    """``log pi(u | y) = -|y - F u|^2 / (2 sigma^2) + log pi(u)`` (unnormalized)."""

    operator: ForwardOperator
    y: np.ndarray
    sigma: float
    prior: PriorSpec
    terms: TermTable = field(init=False, repr=False)

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        object.__setattr__(self, "y", y)
        if self.sigma <= 0:
            raise ValueError("noise level sigma must be > 0")
        if y.shape[0] != self.operator.shape[0]:
            raise ValueError(f"y has {y.shape[0]} entries, operator has {self.operator.shape[0]} rows")
        object.__setattr__(self, "terms", build_terms(self.prior, self.operator.recon_grid))

    @property
    def lattice(self) -> Lattice:
        return self.operator.recon_grid

    @property
    def dim(self) -> int:
        return self.operator.shape[1]

    @property
    def inv_sigma2(self) -> float:
        return 1.0 / self.sigma ** 2

    def log_likelihood(self, u) -> float:
        return log_likelihood(self.operator, self.y, u, self.sigma)

    def log_prior(self, u) -> float:
        return self.terms.value(check_field(self.lattice, u))

    def log_density(self, u) -> float:
        u = check_field(self.lattice, u)
        return self.log_likelihood(u) + self.terms.value(u)

    def log_density_batch(self, U) -> np.ndarray:
        """Log posterior of every row of ``U`` (shape ``(B, dim)``)."""
        U = np.asarray(U, dtype=np.float64)
        if U.ndim != 2 or U.shape[1] != self.dim:
            raise ValueError(f"expected shape (B, {self.dim}), got {U.shape}")
        if not np.all(np.isfinite(U)):
            raise ValueError("fields contain non-finite values")
        R = self.y[:, None] - self.operator.matrix @ U.T
        return -0.5 * self.inv_sigma2 * np.einsum("ib,ib->b", R, R) + self.terms.values(U)

    def grad_log_density(self, u) -> np.ndarray:
        u = check_field(self.lattice, u)
        return grad_log_likelihood(self.operator, self.y, u, self.sigma) + self.terms.gradient(u)

    def value_and_grad(self, u) -> tuple[float, np.ndarray]:
        """Log posterior and its gradient sharing one residual evaluation."""
        u = check_field(self.lattice, u)
        r = self.y - self.operator @ u
        value = -(r @ r) * 0.5 * self.inv_sigma2 + self.terms.value(u)
        grad = self.operator.rmatvec(r) * self.inv_sigma2 + self.terms.gradient(u)
        return float(value), grad

    def new_state(self, u) -> "CachedState":
        return CachedState(self, check_field(self.lattice, u).copy())


class CachedState:
    """Current field plus residual ``r = y - F u`` and both log-density parts.

    Single-chain, single-thread object. The residual is recomputed from scratch
    every ``REFRESH_EVERY`` commits to bound floating-point drift.
    """

    def __init__(self, posterior: Posterior, u: np.ndarray):
        self.posterior = posterior
        self.u = np.ascontiguousarray(u, dtype=np.float64)
        self.refresh()

    def refresh(self) -> None:
        p = self.posterior
        self.residual = np.ascontiguousarray(p.y - p.operator @ self.u)
        self.loglik = float(-(self.residual @ self.residual) * 0.5 * p.inv_sigma2)
        self.logprior = p.terms.value(self.u)
        self._since_refresh = 0

    @property
    def log_density(self) -> float:
        return self.loglik + self.logprior

    def _check_site(self, site):
        if not 0 <= site < self.u.shape[0]:
            raise IndexError(f"site {site} out of range for field of size {self.u.shape[0]}")

    def delta_parts(self, site: int, new_value: float) -> tuple[float, float]:
        self._check_site(site)
        p = self.posterior
        ptr, idx, val, sq = p.operator.columns
        k = _backend.kernels
        dl = k.lik_site_delta(ptr, idx, val, sq, self.residual, p.inv_sigma2, int(site),
                              float(new_value) - float(self.u[site]))
        dp = k.prior_site_delta(*p.terms.arrays, self.u, int(site), float(new_value))
        return dl, dp

    def delta(self, site: int, new_value: float) -> float:
        """Change of the log posterior if ``u[site]`` became ``new_value``; no mutation."""
        dl, dp = self.delta_parts(site, new_value)
        return dl + dp

    def commit(self, site: int, new_value: float) -> None:
        dl, dp = self.delta_parts(site, new_value)
        rows, vals = self.posterior.operator.column(site)
        self.residual[rows] -= vals * (float(new_value) - self.u[site])
        self.u[site] = new_value
        self.loglik += dl
        self.logprior += dp
        self.note_commits(1)

    def note_commits(self, count: int) -> None:
        self._since_refresh += count
        if self._since_refresh >= REFRESH_EVERY:
            self.refresh()

    def delta_block(self, sites, values) -> float:
        sites = np.asarray(sites, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        p = self.posterior
        F = p.operator.matrix
        du = values - self.u[sites]
        r_new = self.residual - F[:, sites] @ du
        dl = -0.5 * p.inv_sigma2 * (r_new @ r_new - self.residual @ self.residual)
        u_tmp = self.u.copy()
        dp = 0.0
        for s, v in zip(sites, values):
            dp += p.terms.site_delta(u_tmp, int(s), float(v))
            u_tmp[s] = v
        return float(dl + dp)

    def commit_block(self, sites, values) -> None:
        for s, v in zip(np.asarray(sites), np.asarray(values, dtype=np.float64)):
            self.commit(int(s), float(v))


def log_post(p: Posterior, u) -> float:
    return p.log_density(u)


def grad_log_post(p: Posterior, u) -> np.ndarray:
    return p.grad_log_density(u)


def delta_log_post(state: CachedState, p: Posterior, site: int, new_value: float) -> float:
    if state.posterior is not p:
        raise ValueError("state belongs to a different posterior")
    return state.delta(site, new_value)


def commit(state: CachedState, p: Posterior, site: int, new_value: float) -> None:
    if state.posterior is not p:
        raise ValueError("state belongs to a different posterior")
    state.commit(site, new_value)


class DensityTarget:
    """Wrap an arbitrary log density (and optional gradient) for the samplers.

    Single-site deltas are full recomputes, so this is meant for small
    analytic test targets.
    """

    def __init__(self, logpdf, dim: int, grad=None):
        self._logpdf = logpdf
        self._grad = grad
        self.dim = int(dim)

    def log_density(self, u) -> float:
        return float(self._logpdf(np.asarray(u, dtype=np.float64)))

    def log_density_batch(self, U) -> np.ndarray:
        """Log posterior of every row of ``U`` (shape ``(B, dim)``)."""
        U = np.asarray(U, dtype=np.float64)
        if U.ndim != 2 or U.shape[1] != self.dim:
            raise ValueError(f"expected shape (B, {self.dim}), got {U.shape}")
        if not np.all(np.isfinite(U)):
            raise ValueError("fields contain non-finite values")
        R = self.y[:, None] - self.operator.matrix @ U.T
        return -0.5 * self.inv_sigma2 * np.einsum("ib,ib->b", R, R) + self.terms.values(U)

    def grad_log_density(self, u) -> np.ndarray:
        if self._grad is None:
            raise NotImplementedError("this target has no gradient")
        return np.asarray(self._grad(np.asarray(u, dtype=np.float64)), dtype=np.float64)

    def value_and_grad(self, u) -> tuple[float, np.ndarray]:
        return self.log_density(u), self.grad_log_density(u)

    def new_state(self, u) -> "DensityState":
        return DensityState(self, np.array(u, dtype=np.float64))


class DensityState:
    def __init__(self, target: DensityTarget, u: np.ndarray):
        self.target = target
        self.u = u
        self.value = target.log_density(u)

    @property
    def log_density(self) -> float:
        return self.value

    def delta_block(self, sites, values) -> float:
        trial = self.u.copy()
        trial[np.asarray(sites)] = values
        return self.target.log_density(trial) - self.value

    def delta(self, site: int, new_value: float) -> float:
        return self.delta_block([site], [new_value])

    def commit_block(self, sites, values) -> None:
        self.u[np.asarray(sites)] = values
        self.value = self.target.log_density(self.u)

    def commit(self, site: int, new_value: float) -> None:
        self.commit_block([site], [new_value])

    def note_commits(self, count: int) -> None:
        pass
