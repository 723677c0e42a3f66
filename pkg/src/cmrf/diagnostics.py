"""Chain diagnostics: PSRF, autocorrelation, effective sample size and KDE."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np


def _as_matrix(chain) -> np.ndarray:
    x = getattr(chain, "samples", chain)
    x = np.asarray(x, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x


def psrf(chains, component: int | None = None, squared_v: bool = False):
    """Potential scale reduction factor.

    ``W`` is the mean of the unbiased within-chain variances and
    ``K = N_s / (N_c - 1) * sum (mean_i - mean)^2``; the result is
    ``sqrt(((N_s - 1) / N_s * W + K / N_s) / W)``. ``squared_v=True`` uses the
    square of the averaged within-chain variance in place of ``W`` instead.

    Parameters
    ----------
    chains : sequence of Chain or arrays
        Each of shape ``(N_s,)`` or ``(N_s, d)``; all the same shape.
    component : int, optional
        Return a scalar for this component; otherwise a length-``d`` vector.
    """
    mats = [_as_matrix(c) for c in chains]
    if len(mats) < 2:
        raise ValueError("PSRF needs at least two chains")
    if len({m.shape for m in mats}) != 1:
        raise ValueError("chains must have equal shapes")
    x = np.stack(mats)
    if component is not None:
        x = x[:, :, [component]]
    n_c, n_s, _ = x.shape
    if n_s < 2:
        raise ValueError("chains need at least two samples")
    within = x.var(axis=1, ddof=1)
    w = within.mean(axis=0)
    if np.any(w <= 0):
        raise ValueError("zero within-chain variance (degenerate chains)")
    if squared_v:
        w = w ** 2
    means = x.mean(axis=1)
    k = n_s / (n_c - 1) * ((means - means.mean(axis=0)) ** 2).sum(axis=0)
    r = np.sqrt(((n_s - 1) / n_s * w + k / n_s) / w)
    return float(r[0]) if component is not None else r


def _check_nonconstant(x):
    if x.ndim != 1 or x.shape[0] < 2:
        raise ValueError("expected a 1D chain with at least two samples")
    if np.all(x == x[0]):
        raise ValueError("constant chain has no autocorrelation")


def autocorr(chain, max_lag: int | None = None) -> np.ndarray:
    """Biased (``1/N``) normalized sample autocorrelation for lags ``0..max_lag``."""
    x = np.asarray(chain, dtype=np.float64)
    _check_nonconstant(x)
    n = x.shape[0]
    max_lag = n - 1 if max_lag is None else int(max_lag)
    if not 0 <= max_lag < n:
        raise ValueError("max_lag must lie in [0, len(chain))")
    y = x - x.mean()
    size = 1 << int(2 * n - 1).bit_length()
    f = np.fft.rfft(y, size)
    acov = np.fft.irfft(f * np.conj(f), size)[: max_lag + 1]
    return acov / acov[0]


def ess(chain, clamp: float = 10.0) -> float:
    """Effective sample size ``N / (1 + 2 sum rho_k)``.

    The sum stops before the first non-positive autocorrelation. The result is
    capped at ``clamp * N``.
    """
    x = np.asarray(chain, dtype=np.float64)
    rho = autocorr(x)
    n = x.shape[0]
    nonpos = np.flatnonzero(rho[1:] <= 0)
    stop = nonpos[0] + 1 if nonpos.size else n
    tau = 1.0 + 2.0 * rho[1:stop].sum()
    return float(min(n / tau, clamp * n))


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=np.float64)
    return 1.06 * x.std(ddof=1) * x.shape[0] ** -0.2


def kde(samples, eval_points, bandwidth: float | None = None, chunk: int = 2 ** 22) -> np.ndarray:
    """Gaussian kernel density estimate; Silverman bandwidth by default."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    t = np.asarray(eval_points, dtype=np.float64)
    if bandwidth is None:
        if np.unique(x).size < 2:
            raise ValueError("KDE needs at least two distinct samples")
        bandwidth = silverman_bandwidth(x)
    if bandwidth <= 0:
        raise ValueError("bandwidth must be > 0")
    flat = t.ravel()
    out = np.empty(flat.shape[0])
    step = max(1, chunk // max(1, x.shape[0]))
    for i in range(0, flat.shape[0], step):
        z = (flat[i:i + step, None] - x[None, :]) / bandwidth
        out[i:i + step] = np.exp(-0.5 * z * z).sum(axis=1)
    out /= x.shape[0] * bandwidth * np.sqrt(2 * np.pi)
    return out.reshape(t.shape)


@dataclass
class DiagnosticsReport:
    """Per-component PSRF, pooled ESS, ACF and posterior moments."""

    psrf: np.ndarray
    ess: np.ndarray
    acf: np.ndarray
    mean: np.ndarray
    variance: np.ndarray

    @classmethod
    def from_chains(cls, chains, max_lag: int = 50, squared_v: bool = False) -> "DiagnosticsReport":
        mats = [_as_matrix(c) for c in chains]
        x = np.stack(mats)
        n_c, n_s, d = x.shape
        r = psrf(mats, squared_v=squared_v) if n_c >= 2 else np.full(d, np.nan)
        lag = min(max_lag, n_s - 1)
        acf = np.empty((d, lag + 1))
        e = np.empty(d)
        for j in range(d):
            acf[j] = np.mean([autocorr(x[c, :, j], lag) for c in range(n_c)], axis=0)
            e[j] = min(sum(ess(x[c, :, j]) for c in range(n_c)), n_s * n_c)
        pooled = x.reshape(-1, d)
        return cls(r, e, acf, pooled.mean(axis=0), pooled.var(axis=0, ddof=1))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["component", "psrf", "ess", "mean", "variance"])
            for j in range(self.psrf.shape[0]):
                w.writerow([j, repr(float(self.psrf[j])), repr(float(self.ess[j])),
                            repr(float(self.mean[j])), repr(float(self.variance[j]))])

    def to_dict(self) -> dict:
        return {
            "psrf": self.psrf.tolist(), "ess": self.ess.tolist(), "acf": self.acf.tolist(),
            "mean": self.mean.tolist(), "variance": self.variance.tolist(),
            "max_psrf": float(np.nanmax(self.psrf)) if np.isfinite(self.psrf).any() else None,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
