"""Unnormalized log prior densities on lattices.

Every prior here is a sum of local terms. A term reads one or two short
linear stencils ``a = sum_k c_k u[i_k]`` (and ``b``) of the field and
contributes one of

* ``LOG``  : ``-w * log(s**2 + a**2 + b**2)``   (Cauchy, bivariate Cauchy with w=3/2)
* ``QUAD`` : ``-w * (a**2 + b**2)``             (Gaussian, w = 1 / (2 sigma**2))
* ``SQRT`` : ``-w * sqrt(s**2 + a**2 + b**2)``  (Charbonnier-smoothed TV)

:func:`build_terms` compiles a :class:`PriorSpec` on a :class:`Lattice` into a
:class:`TermTable`; evaluation, gradients and single-site deltas all run off
that table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from cmrf import _backend
from cmrf.lattice import Lattice, check_field

LOG, QUAD, SQRT = 0, 1, 2
MAX_WIDTH = 5

DIFFERENCE_1D = ("cauchy_diff1_1d", "cauchy_diff2_1d")
DIFFERENCE_2D = ("cauchy_iso1_2d", "cauchy_aniso1_2d", "cauchy_iso2_2d", "cauchy_aniso2_2d",
                 "cauchy_sheet")
SPDE = ("cauchy_spde", "cauchy_laplace_only", "gauss_spde")
COMPARISON = ("gauss_diff1", "gauss_diff2", "tv1", "tv2")
VARIANTS = DIFFERENCE_1D + DIFFERENCE_2D + SPDE + COMPARISON + ("flat",)

_REQUIRED = {
    "cauchy_diff1_1d": ("lam", "gamma"),
    "cauchy_diff2_1d": ("lam", "gamma", "gamma_prime"),
    "cauchy_iso1_2d": ("lam", "gamma"),
    "cauchy_aniso1_2d": ("lam", "gamma"),
    "cauchy_iso2_2d": ("lam", "gamma", "gamma_prime"),
    "cauchy_aniso2_2d": ("lam", "gamma", "gamma_prime"),
    "cauchy_sheet": ("lam", "gamma"),
    "cauchy_spde": ("ell", "xi"),
    "cauchy_laplace_only": ("ell", "xi"),
    "gauss_spde": ("ell", "sigma_w"),
    "gauss_diff1": ("sigma0", "sigma1"),
    "gauss_diff2": ("sigma0", "sigma1", "sigma2"),
    "tv1": ("zeta", "zeta_prime", "delta"),
    "tv2": ("zeta", "zeta_prime", "psi", "delta"),
    "flat": (),
}

# JSON key -> attribute name; "lambda" is a Python keyword.
_JSON_KEYS = {"lambda": "lam"}


@dataclass(frozen=True)
class PriorSpec:
    """Prior family plus its scalar parameters.

    Parameter roles: ``lam`` increment scale, ``gamma``/``gamma_prime``
    boundary scales, ``ell`` SPDE length parameter, ``xi`` SPDE Cauchy noise
    scale, ``sigma0``..``sigma2``/``sigma_w`` Gaussian std-devs, ``zeta``,
    ``zeta_prime``, ``psi`` TV rates, ``delta`` Charbonnier smoothing and
    ``h_spde`` the SPDE stencil spacing (defaults to the lattice spacing).
    """

    variant: str
    lam: float | None = None
    gamma: float | None = None
    gamma_prime: float | None = None
    ell: float | None = None
    xi: float | None = None
    sigma0: float | None = None
    sigma1: float | None = None
    sigma2: float | None = None
    sigma_w: float | None = None
    zeta: float | None = None
    zeta_prime: float | None = None
    psi: float | None = None
    delta: float | None = None
    h_spde: float | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown prior variant {self.variant!r}")
        for name in _REQUIRED[self.variant]:
            value = getattr(self, name)
            if value is None:
                raise ValueError(f"{self.variant} needs parameter {name!r}")
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
            if name == "ell":
                if value == 0 or (value < 0 and self.variant != "cauchy_laplace_only"):
                    raise ValueError(f"ell must be > 0 for {self.variant}")
            elif value <= 0:
                raise ValueError(f"{name} must be strictly positive, got {value}")
        if self.h_spde is not None and self.h_spde <= 0:
            raise ValueError("h_spde must be > 0")

    def to_dict(self) -> dict:
        out = {"variant": self.variant}
        inverse = {v: k for k, v in _JSON_KEYS.items()}
        for f in fields(self)[1:]:
            value = getattr(self, f.name)
            if value is not None:
                out[inverse.get(f.name, f.name)] = value
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSpec":
        kwargs = {}
        known = {f.name for f in fields(cls)}
        for key, value in d.items():
            name = _JSON_KEYS.get(key, key)
            if name not in known:
                raise ValueError(f"unknown prior parameter {key!r}")
            kwargs[name] = value if name == "variant" or value is None else float(value)
        return cls(**kwargs)


@dataclass(frozen=True, eq=False)
class TermTable:
    """Flattened local terms of a prior, plus the site -> term incidence."""

    lattice: Lattice
    kind: np.ndarray      # (T,) int32
    weight: np.ndarray    # (T,)
    scale: np.ndarray     # (T,)
    width: np.ndarray     # (T, 2) int32, active stencil entries per component
    idx: np.ndarray       # (T, 2, MAX_WIDTH) int64
    coef: np.ndarray      # (T, 2, MAX_WIDTH)
    site_ptr: np.ndarray  # (n + 1,) int64
    site_term: np.ndarray  # (E,) int64
    site_coef: np.ndarray  # (E, 2), summed coefficient of the site per component
    _arrays: tuple = field(init=False, repr=False)
    _groups: tuple = field(init=False, repr=False)
    _stencil_ops: tuple = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_arrays", (
            self.kind, self.weight, self.scale, self.width, self.idx, self.coef,
            self.site_ptr, self.site_term, self.site_coef))
        # term indices of each kind, with their weights and squared scales
        object.__setattr__(self, "_groups", tuple(
            (k, t, self.weight[t], self.scale[t] ** 2)
            for k in (LOG, QUAD, SQRT) for t in [np.flatnonzero(self.kind == k)] if t.size))
        # one sparse (T, n) matrix per stencil component, padding dropped
        n, T = self.lattice.size, self.kind.shape[0]
        active = np.arange(MAX_WIDTH)[None, :] < self.width[:, :, None]
        rows = np.broadcast_to(np.arange(T)[:, None], (T, MAX_WIDTH))
        object.__setattr__(self, "_stencil_ops", tuple(
            sp.csr_matrix((self.coef[:, c][active[:, c]],
                           (rows[active[:, c]], self.idx[:, c][active[:, c]])), shape=(T, n))
            for c in range(2)))

    @property
    def n_terms(self) -> int:
        return int(self.kind.shape[0])

    @property
    def arrays(self) -> tuple:
        return self._arrays

    def stencils(self, u: np.ndarray) -> np.ndarray:
        s0, s1 = self._stencil_ops
        return np.stack([s0 @ u, s1 @ u], axis=1)

    def _total(self, q: np.ndarray):
        """Sum of the terms given squared stencil norms ``q`` of shape ``(..., T)``."""
        total = 0.0
        for k, t, w, s2 in self._groups:
            if k == LOG:
                total = total - np.log(s2 + q[..., t]) @ w
            elif k == SQRT:
                total = total - np.sqrt(s2 + q[..., t]) @ w
            else:
                total = total - q[..., t] @ w
        return total

    def value(self, u: np.ndarray) -> float:
        if self.n_terms == 0:
            return 0.0
        a = self.stencils(u)
        return float(self._total(a[:, 0] ** 2 + a[:, 1] ** 2))

    def values(self, U: np.ndarray) -> np.ndarray:
        """:meth:`value` for every row of ``U`` (shape ``(B, n)``)."""
        if self.n_terms == 0:
            return np.zeros(U.shape[0])
        s0, s1 = self._stencil_ops
        a0, a1 = (s0 @ U.T).T, (s1 @ U.T).T
        return np.asarray(self._total(a0 ** 2 + a1 ** 2), dtype=np.float64)

    def gradient(self, u: np.ndarray) -> np.ndarray:
        if self.n_terms == 0:
            return np.zeros_like(u)
        a = self.stencils(u)
        r = self.scale ** 2 + a[:, 0] ** 2 + a[:, 1] ** 2
        # d(term)/da_c = -w * factor * a_c
        factor = np.full(r.shape, 2.0)
        m = self.kind == LOG
        factor[m] = 2.0 / r[m]
        m = self.kind == SQRT
        factor[m] = 1.0 / np.sqrt(r[m])
        da = -(self.weight * factor)[:, None] * a
        s0, s1 = self._stencil_ops
        return s0.T @ da[:, 0] + s1.T @ da[:, 1]

    def site_delta(self, u: np.ndarray, site: int, new_value: float) -> float:
        return _backend.kernels.prior_site_delta(*self._arrays, u, int(site), float(new_value))


class _TermBuilder:
    def __init__(self, lattice: Lattice):
        self.lattice = lattice
        self.groups = []

    def add(self, kind, weight, scale, form_a, form_b=None):
        """Append a group of terms; a form is ``(idx (T, w), coef (w,) or (T, w))``."""
        idx_a, coef_a = form_a
        idx_a = np.atleast_2d(np.asarray(idx_a, dtype=np.int64))
        if idx_a.shape[0] == 0 or idx_a.size == 0:
            return
        self.groups.append((kind, weight, scale, (idx_a, np.asarray(coef_a, float)),
                            None if form_b is None else
                            (np.atleast_2d(np.asarray(form_b[0], dtype=np.int64)),
                             np.asarray(form_b[1], float))))

    def build(self) -> TermTable:
        n = self.lattice.size
        T = sum(g[3][0].shape[0] for g in self.groups)
        kind = np.zeros(T, np.int32)
        weight = np.zeros(T)
        scale = np.zeros(T)
        width = np.zeros((T, 2), np.int32)
        idx = np.zeros((T, 2, MAX_WIDTH), np.int64)
        coef = np.zeros((T, 2, MAX_WIDTH))
        t0 = 0
        for g_kind, g_w, g_s, form_a, form_b in self.groups:
            m = form_a[0].shape[0]
            sl = slice(t0, t0 + m)
            kind[sl], weight[sl], scale[sl] = g_kind, g_w, g_s
            for c, form in enumerate((form_a, form_b)):
                if form is None:
                    continue
                fi, fc = form
                w = fi.shape[1]
                idx[sl, c, :w] = fi
                coef[sl, c, :w] = fc
                width[sl, c] = w
            t0 += m
        # Padding slots keep idx 0 and coef 0, so they never contribute.
        rows, comps, ks = np.nonzero(coef != 0.0)
        sites = idx[rows, comps, ks]
        pair = np.unique(sites * max(T, 1) + rows)
        p_site, p_term = pair // max(T, 1), pair % max(T, 1)
        site_ptr = np.zeros(n + 1, np.int64)
        np.add.at(site_ptr, p_site + 1, 1)
        site_ptr = np.cumsum(site_ptr)
        site_coef = np.zeros((p_term.shape[0], 2))
        # position of (site, term) in the sorted pair list
        pos = np.searchsorted(pair, sites * max(T, 1) + rows)
        np.add.at(site_coef, (pos, comps), coef[rows, comps, ks])
        return TermTable(self.lattice, kind, weight, scale, width, idx, coef,
                         site_ptr, p_term.astype(np.int64), site_coef)


def _check_dims(spec: PriorSpec, lattice: Lattice):
    if spec.variant in DIFFERENCE_1D and lattice.dims != 1:
        raise ValueError(f"{spec.variant} needs a 1D lattice")
    if spec.variant in DIFFERENCE_2D and lattice.dims != 2:
        raise ValueError(f"{spec.variant} needs a 2D lattice")


def _first_diffs_2d(lattice):
    nx, ny = lattice.shape
    i, j = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="ij")
    i, j = i.ravel(), j.ravel()
    c = i * ny + j
    dh = (np.column_stack([c + ny, c]), (1.0, -1.0))
    dv = (np.column_stack([c + 1, c]), (1.0, -1.0))
    return dh, dv


def _second_diffs_2d(lattice):
    nx, ny = lattice.shape
    i, j = np.meshgrid(np.arange(1, nx - 1), np.arange(1, ny - 1), indexing="ij")
    c = (i * ny + j).ravel()
    dhh = (np.column_stack([c + ny, c, c - ny]), (1.0, -2.0, 1.0))
    dvv = (np.column_stack([c + 1, c, c - 1]), (1.0, -2.0, 1.0))
    return dhh, dvv


def _boundary_values(lattice):
    return (lattice.boundary_indices()[:, None], (1.0,))


def _boundary_to_interior(lattice):
    b, nn = lattice.nearest_interior_map()
    return (np.column_stack([b, nn]), (1.0, -1.0))


def _spde_stencil(spec: PriorSpec, lattice: Lattice):
    """Rows of ``(I - ell*Lap)`` (identity dropped for the Laplace-only form)
    with zero-Dirichlet extension, as one stencil per node."""
    h = spec.h_spde if spec.h_spde is not None else lattice.h
    r = spec.ell / h ** 2
    d = lattice.dims
    centre = 2 * d * r + (0.0 if spec.variant == "cauchy_laplace_only" else 1.0)
    n = lattice.size
    grid = np.arange(n).reshape(lattice.shape)
    idx = np.zeros((n, 1 + 2 * d), np.int64)
    coef = np.zeros((n, 1 + 2 * d))
    idx[:, 0] = np.arange(n)
    coef[:, 0] = centre
    col = 1
    for axis in range(d):
        for shift in (1, -1):
            nb = np.full(lattice.shape, -1, np.int64)
            src = [slice(None)] * d
            dst = [slice(None)] * d
            if shift == 1:
                dst[axis], src[axis] = slice(0, -1), slice(1, None)
            else:
                dst[axis], src[axis] = slice(1, None), slice(0, -1)
            nb[tuple(dst)] = grid[tuple(src)]
            nb = nb.ravel()
            ok = nb >= 0
            idx[ok, col] = nb[ok]
            coef[ok, col] = -r
            col += 1
    return idx, coef


def spde_matrix(spec: PriorSpec, lattice: Lattice):
    """Sparse matrix ``A`` with ``p = A @ u`` for the SPDE priors."""
    idx, coef = _spde_stencil(spec, lattice)
    n = lattice.size
    rows = np.repeat(np.arange(n), idx.shape[1])
    A = sp.csr_matrix((coef.ravel(), (rows, idx.ravel())), shape=(n, n))
    A.eliminate_zeros()
    return A


def build_terms(spec: PriorSpec, lattice: Lattice) -> TermTable:
    _check_dims(spec, lattice)
    return _build_terms_cached(spec, lattice)


@lru_cache(maxsize=64)
def _build_terms_cached(spec: PriorSpec, lattice: Lattice) -> TermTable:
    v = spec.variant
    b = _TermBuilder(lattice)
    n = lattice.size
    one_d = lattice.dims == 1
    if one_d:
        k = np.arange(n - 1)
        d1 = (np.column_stack([k + 1, k]), (1.0, -1.0))
        k2 = np.arange(1, n - 1)
        d2 = (np.column_stack([k2 + 1, k2, k2 - 1]), (1.0, -2.0, 1.0))
        first = ([[0]], (1.0,))
        slope = ([[1, 0]], (1.0, -1.0))

    if v == "flat":
        pass
    elif v == "cauchy_diff1_1d":
        b.add(LOG, 1.0, spec.gamma, first)
        b.add(LOG, 1.0, spec.lam, d1)
    elif v == "cauchy_diff2_1d":
        b.add(LOG, 1.0, spec.gamma, first)
        b.add(LOG, 1.0, spec.gamma_prime, slope)
        b.add(LOG, 1.0, spec.lam, d2)
    elif v in ("cauchy_iso1_2d", "cauchy_aniso1_2d"):
        b.add(LOG, 1.0, spec.gamma, _boundary_values(lattice))
        dh, dv = _first_diffs_2d(lattice)
        if v == "cauchy_iso1_2d":
            b.add(LOG, 1.5, spec.lam, dh, dv)
        else:
            b.add(LOG, 1.0, spec.lam, dh)
            b.add(LOG, 1.0, spec.lam, dv)
    elif v in ("cauchy_iso2_2d", "cauchy_aniso2_2d"):
        b.add(LOG, 1.0, spec.gamma, _boundary_to_interior(lattice))
        b.add(LOG, 1.0, spec.gamma_prime, _boundary_values(lattice))
        dhh, dvv = _second_diffs_2d(lattice)
        if v == "cauchy_iso2_2d":
            b.add(LOG, 1.5, spec.lam, dhh, dvv)
        else:
            b.add(LOG, 1.0, spec.lam, dhh)
            b.add(LOG, 1.0, spec.lam, dvv)
    elif v == "cauchy_sheet":
        nx, ny = lattice.shape
        b.add(LOG, 1.0, spec.gamma, ([[0]], (1.0,)))
        j = np.arange(ny - 1)
        b.add(LOG, 1.0, spec.gamma, (np.column_stack([j + 1, j]), (1.0, -1.0)))
        i = np.arange(nx - 1) * ny
        b.add(LOG, 1.0, spec.gamma, (np.column_stack([i + ny, i]), (1.0, -1.0)))
        ii, jj = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="ij")
        c = (ii * ny + jj).ravel()
        b.add(LOG, 1.0, spec.lam,
              (np.column_stack([c + ny + 1, c + ny, c + 1, c]), (1.0, -1.0, -1.0, 1.0)))
    elif v in SPDE:
        idx, coef = _spde_stencil(spec, lattice)
        if v == "gauss_spde":
            b.add(QUAD, 0.5 / spec.sigma_w ** 2, 0.0, (idx, coef))
        else:
            b.add(LOG, 1.0, spec.xi, (idx, coef))
    elif v in ("gauss_diff1", "tv1"):
        if one_d:
            value_forms, incr = [first], [d1]
        else:
            dh, dv = _first_diffs_2d(lattice)
            value_forms, incr = [_boundary_values(lattice)], [dh, dv]
        if v == "gauss_diff1":
            b.add(QUAD, 0.5 / spec.sigma0 ** 2, 0.0, value_forms[0])
            b.add(QUAD, 0.5 / spec.sigma1 ** 2, 0.0, *incr)
        else:
            b.add(SQRT, spec.zeta_prime, spec.delta, value_forms[0])
            b.add(SQRT, spec.zeta, spec.delta, *incr)
    elif v in ("gauss_diff2", "tv2"):
        if one_d:
            vals, to_interior, incr = first, slope, [d2]
        else:
            vals, to_interior = _boundary_values(lattice), _boundary_to_interior(lattice)
            incr = list(_second_diffs_2d(lattice))
        if v == "gauss_diff2":
            b.add(QUAD, 0.5 / spec.sigma0 ** 2, 0.0, vals)
            b.add(QUAD, 0.5 / spec.sigma1 ** 2, 0.0, to_interior)
            b.add(QUAD, 0.5 / spec.sigma2 ** 2, 0.0, *incr)
        else:
            b.add(SQRT, spec.psi, spec.delta, vals)
            b.add(SQRT, spec.zeta_prime, spec.delta, to_interior)
            b.add(SQRT, spec.zeta, spec.delta, *incr)
    return b.build()


def _prepare(spec: PriorSpec, u, lattice: Lattice | None):
    if lattice is None:
        u = np.asarray(u, dtype=np.float64)
        lattice = Lattice(u.shape if u.ndim in (1, 2) else (u.size,))
    u = check_field(lattice, u)
    return build_terms(spec, lattice), u


def log_prior(spec: PriorSpec, u, lattice: Lattice | None = None) -> float:
    """Log of the unnormalized prior density at ``u``.

    ``u`` may be a flat vector (pass ``lattice``) or a 1D/2D array whose shape
    defines the lattice.
    """
    table, u = _prepare(spec, u, lattice)
    return table.value(u)


def log_prior_batch(spec: PriorSpec, U, lattice: Lattice) -> np.ndarray:
    """Log prior of every row of ``U`` (shape ``(B, lattice.size)``)."""
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 2 or U.shape[1] != lattice.size:
        raise ValueError(f"expected shape (B, {lattice.size}), got {U.shape}")
    if not np.all(np.isfinite(U)):
        raise ValueError("fields contain non-finite values")
    return build_terms(spec, lattice).values(U)


def _restricted(allowed, dims=None):
    def wrapper(spec: PriorSpec, u, lattice: Lattice | None = None) -> float:
        if spec.variant not in allowed:
            raise ValueError(f"variant {spec.variant!r} not handled here; expected one of {allowed}")
        table, u = _prepare(spec, u, lattice)
        if dims is not None and table.lattice.dims != dims:
            raise ValueError(f"expected a {dims}D field")
        return table.value(u)
    return wrapper


log_prior_1d = _restricted(DIFFERENCE_1D, dims=1)
log_prior_2d_difference = _restricted(DIFFERENCE_2D, dims=2)
log_prior_spde = _restricted(SPDE)
log_prior_comparison = _restricted(COMPARISON)


def grad_log_prior(spec: PriorSpec, u, lattice: Lattice | None = None) -> np.ndarray:
    table, u = _prepare(spec, u, lattice)
    return table.gradient(u)


def delta_log_prior(spec: PriorSpec, u, site: int, new_value: float,
                    lattice: Lattice | None = None) -> float:
    """``log pi(u with u[site] = new_value) - log pi(u)`` from local terms only."""
    table, u = _prepare(spec, u, lattice)
    if not 0 <= site < u.shape[0]:
        raise IndexError(f"site {site} out of range for field of size {u.shape[0]}")
    return table.site_delta(u, site, new_value)
