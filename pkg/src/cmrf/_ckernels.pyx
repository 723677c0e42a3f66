# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled single-site kernels; see ``_pykernels`` for the reference twin.

Random draws go straight to the generator's ``bitgen_t`` so that the stream
matches ``Generator.standard_normal()`` / ``Generator.random()`` call for call.
The generator must not be shared with another thread during a sweep.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp, log, sqrt
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal, random_standard_uniform

ctypedef long long i64


cdef inline double _phi(int kind, double w, double s, double a, double b) noexcept nogil:
    cdef double q = a * a + b * b
    if kind == 0:
        return -w * log(s * s + q)
    if kind == 1:
        return -w * q
    return -w * sqrt(s * s + q)


cdef inline bint _accept(double z, double log_ratio) noexcept nogil:
    return log_ratio >= 0.0 or z <= exp(log_ratio)


cdef inline bitgen_t* _bitgen(object rng) except NULL:
    return <bitgen_t*> PyCapsule_GetPointer(rng.bit_generator.capsule, "BitGenerator")


cdef struct Prior:
    const int* kind
    const double* weight
    const double* scale
    const int* width
    const i64* idx
    const double* coef
    const i64* site_ptr
    const i64* site_term
    const double* site_coef
    int K


cdef struct Columns:
    const i64* ptr
    const i64* idx
    const double* val
    const double* sq
    double inv_sigma2


cdef double _prior_delta(Prior* p, double* u, i64 site, double x) noexcept nogil:
    cdef double d = x - u[site]
    cdef double total = 0.0, a, b, a_new, b_new, w, s
    cdef i64 e, t, base
    cdef int k, kind
    if d == 0.0:
        return 0.0
    for e in range(p.site_ptr[site], p.site_ptr[site + 1]):
        t = p.site_term[e]
        base = t * 2 * p.K
        a = 0.0
        for k in range(p.width[2 * t]):
            a += p.coef[base + k] * u[p.idx[base + k]]
        b = 0.0
        for k in range(p.width[2 * t + 1]):
            b += p.coef[base + p.K + k] * u[p.idx[base + p.K + k]]
        a_new = a + d * p.site_coef[2 * e]
        b_new = b + d * p.site_coef[2 * e + 1]
        kind = p.kind[t]
        w = p.weight[t]
        s = p.scale[t]
        total += _phi(kind, w, s, a_new, b_new) - _phi(kind, w, s, a, b)
    return total


cdef double _lik_delta(Columns* c, double* resid, i64 site, double d) noexcept nogil:
    cdef double cr = 0.0
    cdef i64 e
    if d == 0.0:
        return 0.0
    for e in range(c.ptr[site], c.ptr[site + 1]):
        cr += c.val[e] * resid[c.idx[e]]
    return (d * cr - 0.5 * d * d * c.sq[site]) * c.inv_sigma2


cdef void _commit(Columns* c, double* u, double* resid, i64 site, double x) noexcept nogil:
    cdef double d = x - u[site]
    cdef i64 e
    for e in range(c.ptr[site], c.ptr[site + 1]):
        resid[c.idx[e]] -= c.val[e] * d
    u[site] = x


cdef void _adapt(i64 site, double x, i64* wf_n, double* wf_mean, double* wf_m2,
                 double* scales, double cov_factor, double reg, i64 min_hist) noexcept nogil:
    cdef i64 n = wf_n[site] + 1
    cdef double dm
    wf_n[site] = n
    dm = x - wf_mean[site]
    wf_mean[site] += dm / n
    wf_m2[site] += dm * (x - wf_mean[site])
    if n >= min_hist:
        scales[site] = 2.38 * sqrt(cov_factor * wf_m2[site] / (n - 1) + reg)


cdef void _fill_prior(Prior* p, const int[::1] kind, const double[::1] weight,
                      const double[::1] scale, const int[:, ::1] width,
                      const i64[:, :, ::1] idx, const double[:, :, ::1] coef,
                      const i64[::1] site_ptr, const i64[::1] site_term,
                      const double[:, ::1] site_coef):
    p.kind = &kind[0] if kind.shape[0] > 0 else NULL
    p.weight = &weight[0] if weight.shape[0] > 0 else NULL
    p.scale = &scale[0] if scale.shape[0] > 0 else NULL
    p.width = &width[0, 0] if width.shape[0] > 0 else NULL
    p.idx = &idx[0, 0, 0] if idx.shape[0] > 0 else NULL
    p.coef = &coef[0, 0, 0] if coef.shape[0] > 0 else NULL
    p.site_ptr = &site_ptr[0]
    p.site_term = &site_term[0] if site_term.shape[0] > 0 else NULL
    p.site_coef = &site_coef[0, 0] if site_coef.shape[0] > 0 else NULL
    p.K = <int> idx.shape[2]


cdef void _fill_cols(Columns* c, const i64[::1] col_ptr, const i64[::1] col_idx,
                     const double[::1] col_val, const double[::1] col_sq, double inv_sigma2):
    c.ptr = &col_ptr[0]
    c.idx = &col_idx[0] if col_idx.shape[0] > 0 else NULL
    c.val = &col_val[0] if col_val.shape[0] > 0 else NULL
    c.sq = &col_sq[0]
    c.inv_sigma2 = inv_sigma2


def prior_site_delta(const int[::1] kind, const double[::1] weight, const double[::1] scale,
                     const int[:, ::1] width, const i64[:, :, ::1] idx,
                     const double[:, :, ::1] coef, const i64[::1] site_ptr,
                     const i64[::1] site_term, const double[:, ::1] site_coef,
                     double[::1] u, i64 site, double new_value):
    cdef Prior p
    _fill_prior(&p, kind, weight, scale, width, idx, coef, site_ptr, site_term, site_coef)
    return _prior_delta(&p, &u[0], site, new_value)


def lik_site_delta(const i64[::1] col_ptr, const i64[::1] col_idx, const double[::1] col_val,
                   const double[::1] col_sq, double[::1] resid, double inv_sigma2,
                   i64 site, double d):
    cdef Columns c
    _fill_cols(&c, col_ptr, col_idx, col_val, col_sq, inv_sigma2)
    return _lik_delta(&c, &resid[0], site, d)


def mwg_sweep(const int[::1] kind, const double[::1] weight, const double[::1] scale,
              const int[:, ::1] width, const i64[:, :, ::1] idx, const double[:, :, ::1] coef,
              const i64[::1] site_ptr, const i64[::1] site_term, const double[:, ::1] site_coef,
              const i64[::1] col_ptr, const i64[::1] col_idx, const double[::1] col_val,
              const double[::1] col_sq, double inv_sigma2,
              double[::1] u, double[::1] resid, double[::1] scales, object rng, bint adapt,
              i64[::1] wf_n, double[::1] wf_mean, double[::1] wf_m2, double reg, i64 min_hist,
              i64[::1] accepts):
    cdef Prior p
    cdef Columns c
    cdef bitgen_t* bg = _bitgen(rng)
    cdef i64 j, n = u.shape[0]
    cdef double r, x, z, dl, dp, dlik_total = 0.0, dprior_total = 0.0
    cdef double* up = &u[0]
    cdef double* rp = &resid[0]
    _fill_prior(&p, kind, weight, scale, width, idx, coef, site_ptr, site_term, site_coef)
    _fill_cols(&c, col_ptr, col_idx, col_val, col_sq, inv_sigma2)
    with nogil:
        for j in range(n):
            r = random_standard_normal(bg)
            x = up[j] + scales[j] * r
            z = random_standard_uniform(bg)
            dl = _lik_delta(&c, rp, j, x - up[j])
            dp = _prior_delta(&p, up, j, x)
            if _accept(z, dl + dp):
                _commit(&c, up, rp, j, x)
                accepts[j] += 1
                dlik_total += dl
                dprior_total += dp
            if adapt:
                _adapt(j, up[j], &wf_n[0], &wf_mean[0], &wf_m2[0], &scales[0], 1.0, reg, min_hist)
    return dlik_total, dprior_total


cdef inline double _logpi(Prior* p, Columns* c, double* u, double* resid, i64 j,
                          double up, double x) noexcept nogil:
    return _lik_delta(c, resid, j, x - up) + _prior_delta(p, u, j, x)


def ram_sweep(const int[::1] kind, const double[::1] weight, const double[::1] scale,
              const int[:, ::1] width, const i64[:, :, ::1] idx, const double[:, :, ::1] coef,
              const i64[::1] site_ptr, const i64[::1] site_term, const double[:, ::1] site_coef,
              const i64[::1] col_ptr, const i64[::1] col_idx, const double[::1] col_val,
              const double[::1] col_sq, double inv_sigma2,
              double[::1] u, double[::1] w, double[::1] resid, double[::1] scales, object rng,
              bint adapt, i64[::1] wf_n, double[::1] wf_mean, double[::1] wf_m2, double reg,
              i64 min_hist, i64 max_tries, i64[::1] accepts, i64[::1] capped):
    cdef Prior p
    cdef Columns c
    cdef bitgen_t* bg = _bitgen(rng)
    cdef i64 j, tries, n = u.shape[0]
    cdef double upj, q, x1, x2, x3, z, l1, l2, l3, lw, log_ratio, dl, dp
    cdef double dlik_total = 0.0, dprior_total = 0.0
    cdef double* uptr = &u[0]
    cdef double* rp = &resid[0]
    _fill_prior(&p, kind, weight, scale, width, idx, coef, site_ptr, site_term, site_coef)
    _fill_cols(&c, col_ptr, col_idx, col_val, col_sq, inv_sigma2)
    with nogil:
        for j in range(n):
            upj = uptr[j]
            q = scales[j]
            tries = 0
            while True:
                x1 = upj + q * random_standard_normal(bg)
                z = random_standard_uniform(bg)
                l1 = _logpi(&p, &c, uptr, rp, j, upj, x1)
                tries += 1
                if _accept(z, -l1):
                    break
                if tries >= max_tries:
                    capped[0] += 1
                    break
            tries = 0
            while True:
                x2 = x1 + q * random_standard_normal(bg)
                z = random_standard_uniform(bg)
                l2 = _logpi(&p, &c, uptr, rp, j, upj, x2)
                tries += 1
                if _accept(z, l2 - l1):
                    break
                if tries >= max_tries:
                    capped[0] += 1
                    break
            tries = 0
            while True:
                x3 = x2 + q * random_standard_normal(bg)
                z = random_standard_uniform(bg)
                l3 = _logpi(&p, &c, uptr, rp, j, upj, x3)
                tries += 1
                if _accept(z, l2 - l3):
                    break
                if tries >= max_tries:
                    capped[0] += 1
                    break
            lw = _logpi(&p, &c, uptr, rp, j, upj, w[j])
            log_ratio = l2 + min(0.0, -lw) - min(0.0, l2 - l3)
            z = random_standard_uniform(bg)
            if _accept(z, log_ratio):
                dl = _lik_delta(&c, rp, j, x2 - upj)
                dp = _prior_delta(&p, uptr, j, x2)
                _commit(&c, uptr, rp, j, x2)
                w[j] = x3
                accepts[j] += 1
                dlik_total += dl
                dprior_total += dp
            if adapt:
                _adapt(j, uptr[j], &wf_n[0], &wf_mean[0], &wf_m2[0], &scales[0], 0.5, reg, min_hist)
    return dlik_total, dprior_total
