"""Pure-Python single-site kernels.

Reference twin of ``_ckernels.pyx``: same signatures, same arithmetic order
and the same random-number draws (one ``standard_normal`` then one ``random``
per proposal), so both backends produce identical chains for a given seed.
"""

from math import exp, log, sqrt

LOG, QUAD, SQRT = 0, 1, 2


def _phi(kind, w, s, a, b):
    q = a * a + b * b
    if kind == LOG:
        return -w * log(s * s + q)
    if kind == QUAD:
        return -w * q
    return -w * sqrt(s * s + q)


def prior_site_delta(kind, weight, scale, width, idx, coef, site_ptr, site_term, site_coef,
                     u, site, new_value):
    d = new_value - u[site]
    if d == 0.0:
        return 0.0
    total = 0.0
    for e in range(site_ptr[site], site_ptr[site + 1]):
        t = site_term[e]
        a = 0.0
        for k in range(width[t, 0]):
            a += coef[t, 0, k] * u[idx[t, 0, k]]
        b = 0.0
        for k in range(width[t, 1]):
            b += coef[t, 1, k] * u[idx[t, 1, k]]
        a_new = a + d * site_coef[e, 0]
        b_new = b + d * site_coef[e, 1]
        total += (_phi(kind[t], weight[t], scale[t], a_new, b_new)
                  - _phi(kind[t], weight[t], scale[t], a, b))
    return total


def lik_site_delta(col_ptr, col_idx, col_val, col_sq, resid, inv_sigma2, site, d):
    """Change of ``-|r|^2 / (2 sigma^2)`` when ``u[site]`` moves by ``d``."""
    if d == 0.0:
        return 0.0
    cr = 0.0
    for e in range(col_ptr[site], col_ptr[site + 1]):
        cr += col_val[e] * resid[col_idx[e]]
    return (d * cr - 0.5 * d * d * col_sq[site]) * inv_sigma2


def _accept(z, log_ratio):
    return log_ratio >= 0.0 or z <= exp(log_ratio)


def _commit(col_ptr, col_idx, col_val, u, resid, site, x):
    d = x - u[site]
    for e in range(col_ptr[site], col_ptr[site + 1]):
        resid[col_idx[e]] -= col_val[e] * d
    u[site] = x


def _adapt(site, x, wf_n, wf_mean, wf_m2, scales, cov_factor, reg, min_hist):
    n = wf_n[site] + 1
    wf_n[site] = n
    dm = x - wf_mean[site]
    wf_mean[site] += dm / n
    wf_m2[site] += dm * (x - wf_mean[site])
    if n >= min_hist:
        scales[site] = 2.38 * sqrt(cov_factor * wf_m2[site] / (n - 1) + reg)


def mwg_sweep(kind, weight, scale, width, idx, coef, site_ptr, site_term, site_coef,
              col_ptr, col_idx, col_val, col_sq, inv_sigma2,
              u, resid, scales, rng, adapt, wf_n, wf_mean, wf_m2, reg, min_hist, accepts):
    """One lexicographic scan of single-site Gaussian random-walk Metropolis.

    Returns the accumulated change of (log-likelihood, log-prior).
    """
    prior = (kind, weight, scale, width, idx, coef, site_ptr, site_term, site_coef)
    dlik_total = 0.0
    dprior_total = 0.0
    for j in range(u.shape[0]):
        r = rng.standard_normal()
        x = u[j] + scales[j] * r
        z = rng.random()
        dl = lik_site_delta(col_ptr, col_idx, col_val, col_sq, resid, inv_sigma2, j, x - u[j])
        dp = prior_site_delta(*prior, u, j, x)
        if _accept(z, dl + dp):
            _commit(col_ptr, col_idx, col_val, u, resid, j, x)
            accepts[j] += 1
            dlik_total += dl
            dprior_total += dp
        if adapt:
            _adapt(j, u[j], wf_n, wf_mean, wf_m2, scales, 1.0, reg, min_hist)
    return dlik_total, dprior_total


def ram_sweep(kind, weight, scale, width, idx, coef, site_ptr, site_term, site_coef,
              col_ptr, col_idx, col_val, col_sq, inv_sigma2,
              u, w, resid, scales, rng, adapt, wf_n, wf_mean, wf_m2, reg, min_hist,
              max_tries, accepts, capped):
    """One lexicographic scan of single-site Repelling-Attracting Metropolis.

    ``w`` is the auxiliary field. ``capped[0]`` counts stages that hit
    ``max_tries`` and fell back to their last proposal.
    """
    prior = (kind, weight, scale, width, idx, coef, site_ptr, site_term, site_coef)
    dlik_total = 0.0
    dprior_total = 0.0
    for j in range(u.shape[0]):
        up = u[j]
        q = scales[j]

        def logpi(x):
            return (lik_site_delta(col_ptr, col_idx, col_val, col_sq, resid, inv_sigma2, j, x - up)
                    + prior_site_delta(*prior, u, j, x))

        # repelling: downhill move away from up
        tries = 0
        while True:
            x1 = up + q * rng.standard_normal()
            z = rng.random()
            l1 = logpi(x1)
            tries += 1
            if _accept(z, -l1):
                break
            if tries >= max_tries:
                capped[0] += 1
                break
        # attracting: uphill move from x1
        tries = 0
        while True:
            x2 = x1 + q * rng.standard_normal()
            z = rng.random()
            l2 = logpi(x2)
            tries += 1
            if _accept(z, l2 - l1):
                break
            if tries >= max_tries:
                capped[0] += 1
                break
        # auxiliary: repelling move away from x2
        tries = 0
        while True:
            x3 = x2 + q * rng.standard_normal()
            z = rng.random()
            l3 = logpi(x3)
            tries += 1
            if _accept(z, l2 - l3):
                break
            if tries >= max_tries:
                capped[0] += 1
                break
        lw = logpi(w[j])
        log_ratio = l2 + min(0.0, -lw) - min(0.0, l2 - l3)
        z = rng.random()
        if _accept(z, log_ratio):
            dl = lik_site_delta(col_ptr, col_idx, col_val, col_sq, resid, inv_sigma2, j, x2 - up)
            dp = prior_site_delta(*prior, u, j, x2)
            _commit(col_ptr, col_idx, col_val, u, resid, j, x2)
            w[j] = x3
            accepts[j] += 1
            dlik_total += dl
            dprior_total += dp
        if adapt:
            _adapt(j, u[j], wf_n, wf_mean, wf_m2, scales, 0.5, reg, min_hist)
    return dlik_total, dprior_total
