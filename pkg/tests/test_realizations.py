import numpy as np
import pytest

from cmrf.lattice import Lattice
from cmrf.realizations import (NoiseSpec, cauchy_quantile, normalize_max_abs, random_walk_1d,
                               sample_cauchy, solve_spde, spde_operator, spde_realization)


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec("levy")
    with pytest.raises(ValueError):
        NoiseSpec("cauchy", 0.0)


def test_cauchy_quantiles():
    assert cauchy_quantile(0.5, 2.0) == 0.0
    assert cauchy_quantile(0.75, 2.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        sample_cauchy(0.0, np.random.default_rng(0))


def test_cauchy_ecdf():
    x = sample_cauchy(1.5, np.random.default_rng(1), 1_000_000)
    for t, p in ((-1.5, 0.25), (0.0, 0.5), (1.5, 0.75)):
        assert abs(np.mean(x <= t) - p) <= 0.002


def test_walk_shapes_and_start():
    u1 = random_walk_1d(1, NoiseSpec("cauchy", 1.0, 3), 50, 0.1)
    u2 = random_walk_1d(2, NoiseSpec("gaussian", 1.0, 3), 50, 0.1)
    assert u1.shape == u2.shape == (50,)
    assert u1[0] == 0.0 and u2[0] == 0.0 and u2[1] == 0.0
    # order 2: second differences are the iid increments
    assert np.all(np.diff(u2, 2) != 0)


def test_walk_zero_scale_limit():
    u = random_walk_1d(1, NoiseSpec("gaussian", 1e-300, 0), 100, 0.01)
    assert np.max(np.abs(u)) < 1e-290


def test_walk_errors():
    with pytest.raises(ValueError):
        random_walk_1d(3, NoiseSpec(), 10, 0.1)
    with pytest.raises(ValueError):
        random_walk_1d(1, NoiseSpec(), 1, 0.1)


def test_gaussian_walk_variance():
    rng = np.random.default_rng(7)
    n, h = 100, 0.01
    end = np.array([random_walk_1d(1, NoiseSpec("gaussian"), n, h, rng)[-1] for _ in range(10_000)])
    # n - 1 increments of variance h
    assert abs(end.var() / ((n - 1) * h) - 1) <= 0.1
    assert abs(end.var() / (n * h) - 1) <= 0.1


def test_cauchy_walk_stability():
    rng = np.random.default_rng(8)
    n, h = 100, 0.01
    steps = n - 1
    z = np.array([random_walk_1d(1, NoiseSpec("cauchy"), n, h, rng)[-1] for _ in range(10_000)])
    z /= steps * h
    for t, p in ((-1.0, 0.25), (0.0, 0.5), (1.0, 0.75)):
        assert abs(np.mean(z <= t) - p) <= 0.02


def test_walk_determinism():
    a = random_walk_1d(2, NoiseSpec("cauchy", 1.0, 11), 200, 1 / 199)
    b = random_walk_1d(2, NoiseSpec("cauchy", 1.0, 11), 200, 1 / 199)
    assert np.array_equal(a, b)


def test_spde_operator_spd():
    lat = Lattice.grid(20)
    A = spde_operator(lat, 0.01).toarray()
    assert np.array_equal(A, A.T)
    np.linalg.cholesky(A)
    with pytest.raises(ValueError):
        spde_operator(lat, 0.0)


def test_spde_residual_and_zero_noise():
    lat = Lattice.grid(40)
    A = spde_operator(lat, 1e-3)
    u, m = spde_realization(lat, 1e-3, NoiseSpec("cauchy", 1.0, 2), return_noise=True)
    assert np.max(np.abs(A @ u - m)) <= 1e-9 * np.max(np.abs(m))
    assert np.all(solve_spde(A, np.zeros(lat.size)) == 0)


def test_spde_constant_noise_interior():
    lat = Lattice.line(400)
    A = spde_operator(lat, 1e-4)
    u = solve_spde(A, np.full(lat.size, 2.5))
    assert np.allclose(u[100:300], 2.5, atol=1e-8)


def test_spde_gaussian_interior_variance_stationary():
    lat = Lattice.grid(24)
    rng = np.random.default_rng(4)
    fields = np.array([spde_realization(lat, 1e-3, NoiseSpec("gaussian"), rng=rng)
                       for _ in range(1000)])
    var = fields.var(axis=0).reshape(lat.shape)
    interior = var[8:16, 8:16]
    # each node variance carries about 4.5% Monte Carlo error at 1000 replicates
    dev = np.abs(interior / interior.mean() - 1)
    assert np.mean(dev <= 0.1) >= 0.95 and dev.max() <= 0.16


def test_spde_determinism_and_normalize():
    lat = Lattice.line(100)
    a = spde_realization(lat, 1e-3, NoiseSpec("cauchy", 1.0, 5), normalize=True)
    b = spde_realization(lat, 1e-3, NoiseSpec("cauchy", 1.0, 5), normalize=True)
    assert np.array_equal(a, b) and np.max(np.abs(a)) == 1.0
    assert np.array_equal(normalize_max_abs(np.zeros(3)), np.zeros(3))
