import math

import numpy as np
import pytest

from cmrf import _backend
from cmrf.forward import identity_operator
from cmrf.lattice import Lattice
from cmrf.posterior import DensityTarget, Posterior
from cmrf.priors import PriorSpec
from cmrf.samplers import (Chain, DivergenceError, SamplerConfig, _Hamiltonian, adaptation_windows,
                           leapfrog_step, mwg_sample, nuts_sample, ram_sample, sample,
                           u_turn_check)

from conftest import make_posterior


def std_normal(dim):
    """``N(0, I)`` as a posterior: flat prior, ``F = I``, ``y = 0``, ``sigma = 1``."""
    lat = Lattice.line(dim) if dim >= 2 else Lattice.line(2)
    return Posterior(identity_operator(lat), np.zeros(lat.size), 1.0, PriorSpec("flat"))


def gaussian_target(cov):
    P = np.linalg.inv(cov)
    return DensityTarget(lambda u: -0.5 * float(u @ P @ u), cov.shape[0], grad=lambda u: -P @ u)


# -- configuration -----------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(algorithm="gibbs")
    with pytest.raises(ValueError):
        SamplerConfig(target_accept=1.0)
    with pytest.raises(ValueError):
        SamplerConfig(max_depth=0)
    with pytest.raises(ValueError):
        SamplerConfig(cov_regularizer=0.0)
    with pytest.raises(ValueError):
        SamplerConfig(n_samples=10, thin=20)
    with pytest.raises(ValueError):
        SamplerConfig(metric=(1.0, 0.0))


def test_config_round_trip():
    cfg = SamplerConfig(algorithm="nuts", blocks=((0, 1), (2,)), metric=(1.0, 2.0, 3.0), thin=2)
    assert SamplerConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.n_stored == 500


def test_chain_validates_acceptance():
    with pytest.raises(ValueError):
        Chain(np.zeros((2, 2)), 0, "mwg", 1, np.array([1.2]), 0, np.zeros(2))


def test_bad_start_and_blocks():
    p = std_normal(4)
    with pytest.raises(ValueError):
        mwg_sample(p, np.zeros(3), SamplerConfig())
    with pytest.raises(ValueError):
        mwg_sample(p, np.zeros(4), SamplerConfig(blocks=((0, 1), (1, 2, 3))))


# -- Metropolis-within-Gibbs and RAM -----------------------------------------

@pytest.mark.parametrize("algo", ["mwg", "ram"])
def test_standard_normal_moments(algo):
    cfg = SamplerConfig(algorithm=algo, n_samples=20000, n_adapt=500, seed=3)
    chain = sample(std_normal(4), np.zeros(4), cfg)
    assert chain.samples.shape == (20000, 4)
    assert np.all(np.abs(chain.samples.mean(axis=0)) < 0.05)
    assert np.all(np.abs(chain.samples.var(axis=0) - 1) < 0.1)
    assert np.all((chain.acceptance_rate > 0) & (chain.acceptance_rate < 1))


def test_equal_density_moves_always_accepted():
    lat = Lattice.line(5)
    p = Posterior(identity_operator(lat), np.zeros(5), 1e12, PriorSpec("flat"))
    chain = mwg_sample(p, np.zeros(5), SamplerConfig(n_samples=200, n_adapt=0))
    assert np.all(chain.acceptance_rate == 1.0)


def test_correlated_block_recovers_correlation():
    cov = np.array([[1.0, 0.9], [0.9, 1.0]])
    cfg = SamplerConfig(n_samples=100_000, n_adapt=2000, blocks=((0, 1),), seed=5)
    chain = mwg_sample(gaussian_target(cov), np.zeros(2), cfg)
    assert abs(np.corrcoef(chain.samples.T)[0, 1] - 0.9) < 0.05


def test_detailed_balance_against_transition_matrix():
    """Bin masses of a fixed-scale MwG chain match the exact stationary vector."""
    centres, weights, width, scale = np.array([-2.0, 0.0, 2.0]), np.array([0.2, 0.5, 0.3]), 0.4, 1.5

    def logpdf(u):
        x = float(np.atleast_1d(u)[0])
        return float(np.log(np.sum(weights * np.exp(-0.5 * ((x - centres) / width) ** 2))))

    # exact Metropolis kernel on a fine grid; its stationary vector, binned into three cells
    grid = np.linspace(-5, 5, 1201)
    dx = grid[1] - grid[0]
    logp = np.array([logpdf(x) for x in grid])
    q = np.exp(-0.5 * ((grid[None, :] - grid[:, None]) / scale) ** 2) * dx / (scale * math.sqrt(2 * math.pi))
    K = q * np.minimum(1.0, np.exp(logp[None, :] - logp[:, None]))
    K[np.diag_indices_from(K)] += 1.0 - K.sum(axis=1)
    vals, vecs = np.linalg.eig(K.T)
    pi = np.real(vecs[:, np.argmin(np.abs(vals - 1))])
    pi /= pi.sum()
    edges = [-np.inf, -1.0, 1.0, np.inf]
    exact = np.array([pi[(grid > a) & (grid <= b)].sum() for a, b in zip(edges[:-1], edges[1:])])

    target = DensityTarget(logpdf, 1)
    cfg = SamplerConfig(n_samples=100_000, n_adapt=0, initial_scale=scale, seed=11)
    x = mwg_sample(target, np.zeros(1), cfg).samples[:, 0]
    empirical = np.histogram(x, bins=edges)[0] / x.shape[0]
    assert 0.5 * np.abs(empirical - exact).sum() <= 0.02


@pytest.mark.parametrize("algo", ["mwg", "ram"])
def test_adaptation_frozen(algo):
    p = make_posterior(Lattice.line(50), PriorSpec("cauchy_diff1_1d", lam=0.1, gamma=1.0))
    chain = sample(p, np.zeros(50), SamplerConfig(algorithm=algo, n_samples=50, n_adapt=50))
    assert np.array_equal(chain.tuning["scales"], chain.final_tuning["scales"])
    assert not np.all(chain.tuning["scales"] == 0.1)


def test_generic_adaptation_frozen():
    cfg = SamplerConfig(n_samples=300, n_adapt=300, blocks=((0, 1), (2,)))
    chain = mwg_sample(gaussian_target(np.eye(3)), np.zeros(3), cfg)
    for a, b in zip(chain.tuning["factors"], chain.final_tuning["factors"]):
        assert np.array_equal(a, b)


@pytest.mark.parametrize("algo", ["mwg", "ram", "nuts"])
def test_thinning_matches_unthinned_run(algo):
    p = make_posterior(Lattice.line(50), PriorSpec("cauchy_diff2_1d", lam=0.1, gamma=1.0,
                                                   gamma_prime=1.0))
    base = dict(algorithm=algo, n_samples=60, n_adapt=30, seed=9, max_depth=5)
    full = sample(p, np.zeros(50), SamplerConfig(**base))
    thinned = sample(p, np.zeros(50), SamplerConfig(**base, thin=6))
    assert thinned.samples.shape == (10, 50)
    assert np.array_equal(thinned.samples, full.samples[5::6])


@pytest.mark.parametrize("algo", ["mwg", "ram", "nuts"])
def test_seed_determinism(algo):
    p = make_posterior(Lattice.grid(16), PriorSpec("cauchy_iso1_2d", lam=0.1, gamma=1.0))
    cfg = SamplerConfig(algorithm=algo, n_samples=10, n_adapt=10, max_depth=4, seed=4)
    a = sample(p, np.zeros(256), cfg)
    b = sample(p, np.zeros(256), cfg)
    c = sample(p, np.zeros(256), SamplerConfig(**{**cfg.to_dict(), "seed": 5}))
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


@pytest.mark.parametrize("algo", ["mwg", "ram"])
def test_backends_bit_identical(algo):
    if _backend.compiled_kernels is None:
        pytest.skip("compiled kernels not built")
    p = make_posterior(Lattice.line(50), PriorSpec("tv2", zeta=2.0, zeta_prime=0.5, psi=0.5,
                                                   delta=0.1))
    cfg = SamplerConfig(algorithm=algo, n_samples=40, n_adapt=40, seed=2)
    previous = _backend.BACKEND
    try:
        out = {}
        for name in ("compiled", "python"):
            _backend.use(name)
            out[name] = sample(p, np.zeros(50), cfg)
    finally:
        _backend.use(previous)
    assert np.array_equal(out["compiled"].samples, out["python"].samples)
    assert np.array_equal(out["compiled"].acceptance_rate, out["python"].acceptance_rate)


def test_ram_visits_both_modes():
    def logpdf(u):
        x = float(u[0])
        return float(np.logaddexp(-0.5 * (x + 4) ** 2, -0.5 * (x - 4) ** 2))

    cfg = SamplerConfig(algorithm="ram", n_samples=20000, n_adapt=1000, seed=1)
    x = ram_sample(DensityTarget(logpdf, 1), np.array([4.0]), cfg).samples[:, 0]
    assert 0.3 < np.mean(x > 0) < 0.7


def test_ram_cap_is_counted():
    # at a sharp density minimum every downhill move is rejected, forcing the cap
    target = DensityTarget(lambda u: 1e6 * float(u @ u), 1)
    cfg = SamplerConfig(algorithm="ram", n_samples=3, n_adapt=0, repelling_max_tries=5,
                        initial_scale=1.0)
    chain = ram_sample(target, np.zeros(1), cfg)
    assert chain.capped > 0


# -- Hamiltonian mechanics ---------------------------------------------------

def test_u_turn_examples():
    p = np.array([0.3, -0.7])
    assert not u_turn_check(p, p, p, np.ones(2))
    assert u_turn_check(np.array([1.0, 0.0]), np.array([1.0, 0.0]), np.array([-1.0, 0.0]), np.ones(2))
    assert not u_turn_check(np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([0.0, 0.0]),
                            np.ones(2))
    assert not u_turn_check(np.array([1.0, 0.0]), np.array([1.0, 0.0]), np.array([0.0, 5.0]),
                            np.ones(2))


def test_u_turn_original_rule_and_errors():
    pm, pp = np.array([1.0, 0.0]), np.array([1.0, 0.0])
    assert u_turn_check(pm, pp, None, np.ones(2), "original", np.array([1.0, 0.0]), np.zeros(2))
    assert not u_turn_check(pm, pp, None, np.ones(2), "original", np.zeros(2), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        u_turn_check(pm, pp, pm, np.ones(2), "original")
    with pytest.raises(ValueError):
        u_turn_check(pm, pp, pm, np.array([1.0, 0.0]))


def test_leapfrog_free_particle():
    u, p = np.array([1.0, -2.0]), np.array([0.5, 3.0])
    M = np.array([2.0, 0.5])
    u1, p1 = leapfrog_step(u, p, 0.1, M, lambda x: np.zeros_like(x))
    assert np.array_equal(u1, u + 0.1 * p / M)
    assert np.array_equal(p1, p)


def test_leapfrog_reversible(rng):
    A = np.diag([1.0, 4.0, 0.25])

    def grad(x):
        return -A @ x - 0.1 * x ** 3

    for _ in range(20):
        u, p = rng.normal(size=3), rng.normal(size=3)
        M = rng.uniform(0.5, 2.0, size=3)
        u1, p1 = leapfrog_step(u, p, 0.05, M, grad)
        u0, p0 = leapfrog_step(u1, -p1, 0.05, M, grad)
        assert np.max(np.abs(u0 - u)) <= 1e-12 and np.max(np.abs(-p0 - p)) <= 1e-12


def _energy_error(eps, T=1.0):
    u, p = np.array([1.0]), np.array([0.5])
    H0 = 0.5 * u @ u + 0.5 * p @ p
    for _ in range(int(round(T / eps))):
        u, p = leapfrog_step(u, p, eps, np.ones(1), lambda x: -x)
    return abs(0.5 * u @ u + 0.5 * p @ p - H0), u


def test_leapfrog_energy_error_second_order():
    e1, _ = _energy_error(0.1)
    e2, _ = _energy_error(0.05)
    e3, _ = _energy_error(0.025)
    assert abs(e1 / e2 - 4) <= 0.5 and abs(e2 / e3 - 4) <= 0.5
    assert _energy_error(1e-3, T=0.1)[0] <= 1e-4


def test_leapfrog_position_error_second_order():
    exact = 1.0 * math.cos(1.0) + 0.5 * math.sin(1.0)
    errs = [abs(_energy_error(e)[1][0] - exact) for e in (0.1, 0.05, 0.025)]
    assert 3.5 <= errs[0] / errs[1] <= 4.5 and 3.5 <= errs[1] / errs[2] <= 4.5


def test_leapfrog_rejects_bad_input():
    with pytest.raises(DivergenceError):
        leapfrog_step(np.zeros(1), np.ones(1), 0.1, np.ones(1), lambda x: np.array([np.nan]))
    with pytest.raises(ValueError):
        leapfrog_step(np.zeros(1), np.ones(1), 0.0, np.ones(1), lambda x: x)


def test_hamiltonian_step_matches_leapfrog(rng):
    target = gaussian_target(np.diag([1.0, 2.0]))
    M = np.array([1.5, 0.7])
    ham = _Hamiltonian(target, M)
    u, p = rng.normal(size=2), rng.normal(size=2)
    z = ham.step(ham.point(u, p), 0.2)
    u1, p1 = leapfrog_step(u, p, 0.2, M, target.grad_log_density)
    assert np.allclose(z.u, u1, atol=1e-15) and np.allclose(z.p, p1, atol=1e-15)


def test_adaptation_windows():
    first, ends = adaptation_windows(1000)
    assert first == 75 and ends[-1] == 950 and ends[0] == 100
    assert all(b > a for a, b in zip(ends, ends[1:]))
    first, ends = adaptation_windows(100)
    assert first == 15 and ends[-1] == 90
    assert adaptation_windows(10) == (10, [])


def test_nuts_standard_normal_moments():
    cfg = SamplerConfig(algorithm="nuts", n_samples=3000, n_adapt=500, seed=2)
    chain = nuts_sample(gaussian_target(np.eye(3)), np.zeros(3), cfg)
    assert np.all(np.abs(chain.samples.mean(axis=0)) < 0.08)
    assert np.all(np.abs(chain.samples.var(axis=0) - 1) < 0.12)
    assert chain.divergences == 0


def test_nuts_original_rule_and_metric_adaptation():
    cov = np.diag([0.01, 1.0, 25.0])
    cfg = SamplerConfig(algorithm="nuts", n_samples=2000, n_adapt=600, u_turn="original", seed=6)
    chain = nuts_sample(gaussian_target(cov), np.zeros(3), cfg)
    assert np.allclose(chain.samples.var(axis=0), np.diag(cov), rtol=0.2)
    # the adapted inverse metric tracks the marginal variances
    assert np.allclose(1.0 / chain.tuning["metric"], np.diag(cov), rtol=0.5)


def test_nuts_frozen_and_tree_bound():
    cfg = SamplerConfig(algorithm="nuts", n_samples=100, n_adapt=100, max_depth=3, seed=1)
    chain = nuts_sample(gaussian_target(np.eye(5)), np.zeros(5), cfg)
    assert chain.tuning["step_size"] == chain.final_tuning["step_size"]
    assert np.array_equal(chain.tuning["metric"], chain.final_tuning["metric"])
    assert chain.final_tuning["max_tree_depth"] <= 3
    # a tiny fixed step never U-turns, so every tree is cut at the depth limit
    cfg = SamplerConfig(algorithm="nuts", n_samples=20, n_adapt=0, max_depth=4, step_size=1e-4)
    chain = nuts_sample(gaussian_target(np.eye(2)), np.ones(2), cfg)
    assert chain.final_tuning["max_tree_depth"] == 4
    assert chain.final_tuning["max_leapfrog"] < 2 ** 4


def test_nuts_on_posterior():
    p = make_posterior(Lattice.line(50), PriorSpec("cauchy_diff1_1d", lam=0.1, gamma=1.0))
    cfg = SamplerConfig(algorithm="nuts", n_samples=30, n_adapt=30, max_depth=6)
    chain = nuts_sample(p, np.zeros(50), cfg)
    assert chain.samples.shape == (30, 50) and np.all(np.isfinite(chain.log_density))
    with pytest.raises(ValueError):
        nuts_sample(p, np.zeros(50), SamplerConfig(algorithm="nuts", metric=(1.0,)))
