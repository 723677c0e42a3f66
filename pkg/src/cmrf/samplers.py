"""Adaptive Metropolis-within-Gibbs, Repelling-Attracting Metropolis and NUTS.

All samplers take a *target* exposing ``dim``, ``log_density``,
``new_state`` and (NUTS only) ``value_and_grad``. A :class:`Posterior` with
singleton blocks runs the single-site sweeps in the compiled kernels; any
other target or blocking uses the generic block path.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from cmrf import _backend
from cmrf.posterior import Posterior

log = logging.getLogger(__name__)

ALGORITHMS = ("mwg", "ram", "nuts")
U_TURN_RULES = ("generalized", "original")
DIVERGENCE_THRESHOLD = 1000.0
SCALE_FACTOR = 2.38


@dataclass(frozen=True)
class SamplerConfig:
    """Sampler settings.

    ``n_adapt`` adaptation sweeps (or NUTS iterations) run first and are
    discarded; then ``n_samples`` further sweeps run with frozen tuning and
    every ``thin``-th one is stored, so a chain holds ``n_samples // thin``
    rows.
    """

    algorithm: str = "mwg"
    n_samples: int = 1000
    n_adapt: int = 100
    blocks: tuple | None = None
    cov_regularizer: float = 1e-8
    initial_scale: float = 0.1
    min_history: int = 10
    step_size: float = 0.0
    max_depth: int = 10
    target_accept: float = 0.8
    metric: tuple | None = None
    adapt_metric: bool = True
    u_turn: str = "generalized"
    thin: int = 1
    seed: int = 0
    repelling_max_tries: int = 1000

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.n_samples < 1 or self.n_adapt < 0:
            raise ValueError("need n_samples >= 1 and n_adapt >= 0")
        if self.thin < 1 or self.thin > self.n_samples:
            raise ValueError("thin must lie in [1, n_samples]")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.cov_regularizer <= 0 or self.initial_scale <= 0:
            raise ValueError("cov_regularizer and initial_scale must be > 0")
        if self.min_history < 2:
            raise ValueError("min_history must be >= 2")
        if self.step_size < 0:
            raise ValueError("step_size must be >= 0 (0 selects a heuristic start)")
        if self.metric is not None and min(self.metric) <= 0:
            raise ValueError("metric entries must be > 0")
        if self.u_turn not in U_TURN_RULES:
            raise ValueError(f"u_turn must be one of {U_TURN_RULES}")
        if self.repelling_max_tries < 1:
            raise ValueError("repelling_max_tries must be >= 1")
        if self.blocks is not None:
            object.__setattr__(self, "blocks", tuple(tuple(int(i) for i in b) for b in self.blocks))

    @property
    def n_stored(self) -> int:
        return self.n_samples // self.thin

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("blocks", "metric"):
            if d[key] is not None:
                d[key] = [list(b) if isinstance(b, tuple) else b for b in d[key]]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        d = dict(d)
        if d.get("blocks") is not None:
            d["blocks"] = tuple(tuple(b) for b in d["blocks"])
        if d.get("metric") is not None:
            d["metric"] = tuple(float(m) for m in d["metric"])
        return cls(**d)


@dataclass
class Chain:
    samples: np.ndarray
    seed: int
    algorithm: str
    thin: int
    acceptance_rate: np.ndarray
    adaptation_stopped_at: int
    log_density: np.ndarray
    divergences: int = 0
    capped: int = 0
    tuning: dict = field(default_factory=dict)
    final_tuning: dict = field(default_factory=dict)

    def __post_init__(self):
        self.acceptance_rate = np.atleast_1d(np.asarray(self.acceptance_rate, dtype=np.float64))
        if np.any((self.acceptance_rate < 0) | (self.acceptance_rate > 1)):
            raise ValueError("acceptance rates must lie in [0, 1]")

    @property
    def n_stored(self) -> int:
        return self.samples.shape[0]

    def metadata(self) -> dict:
        rate = self.acceptance_rate
        return {
            "algorithm": self.algorithm,
            "seed": int(self.seed),
            "thin": int(self.thin),
            "shape": list(self.samples.shape),
            "acceptance": {"mean": float(rate.mean()), "min": float(rate.min()),
                           "max": float(rate.max())},
            "divergences": int(self.divergences),
            "capped_stages": int(self.capped),
            "adaptation_length": int(self.adaptation_stopped_at),
        }


def _check_start(target, u0) -> np.ndarray:
    u0 = np.array(u0, dtype=np.float64).ravel()
    if u0.shape[0] != target.dim:
        raise ValueError(f"start has {u0.shape[0]} entries, target has dimension {target.dim}")
    if not np.all(np.isfinite(u0)):
        raise ValueError("start contains non-finite values")
    return u0


def _check_blocks(blocks, dim) -> list[np.ndarray]:
    if blocks is None:
        return [np.array([j], dtype=np.int64) for j in range(dim)]
    flat = np.concatenate([np.asarray(b, dtype=np.int64) for b in blocks])
    if flat.shape[0] != dim or not np.array_equal(np.sort(flat), np.arange(dim)):
        raise ValueError("blocks must partition the field indices")
    return [np.asarray(b, dtype=np.int64) for b in blocks]


def _singleton(blocks, dim) -> bool:
    return blocks is None or all(len(b) == 1 for b in blocks) and \
        [b[0] for b in blocks] == list(range(dim))


# -- Metropolis-within-Gibbs and RAM: compiled single-site path ----------------

def _kernel_run(p: Posterior, u0, cfg: SamplerConfig, algo: str) -> Chain:
    state = p.new_state(u0)
    ptr, idx, val, sq = p.operator.columns
    prior = p.terms.arrays
    n = p.dim
    rng = np.random.default_rng(cfg.seed)
    scales = np.full(n, cfg.initial_scale)
    # the start is the first history entry
    wf_n = np.ones(n, dtype=np.int64)
    wf_mean = state.u.copy()
    wf_m2 = np.zeros(n)
    accepts = np.zeros(n, dtype=np.int64)
    capped = np.zeros(1, dtype=np.int64)
    w = state.u.copy()

    def sweep(adapt):
        before = int(accepts.sum())
        k = _backend.kernels
        if algo == "mwg":
            dl, dp = k.mwg_sweep(*prior, ptr, idx, val, sq, p.inv_sigma2, state.u, state.residual,
                                 scales, rng, adapt, wf_n, wf_mean, wf_m2, cfg.cov_regularizer,
                                 cfg.min_history, accepts)
        else:
            dl, dp = k.ram_sweep(*prior, ptr, idx, val, sq, p.inv_sigma2, state.u, w,
                                 state.residual, scales, rng, adapt, wf_n, wf_mean, wf_m2,
                                 cfg.cov_regularizer, cfg.min_history, cfg.repelling_max_tries,
                                 accepts, capped)
        state.loglik += dl
        state.logprior += dp
        state.note_commits(int(accepts.sum()) - before)

    for _ in range(cfg.n_adapt):
        sweep(True)
    tuning = {"scales": scales.copy()}
    accepts[:] = 0
    samples = np.empty((cfg.n_stored, n))
    logd = np.empty(cfg.n_stored)
    for i in range(1, cfg.n_samples + 1):
        sweep(False)
        if i % cfg.thin == 0 and i // cfg.thin <= cfg.n_stored:
            samples[i // cfg.thin - 1] = state.u
            logd[i // cfg.thin - 1] = state.log_density
    if capped[0]:
        log.warning("RAM: %d stages hit repelling_max_tries=%d", capped[0], cfg.repelling_max_tries)
    return Chain(samples, cfg.seed, algo, cfg.thin, accepts / cfg.n_samples, cfg.n_adapt, logd,
                 capped=int(capped[0]), tuning=tuning, final_tuning={"scales": scales.copy()})


# -- generic block path ------------------------------------------------------

class _BlockAdapter:
    """Streaming mean/covariance of one block and its proposal factor."""

    def __init__(self, x0, initial_scale, reg, cov_factor, min_history):
        k = x0.shape[0]
        self.k = k
        self.n = 1
        self.mean = x0.astype(np.float64).copy()
        self.m2 = np.zeros((k, k))
        self.reg = reg
        self.cov_factor = cov_factor
        self.min_history = min_history
        self.factor = initial_scale * np.eye(k)

    def update(self, x):
        self.n += 1
        dm = x - self.mean
        self.mean += dm / self.n
        self.m2 += np.outer(dm, x - self.mean)
        if self.n >= self.min_history:
            self.factor = self._cholesky()

    def _cholesky(self):
        cov = self.cov_factor * self.m2 / (self.n - 1)
        if self.k == 1:
            return np.array([[SCALE_FACTOR * math.sqrt(cov[0, 0] + self.reg)]])
        while True:
            c = SCALE_FACTOR ** 2 / self.k * (cov + self.reg * np.eye(self.k))
            try:
                return np.linalg.cholesky(c)
            except np.linalg.LinAlgError:
                self.reg *= 10.0
                log.warning("proposal covariance not positive definite, raising delta to %g",
                            self.reg)

    def propose(self, x, rng):
        return x + self.factor @ rng.standard_normal(self.k)


def _accept(z, log_ratio):
    return log_ratio >= 0.0 or z <= math.exp(log_ratio)


def _generic_run(target, u0, cfg: SamplerConfig, algo: str) -> Chain:
    blocks = _check_blocks(cfg.blocks, target.dim)
    state = target.new_state(u0)
    rng = np.random.default_rng(cfg.seed)
    cov_factor = 1.0 if algo == "mwg" else 0.5
    adapters = [_BlockAdapter(state.u[b], cfg.initial_scale, cfg.cov_regularizer, cov_factor,
                              cfg.min_history) for b in blocks]
    accepts = np.zeros(len(blocks), dtype=np.int64)
    capped = 0
    w = state.u.copy()
    samples = np.empty((cfg.n_stored, target.dim))
    logd = np.empty(cfg.n_stored)
    tuning = {"factors": [a.factor.copy() for a in adapters]}

    def stage(start, q, accept_fn):
        nonlocal capped
        for _ in range(cfg.repelling_max_tries):
            x = start + q.factor @ rng.standard_normal(q.k)
            z = rng.random()
            lx = state.delta_block(b_idx, x)
            if _accept(z, accept_fn(lx)):
                return x, lx
        capped += 1
        return x, lx

    for i in range(-cfg.n_adapt + 1, cfg.n_samples + 1):
        adapt = i <= 0
        if i == 1:
            tuning = {"factors": [a.factor.copy() for a in adapters]}
            accepts[:] = 0
        for j, b_idx in enumerate(blocks):
            q = adapters[j]
            up = state.u[b_idx].copy()
            if algo == "mwg":
                x = q.propose(up, rng)
                z = rng.random()
                if _accept(z, state.delta_block(b_idx, x)):
                    state.commit_block(b_idx, x)
                    accepts[j] += 1
            else:
                # repelling, attracting, then the auxiliary repelling stage
                x1, l1 = stage(up, q, lambda lx: -lx)
                x2, l2 = stage(x1, q, lambda lx: lx - l1)
                x3, l3 = stage(x2, q, lambda lx: l2 - lx)
                lw = state.delta_block(b_idx, w[b_idx])
                z = rng.random()
                if _accept(z, l2 + min(0.0, -lw) - min(0.0, l2 - l3)):
                    state.commit_block(b_idx, x2)
                    w[b_idx] = x3
                    accepts[j] += 1
            if adapt:
                q.update(state.u[b_idx])
        if i >= 1 and i % cfg.thin == 0 and i // cfg.thin <= cfg.n_stored:
            samples[i // cfg.thin - 1] = state.u
            logd[i // cfg.thin - 1] = state.log_density
    if capped:
        log.warning("RAM: %d stages hit repelling_max_tries=%d", capped, cfg.repelling_max_tries)
    return Chain(samples, cfg.seed, algo, cfg.thin, accepts / cfg.n_samples, cfg.n_adapt, logd,
                 capped=capped, tuning=tuning,
                 final_tuning={"factors": [a.factor.copy() for a in adapters]})


def _run_metropolis(target, u0, cfg, algo):
    u0 = _check_start(target, u0)
    if isinstance(target, Posterior) and _singleton(cfg.blocks, target.dim):
        return _kernel_run(target, u0, cfg, algo)
    return _generic_run(target, u0, cfg, algo)


def mwg_sample(target, u0, cfg: SamplerConfig) -> Chain:
    """Adaptive Metropolis-within-Gibbs with a lexicographic block scan.

    Each block proposes ``u* = u + Q r`` with ``r`` standard normal. During the
    first ``cfg.n_adapt`` sweeps ``Q = chol(2.38^2 / k (cov + delta I))`` is
    refreshed from the streaming history of the block (which includes the
    start); afterwards it is frozen.
    """
    return _run_metropolis(target, u0, cfg, "mwg")


def ram_sample(target, u0, cfg: SamplerConfig) -> Chain:
    """Repelling-Attracting Metropolis within Gibbs.

    Per block: a downhill (repelling) stage, an uphill (attracting) stage and
    an auxiliary repelling stage from the proposal, each repeated until
    accepted or ``cfg.repelling_max_tries`` is hit. The auxiliary field starts
    at ``u0``. Adaptation uses half the history covariance.
    """
    return _run_metropolis(target, u0, cfg, "ram")


# -- Hamiltonian dynamics ----------------------------------------------------

class DivergenceError(FloatingPointError):
    """Non-finite gradient or energy during Hamiltonian integration."""


def leapfrog_step(u, p, eps: float, M, grad):
    """One Stormer-Verlet step for ``H = -log pi(u) + p^T M^-1 p / 2``.

    ``grad`` returns the gradient of ``log pi``; ``M`` is the diagonal metric.
    """
    if eps <= 0:
        raise ValueError("step size must be > 0")
    u = np.asarray(u, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    M = np.broadcast_to(np.asarray(M, dtype=np.float64), u.shape)
    g = np.asarray(grad(u), dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite gradient")
    p_half = p + 0.5 * eps * g
    u_new = u + eps * p_half / M
    g = np.asarray(grad(u_new), dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite gradient")
    return u_new, p_half + 0.5 * eps * g


def u_turn_check(p_minus, p_plus, momentum_sum, M, rule: str = "generalized",
                 u_minus=None, u_plus=None) -> bool:
    """True when the trajectory starts to double back.

    ``generalized``: ``M^-1 p- . rho < 0`` or ``M^-1 p+ . rho < 0`` with ``rho``
    the summed momentum. ``original``: the same test against the chord
    ``u+ - u-`` instead of ``rho``. Zero dot products do not stop.
    """
    M = np.asarray(M, dtype=np.float64)
    if np.any(M <= 0):
        raise ValueError("metric entries must be > 0")
    p_minus = np.asarray(p_minus, dtype=np.float64)
    p_plus = np.asarray(p_plus, dtype=np.float64)
    if rule == "generalized":
        span = np.asarray(momentum_sum, dtype=np.float64)
    elif rule == "original":
        if u_minus is None or u_plus is None:
            raise ValueError("the original rule needs both trajectory end points")
        span = np.asarray(u_plus, dtype=np.float64) - np.asarray(u_minus, dtype=np.float64)
    else:
        raise ValueError(f"unknown U-turn rule {rule!r}")
    return bool((p_minus / M) @ span < 0 or (p_plus / M) @ span < 0)


@dataclass
class _Point:
    u: np.ndarray
    p: np.ndarray
    logp: float
    grad: np.ndarray


@dataclass
class _Tree:
    minus: _Point
    plus: _Point
    proposal: _Point
    rho: np.ndarray
    log_weight: float
    valid: bool
    n_leapfrog: int
    sum_accept: float
    divergent: bool = False


class _Hamiltonian:
    def __init__(self, target, metric):
        self.target = target
        self.metric = metric
        self.n_grad = 0

    def kinetic(self, p):
        return 0.5 * float(p @ (p / self.metric))

    def point(self, u, p):
        logp, g = self.target.value_and_grad(u)
        self.n_grad += 1
        return _Point(u, p, float(logp), np.asarray(g, dtype=np.float64))

    def step(self, z: _Point, eps):
        p_half = z.p + 0.5 * eps * z.grad
        u = z.u + eps * p_half / self.metric
        nxt = self.point(u, p_half)
        nxt.p = p_half + 0.5 * eps * nxt.grad
        return nxt

    def energy(self, z: _Point):
        return -z.logp + self.kinetic(z.p)


def _build_tree(ham: _Hamiltonian, z: _Point, direction, depth, eps, H0, rng, rule) -> _Tree:
    if depth == 0:
        nxt = ham.step(z, direction * eps)
        H = ham.energy(nxt)
        dH = H - H0
        if not np.isfinite(H) or not np.all(np.isfinite(nxt.grad)) or abs(dH) > DIVERGENCE_THRESHOLD:
            return _Tree(nxt, nxt, nxt, nxt.p, -np.inf, False, 1, 0.0, divergent=True)
        return _Tree(nxt, nxt, nxt, nxt.p.copy(), -dH, True, 1, min(1.0, math.exp(-dH)))
    first = _build_tree(ham, z, direction, depth - 1, eps, H0, rng, rule)
    if not first.valid:
        return first
    edge = first.plus if direction > 0 else first.minus
    second = _build_tree(ham, edge, direction, depth - 1, eps, H0, rng, rule)
    n_leap = first.n_leapfrog + second.n_leapfrog
    acc = first.sum_accept + second.sum_accept
    if not second.valid:
        return _Tree(first.minus, first.plus, first.proposal, first.rho, first.log_weight,
                     False, n_leap, acc, divergent=second.divergent)
    minus, plus = (first.minus, second.plus) if direction > 0 else (second.minus, first.plus)
    log_w = np.logaddexp(first.log_weight, second.log_weight)
    # uniform multinomial choice inside a subtree
    proposal = first.proposal
    if math.log(rng.random()) < second.log_weight - log_w:
        proposal = second.proposal
    rho = first.rho + second.rho
    valid = not u_turn_check(minus.p, plus.p, rho, ham.metric, rule, minus.u, plus.u)
    return _Tree(minus, plus, proposal, rho, log_w, valid, n_leap, acc)


def _nuts_transition(ham: _Hamiltonian, current: _Point, eps, max_depth, rng, rule):
    """One NUTS iteration; returns (point, accept_stat, depth, n_leapfrog, divergent)."""
    p0 = np.sqrt(ham.metric) * rng.standard_normal(current.u.shape[0])
    z0 = _Point(current.u, p0, current.logp, current.grad)
    H0 = ham.energy(z0)
    minus = plus = z0
    proposal = z0
    rho = p0.copy()
    log_w = 0.0
    n_leap = 0
    sum_acc = 0.0
    divergent = False
    depth = 0
    while depth < max_depth:
        direction = 1 if rng.random() < 0.5 else -1
        edge = plus if direction > 0 else minus
        sub = _build_tree(ham, edge, direction, depth, eps, H0, rng, rule)
        depth += 1
        n_leap += sub.n_leapfrog
        sum_acc += sub.sum_accept
        if not sub.valid:
            divergent = sub.divergent
            break
        if direction > 0:
            plus = sub.plus
        else:
            minus = sub.minus
        # biased progressive sampling across the doubling
        if math.log(rng.random()) < sub.log_weight - log_w:
            proposal = sub.proposal
        log_w = np.logaddexp(log_w, sub.log_weight)
        rho = rho + sub.rho
        if u_turn_check(minus.p, plus.p, rho, ham.metric, rule, minus.u, plus.u):
            break
    stat = sum_acc / n_leap if n_leap else 0.0
    out = _Point(proposal.u, proposal.p, proposal.logp, proposal.grad)
    return out, stat, depth, n_leap, divergent


def _initial_step_size(ham: _Hamiltonian, z: _Point, rng) -> float:
    """Double or halve ``eps`` until the one-step acceptance crosses 1/2."""
    eps = 1.0
    p = np.sqrt(ham.metric) * rng.standard_normal(z.u.shape[0])
    start = _Point(z.u, p, z.logp, z.grad)
    H0 = ham.energy(start)

    def log_accept(e):
        nxt = ham.step(start, e)
        H = ham.energy(nxt)
        return -np.inf if not np.isfinite(H) else H0 - H

    a = log_accept(eps)
    direction = 1 if a > math.log(0.5) else -1
    for _ in range(100):
        eps_new = eps * 2.0 ** direction
        a = log_accept(eps_new)
        if (direction == 1 and not a > math.log(0.5)) or (direction == -1 and a > math.log(0.5)):
            return eps_new if direction == -1 else eps
        eps = eps_new
    return eps


class _DualAveraging:
    """Step-size adaptation toward a target mean acceptance statistic."""

    gamma, t0, kappa = 0.05, 10.0, 0.75

    def __init__(self, eps, target):
        self.restart(eps)
        self.target = target

    def restart(self, eps):
        self.mu = math.log(10.0 * eps)
        self.h_bar = 0.0
        self.log_eps_bar = 0.0
        self.t = 0

    def update(self, stat) -> float:
        self.t += 1
        eta = 1.0 / (self.t + self.t0)
        self.h_bar = (1 - eta) * self.h_bar + eta * (self.target - stat)
        log_eps = self.mu - math.sqrt(self.t) / self.gamma * self.h_bar
        w = self.t ** -self.kappa
        self.log_eps_bar = w * log_eps + (1 - w) * self.log_eps_bar
        return math.exp(log_eps)

    @property
    def final(self) -> float:
        return math.exp(self.log_eps_bar)


def adaptation_windows(n_adapt: int) -> tuple[int, list[int]]:
    """Start of the metric-estimation phase and the end of each window.

    Uses an initial fast phase of 75, terminal phase of 50 and base window of
    25 iterations, shrunk to 15% / 75% / 10% of short adaptation runs. Window
    sizes double; the last window absorbs the remainder.
    """
    if n_adapt < 20:
        return n_adapt, []
    init, term, base = 75, 50, 25
    if init + term + base > n_adapt:
        init, term = int(0.15 * n_adapt), int(0.1 * n_adapt)
        base = n_adapt - init - term
    ends = []
    start, size = init, base
    last = n_adapt - term
    while True:
        end = start + size
        if end + 2 * size > last:
            ends.append(last)
            return init, ends
        ends.append(end)
        start, size = end, 2 * size


def nuts_sample(target, u0, cfg: SamplerConfig) -> Chain:
    """Multinomial NUTS with a diagonal metric and generalized U-turn rule.

    Momentum is drawn from ``N(0, M)``. During adaptation the step size follows
    dual averaging toward ``cfg.target_accept`` and ``M^-1`` is set to the
    regularized sample variance at the end of each window. Subtrees with an
    energy error above ``DIVERGENCE_THRESHOLD`` are discarded and counted.
    """
    u0 = _check_start(target, u0)
    rng = np.random.default_rng(cfg.seed)
    d = target.dim
    metric = np.ones(d) if cfg.metric is None else np.array(cfg.metric, dtype=np.float64)
    if metric.shape[0] != d:
        raise ValueError("metric length does not match the target dimension")
    ham = _Hamiltonian(target, metric)
    z = ham.point(u0, np.zeros(d))
    if not np.isfinite(z.logp):
        raise ValueError("start has zero posterior density")
    eps = cfg.step_size if cfg.step_size > 0 else _initial_step_size(ham, z, rng)
    da = _DualAveraging(eps, cfg.target_accept)
    first, windows = adaptation_windows(cfg.n_adapt) if cfg.adapt_metric else (0, [])
    wf_n, wf_mean, wf_m2 = 0, np.zeros(d), np.zeros(d)
    divergences = 0

    for i in range(cfg.n_adapt):
        z, stat, _, _, div = _nuts_transition(ham, z, eps, cfg.max_depth, rng, cfg.u_turn)
        divergences += div
        eps = da.update(stat)
        if windows and first <= i < windows[-1]:
            wf_n += 1
            dm = z.u - wf_mean
            wf_mean += dm / wf_n
            wf_m2 += dm * (z.u - wf_mean)
            if i + 1 in windows:
                var = wf_m2 / (wf_n - 1)
                inv = (wf_n / (wf_n + 5.0)) * var + 1e-3 * (5.0 / (wf_n + 5.0))
                ham.metric = 1.0 / inv
                wf_n, wf_mean, wf_m2 = 0, np.zeros(d), np.zeros(d)
                eps = _initial_step_size(ham, z, rng)
                da.restart(eps)
    if cfg.n_adapt:
        eps = da.final
    tuning = {"step_size": eps, "metric": ham.metric.copy(), "warmup_divergences": divergences}
    divergences = 0

    samples = np.empty((cfg.n_stored, d))
    logd = np.empty(cfg.n_stored)
    stats = np.empty(cfg.n_samples)
    depths = np.empty(cfg.n_samples, dtype=np.int64)
    max_leapfrog = 0
    for i in range(1, cfg.n_samples + 1):
        z, stat, depth, n_leap, div = _nuts_transition(ham, z, eps, cfg.max_depth, rng, cfg.u_turn)
        divergences += div
        stats[i - 1] = stat
        depths[i - 1] = depth
        max_leapfrog = max(max_leapfrog, n_leap)
        if i % cfg.thin == 0 and i // cfg.thin <= cfg.n_stored:
            samples[i // cfg.thin - 1] = z.u
            logd[i // cfg.thin - 1] = z.logp
    if divergences:
        log.warning("NUTS: %d divergent transitions", divergences)
    return Chain(samples, cfg.seed, "nuts", cfg.thin, np.array([stats.mean()]), cfg.n_adapt, logd,
                 divergences=divergences, tuning=tuning,
                 final_tuning={"step_size": eps, "metric": ham.metric.copy(),
                               "max_tree_depth": int(depths.max()),
                               "max_leapfrog": int(max_leapfrog)})


def sample(target, u0, cfg: SamplerConfig) -> Chain:
    """Dispatch on ``cfg.algorithm``."""
    return {"mwg": mwg_sample, "ram": ram_sample, "nuts": nuts_sample}[cfg.algorithm](target, u0, cfg)
