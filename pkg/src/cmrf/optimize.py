"""MAP estimation with limited-memory BFGS and a strong-Wolfe line search."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import asdict, dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    """L-BFGS settings.

    Convergence is declared when ``|grad| <= grad_tol * (1 + |f(u0)|)`` if
    ``relative_tol`` is set, else when ``|grad| <= grad_tol``.
    """

    memory: int = 10
    max_iter: int = 10_000
    grad_tol: float = 1e-6
    relative_tol: bool = True
    c1: float = 1e-4
    c2: float = 0.9
    max_backtracks: int = 30

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.max_iter < 1 or self.max_backtracks < 1:
            raise ValueError("max_iter and max_backtracks must be >= 1")
        if self.grad_tol <= 0:
            raise ValueError("grad_tol must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        return cls(**d)


@dataclass
class MapResult:
    u_map: np.ndarray
    grad_norm_trace: np.ndarray
    objective_trace: np.ndarray
    iterations: int
    converged: bool
    message: str = ""


class LineSearchError(RuntimeError):
    pass


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic through two points with slopes; None if undefined."""
    d1 = ga + gb - 3 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = gb - ga + 2 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def _zoom(phi, f0, g0, lo, hi, cfg, budget, decrease_ok, eps_f):
    a_lo, f_lo, g_lo = lo
    a_hi, f_hi, g_hi = hi
    for _ in range(budget):
        a = None
        if np.isfinite(f_hi) and np.isfinite(g_hi):
            a = _cubic_min(a_lo, f_lo, g_lo, a_hi, f_hi, g_hi)
        lo_b, hi_b = min(a_lo, a_hi), max(a_lo, a_hi)
        width = hi_b - lo_b
        # keep the trial point safely inside the bracket
        if a is None or not lo_b + 0.1 * width <= a <= hi_b - 0.1 * width:
            a = 0.5 * (a_lo + a_hi)
        fa, ga, extra = phi(a)
        if not decrease_ok(a, fa, ga) or fa > f_lo + eps_f:
            a_hi, f_hi, g_hi = a, fa, ga
        else:
            if abs(ga) <= -cfg.c2 * g0:
                return a, fa, extra
            if ga * (a_hi - a_lo) >= 0:
                a_hi, f_hi, g_hi = a_lo, f_lo, g_lo
            a_lo, f_lo, g_lo = a, fa, ga
        if abs(a_hi - a_lo) < 1e-16 * max(1.0, a_lo):
            break
    raise LineSearchError("zoom did not find a strong-Wolfe point")


def strong_wolfe(fun, x, f0, g0_vec, direction, alpha0, cfg: OptimizerConfig):
    """Step length satisfying the strong Wolfe conditions along ``direction``.

    Near the optimum, differences of ``f`` drown in rounding error. There the
    sufficient-decrease test falls back to the approximate Wolfe condition of
    Hager and Zhang: ``f`` within rounding of ``f0`` and the directional
    derivative reduced to at most ``(2 c1 - 1) g0``.

    Returns ``(alpha, f_new, g_new)``; raises :class:`LineSearchError`.
    """
    g0 = float(g0_vec @ direction)
    if g0 >= 0:
        raise LineSearchError("not a descent direction")
    eps_f = 1e-13 * (1.0 + abs(f0))

    def decrease_ok(a, fa, ga):
        return (fa <= f0 + cfg.c1 * a * g0
                or (fa <= f0 + eps_f and ga <= (2 * cfg.c1 - 1) * g0))

    def phi(a):
        f, g = fun(x + a * direction)
        f = float(f)
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            return math.inf, math.inf, (f, g)
        return f, float(g @ direction), (f, g)

    a_prev, f_prev, g_prev = 0.0, f0, g0
    a = alpha0
    for i in range(cfg.max_backtracks):
        fa, ga, extra = phi(a)
        if not np.isfinite(fa):
            # overshoot into an invalid region: shrink toward the last good point
            a = a_prev + 0.25 * (a - a_prev)
            continue
        if not decrease_ok(a, fa, ga) or (i > 0 and fa > f_prev + eps_f):
            a, _, extra = _zoom(phi, f0, g0, (a_prev, f_prev, g_prev), (a, fa, ga), cfg,
                                cfg.max_backtracks, decrease_ok, eps_f)
            return a, extra[0], extra[1]
        if abs(ga) <= -cfg.c2 * g0:
            return a, extra[0], extra[1]
        if ga >= 0:
            a, _, extra = _zoom(phi, f0, g0, (a, fa, ga), (a_prev, f_prev, g_prev), cfg,
                                cfg.max_backtracks, decrease_ok, eps_f)
            return a, extra[0], extra[1]
        a_prev, f_prev, g_prev = a, fa, ga
        a = 2.0 * a
    raise LineSearchError("no acceptable step within max_backtracks")


def _two_loop(g, s_hist, y_hist):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def lbfgs(fun, x0, cfg: OptimizerConfig | None = None) -> MapResult:
    """Minimize ``f`` where ``fun(x)`` returns ``(f, grad)``.

    The history is cleared once after a line-search failure; a second failure
    stops with ``converged=False`` and the best iterate.
    """
    cfg = cfg or OptimizerConfig()
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    f = float(f)
    g = np.asarray(g, dtype=np.float64)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise FloatingPointError("objective is not finite at the start point")
    tol = cfg.grad_tol * (1.0 + abs(f)) if cfg.relative_tol else cfg.grad_tol
    s_hist, y_hist = deque(maxlen=cfg.memory), deque(maxlen=cfg.memory)
    gnorm = float(np.linalg.norm(g))
    grad_trace, f_trace = [gnorm], [f]
    restarted = False
    it = 0
    message = "max_iter reached"
    converged = gnorm <= tol
    if converged:
        message = "start point satisfies the tolerance"
    while not converged and it < cfg.max_iter:
        d = -_two_loop(g, s_hist, y_hist)
        if not s_hist:
            alpha0 = min(1.0, 1.0 / gnorm)
        else:
            alpha0 = 1.0
        if g @ d >= 0:
            d = -g
            alpha0 = min(1.0, 1.0 / gnorm)
            s_hist.clear()
            y_hist.clear()
        try:
            alpha, f_new, g_new = strong_wolfe(fun, x, f, g, d, alpha0, cfg)
        except LineSearchError as err:
            if restarted or not s_hist:
                message = f"line search failed: {err}"
                log.warning("L-BFGS stopped at iteration %d: %s", it, err)
                break
            log.info("line search failed at iteration %d, clearing the memory", it)
            s_hist.clear()
            y_hist.clear()
            restarted = True
            continue
        g_new = np.asarray(g_new, dtype=np.float64)
        s = alpha * d
        yv = g_new - g
        if s @ yv > 1e-12 * (s @ s) ** 0.5 * (yv @ yv) ** 0.5:
            s_hist.append(s)
            y_hist.append(yv)
        x = x + s
        f, g = float(f_new), g_new
        gnorm = float(np.linalg.norm(g))
        it += 1
        grad_trace.append(gnorm)
        f_trace.append(f)
        if gnorm <= tol:
            converged = True
            message = "gradient tolerance reached"
    return MapResult(x, np.array(grad_trace), np.array(f_trace), it, converged, message)


def lbfgs_map(target, u0=None, cfg: OptimizerConfig | None = None) -> MapResult:
    """MAP estimate: minimize ``-log pi(u)`` of a posterior (start at zero by default)."""
    u0 = np.zeros(target.dim) if u0 is None else np.asarray(u0, dtype=np.float64)
    if u0.shape[0] != target.dim:
        raise ValueError(f"start has {u0.shape[0]} entries, target has dimension {target.dim}")

    def neg(u):
        v, g = target.value_and_grad(u)
        return -v, -g

    return lbfgs(neg, u0, cfg)
