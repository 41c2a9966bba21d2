"""Projected L-BFGS with box bounds for the control search.

Two-loop recursion on gradient differences restricted to the free set,
gradient-projection (Armijo) backtracking along the projected path, and a
curvature-memory reset whenever the active set changes by more than a
quarter of the variables or a step fails the curvature test (a failed
test means the stored pairs no longer describe the local Hessian, and a
stale scale can trap the search in vanishing steps).  While the memory
is empty the search direction is the raw gradient, whose scale bears no
relation to the box, so the first trial displacement is capped at a
quarter of the narrowest finite box width; one accepted step restores
the usual unit trial through the two-loop scaling.  Convergence is
declared on the infinity norm
of the projected gradient P(x - g) - x; an infidelity target from the
objective report stops early.

The objective callable follows the evaluator protocol
(alpha, need_grad) -> (value, grad_or_None, report): backtracking trials
pay only forward evaluations, the gradient is computed once per accepted
iterate.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 200
    memory: int = 5
    grad_tol: float = 1e-5
    infidelity_target: float = 1e-4
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 30
    active_reset_fraction: float = 0.25
    curvature_skip_tol: float = 1e-10

    def __post_init__(self):
        if self.memory < 0:
            raise ConfigError("memory must be nonnegative")
        if not 0.0 < self.backtrack < 1.0:
            raise ConfigError("backtrack factor must lie in (0, 1)")
        if not 0.0 < self.armijo_c1 < 1.0:
            raise ConfigError("armijo_c1 must lie in (0, 1)")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    value: float
    j1: float
    j2: float
    pg_norm: float
    step: float
    obj_evals: int
    grad_evals: int


@dataclass
class OptimizerResult:
    x: np.ndarray
    value: float
    report: object
    status: str
    iterations: int
    history: list = field(default_factory=list)
    obj_evals: int = 0
    grad_evals: int = 0
    wall_time: float = 0.0


def initialize_parameters(size, alpha_max, rng, pinned=(), scale=0.01):
    """Uniform draw on [0, alpha_max * scale] with pinned entries zeroed.

    `alpha_max` may be a scalar or a per-index bound vector."""
    bound = np.broadcast_to(np.asarray(alpha_max, dtype=float), (size,))
    x = rng.uniform(0.0, 1.0, size=size) * (bound * scale)
    if len(pinned):
        x[list(pinned)] = 0.0
    return x


def _project(x, lo, hi):
    return np.minimum(np.maximum(x, lo), hi)


def _two_loop(g, s_list, y_list):
    """L-BFGS two-loop recursion; returns -H g (a descent direction)."""
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_list), reversed(y_list)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    if s_list:
        s, y = s_list[-1], y_list[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), a in zip(zip(s_list, y_list), reversed(alphas)):
        rho = 1.0 / (y @ s)
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def minimize(evaluate, x0, lower, upper, config=None, pinned=(),
             callback=None):
    """Minimize the evaluator objective inside the box [lower, upper].

    Returns OptimizerResult with status one of converged_grad,
    target_reached, max_iters, stalled, aborted_nonfinite.
    """
    cfg = config or OptimizerConfig()
    x = np.asarray(x0, dtype=float).copy()
    d_size = x.size
    lower = np.broadcast_to(np.asarray(lower, dtype=float), x.shape).copy()
    upper = np.broadcast_to(np.asarray(upper, dtype=float), x.shape).copy()
    if np.any(lower > upper):
        raise ConfigError("lower bound exceeds upper bound")
    if len(pinned):
        pin = np.asarray(list(pinned), dtype=np.intp)
        lower[pin] = 0.0
        upper[pin] = 0.0
    x = _project(x, lower, upper)

    t0 = time.perf_counter()
    n_obj = n_grad = 0
    value, grad, report = evaluate(x, True)
    n_obj += 1
    n_grad += 1
    if not np.isfinite(value):
        return OptimizerResult(x=x, value=value, report=report,
                               status="aborted_nonfinite", iterations=0,
                               obj_evals=n_obj, grad_evals=n_grad,
                               wall_time=time.perf_counter() - t0)

    s_mem, y_mem = [], []
    history = []
    status = "max_iters"
    edge = 1e-12 * np.maximum(1.0, upper - lower)
    active = (x <= lower + edge) & (grad > 0.0)
    active |= (x >= upper - edge) & (grad < 0.0)

    def pg_norm_of(xx, gg):
        return float(np.abs(_project(xx - gg, lower, upper) - xx).max())

    pg = pg_norm_of(x, grad)
    history.append(IterationRecord(0, value, report.j1, report.j2, pg, 0.0,
                                   n_obj, n_grad))
    if callback is not None:
        callback(history[-1], x)

    for it in range(1, cfg.max_iters + 1):
        if report.j1 <= cfg.infidelity_target:
            status = "target_reached"
            break
        if pg <= cfg.grad_tol:
            status = "converged_grad"
            break

        g_free = np.where(active, 0.0, grad)
        direction = _two_loop(g_free, s_mem, y_mem)
        direction[active] = 0.0
        if direction @ grad > -1e-14 * max(1.0, float(np.abs(grad).max())):
            direction = -g_free
            s_mem.clear()
            y_mem.clear()
        if not np.any(direction):
            status = "stalled"
            break

        step = 1.0
        if not s_mem:
            # no curvature information: a raw steepest-descent trial can
            # project onto a box corner in one jump, so cap the first
            # displacement at a quarter of the narrowest finite box width
            span = upper - lower
            finite = np.isfinite(span) & (span > 0.0)
            dmax = float(np.abs(direction).max())
            if np.any(finite) and dmax > 0.0:
                step = min(1.0, 0.25 * float(span[finite].min()) / dmax)
        accepted = False
        for _ in range(cfg.max_backtracks + 1):
            x_try = _project(x + step * direction, lower, upper)
            pred = grad @ (x_try - x)
            if pred >= 0.0:
                step *= cfg.backtrack
                continue
            v_try, _, rep_try = evaluate(x_try, False)
            n_obj += 1
            if np.isfinite(v_try) and v_try <= value + cfg.armijo_c1 * pred:
                accepted = True
                break
            step *= cfg.backtrack
        if not accepted:
            status = "stalled"
            break

        v_new, g_new, rep_new = evaluate(x_try, True)
        n_obj += 1
        n_grad += 1
        if not (np.isfinite(v_new) and np.all(np.isfinite(g_new))):
            status = "aborted_nonfinite"
            x, value, report = x_try, v_new, rep_new
            break

        s_vec = x_try - x
        y_vec = g_new - grad
        sy = s_vec @ y_vec
        if cfg.memory > 0 and sy > cfg.curvature_skip_tol \
                * float(np.linalg.norm(s_vec) * np.linalg.norm(y_vec)):
            s_mem.append(s_vec)
            y_mem.append(y_vec)
            if len(s_mem) > cfg.memory:
                s_mem.pop(0)
                y_mem.pop(0)
        else:
            s_mem.clear()
            y_mem.clear()

        new_active = (x_try <= lower + edge) & (g_new > 0.0)
        new_active |= (x_try >= upper - edge) & (g_new < 0.0)
        if np.count_nonzero(new_active ^ active) \
                > cfg.active_reset_fraction * d_size:
            s_mem.clear()
            y_mem.clear()
        active = new_active

        x, value, grad, report = x_try, v_new, g_new, rep_new
        pg = pg_norm_of(x, grad)
        history.append(IterationRecord(it, value, report.j1, report.j2,
                                       pg, step, n_obj, n_grad))
        if callback is not None:
            callback(history[-1], x)

    if status == "max_iters" and report.j1 <= cfg.infidelity_target:
        status = "target_reached"
    if status == "max_iters" and pg <= cfg.grad_tol:
        status = "converged_grad"
    return OptimizerResult(
        x=x, value=value, report=report, status=status,
        iterations=len(history) - 1, history=history,
        obj_evals=n_obj, grad_evals=n_grad,
        wall_time=time.perf_counter() - t0,
    )
