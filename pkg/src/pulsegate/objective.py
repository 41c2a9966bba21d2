"""Gate objective: trace infidelity plus integrated guard population.

The propagated columns (u_j, v_j) represent psi_j = u_j - i v_j; with
target real parts d_u = Re V_tg^rw, d_v = -Im V_tg^rw the complex trace
overlap is

    S = sum_j (<u_j, du_j> + <v_j, dv_j>)
        + i sum_j (<v_j, du_j> - <u_j, dv_j>),

bounded by |S| <= E, and the infidelity J1 = 1 - |S|^2 / E^2 lies in
[0, 1].  The guard cost J2 is accumulated by the forward sweep.
"""

import concurrent.futures
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import numpy_backend as _nb
from .errors import ConfigError


@dataclass(frozen=True)
class ObjectiveReport:
    j1: float
    j2: float
    overlap: complex
    guard_max: float

    @property
    def total(self):
        return self.j1 + self.j2


def overlap_from_final(u, v, d_u, d_v):
    """Complex trace overlap of the final real-split state with the
    rotated target."""
    re = float(np.sum(u * d_u) + np.sum(v * d_v))
    im = float(np.sum(v * d_u) - np.sum(u * d_v))
    return complex(re, im)


def infidelity(overlap, e_dim):
    """J1 = 1 - |S|^2 / E^2, clamped against roundoff at the bound."""
    j1 = 1.0 - abs(overlap) ** 2 / float(e_dim) ** 2
    return max(j1, 0.0)


class ObjectiveAccumulator:
    """Streams stage blocks into the guard cost; merge-only, so column
    partitions can accumulate independently and add."""

    def __init__(self, weights, horizon, steps):
        self.w = np.asarray(weights, dtype=float)
        self.h = horizon / steps
        self.horizon = horizon
        self._sum = 0.0

    def add_step(self, u1, u2, v1):
        w = self.w
        self._sum += float(w @ (u1 * u1).sum(axis=1)) \
            + float(w @ (u2 * u2).sum(axis=1)) \
            + 2.0 * float(w @ (v1 * v1).sum(axis=1))

    def merge(self, other):
        self._sum += other._sum
        return self

    @property
    def value(self):
        return self.h / (2.0 * self.horizon) * self._sum


def evaluate_objective(problem, alpha, kappa=None, backend=None):
    """Forward-only objective evaluation; returns ObjectiveReport."""
    core = _nb.core_from_problem(problem, kappa_override=kappa)
    res = _kernels.forward_sweep(core, np.asarray(alpha, dtype=float),
                                 problem.steps, backend=backend)
    s = overlap_from_final(res.u, res.v, problem.d_u, problem.d_v)
    return ObjectiveReport(
        j1=infidelity(s, problem.essential_dim),
        j2=res.j2,
        overlap=s,
        guard_max=res.guard_max,
    )


def gauss_legendre(n):
    """Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1],
    nodes ascending, weights summing to 2."""
    if not 1 <= int(n) <= 64:
        raise ConfigError(f"quadrature order must lie in [1, 64], got {n}")
    return np.polynomial.legendre.leggauss(int(n))


@dataclass(frozen=True)
class NoiseModel:
    """Dephasing-style diagonal perturbation kappa -> kappa + eps * scale.

    `level_scales` is a dimensionless length-N vector (the standard
    4-level choice is (0, 1/100, 1/10, 1)); eps is in rad/ns.  The
    quadrature expectation is over eps uniform on [-eps_max, eps_max]:
    weights are normalized to sum to one, so a constant integrand returns
    the unperturbed value.
    """

    eps_max: float
    quad_order: int
    level_scales: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "level_scales",
            np.asarray(self.level_scales, dtype=float),
        )
        if self.eps_max < 0.0:
            raise ConfigError("eps_max must be nonnegative")

    def nodes(self):
        """(eps_k, w_k) with sum w_k = 1."""
        x, w = gauss_legendre(self.quad_order)
        return self.eps_max * x, 0.5 * w

    def perturbed_kappa(self, system, eps):
        scales = self.level_scales
        if scales.shape != (system.dim,):
            raise ConfigError(
                f"level_scales must have length {system.dim}, "
                f"got {scales.shape}"
            )
        return system.kappa + eps * scales


def risk_neutral_objective(problem, alpha, noise, evaluator, threads=1):
    """Quadrature average of `evaluator(alpha, kappa)` over the noise.

    evaluator returns (report, grad-or-None); the averaged report carries
    weighted J1/J2 and the worst-node guard maximum.  Node evaluations
    are independent and run on a thread pool when threads > 1.
    """
    eps, wts = noise.nodes()
    kappas = [noise.perturbed_kappa(problem.system, e) for e in eps]
    if threads > 1 and len(kappas) > 1:
        with concurrent.futures.ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda k: evaluator(alpha, k), kappas))
    else:
        results = [evaluator(alpha, k) for k in kappas]
    j1 = sum(w * r.j1 for w, (r, _) in zip(wts, results))
    j2 = sum(w * r.j2 for w, (r, _) in zip(wts, results))
    s = sum(w * r.overlap for w, (r, _) in zip(wts, results))
    gmax = max(r.guard_max for r, _ in results)
    report = ObjectiveReport(j1=float(j1), j2=float(j2), overlap=s,
                             guard_max=float(gmax))
    grads = [g for _, g in results]
    if any(g is None for g in grads):
        return report, None
    grad = np.zeros_like(grads[0])
    for w, g in zip(wts, grads):
        grad += w * g
    return report, grad
