"""Discrete-adjoint gradient of the gate objective.

The gradient differentiates the time-discrete objective exactly (to
roundoff): the backward sweep replays the trajectory in reverse using the
integrator's time-symmetry, advances the adjoint pair (mu, nu) with the
transposed stage solves and the guard-cost forcing, and contracts stage
values with envelope derivatives.  Verification against central finite
differences of the forward objective is part of the test suite and the
`gradcheck` command.
"""

import numpy as np

from . import _kernels
from ._kernels import numpy_backend as _nb
from .objective import ObjectiveReport, infidelity, overlap_from_final


def terminal_adjoint(overlap, d_u, d_v, e_dim):
    """(mu_M, nu_M) = dJ1/d(u_M, v_M) for the trace-overlap infidelity.

    mu_M = -2/E^2 (Re S d_u - Im S d_v),
    nu_M = -2/E^2 (Re S d_v + Im S d_u).
    """
    c = 2.0 / float(e_dim) ** 2
    re, im = overlap.real, overlap.imag
    return (-c * (re * d_u - im * d_v),
            -c * (re * d_v + im * d_u))


def gradient(problem, alpha, kappa=None, checkpoint=False, backend=None):
    """Objective value and exact gradient.

    Returns (ObjectiveReport, grad).  `checkpoint=True` stores the forward
    trajectory and feeds it to the backward sweep instead of replaying in
    reverse (numpy path; a verification mode).  Pinned parameter entries
    are zeroed.
    """
    alpha = np.asarray(alpha, dtype=float)
    core = _nb.core_from_problem(problem, kappa_override=kappa)
    fwd = _kernels.forward_sweep(core, alpha, problem.steps,
                                 store=checkpoint, backend=backend)
    s = overlap_from_final(fwd.u, fwd.v, core.du, core.dv)
    report = ObjectiveReport(
        j1=infidelity(s, problem.essential_dim),
        j2=fwd.j2,
        overlap=s,
        guard_max=fwd.guard_max,
    )
    mu, nu = terminal_adjoint(s, core.du, core.dv, problem.essential_dim)
    grad, _, _, _, _ = _kernels.backward_sweep(
        core, alpha, problem.steps, fwd.u, fwd.v, mu, nu,
        u_hist=fwd.u_hist, v_hist=fwd.v_hist, backend=backend,
    )
    if problem.pinned:
        grad[list(problem.pinned)] = 0.0
    return report, grad


def fd_gradient(problem, alpha, rel_step=1e-6, kappa=None, indices=None,
                backend=None):
    """Central finite differences of J1 + J2; the comparison oracle used
    by `gradcheck`.  Differences only `indices` when given."""
    from .objective import evaluate_objective

    alpha = np.asarray(alpha, dtype=float).copy()
    scale = max(1.0, float(np.abs(alpha).max()))
    step = rel_step * scale
    if indices is None:
        indices = range(alpha.size)
    out = np.zeros(alpha.size)
    for i in indices:
        keep = alpha[i]
        alpha[i] = keep + step
        hi = evaluate_objective(problem, alpha, kappa=kappa, backend=backend)
        alpha[i] = keep - step
        lo = evaluate_objective(problem, alpha, kappa=kappa, backend=backend)
        alpha[i] = keep
        out[i] = (hi.total - lo.total) / (2.0 * step)
    return out


def make_evaluator(problem, noise=None, threads=1, backend=None):
    """Build the optimizer's objective callable.

    The callable maps (alpha, need_grad) -> (value, grad_or_None, report);
    with a NoiseModel it is the normalized quadrature average over the
    perturbed problems.
    """
    from .objective import evaluate_objective, risk_neutral_objective

    def node_eval_grad(alpha, kappa):
        rep, g = gradient(problem, alpha, kappa=kappa, backend=backend)
        return rep, g

    def node_eval_plain(alpha, kappa):
        return (evaluate_objective(problem, alpha, kappa=kappa,
                                   backend=backend), None)

    def evaluate(alpha, need_grad=True):
        if noise is None:
            if need_grad:
                rep, g = gradient(problem, alpha, backend=backend)
                return rep.total, g, rep
            rep = evaluate_objective(problem, alpha, backend=backend)
            return rep.total, None, rep
        node = node_eval_grad if need_grad else node_eval_plain
        rep, g = risk_neutral_objective(problem, alpha, noise, node,
                                        threads=threads)
        if need_grad and problem.pinned:
            g[list(problem.pinned)] = 0.0
        return rep.total, g, rep

    return evaluate
