"""Pure-numpy time-stepping kernels.

Reference implementation of the partitioned Stoermer-Verlet sweeps; the
compiled core mirrors this arithmetic exactly.  States are real (N, E)
matrices advancing all E initial columns together, with one LU
factorization per implicit stage shared across columns.

Forward step n -> n+1 (h = T/M, times t_n, t_n + h/2, t_{n+1}):

    (I - h/2 S_h) V1 = v + h/2 K_h u
    (I - h/2 S_p) U2 = u + h/2 (S_n u - (K_n + K_p) V1)
    u' = U2
    v' = v + h/2 K_h (u + U2) + h S_h V1

with stage values U1 = u and V2 = V1 (the scheme's two quadrature stages
coincide for this splitting).  The reverse step is the same map with
h -> -h from t_{n+1}, and its first stage solve reproduces V1 exactly,
which the backward (adjoint) sweep exploits to replay the trajectory
without storing it.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class KernelCore:
    """Flattened, C-contiguous problem data consumed by both backends."""

    n: int
    e: int
    q: int
    horizon: float
    kappa: np.ndarray
    w: np.ndarray
    gmask: np.ndarray
    u0: np.ndarray
    du: np.ndarray
    dv: np.ndarray
    nb: int
    nf: int
    dtau: float
    omega: np.ndarray
    off: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    sym2d: np.ndarray     # (Q, N*N) dense sym_q, for the numpy assembler
    asym2d: np.ndarray    # (Q, N*N)


def core_from_problem(problem, kappa_override=None, columns=None):
    """Pack a GateProblem for the kernels.

    `columns` (slice or index array) restricts the initial/target columns,
    supporting partitioned column evolution whose partial sums merge by
    addition.
    """
    system = problem.system
    param = problem.param
    n = system.dim
    kappa = system.kappa if kappa_override is None else \
        np.asarray(kappa_override, dtype=float)
    if kappa.shape != (n,):
        raise ValueError(f"kappa override must have shape ({n},)")
    u0 = problem.u0
    du, dv = problem.d_u, problem.d_v
    if columns is not None:
        u0, du, dv = u0[:, columns], du[:, columns], dv[:, columns]
    sym = np.stack([system.dense_sym(qi).reshape(-1)
                    for qi in range(system.num_subsystems)])
    asym = np.stack([system.dense_asym(qi).reshape(-1)
                     for qi in range(system.num_subsystems)])
    off, rows, cols, vals = system.coo_arrays()
    return KernelCore(
        n=n,
        e=u0.shape[1],
        q=system.num_subsystems,
        horizon=param.horizon,
        kappa=np.ascontiguousarray(kappa),
        w=np.ascontiguousarray(problem.weights),
        gmask=np.ascontiguousarray(problem.guard_mask, dtype=np.uint8),
        u0=np.ascontiguousarray(u0),
        du=np.ascontiguousarray(du),
        dv=np.ascontiguousarray(dv),
        nb=param.splines_per_carrier,
        nf=param.carriers_per_line,
        dtau=param.knot_spacing,
        omega=np.ascontiguousarray(param.carrier_array()),
        off=off,
        rows=rows,
        cols=cols,
        vals=vals,
        sym2d=np.ascontiguousarray(sym),
        asym2d=np.ascontiguousarray(asym),
    )


def _active_splines(core, t):
    base = int(np.floor(t / core.dtau))
    idx, val = [], []
    for b in range(base - 1, base + 3):
        if not 0 <= b < core.nb:
            continue
        s = abs(t / core.dtau - b + 0.5)
        if s >= 1.5:
            continue
        idx.append(b)
        val.append(0.75 - s * s if s <= 0.5 else 0.5 * (1.5 - s) ** 2)
    return np.asarray(idx, dtype=np.intp), np.asarray(val)


def envelopes_at(core, alpha, t):
    """(re_d, im_d) per subsystem at time t."""
    idx, val = _active_splines(core, t)
    blocks = alpha.reshape(core.q, core.nf, 2, core.nb)
    p = blocks[:, :, 0, :][:, :, idx] @ val
    qq = blocks[:, :, 1, :][:, :, idx] @ val
    ang = core.omega * t
    c, s = np.cos(ang), np.sin(ang)
    return np.sum(p * c - qq * s, axis=1), np.sum(p * s + qq * c, axis=1)


def assemble_at(core, alpha, t):
    """Dense (K, S) at time t; fresh arrays."""
    re_d, im_d = envelopes_at(core, alpha, t)
    n = core.n
    k = (re_d @ core.sym2d).reshape(n, n)
    s = (im_d @ core.asym2d).reshape(n, n)
    k[np.arange(n), np.arange(n)] += core.kappa
    return k, s


def _shifted(mat, scale):
    """I + scale * mat."""
    out = scale * mat
    out[np.diag_indices_from(out)] += 1.0
    return out


def step_forward_raw(kn, sn, kh, sh, kp, sp_, h, u, v):
    """One forward step from matrices at t_n, t_n + h/2, t_{n+1}.

    Returns (u', v', U1, U2, V1)."""
    hh = 0.5 * h
    v1 = np.linalg.solve(_shifted(sh, -hh), v + hh * (kh @ u))
    u2 = np.linalg.solve(_shifted(sp_, -hh),
                         u + hh * (sn @ u - (kn + kp) @ v1))
    v_new = v + hh * (kh @ (u + u2)) + h * (sh @ v1)
    return u2, v_new, u, u2, v1


def step_reverse_raw(kn, sn, kh, sh, kp, sp_, h, u, v):
    """Invert one forward step given the state at t_{n+1}.

    Same matrices as the forward step; returns (u_prev, v_prev, V1) where
    V1 is the forward step's stage value (recovered exactly by the first
    solve)."""
    hh = 0.5 * h
    v1 = np.linalg.solve(_shifted(sh, hh), v - hh * (kh @ u))
    u_prev = np.linalg.solve(_shifted(sn, hh),
                             u - hh * (sp_ @ u - (kn + kp) @ v1))
    v_prev = v - hh * (kh @ (u + u_prev)) - h * (sh @ v1)
    return u_prev, v_prev, v1


def _weighted_sq(w, x):
    return float(w @ (x * x).sum(axis=1))


def _guard_pop(gmask, u, v):
    g = gmask.astype(bool)
    return float(((u * u + v * v)[g]).sum(axis=0).max())


@dataclass
class SweepResult:
    u: np.ndarray
    v: np.ndarray
    j2: float
    guard_max: float
    pops: np.ndarray = None
    pop_steps: np.ndarray = None
    u_hist: np.ndarray = None
    v_hist: np.ndarray = None


def forward_sweep(core, alpha, steps, pop_stride=0, sink=None, store=False):
    """Propagate u0 over `steps` steps, accumulating the guard cost

        J2 = h/(2T) sum_n ( <U1, W U1> + <U2, W U2> + 2 <V1, W V1> )

    and the running guard-population maximum (sampled at every grid
    point).  `sink(n, t, U1, U2, V1)` receives each step's stage block;
    `store` keeps the whole trajectory for checkpoint-mode gradients."""
    n, e = core.n, core.e
    m = int(steps)
    h = core.horizon / m
    alpha = np.asarray(alpha, dtype=float)
    u = core.u0.copy()
    v = np.zeros_like(u)

    j2 = 0.0
    gmax = _guard_pop(core.gmask, u, v)
    pops = pop_steps = None
    if pop_stride:
        marks = list(range(0, m + 1, pop_stride))
        if marks[-1] != m:
            marks.append(m)
        pop_steps = np.asarray(marks, dtype=np.intp)
        pops = np.empty((len(marks), e, n))
        pops[0] = (u * u + v * v).T
        next_mark = 1
    u_hist = v_hist = None
    if store:
        u_hist = np.empty((m + 1, n, e))
        v_hist = np.empty((m + 1, n, e))
        u_hist[0], v_hist[0] = u, v

    kn, sn = assemble_at(core, alpha, 0.0)
    for step in range(m):
        t = step * h
        kh, sh = assemble_at(core, alpha, t + 0.5 * h)
        kp, sp_ = assemble_at(core, alpha, t + h)
        u, v, u1, u2, v1 = step_forward_raw(kn, sn, kh, sh, kp, sp_, h, u, v)
        j2 += _weighted_sq(core.w, u1) + _weighted_sq(core.w, u2) \
            + 2.0 * _weighted_sq(core.w, v1)
        gmax = max(gmax, _guard_pop(core.gmask, u, v))
        if sink is not None:
            sink(step, t, u1, u2, v1)
        if store:
            u_hist[step + 1], v_hist[step + 1] = u, v
        if pops is not None and next_mark < len(pop_steps) \
                and step + 1 == pop_steps[next_mark]:
            pops[next_mark] = (u * u + v * v).T
            next_mark += 1
        kn, sn = kp, sp_
    j2 *= h / (2.0 * core.horizon)
    return SweepResult(u=u, v=v, j2=j2, guard_max=gmax, pops=pops,
                       pop_steps=pop_steps, u_hist=u_hist, v_hist=v_hist)


def backward_sweep(core, alpha, steps, u, v, mu, nu,
                   u_hist=None, v_hist=None):
    """Adjoint sweep from the final state and terminal adjoint.

    Replays the trajectory in reverse (or reads the stored one when
    `u_hist`/`v_hist` are given), advances the adjoint pair, and
    accumulates the objective gradient.  Returns
    (grad, u_0, v_0, mu_0, nu_0)."""
    m = int(steps)
    h = core.horizon / m
    hh = 0.5 * h
    t_total = core.horizon
    alpha = np.asarray(alpha, dtype=float)
    u = u.copy()
    v = v.copy()
    mu = mu.copy()
    nu = nu.copy()
    w_col = core.w[:, None]
    off, rows, cols, vals = core.off, core.rows, core.cols, core.vals
    grad4 = np.zeros((core.q, core.nf, 2, core.nb))
    seg = off[:-1]

    def edots(a, b):
        """Per-subsystem <sym_q a, b> and <asym_q a, b>."""
        vc = vals * np.einsum("ij,ij->i", a[cols], b[rows])
        vr = vals * np.einsum("ij,ij->i", a[rows], b[cols])
        return np.add.reduceat(vc + vr, seg), np.add.reduceat(vc - vr, seg)

    kp, sp_ = assemble_at(core, alpha, t_total)
    for step in range(m - 1, -1, -1):
        t = step * h
        kn, sn = assemble_at(core, alpha, t)
        kh, sh = assemble_at(core, alpha, t + 0.5 * h)

        if u_hist is not None:
            u_prev, v_prev = u_hist[step].copy(), v_hist[step].copy()
            v1 = np.linalg.solve(_shifted(sh, -hh),
                                 v_prev + hh * (kh @ u_prev))
        else:
            u_prev, v_prev, v1 = step_reverse_raw(
                kn, sn, kh, sh, kp, sp_, h, u, v)
        u1, u2 = u_prev, u

        # Adjoint stages with the guard-cost forcing terms.
        fu1 = (h / t_total) * (w_col * u1)
        fu2 = (h / t_total) * (w_col * u2)
        fv1 = (2.0 * h / t_total) * (w_col * v1)
        y2 = nu
        x = np.linalg.solve(_shifted(sp_, hh), mu + hh * (kh @ y2) + fu2)
        y1 = np.linalg.solve(_shifted(sh, hh),
                             nu - hh * (sh @ y2 + (kn + kp) @ x) + fv1)
        kap1 = sn @ x - kh @ y1 - (2.0 / h) * fu1
        kap2 = sp_ @ x - kh @ y2 - (2.0 / h) * fu2
        ell1 = kn @ x + sh @ y1 - (2.0 / h) * fv1
        ell2 = kp @ x + sh @ y2
        mu = mu - hh * (kap1 + kap2)
        nu = nu - hh * (ell1 + ell2)

        # Gradient: distribute the stage contractions through the
        # envelope derivatives at t_n, t_n + h/2, t_{n+1}.
        s_v1x, a_v1x = edots(v1, x)
        _, a_u1x = edots(u1, x)
        _, a_u2x = edots(u2, x)
        s_u1y1, _ = edots(u1, y1)
        _, a_v1y1 = edots(v1, y1)
        s_u2y2, _ = edots(u2, y2)
        _, a_v1y2 = edots(v1, y2)
        for tau, gre, gim in (
            (t, -s_v1x, a_u1x),
            (t + 0.5 * h, s_u1y1 + s_u2y2, a_v1y1 + a_v1y2),
            (t + h, -s_v1x, a_u2x),
        ):
            idx, val = _active_splines(core, tau)
            if idx.size == 0:
                continue
            ang = core.omega * tau
            c, s = np.cos(ang), np.sin(ang)
            cre = gre[:, None] * c + gim[:, None] * s
            cim = -gre[:, None] * s + gim[:, None] * c
            grad4[:, :, 0, idx] += hh * val * cre[:, :, None]
            grad4[:, :, 1, idx] += hh * val * cim[:, :, None]

        u, v = u_prev, v_prev
        kp, sp_ = kn, sn
    return grad4.reshape(-1), u, v, mu, nu
