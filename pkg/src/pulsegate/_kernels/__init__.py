"""Kernel backend selection.

The compiled Cython core (`pulsegate._kernels._core`) is picked at import
when present; otherwise the numpy kernels serve every call.  The
environment variable PULSEGATE_BACKEND forces "numpy" or "compiled"
(import error if the forced backend is unavailable), and individual calls
may pass backend=... to override.

Per-step Python callbacks (stage sinks) and stored-trajectory gradients
are verification features and always run on the numpy path.
"""

import os

import numpy as np

from . import numpy_backend

try:
    from . import _core
except ImportError:
    _core = None

_forced = os.environ.get("PULSEGATE_BACKEND", "").strip().lower()
if _forced in ("", "auto"):
    _active = "compiled" if _core is not None else "numpy"
elif _forced == "numpy":
    _active = "numpy"
elif _forced == "compiled":
    if _core is None:
        raise ImportError(
            "PULSEGATE_BACKEND=compiled but the compiled core is not built"
        )
    _active = "compiled"
else:
    raise ImportError(f"unknown PULSEGATE_BACKEND value {_forced!r}")


def active_backend():
    return _active


def compiled_available():
    return _core is not None


def _resolve(backend):
    if backend is None:
        return _active
    if backend not in ("numpy", "compiled"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "compiled" and _core is None:
        raise ValueError("compiled backend requested but not built")
    return backend


def forward_sweep(core, alpha, steps, pop_stride=0, sink=None, store=False,
                  backend=None):
    which = _resolve(backend)
    if sink is not None or store or which == "numpy":
        return numpy_backend.forward_sweep(
            core, alpha, steps, pop_stride=pop_stride, sink=sink,
            store=store)
    return _compiled_forward(core, alpha, steps, pop_stride)


def backward_sweep(core, alpha, steps, u, v, mu, nu, u_hist=None,
                   v_hist=None, backend=None):
    which = _resolve(backend)
    if u_hist is not None or which == "numpy":
        return numpy_backend.backward_sweep(
            core, alpha, steps, u, v, mu, nu,
            u_hist=u_hist, v_hist=v_hist)
    return _compiled_backward(core, alpha, steps, u, v, mu, nu)


def _pack_state(x):
    """(N, E) -> (E, N) C-order, which is exactly the (N, E) column-major
    layout the LAPACK-facing core works in."""
    return np.ascontiguousarray(np.asarray(x, dtype=float).T)


def _compiled_forward(core, alpha, steps, pop_stride):
    m = int(steps)
    u = _pack_state(core.u0)
    v = np.zeros_like(u)
    if pop_stride:
        marks = list(range(0, m + 1, pop_stride))
        if marks[-1] != m:
            marks.append(m)
        pop_steps = np.asarray(marks, dtype=np.int64)
        pops = np.empty((len(marks), core.e, core.n))
    else:
        pop_steps = np.zeros(0, dtype=np.int64)
        pops = np.zeros((0, core.e, core.n))
    j2, gmax = _core.forward_sweep(
        m, core.horizon, core.kappa, core.w, core.gmask,
        core.off, core.rows, core.cols, core.vals,
        core.omega, core.nb, core.dtau,
        np.ascontiguousarray(alpha, dtype=float),
        u, v, pops, pop_steps,
    )
    return numpy_backend.SweepResult(
        u=u.T.copy(), v=v.T.copy(), j2=j2, guard_max=gmax,
        pops=pops if pop_stride else None,
        pop_steps=pop_steps if pop_stride else None,
    )


def _compiled_backward(core, alpha, steps, u, v, mu, nu):
    m = int(steps)
    u = _pack_state(u)
    v = _pack_state(v)
    mu = _pack_state(mu)
    nu = _pack_state(nu)
    grad = np.zeros(2 * core.q * core.nf * core.nb)
    _core.backward_sweep(
        m, core.horizon, core.kappa, core.w,
        core.off, core.rows, core.cols, core.vals,
        core.omega, core.nb, core.dtau,
        np.ascontiguousarray(alpha, dtype=float),
        u, v, mu, nu, grad,
    )
    return grad, u.T.copy(), v.T.copy(), mu.T.copy(), nu.T.copy()
