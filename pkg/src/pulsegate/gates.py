"""Target gates, essential-subspace embedding, and problem assembly.

Essential basis states are ordered little-endian over the essential level
counts: l = i_1 + m_1 * (i_2 + m_2 * ...).  A gate V_E acts on that E-dim
basis; it is lifted into the full space by placing its columns at the
corresponding full-space basis states, then rotated so the target is
expressed in the same rotating frame as the propagated state:

    V_tg = U_0 V_E,     V_tg^rw = diag(rotation_phases(T)) V_tg.
"""

from dataclasses import dataclass, field

import numpy as np

from . import model
from .errors import ConfigError, InvalidGateError


@dataclass(frozen=True)
class EssentialMap:
    """Embedding of the essential basis into the full composite space."""

    lift: np.ndarray          # (E,) full-space index of essential state l
    guard_mask: np.ndarray    # (N,) True on guard levels


def essential_map(system):
    ess_dims = system.essential_dims
    e_total = system.essential_dim
    lift = np.empty(e_total, dtype=np.intp)
    for l in range(e_total):
        rem, occ = l, []
        for m in ess_dims:
            occ.append(rem % m)
            rem //= m
        lift[l] = system.index(tuple(occ))
    guard = np.ones(system.dim, dtype=bool)
    guard[lift] = False
    return EssentialMap(lift=lift, guard_mask=guard)


def build_initial_basis(system):
    """U_0: (N, E) columns are unit vectors at the essential states."""
    emap = essential_map(system)
    u0 = np.zeros((system.dim, system.essential_dim))
    u0[emap.lift, np.arange(system.essential_dim)] = 1.0
    return u0


def standard_gate(name, essential_dims, control_subsystem=2):
    """Named gate on the essential basis.

    cnot: E = 4 permutation; the control digit defaults to subsystem 2
    (little-endian l = i_1 + 2 i_2), flipping the other digit.
    swap0d: exchanges essential levels 0 and d = E - 1 of a single line.
    identity: the E x E identity.
    """
    e_total = int(np.prod(essential_dims))
    if name == "identity":
        return np.eye(e_total, dtype=complex)
    if name == "cnot":
        if e_total != 4:
            raise InvalidGateError(
                f"cnot needs a 4-state essential space, got E={e_total}"
            )
        if control_subsystem not in (1, 2):
            raise InvalidGateError(
                f"control_subsystem must be 1 or 2, got {control_subsystem}"
            )
        v = np.zeros((4, 4), dtype=complex)
        for l in range(4):
            i1, i2 = l % 2, l // 2
            if control_subsystem == 2:
                i1 ^= i2
            else:
                i2 ^= i1
            v[i1 + 2 * i2, l] = 1.0
        return v
    if name == "swap0d":
        if len(essential_dims) != 1:
            raise InvalidGateError("swap0d is a single-subsystem gate")
        v = np.eye(e_total, dtype=complex)
        v[[0, e_total - 1]] = v[[e_total - 1, 0]]
        return v
    raise InvalidGateError(f"unknown gate name {name!r}")


def check_unitary(v_e, tol=1e-10):
    v_e = np.asarray(v_e, dtype=complex)
    if v_e.ndim != 2 or v_e.shape[0] != v_e.shape[1]:
        raise InvalidGateError(f"gate matrix must be square, got {v_e.shape}")
    err = np.abs(v_e.conj().T @ v_e - np.eye(v_e.shape[0])).max()
    if err > tol:
        raise InvalidGateError(
            f"gate matrix is not unitary (deviation {err:.3e})"
        )
    return v_e


def lift_and_rotate_target(v_e, system, horizon):
    """(V_tg, V_tg^rw): essential gate lifted to (N, E) and rotated to the
    frame of the propagated state at t = horizon."""
    v_e = check_unitary(v_e)
    if v_e.shape[0] != system.essential_dim:
        raise InvalidGateError(
            f"gate dimension {v_e.shape[0]} does not match essential "
            f"dimension {system.essential_dim}"
        )
    u0 = build_initial_basis(system)
    v_tg = u0.astype(complex) @ v_e
    v_rw = model.rotation_phases(system, horizon)[:, None] * v_tg
    return v_tg, v_rw


def guard_weight_vector(system, weight=1.0, by_level=None):
    """Diagonal guard penalty W: zero on essential states.

    `by_level` overrides with an explicit length-N vector (validated to
    vanish on essential states).
    """
    emap = essential_map(system)
    if by_level is not None:
        w = np.asarray(by_level, dtype=float)
        if w.shape != (system.dim,):
            raise ConfigError(
                f"guard weight vector must have length {system.dim}"
            )
        if np.any(w < 0.0):
            raise ConfigError("guard weights must be nonnegative")
        if np.any(w[~emap.guard_mask] != 0.0):
            raise ConfigError("guard weights must vanish on essential states")
        return w.copy()
    if weight < 0.0:
        raise ConfigError("guard weight must be nonnegative")
    return np.where(emap.guard_mask, float(weight), 0.0)


def write_gate_matrix(path, v_e):
    """Store a gate as text: one header line E, then E*E rows 're im'."""
    v_e = np.asarray(v_e, dtype=complex)
    e_total = v_e.shape[0]
    with open(path, "w") as fh:
        fh.write(f"{e_total}\n")
        for entry in v_e.reshape(-1):
            fh.write(f"{float(entry.real)!r} {float(entry.imag)!r}\n")


def read_gate_matrix(path):
    """Read a gate matrix in the write_gate_matrix text format."""
    with open(path) as fh:
        tokens = fh.read().split()
    if not tokens:
        raise InvalidGateError(f"empty gate file {path}")
    try:
        e_total = int(tokens[0])
        values = [float(tok) for tok in tokens[1:]]
    except ValueError as exc:
        raise InvalidGateError(f"malformed gate file {path}: {exc}") from None
    if e_total < 1 or len(values) != 2 * e_total * e_total:
        raise InvalidGateError(
            f"gate file {path} holds {len(values)} numbers, expected "
            f"{2 * e_total * e_total} for E={e_total}"
        )
    flat = np.asarray(values).reshape(-1, 2)
    return (flat[:, 0] + 1j * flat[:, 1]).reshape(e_total, e_total)


@dataclass(frozen=True)
class GateProblem:
    """Everything a propagation or gradient sweep needs, frozen."""

    system: object
    param: object
    v_e: np.ndarray = field(repr=False)
    u0: np.ndarray = field(repr=False)
    v_tg: np.ndarray = field(repr=False)
    v_tg_rw: np.ndarray = field(repr=False)
    d_u: np.ndarray = field(repr=False)       # Re V_tg^rw
    d_v: np.ndarray = field(repr=False)       # -Im V_tg^rw
    weights: np.ndarray = field(repr=False)   # (N,) guard penalty diagonal
    guard_mask: np.ndarray = field(repr=False)
    horizon: float = 0.0
    steps: int = 0
    pinned: tuple = ()

    @property
    def dim(self):
        return self.system.dim

    @property
    def essential_dim(self):
        return self.system.essential_dim

    def free_mask(self):
        mask = np.ones(self.param.size, dtype=bool)
        mask[list(self.pinned)] = False
        return mask


def build_problem(system, param, v_e, steps=None, points_per_period=40,
                  guard_weight=1.0, guard_weights=None, alpha_max=None,
                  pin_boundary=False, min_steps=100, dinf_scale=0.01):
    """Assemble a GateProblem; `steps` overrides step estimation.

    When estimating, the envelope bound fed to the Gershgorin rate uses the
    initialization amplitude scale `alpha_max * dinf_scale` (see
    estimate_steps for the rationale), so `alpha_max` is required unless
    `steps` is given.
    """
    from .propagator import estimate_steps

    if param.num_subsystems != system.num_subsystems:
        raise ConfigError(
            "control parameterization and system disagree on subsystem count"
        )
    v_tg, v_rw = lift_and_rotate_target(v_e, system, param.horizon)
    if steps is None:
        if alpha_max is None:
            raise ConfigError("step estimation needs alpha_max")
        d_inf = np.sqrt(2.0) * param.carriers_per_line \
            * float(alpha_max) * dinf_scale
        steps = estimate_steps(
            system, d_inf, param.carriers, param.horizon,
            points_per_period, min_steps=min_steps,
        )
    steps = int(steps)
    if steps < 1:
        raise ConfigError(f"step count must be positive, got {steps}")
    w = guard_weight_vector(system, weight=guard_weight,
                            by_level=guard_weights)
    emap = essential_map(system)
    pinned = tuple(int(i) for i in param.pinned_indices()) \
        if pin_boundary else ()
    return GateProblem(
        system=system,
        param=param,
        v_e=np.asarray(v_e, dtype=complex),
        u0=build_initial_basis(system),
        v_tg=v_tg,
        v_tg_rw=v_rw,
        d_u=np.ascontiguousarray(v_rw.real),
        d_v=np.ascontiguousarray(-v_rw.imag),
        weights=w,
        guard_mask=emap.guard_mask,
        horizon=param.horizon,
        steps=steps,
        pinned=pinned,
    )
