"""Composite-qudit Hamiltonian model in the rotating frame.

All frequencies inside this package are angular, in rad/ns.  Ordinary
frequencies in GHz/MHz appear only at the configuration boundary; the
`ghz`/`mhz` helpers convert them.

The composite Hilbert space orders basis states little-endian: subsystem 1
varies fastest, so a multi-index (j_1, ..., j_Q) maps to

    k = j_1 + n_1 * (j_2 + n_2 * (j_3 + ...)).

The drift Hamiltonian is diagonal in this basis with entries

    kappa_k = sum_q (Delta_q j_q - xi_q/2 j_q (j_q - 1))
              - sum_{p > q} xi_pq j_p j_q,

and each control line couples through its subsystem's lowering operator
a_q.  The real/imaginary split used by the integrator is

    K(t) = diag(kappa) + sum_q Re d_q(t) * (a_q + a_q^T)
    S(t) = sum_q Im d_q(t) * (a_q - a_q^T).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvalidSubsystemError, ProblemTooLargeError

TWO_PI = 2.0 * np.pi

# Dense dimension guard: composite construction refuses larger spaces.
DIMENSION_CAP = 4096


def ghz(f):
    """Ordinary frequency in GHz -> angular frequency in rad/ns."""
    return TWO_PI * np.asarray(f, dtype=float)


def mhz(f):
    """Ordinary frequency in MHz -> angular frequency in rad/ns."""
    return TWO_PI * 1e-3 * np.asarray(f, dtype=float)


@dataclass(frozen=True)
class SubsystemSpec:
    """One anharmonic oscillator: level counts and frequencies (rad/ns).

    `levels` counts all modeled levels n_q, `essential` the leading m_q
    levels the gate acts on; the remainder are guard levels.
    """

    levels: int
    essential: int
    ground_freq: float = 0.0
    self_kerr: float = 0.0
    rot_freq: float = 0.0

    def __post_init__(self):
        if self.levels < 2:
            raise InvalidSubsystemError(
                f"subsystem needs at least 2 levels, got {self.levels}"
            )
        if not 1 <= self.essential <= self.levels:
            raise InvalidSubsystemError(
                f"essential level count {self.essential} outside "
                f"[1, {self.levels}]"
            )

    @property
    def detuning(self):
        """Rotating-frame detuning Delta_q = omega_q - omega_{r,q}."""
        return self.ground_freq - self.rot_freq


def build_lowering(n):
    """Lowering operator a for an n-level oscillator, dense (n, n).

    Superdiagonal entries sqrt(1), ..., sqrt(n-1).
    """
    if n < 2:
        raise InvalidSubsystemError(f"lowering operator needs n >= 2, got {n}")
    a = np.zeros((n, n))
    idx = np.arange(n - 1)
    a[idx, idx + 1] = np.sqrt(idx + 1.0)
    return a


@dataclass(frozen=True)
class OperatorSet:
    """Sparse composite operators, one entry per subsystem."""

    lowering: tuple
    sym: tuple            # a_q + a_q^T
    asym: tuple           # a_q - a_q^T
    occupation: tuple     # diagonal of a_q^T a_q as a 1-D array


@dataclass(frozen=True)
class CompositeSystem:
    """Coupled-qudit system: drift diagonal plus per-subsystem couplers."""

    subsystems: tuple
    cross_kerr: np.ndarray        # (Q, Q) symmetric, rad/ns, zero diagonal
    kappa: np.ndarray = field(repr=False)       # (N,) rotating-frame diagonal
    ops: OperatorSet = field(repr=False)
    _coo: tuple = field(repr=False)

    @property
    def num_subsystems(self):
        return len(self.subsystems)

    @property
    def dims(self):
        return tuple(s.levels for s in self.subsystems)

    @property
    def essential_dims(self):
        return tuple(s.essential for s in self.subsystems)

    @property
    def dim(self):
        """Total modeled dimension N."""
        return int(np.prod(self.dims))

    @property
    def essential_dim(self):
        """Essential subspace dimension E."""
        return int(np.prod(self.essential_dims))

    def occupancy(self, k):
        """Multi-index (j_1, ..., j_Q) of composite basis state k."""
        out = []
        for n in self.dims:
            out.append(k % n)
            k //= n
        return tuple(out)

    def index(self, j):
        """Composite index of multi-index (j_1, ..., j_Q), little-endian."""
        k = 0
        for jq, n in zip(reversed(j), reversed(self.dims)):
            if not 0 <= jq < n:
                raise IndexError(f"occupancy {j} outside level ranges")
            k = k * n + jq
        return k

    def coo_arrays(self):
        """Packed lowering-operator entries for the step kernels.

        Returns (offsets, rows, cols, vals): subsystem q owns the slice
        offsets[q]:offsets[q+1]; every (row, col) lies strictly above the
        diagonal and no position repeats across subsystems.
        """
        return self._coo

    def dense_sym(self, q):
        return self.ops.sym[q].toarray()

    def dense_asym(self, q):
        return self.ops.asym[q].toarray()


def _kron_chain(mats):
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(m, out, format="csr")
    return out


def build_composite(subsystems, cross_kerr=None, dim_cap=DIMENSION_CAP):
    """Assemble the composite system from per-subsystem specs.

    `cross_kerr` is a (Q, Q) array-like or a {(p, q): xi_pq} mapping with
    0-based subsystem indices; it is symmetrized.  Values in rad/ns.
    """
    subsystems = tuple(subsystems)
    q_count = len(subsystems)
    if q_count == 0:
        raise InvalidSubsystemError("need at least one subsystem")
    dims = [s.levels for s in subsystems]
    total = int(np.prod(dims))
    if total > dim_cap:
        raise ProblemTooLargeError(
            f"composite dimension {total} exceeds cap {dim_cap}"
        )

    xi = np.zeros((q_count, q_count))
    if cross_kerr is not None:
        if isinstance(cross_kerr, dict):
            for (p, q), val in cross_kerr.items():
                xi[p, q] = xi[q, p] = val
        else:
            xi = np.asarray(cross_kerr, dtype=float)
            if xi.shape != (q_count, q_count):
                raise InvalidSubsystemError(
                    f"cross-Kerr table must be ({q_count}, {q_count})"
                )
            xi = 0.5 * (xi + xi.T)
    np.fill_diagonal(xi, 0.0)

    # Per-subsystem occupancy along the composite diagonal.
    occ = []
    for q in range(q_count):
        per_site = np.arange(dims[q], dtype=float)
        before = int(np.prod(dims[:q])) if q else 1
        after = int(np.prod(dims[q + 1:])) if q + 1 < q_count else 1
        occ.append(np.tile(np.repeat(per_site, before), after))
    occ = np.array(occ)

    kappa = np.zeros(total)
    for q, s in enumerate(subsystems):
        jq = occ[q]
        kappa += s.detuning * jq - 0.5 * s.self_kerr * jq * (jq - 1.0)
    for p in range(q_count):
        for q in range(p):
            kappa -= xi[p, q] * occ[p] * occ[q]

    lowering, sym, asym = [], [], []
    for q in range(q_count):
        a_site = sp.csr_matrix(build_lowering(dims[q]))
        chain = [sp.identity(n, format="csr") for n in dims]
        chain[q] = a_site
        a_q = _kron_chain(chain)
        lowering.append(a_q)
        sym.append((a_q + a_q.T).tocsr())
        asym.append((a_q - a_q.T).tocsr())

    offsets = [0]
    rows, cols, vals = [], [], []
    for a_q in lowering:
        c = a_q.tocoo()
        rows.append(c.row.astype(np.int32))
        cols.append(c.col.astype(np.int32))
        vals.append(c.data.astype(float))
        offsets.append(offsets[-1] + c.nnz)
    coo = (
        np.asarray(offsets, dtype=np.int32),
        np.concatenate(rows) if rows else np.zeros(0, np.int32),
        np.concatenate(cols) if cols else np.zeros(0, np.int32),
        np.concatenate(vals) if vals else np.zeros(0),
    )

    ops = OperatorSet(
        lowering=tuple(lowering),
        sym=tuple(sym),
        asym=tuple(asym),
        occupation=tuple(o.copy() for o in occ),
    )
    return CompositeSystem(
        subsystems=subsystems,
        cross_kerr=xi,
        kappa=kappa,
        ops=ops,
        _coo=coo,
    )


def assemble_real_parts(system, re_d, im_d, out_k, out_s, kappa=None):
    """Write K and S for envelope values (re_d, im_d) into caller arrays.

    K = diag(kappa) + sum_q re_d[q] * sym_q,  S = sum_q im_d[q] * asym_q.
    Workspaces are overwritten, not accumulated into.
    """
    if kappa is None:
        kappa = system.kappa
    n = system.dim
    out_k[:] = 0.0
    out_s[:] = 0.0
    off, rows, cols, vals = system.coo_arrays()
    for q in range(system.num_subsystems):
        r = rows[off[q]:off[q + 1]]
        c = cols[off[q]:off[q + 1]]
        v = vals[off[q]:off[q + 1]]
        out_k[r, c] = re_d[q] * v
        out_k[c, r] = re_d[q] * v
        out_s[r, c] = im_d[q] * v
        out_s[c, r] = -im_d[q] * v
    out_k[np.arange(n), np.arange(n)] += kappa
    return out_k, out_s


def rotation_phases(system, t):
    """Complex diagonal exp(i t sum_q omega_{r,q} j_q), length N."""
    phase = np.zeros(system.dim)
    for q, s in enumerate(system.subsystems):
        phase += s.rot_freq * system.ops.occupation[q]
    return np.exp(1j * t * phase)


def resonance_frequencies(system, k, essential_only=True, merge_tol=1e-12):
    """Transition frequencies of subsystem k against the drift diagonal.

    Creation branch: Delta_k - xi_k j_k - sum_{p != k} xi_kp j_p for
    j_k in [0, n_k - 2]; annihilation branch uses j_k - 1 with
    j_k in [1, n_k - 1].  With `essential_only` the source state of each
    transition is restricted to essential levels.  Values are deduplicated
    within `merge_tol` and returned sorted descending, in rad/ns.
    """
    subs = system.subsystems
    spec = subs[k]
    delta = spec.detuning
    xi_k = spec.self_kerr
    xi_row = system.cross_kerr[k]

    spectator_ranges = []
    for p, sp_ in enumerate(subs):
        if p == k:
            continue
        hi = sp_.essential if essential_only else sp_.levels
        spectator_ranges.append((p, range(hi)))

    def spectator_sums():
        if not spectator_ranges:
            yield 0.0
            return
        from itertools import product

        ids = [r for _, r in spectator_ranges]
        ps = [p for p, _ in spectator_ranges]
        for combo in product(*ids):
            yield sum(xi_row[p] * j for p, j in zip(ps, combo))

    src_cap = spec.essential if essential_only else spec.levels
    values = []
    for shift in spectator_sums():
        for j in range(min(spec.levels - 1, src_cap)):
            values.append(delta - xi_k * j - shift)          # j -> j + 1
        for j in range(1, min(spec.levels, src_cap + 1)):
            values.append(delta - xi_k * (j - 1) - shift)    # j -> j - 1

    values = sorted(values, reverse=True)
    merged = []
    for v in values:
        if not merged or merged[-1] - v > merge_tol:
            merged.append(v)
    return np.asarray(merged)


def gershgorin_bound(system, d_inf):
    """Upper bound on the spectral radius of H(t) for |d_q(t)| <= d_inf_q.

    Row-wise bound from the assembled operators,

        rho_max = max_j ( |kappa_j| + sum_q 2 d_inf_q * rowsum_j |sym_q| ),

    capped for a single undetuned subsystem by the closed form
    |xi|/2 (N-1)(N-2) + 2 d_inf sqrt(N-1).
    """
    d_inf = np.broadcast_to(
        np.asarray(d_inf, dtype=float), (system.num_subsystems,)
    )
    rows = np.abs(system.kappa).copy()
    for q in range(system.num_subsystems):
        rowsum = np.asarray(np.abs(system.ops.sym[q]).sum(axis=1)).ravel()
        rows += 2.0 * d_inf[q] * rowsum
    bound = float(rows.max())
    if system.num_subsystems == 1:
        s = system.subsystems[0]
        if s.detuning == 0.0:
            n = s.levels
            closed = 0.5 * abs(s.self_kerr) * (n - 1) * (n - 2) \
                + 2.0 * d_inf[0] * np.sqrt(n - 1.0)
            bound = min(bound, float(closed))
    return bound
