"""Quadratic B-spline pulse envelopes with carrier waves.

Each control line k carries N_f carrier frequencies; each carrier owns
N_b real and N_b imaginary spline coefficients.  With the knot spacing
dtau = T / (N_b - 2) and centers tau_b = dtau * (b - 1/2) (0-based b),
the cardinal quadratic basis

    S(s) = 3/4 - s^2            |s| <= 1/2
         = (3/2 - |s|)^2 / 2    1/2 < |s| <= 3/2
         = 0                    otherwise,   s = (t - tau_b) / dtau

forms a partition of unity on [0, T] with at most three nonzero basis
functions at any t.  The rotating-frame envelope of line k is

    d_k(t) = sum_n (p_kn(t) + i q_kn(t)) * exp(i Omega_kn t),

with p/q the spline sums of the real/imaginary coefficient blocks.

Parameter layout (size D = 2 Q N_b N_f): subsystems outermost, then
carriers, then the N_b real coefficients followed by the N_b imaginary
coefficients.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

PARAMS_LAYOUT_VERSION = 1


@dataclass(frozen=True)
class ControlParameterization:
    """Spline/carrier layout shared by every control line.

    carriers: one tuple of angular frequencies (rad/ns) per subsystem;
    all subsystems carry the same number of frequencies.
    """

    horizon: float
    splines_per_carrier: int
    carriers: tuple

    def __post_init__(self):
        if self.horizon <= 0.0:
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if self.splines_per_carrier < 3:
            raise ConfigError(
                f"need at least 3 splines per carrier, got "
                f"{self.splines_per_carrier}"
            )
        carr = tuple(tuple(float(w) for w in row) for row in self.carriers)
        object.__setattr__(self, "carriers", carr)
        if not carr:
            raise ConfigError("need carriers for at least one subsystem")
        counts = {len(row) for row in carr}
        if counts == {0}:
            raise ConfigError("each subsystem needs at least one carrier")
        if len(counts) != 1:
            raise ConfigError(
                f"carrier counts differ across subsystems: {sorted(counts)}"
            )

    @property
    def num_subsystems(self):
        return len(self.carriers)

    @property
    def carriers_per_line(self):
        return len(self.carriers[0])

    @property
    def knot_spacing(self):
        return self.horizon / (self.splines_per_carrier - 2)

    @property
    def centers(self):
        dt = self.knot_spacing
        return dt * (np.arange(self.splines_per_carrier) - 0.5)

    @property
    def size(self):
        """Total parameter count D."""
        return 2 * self.num_subsystems * self.carriers_per_line \
            * self.splines_per_carrier

    def index(self, k, n, part, b):
        """Flat index of coefficient b (part 0=real, 1=imag) of carrier n
        on subsystem k."""
        nb = self.splines_per_carrier
        if not 0 <= b < nb:
            raise IndexError(f"spline index {b} outside [0, {nb})")
        if part not in (0, 1):
            raise IndexError(f"part must be 0 or 1, got {part}")
        if not 0 <= n < self.carriers_per_line:
            raise IndexError(f"carrier index {n} out of range")
        if not 0 <= k < self.num_subsystems:
            raise IndexError(f"subsystem index {k} out of range")
        return ((k * self.carriers_per_line + n) * 2 + part) * nb + b

    def pinned_indices(self):
        """Indices of the first and last spline coefficient of every
        real/imaginary block, pinned to zero when boundary pinning is on."""
        nb = self.splines_per_carrier
        out = []
        for blk in range(2 * self.num_subsystems * self.carriers_per_line):
            out.append(blk * nb)
            out.append(blk * nb + nb - 1)
        return np.asarray(out, dtype=np.intp)

    def carrier_array(self):
        return np.asarray(self.carriers, dtype=float)


def bspline_value(param, b, t):
    """Value of basis function b at time t (vectorized over t)."""
    nb = param.splines_per_carrier
    if not 0 <= b < nb:
        raise IndexError(f"spline index {b} outside [0, {nb})")
    dt = param.knot_spacing
    s = np.abs((np.asarray(t, dtype=float) - dt * (b - 0.5)) / dt)
    out = np.where(
        s <= 0.5,
        0.75 - s * s,
        np.where(s <= 1.5, 0.5 * (1.5 - s) ** 2, 0.0),
    )
    return out if out.ndim else float(out)


def active_splines(param, t):
    """(indices, values) of the basis functions supported at t, <= 3 of
    them nonzero; zero-valued boundary candidates are dropped."""
    dt = param.knot_spacing
    nb = param.splines_per_carrier
    base = int(np.floor(t / dt))
    idx, val = [], []
    for b in range(base - 1, base + 3):
        if not 0 <= b < nb:
            continue
        s = abs(t / dt - b + 0.5)
        if s >= 1.5:
            continue
        v = 0.75 - s * s if s <= 0.5 else 0.5 * (1.5 - s) ** 2
        idx.append(b)
        val.append(v)
    return np.asarray(idx, dtype=np.intp), np.asarray(val)


@dataclass(frozen=True)
class EnvelopeSample:
    """Envelope values of every control line at one instant."""

    re_d: np.ndarray      # (Q,)
    im_d: np.ndarray      # (Q,)
    p: np.ndarray         # (Q, N_f) in-phase spline sums
    q: np.ndarray         # (Q, N_f) quadrature spline sums
    spline_idx: np.ndarray
    spline_val: np.ndarray


def sample_envelopes(param, alpha, t):
    """Evaluate every line's rotating-frame envelope at time t."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (param.size,):
        raise ConfigError(
            f"parameter vector has size {alpha.shape}, expected "
            f"({param.size},)"
        )
    nq = param.num_subsystems
    nf = param.carriers_per_line
    nb = param.splines_per_carrier
    idx, val = active_splines(param, t)
    blocks = alpha.reshape(nq, nf, 2, nb)
    p = blocks[:, :, 0, :][:, :, idx] @ val
    q = blocks[:, :, 1, :][:, :, idx] @ val
    ang = param.carrier_array() * t
    c, s = np.cos(ang), np.sin(ang)
    re_d = np.sum(p * c - q * s, axis=1)
    im_d = np.sum(p * s + q * c, axis=1)
    return EnvelopeSample(re_d=re_d, im_d=im_d, p=p, q=q,
                          spline_idx=idx, spline_val=val)


def envelope_param_derivatives(param, t):
    """Sparse envelope derivatives at time t.

    Returns (indices, d_re, d_im): flat parameter indices touching t and
    the derivatives of (Re d_k, Im d_k) of the owning subsystem with
    respect to each.  For a real coefficient the pair is
    (S_b cos Omega t, S_b sin Omega t); for an imaginary coefficient
    (-S_b sin Omega t, S_b cos Omega t).
    """
    nq = param.num_subsystems
    nf = param.carriers_per_line
    nb = param.splines_per_carrier
    idx, val = active_splines(param, t)
    ang = param.carrier_array() * t
    c, s = np.cos(ang), np.sin(ang)
    na = idx.size
    count = nq * nf * 2 * na
    flat = np.empty(count, dtype=np.intp)
    d_re = np.empty(count)
    d_im = np.empty(count)
    pos = 0
    for k in range(nq):
        for n in range(nf):
            base = ((k * nf + n) * 2) * nb
            for j in range(na):
                flat[pos] = base + idx[j]
                d_re[pos] = val[j] * c[k, n]
                d_im[pos] = val[j] * s[k, n]
                pos += 1
            base += nb
            for j in range(na):
                flat[pos] = base + idx[j]
                d_re[pos] = -val[j] * s[k, n]
                d_im[pos] = val[j] * c[k, n]
                pos += 1
    return flat, d_re, d_im


def lab_frame_control(param, alpha, k, t, rot_freq):
    """Laboratory-frame control f_k(t) = 2 (Re d_k cos w_r t
    - Im d_k sin w_r t), vectorized over t."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(t.shape)
    for i, ti in enumerate(t):
        env = sample_envelopes(param, alpha, ti)
        out[i] = 2.0 * (env.re_d[k] * np.cos(rot_freq * ti)
                        - env.im_d[k] * np.sin(rot_freq * ti))
    return out if out.size > 1 else float(out[0])


def max_envelope_bound(param, alpha_max):
    """Per-line bound max_t |d_k(t)| <= sqrt(2) N_f alpha_max for
    coefficients boxed in [-alpha_max, alpha_max]."""
    return np.sqrt(2.0) * param.carriers_per_line \
        * np.broadcast_to(np.asarray(alpha_max, dtype=float),
                          (param.num_subsystems,)).copy()


def save_parameters(path, param, alpha, extra=None):
    """Write a parameter vector with its layout header as JSON."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (param.size,):
        raise ConfigError(
            f"parameter vector has size {alpha.shape}, expected "
            f"({param.size},)"
        )
    doc = {
        "layout_version": PARAMS_LAYOUT_VERSION,
        "horizon_ns": param.horizon,
        "num_subsystems": param.num_subsystems,
        "splines_per_carrier": param.splines_per_carrier,
        "carriers_per_line": param.carriers_per_line,
        "carriers_ghz": [[w / (2.0 * np.pi) for w in row]
                         for row in param.carriers],
        "carriers_rad_per_ns": [list(row) for row in param.carriers],
        "size": param.size,
        "alpha": alpha.tolist(),
    }
    if extra:
        doc["meta"] = extra
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_parameters(path):
    """Read (param, alpha) back from a JSON parameter file."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("layout_version") != PARAMS_LAYOUT_VERSION:
        raise ConfigError(
            f"unsupported parameter layout version "
            f"{doc.get('layout_version')!r}"
        )
    if "carriers_rad_per_ns" in doc:
        carriers = tuple(tuple(row) for row in doc["carriers_rad_per_ns"])
    else:
        carriers = tuple(tuple(2.0 * np.pi * w for w in row)
                         for row in doc["carriers_ghz"])
    param = ControlParameterization(
        horizon=float(doc["horizon_ns"]),
        splines_per_carrier=int(doc["splines_per_carrier"]),
        carriers=carriers,
    )
    alpha = np.asarray(doc["alpha"], dtype=float)
    if alpha.shape != (param.size,):
        raise ConfigError("parameter file alpha length disagrees with header")
    return param, alpha
