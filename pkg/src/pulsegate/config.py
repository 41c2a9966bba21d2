"""Problem ingestion: YAML documents to solver objects.

Unit convention at the file boundary: ordinary frequencies in GHz,
amplitudes in MHz, times in ns; all keys carry their unit suffix.
Internally everything is angular (rad/ns), conversion exactly 2*pi*1e-3
per MHz.  Parsing rejects unknown sections and keys by name.
"""

from dataclasses import dataclass, field

import numpy as np
import yaml

from .controls import ControlParameterization
from .errors import ConfigError
from .gates import build_problem, check_unitary, read_gate_matrix, \
    standard_gate
from .model import SubsystemSpec, TWO_PI, build_composite, ghz, mhz, \
    resonance_frequencies
from .objective import NoiseModel
from .optimizer import OptimizerConfig

_SECTION_KEYS = {
    "system": {"levels", "essential", "freq_ghz", "self_kerr_ghz",
               "rot_freq_ghz", "cross_kerr_ghz"},
    "controls": {"splines_per_carrier", "carriers_ghz", "auto_resonant",
                 "max_carriers", "alpha_max_mhz", "pin_boundary"},
    "gate": {"name", "matrix_file", "control_subsystem"},
    "sim": {"t_ns", "cp", "m", "min_steps"},
    "objective": {"guard_weights"},
    "optimizer": {"memory", "max_iters", "grad_tol", "infidelity_target",
                  "seed", "restarts"},
    "risk": {"enabled", "eps_max_mhz", "quad_order", "level_scales"},
}
_REQUIRED_SECTIONS = ("system", "controls", "gate", "sim")


def load_config(path):
    """Parse and validate a YAML problem document; returns the raw dict."""
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}")
    return validate_config(doc)


def validate_config(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config top level must be a mapping of sections")
    for section, body in doc.items():
        if section not in _SECTION_KEYS:
            raise ConfigError(f"unknown section '{section}'")
        if body is None:
            doc[section] = {}
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"section '{section}' must be a mapping")
        for key in body:
            if key not in _SECTION_KEYS[section]:
                raise ConfigError(f"{section}: unknown key '{key}'")
    for section in _REQUIRED_SECTIONS:
        if section not in doc:
            raise ConfigError(f"missing required section '{section}'")
    return doc


def _as_list(value, count, name, cast=float):
    """Broadcast a scalar or validate a per-subsystem list."""
    if isinstance(value, (list, tuple)):
        if len(value) != count:
            raise ConfigError(
                f"{name} must have one entry per subsystem ({count}), "
                f"got {len(value)}"
            )
        return [cast(v) for v in value]
    return [cast(value)] * count


def _parse_cross_kerr(raw, num):
    """Pair table {'1,2': ghz} (1-based) or a full (Q, Q) matrix in GHz."""
    if raw is None:
        return {}
    if isinstance(raw, dict):
        out = {}
        for key, val in raw.items():
            try:
                p_str, q_str = str(key).split(",")
                p, q = int(p_str), int(q_str)
            except ValueError:
                raise ConfigError(
                    f"system: cross_kerr_ghz key '{key}' is not 'p,q'"
                )
            if not (1 <= p <= num and 1 <= q <= num) or p == q:
                raise ConfigError(
                    f"system: cross_kerr_ghz pair '{key}' out of range"
                )
            out[(p - 1, q - 1)] = ghz(float(val))
        return out
    mat = np.asarray(raw, dtype=float)
    if mat.shape != (num, num):
        raise ConfigError(
            f"system: cross_kerr_ghz matrix must be ({num}, {num})"
        )
    return ghz(mat)


def build_system(doc):
    sec = doc["system"]
    if "levels" not in sec:
        raise ConfigError("system: 'levels' is required")
    levels = sec["levels"] if isinstance(sec["levels"], (list, tuple)) \
        else [sec["levels"]]
    levels = [int(n) for n in levels]
    num = len(levels)
    essential = _as_list(sec.get("essential", levels), num,
                         "system.essential", cast=int)
    if "freq_ghz" not in sec:
        raise ConfigError("system: 'freq_ghz' is required")
    freq = _as_list(sec["freq_ghz"], num, "system.freq_ghz")
    kerr = _as_list(sec.get("self_kerr_ghz", 0.0), num,
                    "system.self_kerr_ghz")
    rot = _as_list(sec.get("rot_freq_ghz", freq), num,
                   "system.rot_freq_ghz")
    subs = [
        SubsystemSpec(levels=levels[k], essential=essential[k],
                      ground_freq=ghz(freq[k]), self_kerr=ghz(kerr[k]),
                      rot_freq=ghz(rot[k]))
        for k in range(num)
    ]
    return build_composite(subs, _parse_cross_kerr(
        sec.get("cross_kerr_ghz"), num))


def _resolve_carriers(doc, system):
    """Carrier table in rad/ns, either explicit or from the resonance
    analysis (optionally capped to the `max_carriers` smallest offsets)."""
    sec = doc["controls"]
    explicit = sec.get("carriers_ghz")
    auto = bool(sec.get("auto_resonant", False))
    if explicit is not None and auto:
        raise ConfigError(
            "controls: give either carriers_ghz or auto_resonant, not both"
        )
    if explicit is None and not auto:
        raise ConfigError(
            "controls: one of carriers_ghz or auto_resonant is required"
        )
    q = system.num_subsystems
    if explicit is not None:
        if q == 1 and explicit and not isinstance(explicit[0],
                                                  (list, tuple)):
            explicit = [explicit]
        if len(explicit) != q:
            raise ConfigError(
                f"controls: carriers_ghz needs {q} carrier lists"
            )
        counts = {len(row) for row in explicit}
        if len(counts) != 1:
            raise ConfigError(
                "controls: every subsystem needs the same carrier count"
            )
        return tuple(tuple(ghz(float(w)) for w in row) for row in explicit)
    cap = sec.get("max_carriers")
    carriers = []
    for k in range(q):
        freqs = resonance_frequencies(system, k)
        if cap is not None:
            keep = np.argsort(np.abs(freqs), kind="stable")[: int(cap)]
            freqs = np.sort(freqs[keep])[::-1]
        carriers.append(tuple(float(w) for w in freqs))
    counts = {len(row) for row in carriers}
    if len(counts) != 1:
        n_min = min(len(row) for row in carriers)
        carriers = [row[:n_min] for row in carriers]
    return tuple(carriers)


def _guard_weights(doc, system):
    """(scalar_weight, explicit_vector) from objective.guard_weights."""
    raw = doc.get("objective", {}).get("guard_weights", 1.0)
    if isinstance(raw, (list, tuple)):
        vec = np.asarray(raw, dtype=float)
        if vec.shape != (system.dim,):
            raise ConfigError(
                f"objective: guard_weights list must have length "
                f"{system.dim} (composite dimension)"
            )
        return 1.0, vec
    return float(raw), None


def _default_level_scales(system):
    """Dephasing scale per composite level: 0 for the ground level of
    every subsystem, a factor of ten per level below the top one (the
    4-level pattern is 0, 1/100, 1/10, 1), summed across subsystems."""
    scales = np.zeros(system.dim)
    for k, spec in enumerate(system.subsystems):
        occ = system.ops.occupation[k]
        per = np.where(occ > 0, 10.0 ** (occ - (spec.levels - 1)), 0.0)
        scales += per
    return scales


def build_noise(doc, system):
    sec = doc.get("risk", {})
    if not sec.get("enabled", False):
        return None
    raw_scales = sec.get("level_scales")
    if raw_scales is None:
        scales = _default_level_scales(system)
    else:
        scales = np.asarray(raw_scales, dtype=float)
        if scales.shape != (system.dim,):
            raise ConfigError(
                f"risk: level_scales must have length {system.dim} "
                f"(composite dimension)"
            )
    return NoiseModel(
        eps_max=mhz(float(sec.get("eps_max_mhz", 10.0))),
        quad_order=int(sec.get("quad_order", 9)),
        level_scales=scales,
    )


@dataclass
class ResolvedRun:
    """Everything a command needs, plus the resolved document for
    report embedding."""

    system: object
    param: ControlParameterization
    v_e: np.ndarray
    problem: object
    gate_name: str
    alpha_max: np.ndarray          # per subsystem, rad/ns
    opt: OptimizerConfig
    seed: int
    restarts: int
    noise: object
    resolved: dict = field(default_factory=dict)

    def bounds(self):
        """Box bounds (lower, upper) expanded to the parameter layout."""
        p = self.param
        lo = np.empty(p.size)
        block = 2 * p.carriers_per_line * p.splines_per_carrier
        for k in range(p.num_subsystems):
            lo[k * block:(k + 1) * block] = -self.alpha_max[k]
        return lo, -lo


def resolve_run(doc, m_override=None):
    """Turn a validated config dict into solver objects."""
    system = build_system(doc)

    sec_c = doc["controls"]
    if "splines_per_carrier" not in sec_c:
        raise ConfigError("controls: 'splines_per_carrier' is required")
    if "alpha_max_mhz" not in sec_c:
        raise ConfigError("controls: 'alpha_max_mhz' is required")
    sec_s = doc["sim"]
    if "t_ns" not in sec_s:
        raise ConfigError("sim: 't_ns' is required")

    carriers = _resolve_carriers(doc, system)
    param = ControlParameterization(
        horizon=float(sec_s["t_ns"]),
        splines_per_carrier=int(sec_c["splines_per_carrier"]),
        carriers=carriers,
    )
    alpha_max = np.asarray(_as_list(
        sec_c["alpha_max_mhz"], system.num_subsystems,
        "controls.alpha_max_mhz"))
    alpha_max = mhz(alpha_max)

    sec_g = doc["gate"]
    name = sec_g.get("name")
    matrix_file = sec_g.get("matrix_file")
    if (name is None) == (matrix_file is None):
        raise ConfigError("gate: give exactly one of name or matrix_file")
    if name is not None:
        v_e = standard_gate(
            str(name), system.essential_dims,
            control_subsystem=int(sec_g.get("control_subsystem", 2)))
        gate_name = str(name)
    else:
        v_e = read_gate_matrix(matrix_file)
        check_unitary(v_e)
        if v_e.shape[0] != system.essential_dim:
            raise ConfigError(
                f"gate matrix dimension {v_e.shape[0]} does not match "
                f"essential dimension {system.essential_dim}"
            )
        gate_name = f"file:{matrix_file}"

    weight, weight_vec = _guard_weights(doc, system)
    steps = m_override if m_override is not None else sec_s.get("m")
    problem = build_problem(
        system, param, v_e,
        steps=steps,
        points_per_period=float(sec_s.get("cp", 40.0)),
        guard_weight=weight,
        guard_weights=weight_vec,
        alpha_max=float(alpha_max.max()),
        pin_boundary=bool(sec_c.get("pin_boundary", False)),
        min_steps=int(sec_s.get("min_steps", 100)),
    )

    sec_o = doc.get("optimizer", {})
    opt = OptimizerConfig(
        max_iters=int(sec_o.get("max_iters", 200)),
        memory=int(sec_o.get("memory", 5)),
        grad_tol=float(sec_o.get("grad_tol", 1e-5)),
        infidelity_target=float(sec_o.get("infidelity_target", 1e-4)),
    )
    seed = int(sec_o.get("seed", 1234))
    restarts = int(sec_o.get("restarts", 1))
    if restarts < 1:
        raise ConfigError("optimizer: restarts must be at least 1")

    noise = build_noise(doc, system)

    resolved = {
        "system": {
            "levels": [s.levels for s in system.subsystems],
            "essential": [s.essential for s in system.subsystems],
            "freq_ghz": [s.ground_freq / TWO_PI for s in system.subsystems],
            "self_kerr_ghz": [s.self_kerr / TWO_PI
                              for s in system.subsystems],
            "rot_freq_ghz": [s.rot_freq / TWO_PI for s in system.subsystems],
            "cross_kerr_ghz": (system.cross_kerr / TWO_PI).tolist(),
        },
        "controls": {
            "splines_per_carrier": param.splines_per_carrier,
            "carriers_ghz": [[w / TWO_PI for w in row] for row in carriers],
            "alpha_max_mhz": (alpha_max / (TWO_PI * 1e-3)).tolist(),
            "pin_boundary": bool(sec_c.get("pin_boundary", False)),
        },
        "gate": {
            "name": gate_name,
            "control_subsystem": int(sec_g.get("control_subsystem", 2)),
        },
        "sim": {
            "t_ns": param.horizon,
            "cp": float(sec_s.get("cp", 40.0)),
            "m": problem.steps,
            "h_ns": param.horizon / problem.steps,
        },
        "objective": {
            "guard_weights": weight_vec.tolist()
            if weight_vec is not None else weight,
        },
        "optimizer": {
            "max_iters": opt.max_iters,
            "memory": opt.memory,
            "grad_tol": opt.grad_tol,
            "infidelity_target": opt.infidelity_target,
            "seed": seed,
            "restarts": restarts,
        },
        "risk": {
            "enabled": noise is not None,
        },
    }
    if noise is not None:
        resolved["risk"].update({
            "eps_max_mhz": noise.eps_max / (TWO_PI * 1e-3),
            "quad_order": noise.quad_order,
            "level_scales": noise.level_scales.tolist(),
        })

    return ResolvedRun(
        system=system, param=param, v_e=v_e, problem=problem,
        gate_name=gate_name, alpha_max=alpha_max, opt=opt, seed=seed,
        restarts=restarts, noise=noise, resolved=resolved,
    )
