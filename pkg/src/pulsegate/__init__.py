"""Pulse-envelope synthesis for unitary gates on coupled qudits.

Forward model: rotating-frame Schroedinger propagation of B-spline /
carrier control envelopes with a symplectic partitioned integrator;
inverse problem: discrete-adjoint gradients driving a projected L-BFGS
search with box bounds, optionally risk-neutral over a dephasing noise
quadrature.
"""

from ._kernels import active_backend, compiled_available
from .adjoint import fd_gradient, gradient, make_evaluator, terminal_adjoint
from .controls import (
    ControlParameterization,
    EnvelopeSample,
    bspline_value,
    envelope_param_derivatives,
    lab_frame_control,
    load_parameters,
    max_envelope_bound,
    sample_envelopes,
    save_parameters,
)
from .errors import (
    ConfigError,
    InvalidGateError,
    InvalidSubsystemError,
    ProblemTooLargeError,
    PulsegateError,
)
from .gates import (
    EssentialMap,
    GateProblem,
    build_initial_basis,
    build_problem,
    essential_map,
    guard_weight_vector,
    lift_and_rotate_target,
    read_gate_matrix,
    standard_gate,
    write_gate_matrix,
)
from .model import (
    CompositeSystem,
    OperatorSet,
    SubsystemSpec,
    assemble_real_parts,
    build_composite,
    build_lowering,
    gershgorin_bound,
    ghz,
    mhz,
    resonance_frequencies,
    rotation_phases,
)
from .objective import (
    NoiseModel,
    ObjectiveAccumulator,
    ObjectiveReport,
    evaluate_objective,
    gauss_legendre,
    infidelity,
    overlap_from_final,
    risk_neutral_objective,
)
from .optimizer import (
    IterationRecord,
    OptimizerConfig,
    OptimizerResult,
    initialize_parameters,
    minimize,
)
from .propagator import (
    HamiltonianAssembler,
    PropagationResult,
    TimeGrid,
    estimate_steps,
    hamiltonian_functional,
    propagate,
    step_forward,
    step_reverse,
)

__version__ = "0.1.0"
