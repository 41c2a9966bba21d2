"""Time stepping: oracle agreement, structure preservation, sampling."""

import numpy as np
import pytest

from pulsegate import model, propagator
from pulsegate.errors import ConfigError

import oracles
from conftest import single_qudit_problem, two_qudit_problem


def oracle_hamiltonian(prob, alpha, kappa=None):
    """t -> dense complex H(t) rebuilt from primitive inputs only."""
    system = prob.system
    specs = [(s.levels, s.detuning, s.self_kerr) for s in system.subsystems]
    xi = system.cross_kerr
    cross = {
        (p, q): xi[p, q]
        for p in range(len(specs)) for q in range(p + 1, len(specs))
        if xi[p, q] != 0.0
    }
    kap = oracles.composite_kappa(specs, cross) if kappa is None \
        else np.asarray(kappa, dtype=float)
    lows = [oracles.embedded_lowering(system.dims, q)
            for q in range(system.num_subsystems)]
    param = prob.param

    def at(t):
        d = oracles.control_values(param.horizon, param.splines_per_carrier,
                                   param.carriers, alpha, t)
        return oracles.dense_hamiltonian(kap, lows, d)

    return at


def test_time_grid():
    grid = propagator.TimeGrid(steps=4, horizon=2.0)
    assert grid.h == pytest.approx(0.5)
    assert np.allclose(grid.times(), [0.0, 0.5, 1.0, 1.5, 2.0])
    with pytest.raises(ConfigError):
        propagator.TimeGrid(steps=0, horizon=1.0)
    with pytest.raises(ConfigError):
        propagator.TimeGrid(steps=3, horizon=0.0)


def test_estimate_steps_validation_and_floor():
    sub = model.SubsystemSpec(3, 2, model.ghz(4.1), model.ghz(0.2),
                              model.ghz(4.1))
    system = model.build_composite([sub])
    with pytest.raises(ConfigError):
        propagator.estimate_steps(system, 0.01, ((0.0,),), 10.0, 2)
    with pytest.raises(ConfigError):
        propagator.estimate_steps(system, 0.01, ((0.0,),), -1.0, 40)
    # degenerate rate falls back to the floor
    flat = model.build_composite([model.SubsystemSpec(2, 2)])
    assert propagator.estimate_steps(flat, 0.0, ((0.0,),), 10.0, 40) == 100
    assert propagator.estimate_steps(flat, 0.0, ((0.0,),), 10.0, 40,
                                     min_steps=250) == 250


def test_estimate_steps_scales_with_rate():
    sub = model.SubsystemSpec(3, 2, model.ghz(4.1), model.ghz(0.2),
                              model.ghz(4.1))
    system = model.build_composite([sub])
    m40 = propagator.estimate_steps(system, 0.02, ((0.0,),), 50.0, 40)
    m80 = propagator.estimate_steps(system, 0.02, ((0.0,),), 50.0, 80)
    assert m80 == pytest.approx(2 * m40, abs=2)
    # a fast carrier dominates a slow system rate
    m_fast = propagator.estimate_steps(system, 0.02, ((model.ghz(3.0),),),
                                       50.0, 40)
    assert m_fast > m40


def test_propagate_matches_expm_oracle(small_problem):
    prob, alpha = small_problem
    ham = oracle_hamiltonian(prob, alpha)
    psi = oracles.expm_propagate(ham, prob.u0.astype(complex),
                                 prob.param.horizon, 3000)
    res = propagator.propagate(prob, alpha, steps=600)
    err = np.abs(res.psi - psi).max()
    assert err < 5e-4


def test_propagate_two_qudit_oracle(coupled_problem):
    prob, alpha = coupled_problem
    ham = oracle_hamiltonian(prob, alpha)
    psi = oracles.expm_propagate(ham, prob.u0.astype(complex),
                                 prob.param.horizon, 2400)
    res = propagator.propagate(prob, alpha, steps=480)
    assert np.abs(res.psi - psi).max() < 5e-4


def test_column_norm_drift_is_second_order(small_problem):
    """The scheme is symplectic, not unitary: column norms deviate at
    O(h^2) and the deviation quarters when the step is halved."""
    prob, alpha = small_problem
    devs = []
    for m in (200, 400, 800):
        res = propagator.propagate(prob, alpha, steps=m)
        norms = np.sqrt((res.u ** 2 + res.v ** 2).sum(axis=0))
        devs.append(np.abs(norms - 1.0).max())
    assert devs[0] < 1e-3
    assert devs[0] / devs[1] == pytest.approx(4.0, rel=0.2)
    assert devs[1] / devs[2] == pytest.approx(4.0, rel=0.2)


def test_single_step_reverses(small_problem):
    prob, alpha = small_problem
    asm = propagator.HamiltonianAssembler(prob, alpha)
    h = prob.horizon / prob.steps
    u = prob.u0.copy()
    v = np.zeros_like(u)
    u2, v2, _ = propagator.step_forward(asm, 0.0, h, u, v)
    ub, vb = propagator.step_reverse(asm, h, h, u2, v2)
    assert np.abs(ub - u).max() < 1e-13
    assert np.abs(vb - v).max() < 1e-13


def test_forward_reverse_round_trip(small_problem):
    prob, alpha = small_problem
    res = propagator.propagate(prob, alpha)
    asm = propagator.HamiltonianAssembler(prob, alpha)
    h = prob.horizon / prob.steps
    u, v = res.u.copy(), res.v.copy()
    for n in range(prob.steps - 1, -1, -1):
        u, v = propagator.step_reverse(asm, (n + 1) * h, h, u, v)
    assert np.abs(u - prob.u0).max() < 1e-12
    assert np.abs(v).max() < 1e-12


def test_population_sampling(small_problem):
    prob, alpha = small_problem
    res = propagator.propagate(prob, alpha, pop_stride=50)
    assert res.pops is not None
    marks = list(res.pop_steps)
    assert marks[0] == 0
    assert marks[-1] == prob.steps
    h = prob.horizon / prob.steps
    ham = oracle_hamiltonian(prob, alpha)
    for i, mark in enumerate(marks):
        if mark == 0:
            psi = prob.u0.astype(complex)
        else:
            psi = oracles.expm_propagate(ham, prob.u0.astype(complex),
                                         mark * h, 8 * mark)
        expect = np.abs(psi.T) ** 2
        assert res.pops[i].shape == expect.shape
        assert np.abs(res.pops[i] - expect).max() < 2e-3
    total = res.pops.sum(axis=2)
    assert np.abs(total - 1.0).max() < 1e-3


def test_guard_max_reflects_leakage(small_problem):
    prob, alpha = small_problem
    res = propagator.propagate(prob, alpha, pop_stride=1)
    guard_cols = np.asarray(prob.guard_mask, dtype=bool)
    from_pops = res.pops[:, :, guard_cols].max()
    assert res.guard_max >= from_pops - 1e-12
    assert res.guard_max <= 1.0


def test_kappa_override(small_problem):
    prob, alpha = small_problem
    kappa = prob.system.kappa + 0.05 * np.arange(prob.dim)
    res = propagator.propagate(prob, alpha, steps=600, kappa=kappa)
    ham = oracle_hamiltonian(prob, alpha, kappa=kappa)
    psi = oracles.expm_propagate(ham, prob.u0.astype(complex),
                                 prob.param.horizon, 3000)
    assert np.abs(res.psi - psi).max() < 5e-4


def test_column_partition_merges(small_problem):
    prob, alpha = small_problem
    full = propagator.propagate(prob, alpha)
    parts = [propagator.propagate(prob, alpha, columns=slice(0, 2)),
             propagator.propagate(prob, alpha, columns=slice(2, 3))]
    u = np.hstack([p.u for p in parts])
    v = np.hstack([p.v for p in parts])
    assert np.abs(u - full.u).max() < 1e-14
    assert np.abs(v - full.v).max() < 1e-14
    assert sum(p.j2 for p in parts) == pytest.approx(full.j2, rel=1e-12)
    assert max(p.guard_max for p in parts) == pytest.approx(full.guard_max)


def test_constant_hamiltonian_functional_short_run():
    prob, _ = single_qudit_problem(seed=1, carriers=(0.0,), splines=5)
    alpha = np.zeros(prob.param.size)
    alpha[:5] = 0.08        # constant real envelope on the only carrier
    alpha[5:10] = 0.05      # constant imaginary part
    asm = propagator.HamiltonianAssembler(prob, alpha)
    k0, s0 = asm(0.0)
    k1, s1 = asm(prob.horizon / 3.0)
    assert np.abs(k0 - k1).max() < 1e-13
    assert np.abs(s0 - s1).max() < 1e-13

    h = 0.05
    u = prob.u0[:, :1].copy()
    v = np.zeros_like(u)
    ham0 = propagator.hamiltonian_functional(k0, s0, u, v)
    assemble = lambda t: (k0, s0)
    devs = []
    for n in range(400):
        u, v, _ = propagator.step_forward(assemble, n * h, h, u, v)
        devs.append(abs(propagator.hamiltonian_functional(k0, s0, u, v)
                        - ham0))
    assert max(devs) < 1e-2 * max(abs(ham0), 1.0)
