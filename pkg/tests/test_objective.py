"""Infidelity, guard penalty accumulation, quadrature, noise model."""

import numpy as np
import pytest

from pulsegate import objective, propagator
from pulsegate.errors import ConfigError

import oracles
from conftest import random_unitary, single_qudit_problem
from test_propagator import oracle_hamiltonian


def test_overlap_and_infidelity_at_target():
    rng = np.random.default_rng(0)
    v = random_unitary(4, rng)
    u, dv = v.real.copy(), -v.imag.copy()
    # final state equal to the target: S = E, J1 = 0
    s = objective.overlap_from_final(v.real, -v.imag, u, dv)
    assert s == pytest.approx(4.0 + 0.0j)
    assert objective.infidelity(s, 4) == 0.0


def test_infidelity_global_phase_invariant():
    rng = np.random.default_rng(1)
    v = random_unitary(3, rng)
    d_u, d_v = v.real.copy(), -v.imag.copy()
    base = None
    for phi in (0.0, 0.7, 2.1, np.pi):
        rot = np.exp(1j * phi) * v
        s = objective.overlap_from_final(rot.real, -rot.imag, d_u, d_v)
        j1 = objective.infidelity(s, 3)
        assert abs(s) == pytest.approx(3.0, abs=1e-12)
        if base is None:
            base = j1
        assert j1 == pytest.approx(base, abs=1e-12)


def test_infidelity_orthogonal_state():
    d_u = np.zeros((2, 1))
    d_u[0, 0] = 1.0
    d_v = np.zeros((2, 1))
    u = np.zeros((2, 1))
    u[1, 0] = 1.0
    s = objective.overlap_from_final(u, np.zeros((2, 1)), d_u, d_v)
    assert objective.infidelity(s, 1) == pytest.approx(1.0)


def test_guard_penalty_matches_time_integral():
    """J2 accumulated by the stepping rule approximates the continuous
    time average of the weighted guard population."""
    prob, alpha = single_qudit_problem(seed=7, guard_weight=2.5)
    rep = objective.evaluate_objective(prob, alpha)

    ham = oracle_hamiltonian(prob, alpha)
    t_total = prob.param.horizon
    fine = 1200
    h = t_total / fine
    w = prob.weights
    psi = prob.u0.astype(complex)
    import scipy.linalg

    vals = [np.sum(w[:, None] * np.abs(psi) ** 2)]
    for n in range(fine):
        step = scipy.linalg.expm(-1j * h * ham((n + 0.5) * h))
        psi = step @ psi
        vals.append(np.sum(w[:, None] * np.abs(psi) ** 2))
    integral = np.trapezoid(vals, dx=h) / t_total
    assert rep.j2 == pytest.approx(integral, rel=2e-2)


def test_evaluate_objective_matches_propagate(small_problem=None):
    prob, alpha = single_qudit_problem(seed=9)
    rep = objective.evaluate_objective(prob, alpha)
    res = propagator.propagate(prob, alpha)
    s = objective.overlap_from_final(res.u, res.v, prob.d_u, prob.d_v)
    assert rep.j1 == pytest.approx(objective.infidelity(s, 3), abs=1e-14)
    assert rep.j2 == pytest.approx(res.j2, abs=1e-14)
    assert rep.guard_max == pytest.approx(res.guard_max, abs=1e-14)
    assert rep.total == pytest.approx(rep.j1 + rep.j2)


def test_gauss_legendre_small_orders():
    x1, w1 = objective.gauss_legendre(1)
    assert np.allclose(x1, [0.0]) and np.allclose(w1, [2.0])
    x2, w2 = objective.gauss_legendre(2)
    assert np.allclose(x2, [-1.0 / np.sqrt(3.0), 1.0 / np.sqrt(3.0)])
    assert np.allclose(w2, [1.0, 1.0])
    x3, w3 = objective.gauss_legendre(3)
    assert np.allclose(x3, [-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
    assert np.allclose(w3, [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
    with pytest.raises(ConfigError):
        objective.gauss_legendre(0)
    with pytest.raises(ConfigError):
        objective.gauss_legendre(65)


def test_noise_model_nodes_and_kappa():
    prob, _ = single_qudit_problem(seed=2)
    system = prob.system
    scales = np.array([0.0, 0.01, 0.1, 1.0])
    noise = objective.NoiseModel(eps_max=0.06, quad_order=5,
                                 level_scales=scales)
    eps, w = noise.nodes()
    assert eps.shape == (5,) and w.shape == (5,)
    assert np.abs(eps).max() <= 0.06
    assert w.sum() == pytest.approx(1.0)
    kap = noise.perturbed_kappa(system, 0.03)
    assert np.allclose(kap, system.kappa + 0.03 * scales)

    with pytest.raises(ConfigError):
        objective.NoiseModel(eps_max=-1.0, quad_order=3,
                             level_scales=scales)
    bad = objective.NoiseModel(eps_max=0.1, quad_order=3,
                               level_scales=np.ones(3))
    with pytest.raises(ConfigError):
        bad.perturbed_kappa(system, 0.01)


def test_risk_neutral_objective_is_quadrature_mean():
    prob, alpha = single_qudit_problem(seed=4)
    scales = np.array([0.0, 0.01, 0.1, 1.0])
    noise = objective.NoiseModel(eps_max=0.05, quad_order=5,
                                 level_scales=scales)

    def evaluator(a, kappa):
        return objective.evaluate_objective(prob, a, kappa=kappa), None

    rep, grad = objective.risk_neutral_objective(prob, alpha, noise,
                                                 evaluator)
    assert grad is None
    eps, w = noise.nodes()
    expect_j1 = sum(
        wk * objective.evaluate_objective(
            prob, alpha, kappa=noise.perturbed_kappa(prob.system, ek)).j1
        for ek, wk in zip(eps, w)
    )
    assert rep.j1 == pytest.approx(expect_j1, rel=1e-12)


def test_risk_neutral_zero_scales_reduces_to_nominal():
    prob, alpha = single_qudit_problem(seed=6)
    noise = objective.NoiseModel(eps_max=0.05, quad_order=7,
                                 level_scales=np.zeros(4))

    def evaluator(a, kappa):
        return objective.evaluate_objective(prob, a, kappa=kappa), None

    rep, _ = objective.risk_neutral_objective(prob, alpha, noise,
                                              evaluator)
    nominal = objective.evaluate_objective(prob, alpha)
    assert rep.j1 == pytest.approx(nominal.j1, rel=1e-12)
    assert rep.j2 == pytest.approx(nominal.j2, rel=1e-12)
