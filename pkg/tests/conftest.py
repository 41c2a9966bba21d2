"""Shared problem builders for the test suite."""

import numpy as np
import pytest

from pulsegate import controls, gates, model


def random_unitary(n, rng):
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def single_qudit_problem(seed=0, levels=4, essential=3, steps=200,
                         splines=6, carriers=(0.0,), horizon=10.0,
                         guard_weight=1.5, alpha_scale=0.02, **kw):
    """Q = 1 test problem with a random target on the essential block."""
    rng = np.random.default_rng(seed)
    sub = model.SubsystemSpec(
        levels=levels, essential=essential,
        ground_freq=model.ghz(4.0 + 0.2 * rng.uniform()),
        self_kerr=model.ghz(0.2 + 0.05 * rng.uniform()),
        rot_freq=model.ghz(4.0),
    )
    system = model.build_composite([sub])
    param = controls.ControlParameterization(
        horizon=horizon, splines_per_carrier=splines,
        carriers=(tuple(carriers),),
    )
    v_e = random_unitary(system.essential_dim, rng)
    prob = gates.build_problem(system, param, v_e, steps=steps,
                               guard_weight=guard_weight, **kw)
    alpha = rng.normal(scale=alpha_scale, size=param.size)
    return prob, alpha


def two_qudit_problem(seed=0, steps=240, splines=5, **kw):
    """Q = 2 problem with cross-Kerr, guards, and two carriers per line."""
    rng = np.random.default_rng(seed)
    xi1, xi2 = model.ghz(0.22), model.ghz(0.23)
    sub1 = model.SubsystemSpec(3, 2, model.ghz(4.1), xi1, model.ghz(4.1))
    sub2 = model.SubsystemSpec(3, 2, model.ghz(4.8), xi2, model.ghz(4.8))
    system = model.build_composite([sub1, sub2],
                                   {(0, 1): model.ghz(0.01)})
    param = controls.ControlParameterization(
        horizon=8.0, splines_per_carrier=splines,
        carriers=((0.0, -xi1), (0.0, -xi2)),
    )
    v_e = gates.standard_gate("cnot", system.essential_dims)
    kw.setdefault("guard_weight", 2.0)
    prob = gates.build_problem(system, param, v_e, steps=steps, **kw)
    alpha = rng.normal(scale=0.01, size=param.size)
    return prob, alpha


@pytest.fixture
def small_problem():
    return single_qudit_problem(seed=3)


@pytest.fixture
def coupled_problem():
    return two_qudit_problem(seed=5)
