"""B-spline basis, envelope evaluation, parameter layout, file round trip."""

import numpy as np
import pytest

from pulsegate import controls, model
from pulsegate.errors import ConfigError

import oracles


def _param(horizon=10.0, splines=7, carriers=((0.0, -1.3), (0.4, 0.7))):
    return controls.ControlParameterization(
        horizon=horizon, splines_per_carrier=splines, carriers=carriers)


def test_layout_counts():
    p = _param()
    assert p.num_subsystems == 2
    assert p.carriers_per_line == 2
    assert p.size == 2 * 2 * 2 * 7
    assert p.knot_spacing == pytest.approx(10.0 / 5)


def test_validation():
    with pytest.raises(ConfigError):
        _param(horizon=-1.0)
    with pytest.raises(ConfigError):
        _param(splines=2)
    with pytest.raises(ConfigError):
        _param(carriers=())
    with pytest.raises(ConfigError):
        _param(carriers=((0.0,), (0.0, 1.0)))


def test_bspline_matches_oracle():
    p = _param()
    ts = np.linspace(-1.0, 11.0, 241)
    for b in range(p.splines_per_carrier):
        got = controls.bspline_value(p, b, ts)
        expect = [oracles.bspline_basis(t, p.horizon,
                                        p.splines_per_carrier, b)
                  for t in ts]
        assert np.abs(got - expect).max() < 1e-14


def test_bspline_partition_of_unity():
    p = _param(splines=9)
    ts = np.linspace(0.0, p.horizon, 301)
    total = sum(controls.bspline_value(p, b, ts)
                for b in range(p.splines_per_carrier))
    assert np.abs(total - 1.0).max() < 1e-13


def test_bspline_compact_support():
    p = _param()
    dt = p.knot_spacing
    for b in range(p.splines_per_carrier):
        center = dt * (b - 0.5)
        assert controls.bspline_value(p, b, center - 1.5 * dt) == 0.0
        assert controls.bspline_value(p, b, center + 1.5 * dt) == 0.0
        assert controls.bspline_value(p, b, center) == pytest.approx(0.75)


def test_active_splines_match_full_scan():
    p = _param(splines=8)
    rng = np.random.default_rng(4)
    for t in rng.uniform(0.0, p.horizon, size=50):
        idx, val = controls.active_splines(p, t)
        assert len(idx) <= 3
        full = np.array([
            oracles.bspline_basis(t, p.horizon, p.splines_per_carrier, b)
            for b in range(p.splines_per_carrier)
        ])
        dense = np.zeros(p.splines_per_carrier)
        dense[idx] = val
        assert np.abs(dense - full).max() < 1e-14


def test_index_layout_round_trip():
    p = _param()
    seen = set()
    for k in range(p.num_subsystems):
        for n in range(p.carriers_per_line):
            for part in (0, 1):
                for b in range(p.splines_per_carrier):
                    i = p.index(k, n, part, b)
                    assert 0 <= i < p.size
                    seen.add(i)
    assert len(seen) == p.size
    with pytest.raises(IndexError):
        p.index(0, 0, 2, 0)
    with pytest.raises(IndexError):
        p.index(0, 0, 0, p.splines_per_carrier)


def test_pinned_indices_are_block_edges():
    p = _param()
    nb = p.splines_per_carrier
    pinned = set(p.pinned_indices())
    blocks = 2 * p.num_subsystems * p.carriers_per_line
    expect = set()
    for blk in range(blocks):
        expect.add(blk * nb)
        expect.add(blk * nb + nb - 1)
    assert pinned == expect


def test_sample_envelopes_match_oracle():
    p = _param()
    rng = np.random.default_rng(11)
    alpha = rng.normal(scale=0.05, size=p.size)
    for t in rng.uniform(0.0, p.horizon, size=20):
        env = controls.sample_envelopes(p, alpha, t)
        expect = oracles.control_values(
            p.horizon, p.splines_per_carrier, p.carriers, alpha, t)
        got = env.re_d + 1j * env.im_d
        assert np.abs(got - expect).max() < 1e-13


def test_envelope_param_derivatives_match_fd():
    p = _param(splines=5, carriers=((0.2,),))
    rng = np.random.default_rng(6)
    alpha = rng.normal(scale=0.05, size=p.size)
    t = 4.321
    rows, re_der, im_der = controls.envelope_param_derivatives(p, t)
    step = 1e-7
    for pos, idx in enumerate(rows):
        ap = alpha.copy()
        ap[idx] += step
        am = alpha.copy()
        am[idx] -= step
        dp = oracles.control_values(p.horizon, p.splines_per_carrier,
                                    p.carriers, ap, t)
        dm = oracles.control_values(p.horizon, p.splines_per_carrier,
                                    p.carriers, am, t)
        fd = (dp - dm) / (2.0 * step)
        k = idx // (2 * p.carriers_per_line * p.splines_per_carrier)
        assert abs(re_der[pos] - fd[k].real) < 1e-8
        assert abs(im_der[pos] - fd[k].imag) < 1e-8


def test_max_envelope_bound():
    p = _param()
    bound = controls.max_envelope_bound(p, 0.01)
    assert np.allclose(bound, np.sqrt(2.0) * p.carriers_per_line * 0.01)


def test_lab_frame_control_formula():
    p = _param(carriers=((0.0, -1.2),))
    rng = np.random.default_rng(3)
    alpha = rng.normal(scale=0.02, size=p.size)
    rot = model.ghz(4.1)
    t = np.linspace(0.0, p.horizon, 17)
    got = controls.lab_frame_control(p, alpha, 0, t, rot)
    for i, ti in enumerate(t):
        d = oracles.control_values(p.horizon, p.splines_per_carrier,
                                   p.carriers, alpha, ti)[0]
        expect = 2.0 * (d.real * np.cos(rot * ti)
                        - d.imag * np.sin(rot * ti))
        assert abs(got[i] - expect) < 1e-13


def test_save_load_round_trip(tmp_path):
    p = _param()
    rng = np.random.default_rng(8)
    alpha = rng.normal(scale=0.03, size=p.size)
    path = tmp_path / "params.json"
    controls.save_parameters(path, p, alpha, extra={"note": "case"})
    loaded_param, loaded_alpha = controls.load_parameters(path)
    assert loaded_param.horizon == pytest.approx(p.horizon)
    assert loaded_param.splines_per_carrier == p.splines_per_carrier
    carr = np.asarray(loaded_param.carriers)
    assert np.abs(carr - np.asarray(p.carriers)).max() < 1e-12
    assert np.abs(loaded_alpha - alpha).max() == 0.0
