"""Truncated-generator algebra against quadrature oracles and closed forms."""

import math

import numpy as np
import pytest

from pdmp.spectral import (
    TruncatedGenerator,
    abs_position_matrix,
    assemble_generator_1d,
    decay_rate_spectral,
    half_gaussian_overlaps,
    hermite_zero_values,
    lowering_matrix,
    position_matrix,
    propagate,
    spectral_radius_estimate,
    suggested_dt,
    x_mode,
)


def _herm_vals(n, y):
    """Orthonormal Hermite values h_0..h_{n-1} at points y, by recurrence."""
    out = np.zeros((n, len(y)))
    out[0] = 1.0
    if n > 1:
        out[1] = y
    for k in range(1, n - 1):
        out[k + 1] = (y * out[k] - math.sqrt(k) * out[k - 1]) / math.sqrt(k + 1)
    return out


def _half_line_rule(n_panels=24, n_nodes=40, upper=12.0):
    # composite Gauss-Legendre on [0, upper]; the Gaussian tail beyond is
    # far below the comparison tolerance
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    edges = np.linspace(0.0, upper, n_panels + 1)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def test_ladder_matrices():
    der = lowering_matrix(4)
    pos = position_matrix(4)
    assert der[0, 1] == 1.0 and der[1, 2] == pytest.approx(math.sqrt(2))
    assert np.count_nonzero(der) == 3
    assert np.array_equal(pos, pos.T)
    y = np.array([0.3, -1.7])
    h = _herm_vals(5, y)
    # multiplication by y in coefficient space vs pointwise, on h_2
    lhs = y * h[2]
    rhs = math.sqrt(3) * h[3] + math.sqrt(2) * h[1]
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_hermite_zero_values():
    vals = hermite_zero_values(6)
    assert vals[0] == 1.0
    assert np.all(vals[1::2] == 0.0)
    assert vals[2] == pytest.approx(-1.0 / math.sqrt(2))
    assert vals[4] == pytest.approx(math.sqrt(3.0 / 8.0))


def test_half_overlaps_match_quadrature():
    n = 16
    nodes, weights = _half_line_rule()
    phi = np.exp(-0.5 * nodes**2) / math.sqrt(2.0 * math.pi)
    h = _herm_vals(n, nodes)
    oracle = (h * weights * phi) @ h.T
    t = half_gaussian_overlaps(n)
    assert np.abs(t - oracle).max() < 1e-10
    assert np.abs(t - t.T).max() < 1e-13


def test_abs_matrix_matches_quadrature():
    n = 12
    nodes, weights = _half_line_rule()
    phi = np.exp(-0.5 * nodes**2) / math.sqrt(2.0 * math.pi)
    h = _herm_vals(n, nodes)
    half = (h * nodes * weights * phi) @ h.T
    m = abs_position_matrix(n)
    for i in range(n):
        for j in range(n):
            want = 2.0 * half[i, j] if (i + j) % 2 == 0 else 0.0
            assert abs(m[i, j] - want) < 1e-10
    assert np.abs(m - m.T).max() < 1e-13


def test_abs_matrix_closed_form_anchors():
    m = abs_position_matrix(4)
    root_2_over_pi = math.sqrt(2.0 / math.pi)
    assert m[0, 0] == pytest.approx(root_2_over_pi, rel=1e-14)
    assert m[1, 1] == pytest.approx(2.0 * root_2_over_pi, rel=1e-14)
    assert m[2, 0] == pytest.approx(root_2_over_pi / math.sqrt(2), rel=1e-14)
    assert m[0, 1] == 0.0 and m[1, 2] == 0.0


def test_rhmc_two_by_two_block_closes():
    for m_target, gamma in ((1.0, 0.7), (4.0, 1.3)):
        gen = assemble_generator_1d("rhmc", m_target, gamma, 6)
        sm = math.sqrt(m_target)
        ex = x_mode(6)
        ev = np.zeros((6, 6))
        ev[0, 1] = 1.0
        out = gen.apply(ex)
        assert np.abs(out - sm * ev).max() < 1e-14
        out = gen.apply(ev)
        assert np.abs(out - (-sm * ex - gamma * ev)).max() < 1e-14


def test_rhmc_transport_antisymmetric():
    gen = assemble_generator_1d("rhmc", 1.7, 0.0, 12)
    a = gen.matrix()
    assert np.abs(a + a.T).max() < 1e-12


def test_generator_kills_constants_and_preserves_mean():
    rng = np.random.default_rng(61)
    for process in ("rhmc", "zz", "bps"):
        gen = assemble_generator_1d(process, 2.0, 0.8, 10)
        const = np.zeros((10, 10))
        const[0, 0] = 1.0
        assert np.all(gen.apply(const) == 0.0)
        c = rng.standard_normal((10, 10))
        assert abs(gen.apply(c)[0, 0]) < 1e-12 * np.linalg.norm(c)


def test_bounce_silent_on_even_velocity_degrees():
    rng = np.random.default_rng(62)
    gen = assemble_generator_1d("zz", 1.0, 0.0, 12)
    c = rng.standard_normal((12, 12))
    c[:, 1::2] = 0.0  # kill odd velocity degrees
    transport_only = math.sqrt(1.0) * (gen.der @ c @ gen.pos)
    assert np.abs(gen.apply(c) - transport_only).max() < 1e-13


def test_refresh_only_mode_is_diagonal():
    gen = assemble_generator_1d("bps", 1.0, 2.0, 4, include_transport=False)
    a = gen.matrix()
    expect = np.zeros((16, 16))
    for i in range(4):
        for p in range(1, 4):
            expect[i * 4 + p, i * 4 + p] = -2.0
    assert np.array_equal(a, expect)
    assert spectral_radius_estimate(gen) == pytest.approx(2.0, rel=1e-6)


def test_matrix_agrees_with_apply():
    rng = np.random.default_rng(63)
    for process in ("rhmc", "zz"):
        gen = assemble_generator_1d(process, 1.0, 1.0, 5)
        a = gen.matrix()
        c = rng.standard_normal((5, 5))
        assert np.allclose(a @ c.ravel(), gen.apply(c).ravel(), atol=1e-13)


def test_transport_conserves_norm_without_refresh():
    gen = assemble_generator_1d("rhmc", 1.0, 0.0, 16)
    dt = suggested_dt(gen)
    trace = propagate(gen, x_mode(16), 10.0, dt)
    assert np.abs(trace.norms - trace.norms[0]).max() < 1e-9
    assert trace.max_energy_gap < 1e-12
    nu, _ = decay_rate_spectral(gen, x_mode(16), 10.0, dt)
    assert abs(nu) < 1e-6


def test_zz_norm_monotone_with_nonpositive_slack():
    gen = assemble_generator_1d("zz", 1.0, 1.0, 24)
    trace = propagate(gen, x_mode(24), 20.0, suggested_dt(gen))
    assert trace.max_step_increase <= 1e-12
    assert trace.max_energy_slack <= 1e-12
    assert trace.norms[-1] < 2e-3 * trace.norms[0]


def test_rhmc_energy_identity_is_equality():
    gen = assemble_generator_1d("rhmc", 1.0, 1.0, 16)
    trace = propagate(gen, x_mode(16), 20.0, suggested_dt(gen))
    assert trace.max_energy_gap < 1e-12


def test_rhmc_rate_anchor_small_truncation():
    gen = assemble_generator_1d("rhmc", 1.0, 1.0, 8)
    nu, curve = decay_rate_spectral(gen, x_mode(8), 40.0, suggested_dt(gen))
    assert nu == pytest.approx(0.5, abs=1e-3)
    assert curve.shape[1] == 2
    assert curve[0, 1] == pytest.approx(1.0)


def test_assemble_and_propagate_validation():
    with pytest.raises(ValueError):
        assemble_generator_1d("walk", 1.0, 1.0)
    with pytest.raises(ValueError):
        assemble_generator_1d("zz", 0.0, 1.0)
    with pytest.raises(ValueError):
        assemble_generator_1d("zz", 1.0, -1.0)
    with pytest.raises(ValueError):
        assemble_generator_1d("zz", 1.0, 1.0, n_trunc=1)
    gen = assemble_generator_1d("zz", 1.0, 1.0, 8)
    with pytest.raises(ValueError):
        propagate(gen, np.zeros((8, 8)), 1.0, 1e-3)
    with pytest.raises(ValueError):
        propagate(gen, np.zeros((4, 4)), 1.0, 1e-3)
    bad_mean = x_mode(8)
    bad_mean[0, 0] = 1.0
    with pytest.raises(ValueError):
        propagate(gen, bad_mean, 1.0, 1e-3)
    with pytest.raises(ValueError):
        propagate(gen, x_mode(8), 1.0, 10.0 * suggested_dt(gen))
