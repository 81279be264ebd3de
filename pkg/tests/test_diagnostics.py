"""Path functionals: interpolation, quadrature, decay fits, moment checks."""

import math

import numpy as np
import pytest

from pdmp.diagnostics import (
    InsufficientSignalError,
    Observable,
    ObservableCurve,
    chain_values,
    coordinate_observable,
    curve_from_sums,
    curve_from_values,
    default_window,
    ensemble_mean_curve,
    envelope_curve,
    envelope_from_maxima,
    fit_decay_rate,
    interval_time_average,
    moment_check,
    parse_observable,
    position_at,
    positions_at,
    segment_time_average,
)
from pdmp.potentials import isotropic_gaussian
from pdmp.samplers import PhaseState, Trajectory, simulate
from pdmp.seeding import chain_rng


def _linear_traj(times, xs, vs, total_time=None):
    times = np.asarray(times, dtype=float)
    xs = np.asarray(xs, dtype=float)
    vs = np.asarray(vs, dtype=float)
    return Trajectory(process="zz", d=xs.shape[1],
                      total_time=float(times[-1] if total_time is None
                                       else total_time),
                      flow="linear", times=times, xs=xs, vs=vs,
                      events=[], event_counts={})


def test_parse_observable():
    x, v = np.array([[1.0, 2.0]]), np.array([[3.0, 4.0]])
    assert parse_observable("x1").fn(x, v)[0] == 1.0
    assert parse_observable("v2").fn(x, v)[0] == 4.0
    sq = parse_observable("x2^2")
    assert sq.fn(x, v)[0] == 4.0
    assert sq.degree == 2
    assert sq.name == "x2^2"
    assert parse_observable("x1").degree == 1
    for bad in ("y1", "x", "x0", "xx", "x1^3", "2x"):
        with pytest.raises(ValueError):
            parse_observable(bad)
    with pytest.raises(ValueError):
        coordinate_observable("z", 0)


def test_position_at_linear_interpolation():
    traj = _linear_traj([0.0, 1.0, 2.0], [[0.0], [1.0], [0.0]],
                        [[1.0], [-1.0], [-1.0]])
    x, v = position_at(traj, 0.5)
    assert x[0] == pytest.approx(0.5)
    assert v[0] == pytest.approx(1.0)
    x, v = position_at(traj, 1.0)
    assert x[0] == 1.0 and v[0] == -1.0  # anchor states are exact
    x, v = position_at(traj, 1.75)
    assert x[0] == pytest.approx(0.25)
    with pytest.raises(ValueError):
        position_at(traj, 2.5)
    with pytest.raises(ValueError):
        position_at(traj, -0.1)


def test_positions_at_vectorized():
    traj = _linear_traj([0.0, 1.0, 2.0], [[0.0], [1.0], [0.0]],
                        [[1.0], [-1.0], [-1.0]])
    ts = np.array([0.0, 0.25, 1.5, 2.0])
    x, v = positions_at(traj, ts)
    assert np.allclose(x[:, 0], [0.0, 0.25, 0.5, 0.0])
    assert np.allclose(v[:, 0], [1.0, 1.0, -1.0, -1.0])


def test_quadrature_exact_through_degree_five():
    ramp = _linear_traj([0.0, 2.0], [[0.0], [2.0]], [[1.0], [1.0]])
    quintic = Observable(lambda x, v: x[..., 0] ** 5, 5, "x^5")
    avg = segment_time_average(ramp, quintic)
    assert avg == pytest.approx(16.0 / 3.0, rel=1e-12)
    cubic = Observable(lambda x, v: x[..., 0] ** 3, 3, "x^3")
    assert interval_time_average(ramp, cubic, 0.5, 1.5) \
        == pytest.approx((1.5**4 - 0.5**4) / 4.0, rel=1e-12)
    sextic = Observable(lambda x, v: x[..., 0] ** 6, 6, "x^6")
    with pytest.raises(ValueError):
        segment_time_average(ramp, sextic)
    with pytest.raises(ValueError):
        interval_time_average(ramp, quintic, 1.5, 0.5)


def test_zz_time_average_matches_segment_sum():
    pot = isotropic_gaussian(1.0, 1)
    traj = simulate("zz", pot, 1.0, 25.0, np.array([1.3]), chain_rng(131, 0))
    sq = parse_observable("x1^2")
    avg = segment_time_average(traj, sq)
    # independent closed form, one straight segment at a time
    acc = 0.0
    for i in range(len(traj.times) - 1):
        dt = traj.times[i + 1] - traj.times[i]
        x0 = traj.xs[i, 0]
        v0 = traj.vs[i, 0]
        acc += x0 * x0 * dt + x0 * v0 * dt * dt + v0 * v0 * dt**3 / 3.0
    assert avg == pytest.approx(acc / traj.total_time, rel=1e-12)


def test_moment_check_names_and_sanity():
    pot = isotropic_gaussian(1.0, 1)
    traj = simulate("zz", pot, 1.0, 2000.0, np.array([0.5]), chain_rng(141, 0))
    zs = moment_check(traj, pot)
    assert set(zs) == {"x1", "x1x1", "v1v1", "x1v1"}
    assert max(abs(z) for z in zs.values()) < 5.0

    pot2 = isotropic_gaussian(1.0, 2)
    traj2 = simulate("bps", pot2, 1.0, 50.0, np.zeros(2), chain_rng(141, 1))
    zs2 = moment_check(traj2, pot2, n_batches=10)
    assert len(zs2) == 12


def test_fit_decay_rate_exact_exponential():
    grid = np.linspace(0.0, 3.0, 31)
    curve = ObservableCurve(grid=grid, mean=np.exp(-2.0 * grid),
                            stderr=np.zeros_like(grid), n_chains=100)
    fit = fit_decay_rate(curve, 0.0, (0.0, 3.0))
    assert fit.nu_hat == pytest.approx(2.0, rel=1e-10)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.points_used == 31

    flat = ObservableCurve(grid=grid, mean=np.full_like(grid, 0.5),
                           stderr=np.zeros_like(grid), n_chains=100)
    fit = fit_decay_rate(flat, 0.0, (0.0, 3.0))
    assert abs(fit.nu_hat) < 1e-12


def test_fit_decay_rate_noisy():
    rng = np.random.default_rng(7)
    grid = np.linspace(0.0, 5.0, 50)
    sigma = 1e-3
    mean = 0.5 * np.exp(-grid) + rng.normal(0.0, sigma, grid.shape)
    curve = ObservableCurve(grid=grid, mean=mean,
                            stderr=np.full_like(grid, sigma), n_chains=400)
    fit = fit_decay_rate(curve, 0.0, (0.0, 5.0))
    assert abs(fit.nu_hat - 1.0) < 0.03
    assert abs(fit.nu_hat - 1.0) < 3.0 * fit.stderr
    assert fit.r_squared > 0.99


def test_fit_decay_rate_insufficient_points():
    grid = np.linspace(0.0, 3.0, 31)
    curve = ObservableCurve(grid=grid, mean=np.exp(-grid),
                            stderr=np.zeros_like(grid), n_chains=10)
    with pytest.raises(InsufficientSignalError):
        fit_decay_rate(curve, 0.0, (0.0, 0.15))
    # every residual drowned by the explicit floor
    with pytest.raises(InsufficientSignalError):
        fit_decay_rate(curve, 0.0, (0.0, 3.0), noise_floor=10.0)
    with pytest.raises(ValueError):
        fit_decay_rate(curve, 0.0, (2.0, 1.0))


def test_default_window():
    grid = np.linspace(0.0, 10.0, 101)
    stderr = np.full_like(grid, math.exp(-6.0) / 3.0)
    curve = ObservableCurve(grid=grid, mean=np.exp(-grid), stderr=stderr,
                            n_chains=50)
    t1, t2 = default_window(curve, 0.0, 0.5)
    assert t1 == pytest.approx(2.0)
    assert 5.9 < t2 < 6.3
    t1, _ = default_window(curve, 0.0, None)
    assert t1 == 0.0
    with pytest.raises(InsufficientSignalError):
        default_window(curve, 0.0, 0.05)


def test_envelope_curve_recovers_rotation_envelope():
    grid = np.linspace(0.0, 7.0, 71)
    amp = np.exp(-0.5 * grid)
    cx = ObservableCurve(grid=grid, mean=amp * np.cos(3.0 * grid),
                         stderr=np.zeros_like(grid), n_chains=100)
    cv = ObservableCurve(grid=grid, mean=-amp * np.sin(3.0 * grid),
                         stderr=np.zeros_like(grid), n_chains=100)
    env = envelope_curve(cx, cv)
    assert np.allclose(env.mean, amp, rtol=1e-12)
    fit = fit_decay_rate(env, 0.0, (0.0, 7.0))
    assert fit.nu_hat == pytest.approx(0.5, rel=1e-10)

    # unstandardized position wobbles; scale_x restores the circle
    cx2 = ObservableCurve(grid=grid, mean=0.5 * amp * np.cos(3.0 * grid),
                          stderr=np.zeros_like(grid), n_chains=100)
    env2 = envelope_curve(cx2, cv, scale_x=2.0)
    assert np.allclose(env2.mean, amp, rtol=1e-12)

    # equal component stderrs pass through the delta method unchanged
    s = 0.01
    cx3 = ObservableCurve(grid=grid, mean=cx.mean,
                          stderr=np.full_like(grid, s), n_chains=100)
    cv3 = ObservableCurve(grid=grid, mean=cv.mean,
                          stderr=np.full_like(grid, s), n_chains=100)
    env3 = envelope_curve(cx3, cv3)
    assert np.allclose(env3.stderr, s, rtol=1e-12)


def test_envelope_from_maxima_picks_peaks():
    grid = np.linspace(0.0, 10.0, 101)
    curve = ObservableCurve(grid=grid, mean=np.cos(grid),
                            stderr=np.zeros_like(grid), n_chains=10)
    peaks = envelope_from_maxima(curve, 0.0)
    assert len(peaks.grid) == 3
    assert np.allclose(peaks.grid, [math.pi, 2 * math.pi, 3 * math.pi],
                       atol=0.06)
    assert np.allclose(np.abs(peaks.mean), 1.0, atol=0.01)
    with pytest.raises(ValueError):
        envelope_from_maxima(ObservableCurve(grid=grid[:2], mean=grid[:2],
                                             stderr=grid[:2], n_chains=1), 0.0)


def test_curve_constructors_agree():
    pot = isotropic_gaussian(1.0, 2)
    grid = np.linspace(0.0, 5.0, 11)
    obs = parse_observable("x1")
    trajs = [simulate("zz", pot, 1.0, 5.0, np.array([1.0, -0.5]),
                      chain_rng(151, i)) for i in range(5)]
    values = np.stack([chain_values(t, obs, grid) for t in trajs])
    a = ensemble_mean_curve(trajs, obs, grid)
    b = curve_from_values(grid, values)
    c = curve_from_sums(grid, values.sum(axis=0), (values**2).sum(axis=0),
                        len(trajs))
    for other in (b, c):
        assert np.allclose(a.mean, other.mean, atol=1e-12)
        assert np.allclose(a.stderr, other.stderr, atol=1e-12)
        assert other.n_chains == 5
    with pytest.raises(ValueError):
        ensemble_mean_curve([], obs, grid)


def test_ensemble_mean_matches_closed_form():
    # mean position of the refreshed oscillator solves a damped rotation;
    # from rest at x0 = 2 the curve is known in closed form
    pot = isotropic_gaussian(1.0, 1)
    omega = math.sqrt(3.0) / 2.0
    grid = np.linspace(0.0, 6.0, 13)
    start = PhaseState(t=0.0, x=np.array([2.0]), v=np.array([0.0]))
    trajs = (simulate("rhmc", pot, 1.0, 6.0, start, chain_rng(505, i))
             for i in range(3000))
    curve = ensemble_mean_curve(trajs, parse_observable("x1"), grid)
    truth = 2.0 * np.exp(-0.5 * grid) * (np.cos(omega * grid)
                                         + np.sin(omega * grid) / (2 * omega))
    z = (curve.mean - truth) / np.where(curve.stderr > 0, curve.stderr, 1.0)
    assert np.abs(z).max() < 3.0
