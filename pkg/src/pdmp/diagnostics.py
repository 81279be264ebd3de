"""Trajectory functionals: interpolation, time averages, and rate fits.

Everything operates on the exact continuous-time path that a Trajectory
encodes, not on discretized snapshots.  Time integrals use three-point
Gauss-Legendre quadrature per (piece of a) segment, which is exact for
polynomial observables up to degree five along straight-line flow; eigenmode
segments are subdivided finely first, leapfrog segments interpolate linearly
between substeps and are documented as approximate.
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .samplers import HAMILTONIAN, LEAPFROG, LINEAR, Trajectory

# Gauss-Legendre nodes/weights on [0, 1], exact through degree 5
_GL_NODES = np.array([0.5 - 0.5 * math.sqrt(0.6), 0.5, 0.5 + 0.5 * math.sqrt(0.6)])
_GL_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0

_MAX_DEGREE = 5
_HAMILTONIAN_QUAD_DT = 0.1


class InsufficientSignalError(Exception):
    """Too few usable points above the noise floor to fit a rate."""


@dataclass
class Observable:
    """Scalar phase-space function with a declared polynomial degree.

    fn must accept arrays shaped (..., d) for both position and velocity and
    return shape (...); degree bounds its total polynomial degree, which the
    quadrature uses to guarantee exactness on straight-line flow.
    """

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    degree: int
    name: str = ""


def coordinate_observable(kind: str, index: int) -> Observable:
    """Observable reading off one coordinate of x or v, optionally squared."""
    if kind == "x":
        return Observable(lambda x, v: x[..., index], 1, f"x{index + 1}")
    if kind == "v":
        return Observable(lambda x, v: v[..., index], 1, f"v{index + 1}")
    raise ValueError("kind must be 'x' or 'v'")


def parse_observable(name: str) -> Observable:
    """Parse 'x1', 'v2', 'x1^2', ... (indices are 1-based in names)."""
    base = name
    squared = False
    if name.endswith("^2"):
        base, squared = name[:-2], True
    if len(base) < 2 or base[0] not in "xv" or not base[1:].isdigit():
        raise ValueError(f"cannot parse observable {name!r}")
    kind, index = base[0], int(base[1:]) - 1
    if index < 0:
        raise ValueError(f"cannot parse observable {name!r}")
    if not squared:
        return coordinate_observable(kind, index)
    if kind == "x":
        return Observable(lambda x, v: x[..., index] ** 2, 2, name)
    return Observable(lambda x, v: v[..., index] ** 2, 2, name)


def _eval_flow(traj: Trajectory, idx: np.ndarray, dts: np.ndarray):
    """States at offsets `dts` into the segments starting at anchors `idx`."""
    x0 = traj.xs[idx]
    v0 = traj.vs[idx]
    if traj.flow == LINEAR:
        return x0 + dts[:, None] * v0, np.broadcast_to(v0, x0.shape).copy()
    if traj.flow == LEAPFROG:
        seg_len = traj.times[idx + 1] - traj.times[idx]
        frac = np.where(seg_len > 0, dts / np.where(seg_len > 0, seg_len, 1.0), 0.0)
        x1 = traj.xs[idx + 1]
        v1 = traj.vs[idx + 1]
        return x0 + frac[:, None] * (x1 - x0), v0 + frac[:, None] * (v1 - v0)
    q, omega = traj.modes
    y0 = x0 @ q
    w0 = v0 @ q
    phase = dts[:, None] * omega[None, :]
    cos, sin = np.cos(phase), np.sin(phase)
    x = (cos * y0 + (sin / omega) * w0) @ q.T
    v = (-omega * sin * y0 + cos * w0) @ q.T
    exact = dts == 0.0
    if exact.any():
        x[exact] = x0[exact]
        v[exact] = v0[exact]
    return x, v


def positions_at(traj: Trajectory, ts: np.ndarray):
    """Exact states (X, V) at an array of query times in [0, total_time]."""
    ts = np.asarray(ts, dtype=float)
    if ts.size and (ts.min() < 0.0 or ts.max() > traj.total_time):
        raise ValueError("query time outside [0, total_time]")
    idx = np.searchsorted(traj.times, ts, side="right") - 1
    idx = np.clip(idx, 0, len(traj.times) - 2)
    return _eval_flow(traj, idx, ts - traj.times[idx])


def position_at(traj: Trajectory, t: float):
    """State (x, v) at a single query time."""
    x, v = positions_at(traj, np.array([t]))
    return x[0], v[0]


def _quad_pieces(traj: Trajectory, t0: float, t1: float):
    """Quadrature intervals covering [t0, t1]: (anchor idx, starts, lengths)."""
    lo = np.searchsorted(traj.times, t0, side="right") - 1
    hi = np.searchsorted(traj.times, t1, side="left")
    lo = max(lo, 0)
    hi = min(hi, len(traj.times) - 1)
    idx = np.arange(lo, hi)
    starts = np.maximum(traj.times[idx], t0)
    ends = np.minimum(traj.times[idx + 1], t1)
    keep = ends > starts
    idx, starts, ends = idx[keep], starts[keep], ends[keep]
    if traj.flow == HAMILTONIAN and idx.size:
        nsub = np.maximum(1, np.ceil((ends - starts) / _HAMILTONIAN_QUAD_DT)
                          .astype(int))
        idx = np.repeat(idx, nsub)
        piece = np.concatenate([np.arange(n) for n in nsub])
        lens = np.repeat((ends - starts) / nsub, nsub)
        starts = np.repeat(starts, nsub) + piece * lens
        return idx, starts, lens
    return idx, starts, ends - starts


def interval_time_average(traj: Trajectory, observables, t0: float, t1: float):
    """Time averages of observables over [t0, t1] (scalar per observable)."""
    single = isinstance(observables, Observable)
    obs_list = [observables] if single else list(observables)
    for obs in obs_list:
        if obs.degree > _MAX_DEGREE:
            raise ValueError(
                f"observable degree {obs.degree} exceeds quadrature order")
    if not 0.0 <= t0 < t1 <= traj.total_time + 1e-12:
        raise ValueError("need 0 <= t0 < t1 <= total_time")
    idx, starts, lens = _quad_pieces(traj, t0, min(t1, traj.total_time))
    t_nodes = starts[:, None] + lens[:, None] * _GL_NODES[None, :]
    flat_idx = np.repeat(idx, len(_GL_NODES))
    x, v = _eval_flow(traj, flat_idx, t_nodes.ravel() - traj.times[flat_idx])
    out = []
    for obs in obs_list:
        vals = np.asarray(obs.fn(x, v), dtype=float).reshape(t_nodes.shape)
        out.append(float((vals @ _GL_WEIGHTS) @ lens / (t1 - t0)))
    return out[0] if single else np.array(out)


def segment_time_average(traj: Trajectory, observable: Observable) -> float:
    """Time average of one observable over the whole trajectory."""
    return interval_time_average(traj, observable, 0.0, traj.total_time)


@dataclass
class ObservableCurve:
    """Ensemble mean of an observable on a time grid, with pointwise stderr."""

    grid: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_chains: int


def ensemble_mean_curve(trajs, observable: Observable,
                        grid: np.ndarray) -> ObservableCurve:
    """Cross-chain mean curve of an observable over a trajectory ensemble."""
    grid = np.asarray(grid, dtype=float)
    total = np.zeros_like(grid)
    total_sq = np.zeros_like(grid)
    n = 0
    for traj in trajs:
        x, v = positions_at(traj, grid)
        vals = np.asarray(observable.fn(x, v), dtype=float)
        total += vals
        total_sq += vals * vals
        n += 1
    if n == 0:
        raise ValueError("need at least one trajectory")
    mean = total / n
    if n > 1:
        var = np.maximum(0.0, (total_sq - n * mean * mean) / (n - 1))
        stderr = np.sqrt(var / n)
    else:
        stderr = np.zeros_like(mean)
    return ObservableCurve(grid=grid, mean=mean, stderr=stderr, n_chains=n)


def curve_from_values(grid, values: np.ndarray) -> ObservableCurve:
    """Curve from per-chain observable values, shaped (n_chains, len(grid))."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    mean = values.mean(axis=0)
    stderr = values.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 \
        else np.zeros_like(mean)
    return ObservableCurve(grid=np.asarray(grid, dtype=float), mean=mean,
                           stderr=stderr, n_chains=n)


def chain_values(traj: Trajectory, observable: Observable,
                 grid: np.ndarray) -> np.ndarray:
    """One chain's observable values on a time grid."""
    x, v = positions_at(traj, np.asarray(grid, dtype=float))
    return np.asarray(observable.fn(x, v), dtype=float)


def curve_from_sums(grid, total: np.ndarray, total_sq: np.ndarray,
                    n: int) -> ObservableCurve:
    """Curve from accumulated per-point sums and sums of squares.

    Lets ensembles be reduced chunk by chunk (workers return partial sums)
    while producing the same curve as a single pass in chain order.
    """
    grid = np.asarray(grid, dtype=float)
    mean = total / n
    if n > 1:
        var = np.maximum(0.0, (total_sq - n * mean * mean) / (n - 1))
        stderr = np.sqrt(var / n)
    else:
        stderr = np.zeros_like(mean)
    return ObservableCurve(grid=grid, mean=mean, stderr=stderr, n_chains=n)


@dataclass
class DecayFit:
    """Result of a log-linear decay fit."""

    nu_hat: float
    stderr: float
    window: tuple[float, float]
    points_used: int
    r_squared: float


def default_window(curve: ObservableCurve, target: float,
                   nu_theory: float | None) -> tuple[float, float]:
    """Default fit window: skip a transient of 1/nu_theory, stop at the
    first dip below three standard errors."""
    t1 = 0.0 if not nu_theory else 1.0 / nu_theory
    if t1 >= curve.grid[-1]:
        raise InsufficientSignalError(
            f"grid ends at {curve.grid[-1]:g}, inside the transient "
            f"window of {t1:g}")
    resid = np.abs(curve.mean - target)
    t2 = curve.grid[-1]
    after = curve.grid > t1
    dips = after & (resid < 3.0 * curve.stderr)
    if dips.any():
        t2 = float(curve.grid[np.argmax(dips)])
    if t2 <= t1:
        t2 = float(curve.grid[-1])
    return float(t1), float(t2)


def fit_decay_rate(curve: ObservableCurve, target: float,
                   window: tuple[float, float],
                   noise_floor: float = 0.0) -> DecayFit:
    """Least-squares slope of log |mean - target| over a time window.

    Points are used only when their residual exceeds both the explicit noise
    floor and three times their standard error; fewer than three usable
    points raises InsufficientSignalError.
    """
    t1, t2 = window
    if not t1 < t2:
        raise ValueError("window must satisfy t1 < t2")
    resid = np.abs(curve.mean - target)
    ok = (curve.grid >= t1) & (curve.grid <= t2) \
        & (resid > np.maximum(noise_floor, 3.0 * curve.stderr)) \
        & (resid > 0.0)
    if ok.sum() < 3:
        raise InsufficientSignalError(
            f"only {int(ok.sum())} usable points in window [{t1:g}, {t2:g}]")
    t = curve.grid[ok]
    y = np.log(resid[ok])
    n = len(t)
    t_bar = t.mean()
    y_bar = y.mean()
    sxx = float(((t - t_bar) ** 2).sum())
    slope = float(((t - t_bar) * (y - y_bar)).sum()) / sxx
    fitted = y_bar + slope * (t - t_bar)
    rss = float(((y - fitted) ** 2).sum())
    tss = float(((y - y_bar) ** 2).sum())
    se = math.sqrt(rss / (n - 2) / sxx) if n > 2 else math.inf
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    return DecayFit(nu_hat=-slope, stderr=se, window=(t1, t2),
                    points_used=n, r_squared=r2)


def envelope_curve(curve_x: ObservableCurve, curve_v: ObservableCurve,
                   target_x: float = 0.0, target_v: float = 0.0,
                   scale_x: float = 1.0) -> ObservableCurve:
    """Magnitude of the residual pair (scale_x*(mean_x - tx), mean_v - tv).

    For dynamics whose mean relaxes through a rotating pair, the component
    means oscillate through zero while this magnitude tracks the envelope.
    scale_x puts position in standardized units (sqrt of the curvature) so
    the rotating pair traces a near-circle; otherwise the magnitude wobbles
    at twice the rotation frequency and biases the fitted slope.  Standard
    errors combine by the delta method.
    """
    rx = scale_x * (curve_x.mean - target_x)
    rv = curve_v.mean - target_v
    sx = scale_x * curve_x.stderr
    mag = np.hypot(rx, rv)
    safe = np.where(mag > 0, mag, 1.0)
    stderr = np.where(
        mag > 0,
        np.sqrt((rx * sx) ** 2 + (rv * curve_v.stderr) ** 2) / safe,
        np.hypot(sx, curve_v.stderr),
    )
    return ObservableCurve(grid=curve_x.grid, mean=mag, stderr=stderr,
                           n_chains=min(curve_x.n_chains, curve_v.n_chains))


def envelope_from_maxima(curve: ObservableCurve,
                         target: float) -> ObservableCurve:
    """Sub-curve of local maxima of |mean - target| (oscillation peaks)."""
    resid = np.abs(curve.mean - target)
    if len(resid) < 3:
        raise ValueError("curve too short")
    peak = np.zeros(len(resid), dtype=bool)
    peak[1:-1] = (resid[1:-1] >= resid[:-2]) & (resid[1:-1] >= resid[2:])
    return ObservableCurve(grid=curve.grid[peak], mean=curve.mean[peak],
                           stderr=curve.stderr[peak], n_chains=curve.n_chains)


def _moment_observables(d: int, inv_a: np.ndarray):
    """Moment observables and their stationary truths for a quadratic target."""
    out = []
    for i in range(d):
        out.append((Observable(
            (lambda i: lambda x, v: x[..., i])(i), 1, f"x{i + 1}"), 0.0))
    for i in range(d):
        for j in range(i, d):
            out.append((Observable(
                (lambda i, j: lambda x, v: x[..., i] * x[..., j])(i, j),
                2, f"x{i + 1}x{j + 1}"), float(inv_a[i, j])))
    for i in range(d):
        for j in range(i, d):
            out.append((Observable(
                (lambda i, j: lambda x, v: v[..., i] * v[..., j])(i, j),
                2, f"v{i + 1}v{j + 1}"), 1.0 if i == j else 0.0))
    for i in range(d):
        for j in range(d):
            out.append((Observable(
                (lambda i, j: lambda x, v: x[..., i] * v[..., j])(i, j),
                2, f"x{i + 1}v{j + 1}"), 0.0))
    return out


def moment_check(traj: Trajectory, potential, n_batches: int = 30):
    """Batch-means z-scores of stationary moments along one trajectory.

    Tests first and second moments of position and velocity (and their
    cross products) against the exact values for the quadratic target:
    mean 0, position covariance inv(A), velocity covariance identity,
    zero position-velocity correlation.  Returns {moment name: z}.
    """
    inv_a = potential.eigvecs @ np.diag(1.0 / potential.eigvals) \
        @ potential.eigvecs.T
    pairs = _moment_observables(traj.d, inv_a)
    obs_list = [obs for obs, _ in pairs]
    bounds = np.linspace(0.0, traj.total_time, n_batches + 1)
    batch_means = np.empty((n_batches, len(obs_list)))
    for b in range(n_batches):
        batch_means[b] = interval_time_average(
            traj, obs_list, bounds[b], bounds[b + 1])
    est = batch_means.mean(axis=0)
    se = batch_means.std(axis=0, ddof=1) / math.sqrt(n_batches)
    zs = {}
    for k, (obs, truth) in enumerate(pairs):
        zs[obs.name] = float((est[k] - truth) / se[k]) if se[k] > 0 else math.inf
    return zs
