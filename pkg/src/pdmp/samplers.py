"""Event-driven simulation of three velocity-jump samplers.

All three processes share the invariant law exp(-U(x)) times a standard
Gaussian in velocity, and differ only in how velocities change:

  rhmc   Hamiltonian flow between complete velocity refreshments.
  zz     straight-line flow; coordinate k flips sign at rate (v_k dU/dx_k)_+,
         plus refreshments.
  bps    straight-line flow; velocity reflects across the gradient at rate
         (v . grad U)_+, plus refreshments.

Events are simulated exactly: affine channel rates invert in closed form,
anything else is thinned against re-anchored affine envelopes.  Between
events the flow is closed-form (straight lines, or eigenmode rotation for
quadratic potentials); only non-quadratic Hamiltonian flow needs a numerical
integrator.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .events import first_arrival_affine, first_arrival_thinning
from .potentials import Potential, QuadraticPotential

PROCESSES = ("rhmc", "zz", "bps")

REFRESH = "refresh"
BOUNCE = "bounce"
SEGMENT = "segment"

# flow kinds attached to trajectories
LINEAR = "linear"
HAMILTONIAN = "hamiltonian"
LEAPFROG = "leapfrog"


@dataclass
class PhaseState:
    """Position/velocity pair at an absolute time."""

    t: float
    x: np.ndarray
    v: np.ndarray


@dataclass
class EventRecord:
    """One event: what happened to the velocity, and when.

    kind is "refresh", "bounce", or "segment" (a thinning-horizon expiry that
    re-anchors envelopes without touching the state).  channel is the bounced
    coordinate for per-coordinate dynamics, None otherwise.
    """

    time: float
    kind: str
    channel: int | None
    v_before: np.ndarray
    v_after: np.ndarray


@dataclass
class Trajectory:
    """Piecewise-deterministic path stored as anchors plus flow metadata.

    Anchor i holds the state (times[i], xs[i], vs[i]) immediately after the
    i-th velocity change; the final anchor sits exactly at total_time.  The
    flow between consecutive anchors is closed-form and identified by `flow`
    (for "hamiltonian", `modes` carries the eigenbasis; for "leapfrog" every
    integrator substep is its own anchor).  This is enough to reconstruct the
    continuous path exactly, which the diagnostics rely on.
    """

    process: str
    d: int
    total_time: float
    flow: str
    times: np.ndarray
    xs: np.ndarray
    vs: np.ndarray
    events: list[EventRecord]
    event_counts: dict[str, int]
    modes: tuple[np.ndarray, np.ndarray] | None = None  # (eigvecs, omega)
    leapfrog_step: float | None = None


def reflect(v: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Reflect v across the hyperplane orthogonal to `direction`.

    Preserves |v|; applying it twice gives v back.  A zero direction means
    no distinguished hyperplane, and v is returned unchanged.
    """
    norm2 = float(direction @ direction)
    if norm2 == 0.0:
        return v.copy()
    return v - (2.0 * float(v @ direction) / norm2) * direction


def refresh_velocity(d: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a fresh standard Gaussian velocity."""
    return rng.standard_normal(d)


def stationary_state(potential: QuadraticPotential,
                     rng: np.random.Generator) -> PhaseState:
    """Exact draw from the invariant law of a quadratic target."""
    if not isinstance(potential, QuadraticPotential):
        raise TypeError("stationary sampling is exact only for quadratic targets")
    z = rng.standard_normal(potential.d)
    x = potential.eigvecs @ (z / np.sqrt(potential.eigvals))
    v = rng.standard_normal(potential.d)
    return PhaseState(t=0.0, x=x, v=v)


def _hamiltonian_map(potential: QuadraticPotential, x, v, dt):
    """Exact Hamiltonian flow of a quadratic potential, via eigenmodes."""
    q = potential.eigvecs
    omega = np.sqrt(potential.eigvals)
    y = q.T @ x
    w = q.T @ v
    cos = np.cos(omega * dt)
    sin = np.sin(omega * dt)
    y_new = cos * y + (sin / omega) * w
    w_new = -omega * sin * y + cos * w
    return q @ y_new, q @ w_new


def _leapfrog_path(potential, x, v, dt, h):
    """Velocity-Verlet steps covering [0, dt]; returns substep list.

    Uses full steps of size h and one final partial step landing exactly on
    dt (the last full step is stretched instead when the remainder would be
    negligible).  Each entry is (offset, x, v).
    """
    offsets = np.arange(1, int(dt / h) + 1) * h
    if offsets.size == 0 or offsets[-1] < dt - 1e-12 * max(h, dt):
        offsets = np.append(offsets, dt)
    else:
        offsets[-1] = dt
    steps = []
    g = potential.grad(x)
    prev = 0.0
    for off in offsets:
        step = off - prev
        v_half = v - 0.5 * step * g
        x = x + step * v_half
        g = potential.grad(x)
        v = v_half - 0.5 * step * g
        steps.append((off, x, v))
        prev = off
    return steps


def _bounce_velocity(process, potential, x, v, channel):
    if process == "zz":
        v_new = v.copy()
        v_new[channel] = -v_new[channel]
        return v_new
    return reflect(v, potential.grad(x))


def _linear_next_event(process, potential, x, v, gamma, rng, thin_horizon):
    """Winner of the clock competition for straight-line dynamics.

    Returns (dt, kind, channel); dt may be inf when no clock will ever ring.
    All candidate clocks are sampled fresh from the current anchor, channels
    in a fixed order, so runs are reproducible draw by draw.
    """
    best_dt = math.inf
    best_kind = None
    best_channel = None
    if gamma > 0.0:
        best_dt = rng.standard_exponential() / gamma
        best_kind = REFRESH
    channels = range(potential.d) if process == "zz" else (None,)
    has_thinned = False
    for ch in channels:
        coeffs = potential.affine_rate(x, v, ch)
        if coeffs is not None:
            dt = first_arrival_affine(coeffs[0], coeffs[1], rng.standard_exponential())
        else:
            has_thinned = True
            outcome = first_arrival_thinning(
                lambda s, ch=ch: max(0.0, potential.channel_slope_line(x, v, ch, s)),
                lambda s, ch=ch: potential.line_envelope(
                    x + s * v, v, ch, thin_horizon - s),
                thin_horizon,
                rng,
            )
            if outcome.exhausted_horizon:
                continue
            dt = outcome.time
        if dt < best_dt:
            best_dt, best_kind, best_channel = dt, BOUNCE, ch
    if has_thinned and best_dt >= thin_horizon:
        return thin_horizon, SEGMENT, None
    return best_dt, best_kind, best_channel


def zz_advance(state, potential, gamma, rng, thin_horizon=1.0):
    """Advance per-coordinate dynamics to its next event."""
    return _advance_linear("zz", state, potential, gamma, rng, thin_horizon)


def bps_advance(state, potential, gamma, rng, thin_horizon=1.0):
    """Advance reflective dynamics to its next event."""
    return _advance_linear("bps", state, potential, gamma, rng, thin_horizon)


def _advance_linear(process, state, potential, gamma, rng, thin_horizon):
    dt, kind, channel = _linear_next_event(
        process, potential, state.x, state.v, gamma, rng, thin_horizon)
    if not math.isfinite(dt):
        raise RuntimeError("no event will ever occur (silent clocks)")
    t = state.t + dt
    x = state.x + dt * state.v
    if kind == REFRESH:
        v = refresh_velocity(potential.d, rng)
    elif kind == BOUNCE:
        v = _bounce_velocity(process, potential, x, state.v, channel)
    else:
        v = state.v.copy()
    event = EventRecord(time=t, kind=kind, channel=channel,
                        v_before=state.v, v_after=v)
    return PhaseState(t=t, x=x, v=v), event


def rhmc_advance(state, potential, gamma, rng, flow_step=0.01):
    """Advance Hamiltonian dynamics to its next refreshment."""
    if gamma <= 0.0:
        raise ValueError("refreshment rate must be positive for rhmc")
    dt = rng.standard_exponential() / gamma
    if isinstance(potential, QuadraticPotential):
        x, v_flow = _hamiltonian_map(potential, state.x, state.v, dt)
    else:
        path = _leapfrog_path(potential, state.x, state.v, dt, flow_step)
        _, x, v_flow = path[-1] if path else (0.0, state.x, state.v)
    v = refresh_velocity(potential.d, rng)
    t = state.t + dt
    event = EventRecord(time=t, kind=REFRESH, channel=None,
                        v_before=v_flow, v_after=v)
    return PhaseState(t=t, x=x, v=v), event


def simulate(process, potential, gamma, total_time, init, rng,
             thin_horizon=1.0, flow_step=0.01,
             energy_drift_warn=0.1) -> Trajectory:
    """Run one chain for `total_time` and record its full trajectory.

    Parameters
    ----------
    process : "rhmc", "zz", or "bps"
    potential : Potential
    gamma : refreshment rate; must be positive for rhmc, may be 0 for the
        bounce-only variants of zz/bps.
    init : PhaseState, or a position array (velocity then drawn Gaussian).
    rng : numpy Generator driving every random draw of this chain.
    thin_horizon : envelope re-anchoring horizon for thinned channels.
    flow_step : leapfrog step for non-quadratic Hamiltonian flow.
    energy_drift_warn : warn when one leapfrog segment drifts in energy by
        more than this.

    The final anchor is truncated to land exactly at total_time.
    """
    if process not in PROCESSES:
        raise ValueError(f"unknown process {process!r}")
    if gamma < 0.0:
        raise ValueError("gamma must be nonnegative")
    if process == "rhmc" and gamma == 0.0:
        raise ValueError("rhmc requires a positive refreshment rate")
    if total_time <= 0.0:
        raise ValueError("total_time must be positive")

    if isinstance(init, PhaseState):
        x = np.array(init.x, dtype=float)
        v = np.array(init.v, dtype=float)
    else:
        x = np.array(init, dtype=float)
        v = refresh_velocity(potential.d, rng)
    if x.shape != (potential.d,):
        raise ValueError("init position has wrong dimension")

    quadratic = isinstance(potential, QuadraticPotential)
    if process == "rhmc":
        flow = HAMILTONIAN if quadratic else LEAPFROG
    else:
        flow = LINEAR
    modes = (potential.eigvecs, np.sqrt(potential.eigvals)) if quadratic else None

    times = [0.0]
    xs = [x]
    vs = [v]
    events: list[EventRecord] = []
    counts = {REFRESH: 0, BOUNCE: 0, SEGMENT: 0}
    t = 0.0

    while t < total_time:
        if process == "rhmc":
            dt = rng.standard_exponential() / gamma
            seg = min(dt, total_time - t)
            if quadratic:
                x_end, v_end = _hamiltonian_map(potential, x, v, seg)
            else:
                h0 = potential.value(x) + 0.5 * float(v @ v)
                path = _leapfrog_path(potential, x, v, seg, flow_step)
                for off, x_sub, v_sub in path[:-1]:
                    times.append(t + off)
                    xs.append(x_sub)
                    vs.append(v_sub)
                _, x_end, v_end = path[-1]
                h1 = potential.value(x_end) + 0.5 * float(v_end @ v_end)
                if abs(h1 - h0) > energy_drift_warn:
                    warnings.warn(
                        f"leapfrog energy drift {h1 - h0:.3g} over one segment",
                        RuntimeWarning)
            t += seg
            if dt > total_time - (t - seg):
                x, v = x_end, v_end
                break
            v_new = refresh_velocity(potential.d, rng)
            events.append(EventRecord(time=t, kind=REFRESH, channel=None,
                                      v_before=v_end, v_after=v_new))
            counts[REFRESH] += 1
            x, v = x_end, v_new
            times.append(t)
            xs.append(x)
            vs.append(v)
        else:
            dt, kind, channel = _linear_next_event(
                process, potential, x, v, gamma, rng, thin_horizon)
            if t + dt >= total_time:
                x = x + (total_time - t) * v
                t = total_time
                break
            t += dt
            x = x + dt * v
            if kind == REFRESH:
                v_new = refresh_velocity(potential.d, rng)
            elif kind == BOUNCE:
                v_new = _bounce_velocity(process, potential, x, v, channel)
            else:
                v_new = v
            events.append(EventRecord(time=t, kind=kind, channel=channel,
                                      v_before=v, v_after=v_new))
            counts[kind] += 1
            v = v_new
            times.append(t)
            xs.append(x)
            vs.append(v)

    if times[-1] < total_time:
        times.append(total_time)
        xs.append(x)
        vs.append(v)

    return Trajectory(
        process=process,
        d=potential.d,
        total_time=total_time,
        flow=flow,
        times=np.array(times),
        xs=np.array(xs),
        vs=np.array(vs),
        events=events,
        event_counts=counts,
        modes=modes,
        leapfrog_step=flow_step if flow == LEAPFROG else None,
    )
