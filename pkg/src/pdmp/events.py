"""Exact simulation of inhomogeneous Poisson first arrivals.

Two mechanisms cover every sampler here.  Rates that are affine along the
current line are inverted in closed form through the integrated-rate case
table.  Anything else is thinned against an affine envelope that is re-anchored
at the current point after every rejection and every horizon expiry, which
keeps proposals tight without ever approximating the target law.
"""

import math
from dataclasses import dataclass

import numpy as np


class EnvelopeViolationError(Exception):
    """The true rate exceeded its declared envelope: the bound is invalid."""


@dataclass
class ArrivalOutcome:
    """First arrival restricted to a horizon.

    time is the arrival time, or the horizon itself when the proposal stream
    passed it without an acceptance (exhausted_horizon set).
    """

    time: float
    exhausted_horizon: bool = False


def sample_exponential(rate: float, u: float) -> float:
    """Invert a constant-rate clock: -log(u)/rate, inf for a silent clock."""
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    if not 0.0 < u < 1.0:
        raise ValueError("u must lie in (0, 1)")
    if rate == 0.0:
        return math.inf
    return -math.log(u) / rate

def first_arrival_affine(a: float, c: float, e: float) -> float:
    """First arrival of rate (a + c t)_+ given unit-exponential variate e.

    Solves Lambda(tau) = e with Lambda(t) = int_0^t (a + c s)_+ ds, returning
    inf when the total mass Lambda(inf) stays below e.  All sign cases of
    (a, c) are closed-form; the quadratic branches use the subtraction-free
    root 2e / (a + sqrt(a^2 + 2 c e)).
    """
    if e <= 0:
        raise ValueError("exponential variate must be positive")
    if c == 0.0:
        return e / a if a > 0.0 else math.inf
    if c > 0.0:
        if a >= 0.0:
            return 2.0 * e / (a + math.sqrt(a * a + 2.0 * c * e))
        # rate silent until -a/c, then grows linearly from zero
        return -a / c + math.sqrt(2.0 * e / c)
    # c < 0: decaying rate, finite total mass a^2 / (2|c|)
    if a <= 0.0:
        return math.inf
    disc = a * a + 2.0 * c * e
    if disc <= 0.0:
        return math.inf
    return 2.0 * e / (a + math.sqrt(disc))


def affine_rate_integral(a: float, c: float, t: float) -> float:
    """Lambda(t) = int_0^t (a + c s)_+ ds in closed form."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if c == 0.0:
        return max(a, 0.0) * t
    t0 = -a / c
    if c > 0.0:
        if a >= 0.0:
            return a * t + 0.5 * c * t * t
        if t <= t0:
            return 0.0
        return 0.5 * c * (t - t0) ** 2
    if a <= 0.0:
        return 0.0
    if t <= t0:
        return a * t + 0.5 * c * t * t
    return a * a / (-2.0 * c)


def first_arrival_thinning(
    rate_fn,
    envelope_supplier,
    horizon: float,
    rng: np.random.Generator,
    slack: float = 1e-9,
) -> ArrivalOutcome:
    """Thinned first arrival of rate_fn on [0, horizon].

    rate_fn(t) is the true rate at offset t from the anchor.
    envelope_supplier(s) must return (a, c) with
    rate_fn(s + u) <= (a + c u)_+ for all u in [0, horizon - s].

    Proposals come from the envelope's closed-form inversion; each accepted
    with probability rate/bound.  After a rejection the envelope is rebuilt
    at the rejected point, so a loose initial bound cannot snowball.  A true
    rate exceeding its envelope by more than ``slack`` aborts loudly: that
    means the envelope contract is broken and all samples are suspect.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    t = 0.0
    while True:
        a, c = envelope_supplier(t)
        dt = first_arrival_affine(a, c, rng.standard_exponential())
        if not math.isfinite(dt) or t + dt >= horizon:
            return ArrivalOutcome(time=horizon, exhausted_horizon=True)
        t += dt
        bound = a + c * dt
        lam = rate_fn(t)
        if lam > bound + slack:
            raise EnvelopeViolationError(
                f"rate {lam:.6g} exceeds envelope {bound:.6g} at offset {t:.6g}"
            )
        if bound > 0.0 and rng.random() * bound <= lam:
            return ArrivalOutcome(time=t)
