"""Convergence-rate lower bounds and tuning formulas.

Everything here is closed-form arithmetic in the Poincare constant m, the
barrier radii from `convexity_barrier`, the dimension, and the refreshment
rate.  The bounds hold up to one universal constant per process; the harness
reports them with that constant set to 1 unless calibrated otherwise.
"""

import math
from dataclasses import dataclass

from .potentials import PotentialMeta, convexity_barrier

_PROCESSES = ("rhmc", "zz", "bps")


def _check(process: str, m: float, d: int, gamma: float | None = None):
    if process not in _PROCESSES:
        raise ValueError(f"unknown process {process!r}")
    if m <= 0:
        raise ValueError("m must be positive")
    if d < 1:
        raise ValueError("d must be at least 1")
    if gamma is not None and gamma <= 0:
        raise ValueError("gamma must be positive")


def rate_lower_bound(process: str, m: float, meta: PotentialMeta, d: int,
                     gamma: float, c_universal: float = 1.0) -> float:
    """Exponential-decay rate guaranteed at refreshment rate gamma.

    rhmc:  c m gamma / (sqrt(m) + R + gamma)^2
    zz:    c m gamma / (sqrt(m) + R_zz + gamma)^2
    bps:   c m gamma / (sqrt(d m) + R sqrt(d) + gamma)^2
    """
    _check(process, m, d, gamma)
    r, r_zz = convexity_barrier(meta, d)
    if process == "rhmc":
        denom = math.sqrt(m) + r + gamma
    elif process == "zz":
        denom = math.sqrt(m) + r_zz + gamma
    else:
        denom = math.sqrt(d * m) + r * math.sqrt(d) + gamma
    return c_universal * m * gamma / denom**2


def optimal_gamma(process: str, m: float, meta: PotentialMeta, d: int) -> float:
    """Refreshment rate maximizing the guaranteed rate."""
    _check(process, m, d)
    r, r_zz = convexity_barrier(meta, d)
    if process == "rhmc":
        return math.sqrt(m) + r
    if process == "zz":
        return math.sqrt(m) + r_zz
    return math.sqrt(d * m) + r * math.sqrt(d)


def optimal_window(process: str, m: float, meta: PotentialMeta, d: int,
                   gamma: float) -> float:
    """Averaging-window length minimizing the overhead constant below."""
    _check(process, m, d, gamma)
    r, r_zz = convexity_barrier(meta, d)
    if process == "rhmc":
        return m**-0.25 * (r + gamma) ** -0.5
    if process == "zz":
        return m**-0.25 * (r_zz + gamma) ** -0.5
    return d**0.25 * m**-0.25 * (math.sqrt(d) * r + gamma) ** -0.5


def cj_constant(process: str, m: float, meta: PotentialMeta, d: int,
                window: float, c_universal: float = 1.0) -> float:
    """Overhead constant of time-averaged estimators over one window.

    rhmc/zz:  C (1 + 1/(sqrt(m) T) + R./sqrt(m) + R. T)
    bps:      C sqrt(d) (1 + 1/(sqrt(m) T) + R/sqrt(m) + R T)
    with R. the process's barrier radius (R for rhmc, R_zz for zz).
    """
    _check(process, m, d)
    if window <= 0:
        raise ValueError("window must be positive")
    r, r_zz = convexity_barrier(meta, d)
    r_used = r_zz if process == "zz" else r
    base = 1.0 + 1.0 / (math.sqrt(m) * window) + r_used / math.sqrt(m) \
        + r_used * window
    if process == "bps":
        return c_universal * math.sqrt(d) * base
    return c_universal * base


@dataclass
class RateReport:
    """All rate-theory outputs for one (process, target, gamma) triple."""

    process: str
    d: int
    m: float
    r: float
    r_zz: float
    gamma: float
    gamma_opt: float
    nu_lower: float
    nu_lower_opt: float
    window_opt: float
    cj_at_window_opt: float
    c_universal: float


def build_rate_report(process: str, meta: PotentialMeta, d: int,
                      gamma: float | None = None,
                      c_universal: float = 1.0) -> RateReport:
    """Assemble the full report; gamma=None means use the optimum."""
    m = meta.m_poincare
    r, r_zz = convexity_barrier(meta, d)
    g_opt = optimal_gamma(process, m, meta, d)
    g = g_opt if gamma is None else gamma
    w_opt = optimal_window(process, m, meta, d, g)
    return RateReport(
        process=process,
        d=d,
        m=m,
        r=r,
        r_zz=r_zz,
        gamma=g,
        gamma_opt=g_opt,
        nu_lower=rate_lower_bound(process, m, meta, d, g, c_universal),
        nu_lower_opt=rate_lower_bound(process, m, meta, d, g_opt, c_universal),
        window_opt=w_opt,
        cj_at_window_opt=cj_constant(process, m, meta, d, w_opt, c_universal),
        c_universal=c_universal,
    )
