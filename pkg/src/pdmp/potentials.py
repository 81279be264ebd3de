"""Target potentials and the curvature metadata the rate theory consumes.

A potential U defines the position marginal exp(-U(x)) of the invariant law.
Samplers interrogate it through three surfaces: value/gradient evaluation,
exact affine event-rate coefficients along straight lines (quadratic targets),
and affine envelopes that dominate the event rate over a finite horizon
(everything else, used for thinning).

Metadata records the Poincare constant of exp(-U), two-sided Hessian bounds,
and a gradient-growth constant.  Those numbers never influence the dynamics;
they feed the theoretical rate formulas and the default fit windows.
"""

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np


class CurvatureUnboundedError(Exception):
    """No finite affine envelope is derivable for the requested channel."""


def jacobi_eigh(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 60):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps row by row, zeroing each off-diagonal pair, until the off-diagonal
    Frobenius norm falls below ``tol`` relative to the matrix norm.  Returns
    eigenvalues in ascending order and the matching orthonormal columns.
    Intended for the small dense matrices that show up here (d <= a few dozen).
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(1.0, float(np.linalg.norm(a)))
    # off-diagonal norm summed directly: the subtract-the-diagonal form
    # cancels catastrophically once the iteration is nearly converged
    offmask = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = math.sqrt(float((a[offmask] ** 2).sum()))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                # classic 2x2 rotation zeroing a[p, q]
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(1.0, theta))
                c = 1.0 / math.hypot(1.0, t)
                s = t * c
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise RuntimeError("jacobi_eigh did not converge")
    eigvals = np.diag(a).copy()
    order = np.argsort(eigvals)
    return eigvals[order], v[:, order]


@dataclass
class PotentialMeta:
    """Curvature summary of a potential.

    m_poincare      Poincare constant of exp(-U); auto-derived for quadratic
                    targets, user-supplied otherwise.
    hess_upper      upper bound on the Hessian operator norm (may be inf).
    hess_lower_neg  L >= 0 with Hess U >= -L*I, or None when no two-sided
                    bound is known and only gradient growth is assumed.
    growth_M        M >= 1 with |Hess U| <= M*(1 + |grad U|).
    is_convex       convexity flag; forces hess_lower_neg to 0.
    """

    m_poincare: float
    hess_upper: float
    hess_lower_neg: float | None
    growth_M: float = 1.0
    is_convex: bool = False

    def __post_init__(self):
        if self.m_poincare <= 0:
            raise ValueError("m_poincare must be positive")
        if self.growth_M < 1.0:
            raise ValueError("growth_M must be >= 1")
        if self.is_convex:
            self.hess_lower_neg = 0.0
        if self.hess_lower_neg is not None and self.hess_lower_neg < 0:
            raise ValueError("hess_lower_neg must be nonnegative")


def convexity_barrier(meta: PotentialMeta, d: int) -> tuple[float, float]:
    """Barrier radii (R, R_zz) entering the convergence-rate bounds.

    R is 0 for convex targets, sqrt(L) when Hess U >= -L*I is known, and
    M*sqrt(d) when only gradient growth is assumed.  R_zz additionally needs
    an upper Hessian bound: sqrt(hess_upper) when finite, else M*sqrt(d).
    """
    if meta.is_convex:
        r = 0.0
    elif meta.hess_lower_neg is not None:
        r = math.sqrt(meta.hess_lower_neg)
    else:
        r = meta.growth_M * math.sqrt(d)
    if math.isfinite(meta.hess_upper):
        r_zz = math.sqrt(meta.hess_upper)
    else:
        r_zz = meta.growth_M * math.sqrt(d)
    return r, r_zz


class Potential:
    """Base class: value/gradient plus per-channel event-rate geometry.

    A bounce channel is either an integer coordinate index (per-coordinate
    sign-flip dynamics) or None for the full-gradient channel (reflective
    dynamics).  The channel rate along a straight line x + t*v is
    max(0, v . F(x + t*v)) with F the channel force.
    """

    d: int
    meta: PotentialMeta

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def eval_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        return self.value(x), self.grad(x)

    def channel_slope(self, x: np.ndarray, v: np.ndarray, channel: int | None) -> float:
        """v . F_channel(x), the signed rate before clamping at zero."""
        g = self.grad(x)
        if channel is None:
            return float(v @ g)
        return float(v[channel] * g[channel])

    def channel_slope_line(self, x, v, channel, s: float) -> float:
        """channel_slope evaluated at x + s*v (hook for cheaper overrides)."""
        return self.channel_slope(x + s * v, v, channel)

    def affine_rate(self, x, v, channel) -> tuple[float, float] | None:
        """(a, c) with channel rate (a + c t)_+ exactly, or None."""
        return None

    def line_envelope(self, x, v, channel, horizon: float) -> tuple[float, float]:
        """Affine envelope (a, c) with rate(t) <= (a + c t)_+ on [0, horizon]."""
        raise NotImplementedError


class QuadraticPotential(Potential):
    """U(x) = x . A x / 2 for symmetric positive definite A.

    Event rates along straight lines are exactly affine, so no thinning is
    ever needed.  The eigendecomposition (cached at construction) also powers
    closed-form Hamiltonian flow and stationary sampling.
    """

    def __init__(self, a: np.ndarray):
        a = np.atleast_2d(np.asarray(a, dtype=float))
        if a.shape[0] != a.shape[1]:
            raise ValueError("matrix must be square")
        scale = max(1.0, float(np.abs(a).max()))
        if np.abs(a - a.T).max() > 1e-12 * scale:
            raise ValueError("matrix must be symmetric")
        a = 0.5 * (a + a.T)
        self.a = a
        self.d = a.shape[0]
        self.eigvals, self.eigvecs = jacobi_eigh(a)
        if self.eigvals[0] <= 0:
            raise ValueError("matrix must be positive definite")
        lam_min = float(self.eigvals[0])
        lam_max = float(self.eigvals[-1])
        self.meta = PotentialMeta(
            m_poincare=lam_min,
            hess_upper=lam_max,
            hess_lower_neg=0.0,
            growth_M=max(1.0, lam_max),
            is_convex=True,
        )

    def value(self, x):
        return 0.5 * float(x @ self.a @ x)

    def grad(self, x):
        return self.a @ x

    def affine_rate(self, x, v, channel):
        ax = self.a @ x
        av = self.a @ v
        if channel is None:
            return float(v @ ax), float(v @ av)
        return float(v[channel] * ax[channel]), float(v[channel] * av[channel])

    def line_envelope(self, x, v, channel, horizon):
        # the affine coefficients are exact, hence also a valid envelope
        return self.affine_rate(x, v, channel)


def isotropic_gaussian(m: float, d: int) -> QuadraticPotential:
    """U(x) = m |x|^2 / 2."""
    if m <= 0:
        raise ValueError("m must be positive")
    return QuadraticPotential(m * np.eye(d))


def diagonal_gaussian(diag) -> QuadraticPotential:
    """U(x) = sum_k diag[k] x_k^2 / 2."""
    return QuadraticPotential(np.diag(np.asarray(diag, dtype=float)))


@dataclass
class Factor1D:
    """One-dimensional factor u of a product potential.

    d2_range(lo, hi) must return a (min, max) enclosure of u'' on [lo, hi];
    d2_lo/d2_hi are global curvature bounds (inf allowed).  curvature is set
    for exactly quadratic factors and unlocks closed-form event times.
    """

    u: Callable[[float], float]
    du: Callable[[float], float]
    d2u: Callable[[float], float]
    d2_range: Callable[[float, float], tuple[float, float]]
    d2_lo: float
    d2_hi: float
    growth_M: float = 1.0
    curvature: float | None = None
    label: str = ""


def _quad_u(c: float, s: float) -> float:
    return 0.5 * c * s * s


def _quad_du(c: float, s: float) -> float:
    return c * s


def _quad_d2u(c: float, s: float) -> float:
    return c


def _quad_d2_range(c: float, lo: float, hi: float) -> tuple[float, float]:
    return c, c


def quadratic_factor(curvature: float) -> Factor1D:
    """Factor u(s) = curvature * s^2 / 2."""
    if curvature <= 0:
        raise ValueError("curvature must be positive")
    c = float(curvature)
    return Factor1D(
        u=partial(_quad_u, c),
        du=partial(_quad_du, c),
        d2u=partial(_quad_d2u, c),
        d2_range=partial(_quad_d2_range, c),
        d2_lo=c,
        d2_hi=c,
        growth_M=max(1.0, c),
        curvature=c,
        label="quadratic",
    )


def _dw_u(s: float) -> float:
    return 0.25 * (s * s - 1.0) ** 2


def _dw_du(s: float) -> float:
    return s * s * s - s


def _dw_d2u(s: float) -> float:
    return 3.0 * s * s - 1.0


def _dw_d2_range(lo: float, hi: float) -> tuple[float, float]:
    # u'' = 3 s^2 - 1 is monotone in s^2
    s2_hi = max(lo * lo, hi * hi)
    s2_lo = 0.0 if lo <= 0.0 <= hi else min(lo * lo, hi * hi)
    return 3.0 * s2_lo - 1.0, 3.0 * s2_hi - 1.0


# Poincare constant of exp(-u) for the double well: spectral gap of the
# overdamped generator, from a dense finite-difference discretization in
# Schrodinger form (grid-converged to 4 digits; tests re-derive it coarsely).
DOUBLE_WELL_POINCARE = 0.7921

# sup over s of u''(s) / (1 + |u'(s)|), rounded up.
_DW_GROWTH_M = 2.2


def double_well_factor() -> Factor1D:
    """Factor u(s) = (s^2 - 1)^2 / 4: two wells at +-1, barrier 1/4 at 0."""
    return Factor1D(
        u=_dw_u,
        du=_dw_du,
        d2u=_dw_d2u,
        d2_range=_dw_d2_range,
        d2_lo=-1.0,
        d2_hi=math.inf,
        growth_M=_DW_GROWTH_M,
        label="double_well",
    )


class Product1DPotential(Potential):
    """U(x) = sum_k u_k(x_k) built from one-dimensional factors.

    The Poincare constant cannot be derived from the factors in general and
    must be supplied.  Per-coordinate channels with a quadratic factor (and
    the gradient channel when every factor is quadratic) still get exact
    affine rates; everything else falls back to interval-curvature envelopes.
    """

    def __init__(self, factors: list[Factor1D], m_poincare: float):
        if not factors:
            raise ValueError("need at least one factor")
        self.factors = list(factors)
        self.d = len(self.factors)
        d2_lo = min(f.d2_lo for f in self.factors)
        d2_hi = max(f.d2_hi for f in self.factors)
        self.meta = PotentialMeta(
            m_poincare=m_poincare,
            hess_upper=d2_hi,
            hess_lower_neg=None if math.isinf(-d2_lo) else max(0.0, -d2_lo),
            growth_M=max(1.0, *(f.growth_M for f in self.factors)),
            is_convex=d2_lo >= 0.0,
        )

    def value(self, x):
        return float(sum(f.u(float(s)) for f, s in zip(self.factors, x)))

    def grad(self, x):
        return np.array([f.du(float(s)) for f, s in zip(self.factors, x)])

    def channel_slope_line(self, x, v, channel, s):
        if channel is None:
            return Potential.channel_slope_line(self, x, v, channel, s)
        vk = float(v[channel])
        return vk * self.factors[channel].du(float(x[channel]) + s * vk)

    def affine_rate(self, x, v, channel):
        if channel is not None:
            f = self.factors[channel]
            if f.curvature is None:
                return None
            vk = float(v[channel])
            return vk * f.du(float(x[channel])), vk * vk * f.curvature
        if any(f.curvature is None for f in self.factors):
            return None
        a = sum(float(v[k]) * f.du(float(x[k])) for k, f in enumerate(self.factors))
        c = sum(float(v[k]) ** 2 * f.curvature for k, f in enumerate(self.factors))
        return float(a), float(c)

    def _factor_envelope(self, k: int, x, v, horizon: float) -> tuple[float, float]:
        vk = float(v[k])
        xk = float(x[k])
        a = vk * self.factors[k].du(xk)
        if vk == 0.0:
            return a, 0.0
        lo, hi = sorted((xk, xk + horizon * vk))
        d2_lo, d2_hi = self.factors[k].d2_range(lo, hi)
        if not (math.isfinite(d2_lo) and math.isfinite(d2_hi)):
            raise CurvatureUnboundedError(
                f"factor {k} has unbounded curvature on [{lo:g}, {hi:g}]"
            )
        c = vk * vk * max(abs(d2_lo), abs(d2_hi))
        return a, c

    def line_envelope(self, x, v, channel, horizon):
        exact = self.affine_rate(x, v, channel)
        if exact is not None:
            return exact
        if channel is not None:
            return self._factor_envelope(channel, x, v, horizon)
        a_tot, c_tot = 0.0, 0.0
        for k in range(self.d):
            a, c = self._factor_envelope(k, x, v, horizon)
            a_tot += a
            c_tot += c
        return a_tot, c_tot


class CustomPotential(Potential):
    """User-supplied value/gradient with explicitly provided metadata.

    Without an envelope callback the potential supports only dynamics that
    never thin (refresh-only motion); envelope requests then raise.
    """

    def __init__(self, d: int, value_fn, grad_fn, meta: PotentialMeta,
                 envelope_fn=None):
        self.d = d
        self._value_fn = value_fn
        self._grad_fn = grad_fn
        self.meta = meta
        self._envelope_fn = envelope_fn

    def value(self, x):
        return float(self._value_fn(x))

    def grad(self, x):
        return np.asarray(self._grad_fn(x), dtype=float)

    def line_envelope(self, x, v, channel, horizon):
        if self._envelope_fn is None:
            raise CurvatureUnboundedError(
                "custom potential has no envelope callback"
            )
        a, c = self._envelope_fn(x, v, channel, horizon)
        return float(a), float(c)
