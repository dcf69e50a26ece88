"""Derived growth functions: ball regularization and doubling truncation.

Two constructions on top of a growth function phi:

* ``build_psi`` -- the x-independent convex majorant of the ball sup,
  psi(t) = int_0^t tau**(p-1) * sup_{s<=tau} phi_B^+(s)/s**p dtau,
  computed by a single monotone running-sup pass and trapezoid integration
  on a geometric grid, with +inf saturation handled in extended reals.

* ``build_phi_lambda`` -- the truncation
  phi_lam(x,t) = (1/lam) t**p + int_0^t min{phi'_-(x,tau), p lam tau**(p-1)} dtau,
  which has p-power growth with lambda-dependent constants and increases
  back to phi as lambda grows.  The integral is evaluated exactly from the
  single crossover of the two slopes (located in closed form or by a
  verified bisection per spatial point).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conditions import BallRegion, PointsRegion, check_growth, phi_matrix
from .phi import PhiSpec, PowerPhi, VariableExponentPhi, geometric_grid

__all__ = [
    "TruncationParams",
    "TruncatedPhi",
    "build_phi_lambda",
    "PsiRegularization",
    "build_psi",
    "GridRefinementError",
    "NonConvexError",
]


class GridRefinementError(ValueError):
    """The t-grid is too coarse for the construction's validity checks."""


class NonConvexError(ValueError):
    """The source growth function must be convex for this construction."""


# ---------------------------------------------------------------------------
# truncation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TruncationParams:
    lam: float
    p: float

    def __post_init__(self):
        if not (self.lam >= 1.0):
            raise ValueError("lambda must be >= 1")
        if not (self.p >= 1.0):
            raise ValueError("p must be >= 1")


class _BoundTruncated:
    """Truncated growth function frozen at sample points.

    Uses that the slope min switches branches once, at tau_star(x):
    below it the integral of the min is phi itself, above it the integral
    continues with the power cap.
    """

    def __init__(self, src_bound, p, lam, tau, phi_tau, coef):
        self.src = src_bound
        self.p, self.lam, self.coef = p, lam, coef
        self.tau = tau  # crossover per point, in [0, inf]
        self.phi_tau = phi_tau  # integral of phi'_- up to the crossover
        finite = np.isfinite(tau)
        self._tau_safe = np.where(finite, tau, 1.0)
        with np.errstate(over="ignore"):
            self._tau_p = np.where(finite, self._tau_safe**p, np.inf)

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        p, lam = self.p, self.lam
        with np.errstate(over="ignore", invalid="ignore"):
            tp = t**p
            below = self.src.eval(t)
            capped = self.phi_tau + lam * (tp - np.where(np.isfinite(self.tau), self._tau_p, 0.0))
        m = np.where(t <= self.tau, below, capped)
        return self.coef * (tp / lam + m)

    def d_minus(self, t):
        return self._d(self.src.d_minus(np.asarray(t, dtype=float)), t)

    def d_plus(self, t):
        return self._d(self.src.d_plus(np.asarray(t, dtype=float)), t)

    def _d(self, src_d, t):
        t = np.asarray(t, dtype=float)
        p, lam = self.p, self.lam
        with np.errstate(over="ignore", invalid="ignore"):
            cap = p * lam * t ** (p - 1.0)
            base = (p / lam) * t ** (p - 1.0)
        if p == 1.0:
            cap = np.full_like(t, p * lam)
            base = np.full_like(t, p / lam)
        else:
            cap = np.where(t > 0, cap, 0.0)
            base = np.where(t > 0, base, 0.0)
        return self.coef * (base + np.minimum(src_d, cap))


class TruncatedPhi(PhiSpec):
    """Doubling truncation of a convex growth function (see module docstring)."""

    variant = "truncated"

    def __init__(self, source, p, lam, scale=1.0, meta=None):
        super().__init__(scale)
        if not source.is_convex:
            raise NonConvexError("truncation requires a convex source")
        self.source = source
        self.p = float(p)
        self.lam = float(lam)
        self.meta = meta or {}

    def bind(self, points):
        points = np.atleast_2d(points)
        src_b = self.source.bind(points)
        tau, phi_tau = _crossover(self.source, src_b, points, self.p, self.lam)
        # overall prefactor applies to the whole construction; the source
        # bound already carries the source's own scale
        return _BoundTruncated(src_b, self.p, self.lam, tau, phi_tau, self.scale)

    def to_json(self):
        return {
            **self._base_json(),
            "p": self.p,
            "lambda": self.lam,
            "source": self.source.to_json(),
            "meta": self.meta,
        }


def _crossover(source, src_bound, points, p, lam):
    """Per-point crossover tau* where phi'_-(x, .) meets p*lam*t**(p-1).

    Returns (tau, phi_tau) where phi_tau = int_0^tau phi'_- = phi(x, tau)
    for convex phi with phi(x,0)=0.  tau may be 0 (cap active from the
    start) or inf (cap never active).  Raises if the slope difference does
    not change sign exactly once on the probe range.
    """
    m = len(points)
    cap_rate = p * lam

    # closed forms where the slope ratio is a single power
    if isinstance(source, PowerPhi):
        ps, c = source.p, source.scale
        if ps < p:
            raise GridRefinementError(
                "truncation exponent exceeds the source growth exponent; "
                "the slope cap would be active near zero"
            )
        if ps == p:
            tau = np.full(m, np.inf if c * ps <= cap_rate else 0.0)
        else:
            tau = np.full(m, (cap_rate / (c * ps)) ** (1.0 / (ps - p)))
        phi_tau = _phi_at(src_bound, tau)
        return tau, phi_tau

    if isinstance(source, VariableExponentPhi) and source.scale == 1.0:
        px = np.asarray(source.p_field(points), dtype=float)
        finite = np.isfinite(px)
        if np.any(finite & (px < p - 1e-12)):
            raise GridRefinementError(
                "truncation exponent exceeds the local exponent field somewhere"
            )
        tau = np.empty(m)
        same = finite & (px <= p + 1e-14)
        tau[same] = np.inf  # p(x) == p: slope p t^{p-1} <= p lam t^{p-1}
        grow = finite & ~same
        with np.errstate(over="ignore"):
            tau[grow] = (cap_rate / px[grow]) ** (1.0 / (px[grow] - p))
        tau[~finite] = 1.0  # infinite fiber: slope jumps 0 -> inf at t = 1
        phi_tau = _phi_at(src_bound, tau)
        phi_tau[~finite] = 0.0  # integral of the zero left-slope over [0, 1]
        return tau, phi_tau

    return _crossover_generic(src_bound, m, p, lam)


def _phi_at(src_bound, tau):
    finite = np.isfinite(tau)
    safe = np.where(finite, tau, 1.0)
    out = src_bound.eval(safe)
    return np.where(finite, out, 0.0)


def _crossover_generic(src_bound, m, p, lam, lo=1e-9, hi=1e9, probes=33, iters=80):
    """Sign-change bisection of g(t) = phi'_-(t) - p*lam*t**(p-1) per point."""
    cap = lambda t: p * lam * np.asarray(t, dtype=float) ** (p - 1.0)

    def g(tvec):
        with np.errstate(over="ignore", invalid="ignore"):
            return src_bound.d_minus(tvec) - cap(tvec)

    probe_t = np.geomspace(lo, hi, probes)
    signs = np.empty((m, probes), dtype=bool)
    for j, t in enumerate(probe_t):
        signs[:, j] = g(np.full(m, t)) > 0
    # require the pattern False...False True...True (single sign change)
    changes = (signs[:, 1:] != signs[:, :-1]).sum(axis=1)
    rising = ~signs[:, 0]
    if np.any(changes > 1) or np.any(~rising & (changes > 0)):
        bad = int(np.argmax((changes > 1) | (~rising & (changes > 0))))
        raise GridRefinementError(
            f"slope comparison changes sign more than once at sample {bad}; "
            "the truncation assumes a single crossover"
        )
    tau = np.where(signs[:, -1], np.nan, np.inf)  # all-False rows: never crosses
    tau = np.where(signs[:, 0], 0.0, tau)  # all-True rows: cap active from 0
    need = np.isnan(tau)
    if need.any():
        a = np.full(m, math.log(lo))
        b = np.full(m, math.log(hi))
        for _ in range(iters):
            mid = 0.5 * (a + b)
            pos = g(np.exp(mid)) > 0
            a = np.where(pos, a, mid)
            b = np.where(pos, mid, b)
        tau = np.where(need, np.exp(0.5 * (a + b)), tau)
    return tau, _phi_at(src_bound, tau)


def build_phi_lambda(phi, params):
    """Truncation of ``phi`` with the given (lambda, p); returns a PhiSpec."""
    if not isinstance(params, TruncationParams):
        params = TruncationParams(*params)
    return TruncatedPhi(phi, params.p, params.lam, meta={"construction": "truncation"})


# ---------------------------------------------------------------------------
# ball regularization
# ---------------------------------------------------------------------------

class PsiRegularization:
    """The regularized majorant of a ball sup, with its defining integral.

    Carries the grid data: the running sup of phi_B^+(s)/s**p and the
    cumulative integral values (extended reals; once the running sup hits
    +inf the integral saturates).
    """

    def __init__(self, source, ball, p, t_grid, running_sup, psi_values, L_p):
        self.source = source
        self.ball = ball
        self.p = float(p)
        self.t_grid = t_grid
        self.running_sup = running_sup
        self.psi_values = psi_values
        self.L_p = L_p
        fin = np.isfinite(psi_values)
        self.saturation_index = int(np.argmin(fin)) if not fin.all() else None

    @property
    def saturated(self):
        return self.saturation_index is not None

    def eval(self, t):
        """Piecewise power-law interpolation of the integral values (vectorized)."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        tg, v = self.t_grid, self.psi_values
        last_fin = self.saturation_index - 1 if self.saturated else len(tg) - 1
        out = np.empty_like(t)
        if last_fin < 0:  # saturated from the first node
            out[:] = np.where(t > 0, np.inf, 0.0)
            return float(out[0]) if scalar else out
        above = t > tg[last_fin]
        below = t < tg[0]
        mid = ~(above | below)
        out[above] = np.inf if self.saturated else np.array(
            [_extrapolate_upper(tg, v, tk) for tk in t[above]]
        )
        # below the grid the running sup is constant to leading order
        with np.errstate(over="ignore", invalid="ignore"):
            out[below] = np.where(
                t[below] > 0, self.running_sup[0] * t[below] ** self.p / self.p, 0.0
            )
        if mid.any():
            tm = t[mid]
            i = np.minimum(np.searchsorted(tg, tm, side="right") - 1, last_fin - 1)
            i = np.maximum(i, 0)
            v0, v1 = v[i], v[i + 1]
            t0, t1 = tg[i], tg[i + 1]
            with np.errstate(divide="ignore", invalid="ignore"):
                g = np.log(v1 / v0) / np.log(t1 / t0)
                vals = v0 * (tm / t0) ** g
            vals = np.where(v0 == 0.0, v1 * (tm - t0) / (t1 - t0), vals)
            vals = np.where(tm == t0, v0, vals)
            vals = np.where(tm == t1, v1, vals)
            out[mid] = vals
        return float(out[0]) if scalar else out

    def a0_beta(self, floor=2.0**-20):
        """Largest dyadic beta with psi(beta) <= 1 <= psi(1/beta)."""
        beta = 1.0
        while beta >= floor:
            if self.eval(beta) <= 1.0 and self.eval(1.0 / beta) >= 1.0:
                return beta
            beta *= 0.5
        raise GridRefinementError("no normalization constant above the floor")

    def to_json(self):
        return {
            "variant": "psi-regularization",
            "t_grid": self.t_grid.tolist(),
            "values": [v if np.isfinite(v) else None for v in self.psi_values],
            "meta": {
                "ball": self.ball.describe(),
                "p": self.p,
                "L_p": self.L_p,
                "source": self.source.to_json(),
            },
        }


def _extrapolate_upper(tg, v, t):
    i = len(tg) - 2
    if v[i] <= 0 or not np.isfinite(v[i + 1]):
        return np.inf
    g = math.log(v[i + 1] / v[i]) / math.log(tg[i + 1] / tg[i])
    return v[i + 1] * (t / tg[i + 1]) ** g


def build_psi(phi, ball, p, t_grid=None, L_p=None, validate=True, bound_tol=1e-6):
    """Build the ball regularization of ``phi`` on the given ball.

    Requires (aInc)_p on the ball (the constant is certified on the ball's
    sample points when not supplied).  Validates the two-sided comparison
    ln(2) phi_B^+(t/2) <= psi(t) <= L_p phi_B^+(t) on the grid and raises
    GridRefinementError when the grid is too coarse to reproduce it.
    """
    if not isinstance(ball, BallRegion):
        ball = BallRegion(*ball)
    if t_grid is None:
        t_grid = geometric_grid()
    t_grid = np.asarray(t_grid, dtype=float)
    pts = ball.points()
    if L_p is None:
        res = check_growth(phi, PointsRegion(pts), p, p, t_grid=np.geomspace(t_grid[0], t_grid[-1], 96))
        L_p = res.L_p
        if not np.isfinite(L_p) or L_p > 1e8:
            raise GridRefinementError("(aInc)_p does not hold on the ball; cannot regularize")

    V = phi_matrix(phi, pts, t_grid)
    sup_phi = V.max(axis=0)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        ratio = sup_phi / t_grid**p
    running = np.maximum.accumulate(ratio)
    with np.errstate(over="ignore", invalid="ignore"):
        integrand = t_grid ** (p - 1.0) * running
    psi = np.empty_like(t_grid)
    # first node: the running sup is constant to leading order below the grid
    psi[0] = running[0] * t_grid[0] ** p / p if np.isfinite(running[0]) else np.inf
    for j in range(1, len(t_grid)):
        I0, I1 = integrand[j - 1], integrand[j]
        t0, t1 = t_grid[j - 1], t_grid[j]
        if not np.isfinite(psi[j - 1]) or not np.isfinite(I1):
            psi[j] = np.inf
        elif I0 == 0.0 or I1 == 0.0:
            psi[j] = psi[j - 1] + 0.5 * (I0 + I1) * (t1 - t0)
        else:
            # integrand is a power law between nodes (exactly, away from
            # kinks of the running sup): integrate c*t**g in closed form
            g = math.log(I1 / I0) / math.log(t1 / t0)
            if abs(g + 1.0) < 1e-9:
                psi[j] = psi[j - 1] + I0 * t0 * math.log(t1 / t0)
            else:
                psi[j] = psi[j - 1] + (I1 * t1 - I0 * t0) / (g + 1.0)
    out = PsiRegularization(phi, ball, p, t_grid, running, psi, L_p)

    if validate:
        b = phi.bind(pts)
        m = len(pts)
        for j in range(0, len(t_grid), max(1, len(t_grid) // 128)):
            t = t_grid[j]
            sup_half = float(b.eval(np.full(m, t / 2.0)).max())
            lo_bound = math.log(2.0) * sup_half
            up_bound = L_p * sup_phi[j]
            ps = psi[j]
            if not (lo_bound <= ps * (1.0 + bound_tol) + 1e-300 or (math.isinf(lo_bound) and math.isinf(ps))):
                raise GridRefinementError(f"lower comparison fails at t={t}: {lo_bound} > {ps}")
            if not (ps <= up_bound * (1.0 + bound_tol) + 1e-300 or (math.isinf(ps) and math.isinf(up_bound))):
                raise GridRefinementError(f"upper comparison fails at t={t}: {ps} > {up_bound}")
    return out
