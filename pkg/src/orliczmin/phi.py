"""Generalized growth functions phi(x, t) and their pointwise calculus.

A growth function here is a map phi : Omega x [0, inf) -> [0, inf] that is
non-decreasing in t with phi(x, 0) = 0 and phi(x, t) -> inf.  Extended-real
values are first-class: +inf propagates through evaluation, conjugation and
comparisons (inf <= inf counts as true).

Variants
--------
PowerPhi            c * t**p
VariableExponentPhi t**p(x) for a spatial exponent field p(x) > 1
DoublePhasePhi      c * (t**p + a(x) * t**q)
SampledPhi          tabulated values on a t-grid, interpolated as piecewise
                    power laws (linear in log t / log phi), optionally with
                    one value row per spatial sample point

All variants support a positive prefactor (``scaled``), one-sided
derivatives in t, and the convex conjugate sup_{s>=0} (st - phi(x, s)).
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "SpatialField",
    "PhiSpec",
    "PowerPhi",
    "VariableExponentPhi",
    "DoublePhasePhi",
    "SampledPhi",
    "ConjugatePhi",
    "DomainError",
    "ExtrapolationError",
    "phi_from_json",
    "r2_points_in_ball",
    "geometric_grid",
]


class DomainError(ValueError):
    """Evaluation point is outside the region the function is defined on."""


class ExtrapolationError(ValueError):
    """Sampled data was queried above its t-grid without extrapolation enabled."""


# deterministic low-discrepancy sampling (additive recurrence with the
# plastic constant); used wherever "quasi-random" spatial samples are needed
_PLASTIC = 1.32471795724474602596
_R2_ALPHA = np.array([1.0 / _PLASTIC, 1.0 / _PLASTIC**2])


def r2_unit_square(n, skip=0):
    """First n points of the R2 low-discrepancy sequence in [0,1)^2."""
    k = np.arange(skip, skip + n, dtype=float)[:, None]
    return (0.5 + k * _R2_ALPHA) % 1.0


def r2_points_in_ball(center, radius, n, skip=0):
    """n deterministic quasi-random points in the disk of given center/radius."""
    uv = r2_unit_square(n, skip=skip)
    r = radius * np.sqrt(uv[:, 0])
    th = 2.0 * np.pi * uv[:, 1]
    return np.asarray(center, dtype=float) + np.stack([r * np.cos(th), r * np.sin(th)], axis=1)


def geometric_grid(lo=1e-6, hi=1e3, n=512):
    """Default geometric t-grid resolving several power-law regimes."""
    return np.geomspace(lo, hi, n)


# ---------------------------------------------------------------------------
# spatial fields
# ---------------------------------------------------------------------------

def _rule_constant(pts, value):
    return np.full(len(pts), float(value))


def _rule_log_exponent(pts, scale, n=1.0):
    # scale * n * log(e / |x|); +inf at the origin
    r = np.hypot(pts[:, 0], pts[:, 1])
    with np.errstate(divide="ignore"):
        return scale * n * (1.0 - np.log(r))


def _rule_radial(pts, coef=1.0, power=1.0, offset=0.0):
    r = np.hypot(pts[:, 0], pts[:, 1])
    with np.errstate(divide="ignore"):
        return coef * r**power + offset


def _rule_affine(pts, a0=0.0, ax=0.0, ay=0.0):
    return a0 + ax * pts[:, 0] + ay * pts[:, 1]


_FIELD_RULES = {
    "constant": _rule_constant,
    "log-exponent": _rule_log_exponent,
    "radial": _rule_radial,
    "affine": _rule_affine,
}


class SpatialField:
    """Scalar field on the plane: a registered analytic rule or point samples.

    Analytic rules are referenced by name plus parameters so fields can be
    serialized; sampled fields evaluate by nearest sample point.
    """

    def __init__(self, rule=None, params=None, points=None, values=None):
        if rule is not None:
            if rule not in _FIELD_RULES:
                raise DomainError(f"unknown field rule {rule!r}")
            self.rule = rule
            self.params = dict(params or {})
            self.points = None
            self.values = None
        else:
            self.rule = None
            self.params = None
            self.points = np.asarray(points, dtype=float).reshape(-1, 2)
            self.values = np.asarray(values, dtype=float).ravel()
            if len(self.points) != len(self.values):
                raise ValueError("points/values length mismatch")

    @classmethod
    def from_rule(cls, rule, **params):
        return cls(rule=rule, params=params)

    @classmethod
    def constant(cls, value):
        return cls(rule="constant", params={"value": value})

    @classmethod
    def from_samples(cls, points, values):
        return cls(points=points, values=values)

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.rule is not None:
            return _FIELD_RULES[self.rule](pts, **self.params)
        d2 = ((pts[:, None, :] - self.points[None, :, :]) ** 2).sum(axis=2)
        return self.values[np.argmin(d2, axis=1)]

    def to_json(self):
        if self.rule is not None:
            return {"rule": self.rule, **self.params}
        return {"rule": None, "points": self.points.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        rule = obj.pop("rule")
        if rule is None:
            return cls.from_samples(obj["points"], obj["values"])
        return cls(rule=rule, params=obj)


# ---------------------------------------------------------------------------
# growth functions
# ---------------------------------------------------------------------------

def _as_points(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x.reshape(1, 2), True
    return x, False


def _broadcast_t(t, m):
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        return np.full(m, float(t)), True
    if len(t) != m:
        raise ValueError("t length does not match number of points")
    return t, False


class PhiSpec:
    """Base class for growth functions; subclasses implement ``bind``."""

    variant = "abstract"

    def __init__(self, scale=1.0):
        if not (scale > 0):
            raise ValueError("scale must be positive")
        self.scale = float(scale)

    # --- evaluation ------------------------------------------------------

    def bind(self, points):
        """Freeze spatial data at the given sample points.

        Returns an object with vectorized ``eval(t)``, ``d_minus(t)`` and
        ``d_plus(t)`` taking one t per point.  This is the hot path used by
        assembly loops; the generic x-by-x API below goes through it.
        """
        raise NotImplementedError

    def eval(self, x, t):
        pts, single = _as_points(x)
        tt, t_scalar = _broadcast_t(t, len(pts))
        if np.any(tt < 0):
            raise ValueError("t must be non-negative")
        out = self.bind(pts).eval(tt)
        return float(out[0]) if (single and t_scalar) else out

    def derivatives(self, x, t):
        """One-sided derivatives (d_minus, d_plus) in t at (x, t)."""
        pts, single = _as_points(x)
        tt, t_scalar = _broadcast_t(t, len(pts))
        b = self.bind(pts)
        dm, dp = b.d_minus(tt), b.d_plus(tt)
        if single and t_scalar:
            return float(dm[0]), float(dp[0])
        return dm, dp

    # --- conjugate -------------------------------------------------------

    def conjugate(self, x, s):
        """Convex conjugate sup_{t>=0}(s*t - phi(x, t)) at a single point x.

        Closed forms are used where available (PowerPhi); otherwise the sup
        is taken over an adaptive geometric t-grid with local refinement.
        The grid maximum never overshoots the true value.
        """
        s = float(s)
        if s < 0:
            raise ValueError("s must be non-negative")
        if s == 0.0:
            return 0.0
        pts, _ = _as_points(x)
        b = self.bind(pts[:1])
        return _conjugate_numeric(lambda t: b.eval(t), s)

    def young_gap(self, x, s, t):
        """phi(x,s) + phi*(x,t) - s*t; non-negative by Young's inequality."""
        return self.eval(x, s) + self.conjugate(x, t) - s * t

    # --- algebra ---------------------------------------------------------

    def scaled(self, c):
        """The growth function c * phi for c > 0."""
        if not (c > 0):
            raise ValueError("scaling constant must be positive")
        import copy

        out = copy.copy(self)
        out.scale = self.scale * float(c)
        return out

    @property
    def is_convex(self):
        return True

    # --- serialization ----------------------------------------------------

    def to_json(self):
        raise NotImplementedError

    def _base_json(self):
        return {"variant": self.variant, "scale": self.scale}


def _conjugate_numeric(eval_vec, s, lo=1e-12, hi=1e12, per_decade=200):
    """Grid/golden-section maximization of t -> s*t - phi(t)."""
    best = 0.0  # value at t = 0
    t_hi = hi
    for _round in range(4):
        n = max(64, int(per_decade * math.log10(t_hi / lo)))
        t = np.geomspace(lo, t_hi, n)
        with np.errstate(over="ignore", invalid="ignore"):
            ph = eval_vec(t)
            g = np.where(np.isfinite(ph), s * t - ph, -np.inf)
        i = int(np.argmax(g))
        if not np.isfinite(g[i]):
            return best  # phi infinite everywhere sampled beyond 0
        best = max(best, float(g[i]))
        if i < len(t) - 1:
            break
        # still increasing at the top of the bracket: either extend or diverge
        if t_hi >= 1e30:
            return np.inf
        t_hi = t_hi * 1e6
    # golden-section polish around the coarse argmax
    a = t[max(i - 1, 0)]
    b = t[min(i + 1, len(t) - 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - (b - a) * invphi
    d = a + (b - a) * invphi
    for _ in range(80):
        with np.errstate(over="ignore", invalid="ignore"):
            fc = s * c - float(eval_vec(np.array([c]))[0])
            fd = s * d - float(eval_vec(np.array([d]))[0])
        fc = -np.inf if not np.isfinite(fc) else fc
        fd = -np.inf if not np.isfinite(fd) else fd
        if fc >= fd:
            b, d = d, c
            c = b - (b - a) * invphi
        else:
            a, c = c, d
            d = a + (b - a) * invphi
        best = max(best, fc, fd)
    return best


# ---------------------------------------------------------------------------
# power law
# ---------------------------------------------------------------------------

class _BoundPower:
    def __init__(self, p, coef, m):
        self.p, self.coef, self.m = p, coef, m

    def eval(self, t):
        with np.errstate(over="ignore"):
            return self.coef * np.asarray(t, dtype=float) ** self.p

    def d_minus(self, t):
        return self._d(t)

    def d_plus(self, t):
        return self._d(t)

    def _d(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            d = self.coef * self.p * t ** (self.p - 1.0)
        if self.p == 1.0:
            return np.full_like(t, self.coef * self.p)
        return np.where(t > 0, d, 0.0)


class PowerPhi(PhiSpec):
    """phi(t) = scale * t**p, x-independent, p >= 1."""

    variant = "power"

    def __init__(self, p, scale=1.0):
        super().__init__(scale)
        if not (p >= 1):
            raise ValueError("exponent must be >= 1")
        self.p = float(p)

    def bind(self, points):
        return _BoundPower(self.p, self.scale, len(points))

    def conjugate(self, x, s):
        s = float(s)
        if s < 0:
            raise ValueError("s must be non-negative")
        if s == 0.0:
            return 0.0
        p, c = self.p, self.scale
        if p == 1.0:
            return 0.0 if s <= c else np.inf
        # maximize s*t - c*t^p at t* = (s/(c p))^(1/(p-1))
        pc = p / (p - 1.0)
        return ((p - 1.0) / p) * (c * p) ** (-1.0 / (p - 1.0)) * s**pc

    def to_json(self):
        return {**self._base_json(), "p": self.p}


# ---------------------------------------------------------------------------
# variable exponent
# ---------------------------------------------------------------------------

class _BoundVarExp:
    def __init__(self, p_arr, coef):
        self.p = p_arr
        self.coef = coef
        self.fin = np.isfinite(p_arr)

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            v = t**self.p  # IEEE: t**inf is 0 for t<1, 1 at t=1, inf for t>1
        v = np.where(t == 0.0, 0.0, v)
        return self.coef * v

    def d_minus(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            d = self.coef * self.p * t ** (self.p - 1.0)
        d = np.where(t > 0, d, 0.0)
        if not self.fin.all():
            inf_fiber = ~self.fin
            d = np.where(inf_fiber & (t <= 1.0), 0.0, d)
            d = np.where(inf_fiber & (t > 1.0), np.inf, d)
        return d

    def d_plus(self, t):
        t = np.asarray(t, dtype=float)
        d = self.d_minus(t)
        if not self.fin.all():
            d = np.where(~self.fin & (t >= 1.0), np.inf, d)
            d = np.where(~self.fin & (t < 1.0), 0.0, d)
        return d


class VariableExponentPhi(PhiSpec):
    """phi(x, t) = scale * t**p(x) with an exponent field p(x) > 1 (inf allowed)."""

    variant = "variable-exponent"

    def __init__(self, p_field, scale=1.0):
        super().__init__(scale)
        self.p_field = p_field

    def bind(self, points):
        p = np.asarray(self.p_field(points), dtype=float)
        if np.any(p[np.isfinite(p)] <= 1.0):
            raise DomainError("exponent field must exceed 1 wherever finite")
        return _BoundVarExp(p, self.scale)

    def to_json(self):
        return {**self._base_json(), "p_field": self.p_field.to_json()}


# ---------------------------------------------------------------------------
# double phase
# ---------------------------------------------------------------------------

class _BoundDoublePhase:
    def __init__(self, p, q, a_arr, coef):
        self.p, self.q, self.a, self.coef = p, q, a_arr, coef

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):
            return self.coef * (t**self.p + self.a * t**self.q)

    def d_minus(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            d = self.coef * (self.p * t ** (self.p - 1.0) + self.a * self.q * t ** (self.q - 1.0))
        return np.where(t > 0, d, 0.0)

    def d_plus(self, t):
        return self.d_minus(t)


class DoublePhasePhi(PhiSpec):
    """phi(x, t) = scale * (t**p + a(x) * t**q), 1 <= p <= q, weight a >= 0."""

    variant = "double-phase"

    def __init__(self, p, q, a_field, scale=1.0):
        super().__init__(scale)
        if not (1 <= p <= q):
            raise ValueError("need 1 <= p <= q")
        self.p, self.q = float(p), float(q)
        self.a_field = a_field

    def bind(self, points):
        a = np.asarray(self.a_field(points), dtype=float)
        if np.any(a < 0):
            raise DomainError("double-phase weight must be non-negative")
        return _BoundDoublePhase(self.p, self.q, a, self.scale)

    def to_json(self):
        return {**self._base_json(), "p": self.p, "q": self.q, "a_field": self.a_field.to_json()}


# ---------------------------------------------------------------------------
# sampled
# ---------------------------------------------------------------------------

class _BoundSampled:
    def __init__(self, spec, rows):
        self.spec = spec
        self.rows = np.asarray(rows)  # sample-row index per bound point
        self.slopes = spec._row_slopes(self.rows)

    def eval(self, t):
        return self.spec._interp(self.rows, np.asarray(t, dtype=float), self.slopes) * self.spec.scale

    def d_minus(self, t):
        return (
            self.spec._deriv(self.rows, np.asarray(t, dtype=float), -1, self.slopes)
            * self.spec.scale
        )

    def d_plus(self, t):
        return (
            self.spec._deriv(self.rows, np.asarray(t, dtype=float), +1, self.slopes)
            * self.spec.scale
        )


class SampledPhi(PhiSpec):
    """Growth function tabulated on a positive t-grid.

    Between nodes the interpolation is a power law (linear in log-log), which
    preserves monotone-ratio properties that straight linear interpolation can
    break.  Values may be +inf; the function is +inf past its first infinite
    node.  Queries above the grid raise ExtrapolationError unless
    ``allow_extrapolation`` continues the last finite slope.
    """

    variant = "sampled"

    def __init__(self, t_grid, values, points=None, allow_extrapolation=False, scale=1.0):
        super().__init__(scale)
        self.t_grid = np.asarray(t_grid, dtype=float)
        if self.t_grid.ndim != 1 or len(self.t_grid) < 2:
            raise ValueError("t_grid must be a 1-D grid with at least two nodes")
        if np.any(self.t_grid <= 0) or np.any(np.diff(self.t_grid) <= 0):
            raise ValueError("t_grid must be strictly increasing and positive")
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v.reshape(1, -1)
        if v.shape[1] != len(self.t_grid):
            raise ValueError("values shape does not match t_grid")
        if np.any(v < 0):
            raise ValueError("values must be non-negative")
        fin = np.where(np.isfinite(v), v, np.inf)
        with np.errstate(invalid="ignore"):
            if np.any(np.diff(fin, axis=1) < -1e-12 * np.maximum(fin[:, :-1], 1.0)):
                raise ValueError("values must be non-decreasing along the t-grid")
        self.values = v
        self.points = None if points is None else np.asarray(points, dtype=float).reshape(-1, 2)
        if self.points is not None and len(self.points) != v.shape[0]:
            raise ValueError("one value row per sample point required")
        self.allow_extrapolation = bool(allow_extrapolation)

    # row lookup: nearest spatial sample (single row if x-independent)
    def _row_of(self, points):
        if self.points is None or self.values.shape[0] == 1:
            return np.zeros(len(points), dtype=int)
        d2 = ((points[:, None, :] - self.points[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d2, axis=1)

    def bind(self, points):
        return _BoundSampled(self, self._row_of(np.atleast_2d(points)))

    def _segment_exponent(self, row, i):
        """Power-law exponent on segment [t_i, t_{i+1}] for one row."""
        v0, v1 = self.values[row, i], self.values[row, i + 1]
        t0, t1 = self.t_grid[i], self.t_grid[i + 1]
        if not np.isfinite(v1) or v0 == 0.0:
            return np.nan  # handled by callers
        return math.log(v1 / v0) / math.log(t1 / t0)

    def _row_slopes(self, rows):
        uniq, inv = np.unique(rows, return_inverse=True)
        first = np.array([self._first_slope(r) for r in uniq])[inv]
        last = np.array([self._last_slope(r) for r in uniq])[inv]
        return first, last

    def _interp(self, rows, t, slopes=None):
        tg, V = self.t_grid, self.values
        t = np.asarray(t, dtype=float)
        rows = np.asarray(rows)
        n = len(tg)
        above = t > tg[-1]
        if above.any() and not self.allow_extrapolation:
            raise ExtrapolationError(
                f"t={float(t[above][0])} above sampled grid (max {tg[-1]})"
            )
        first, last = slopes if slopes is not None else self._row_slopes(rows)
        i = np.clip(np.searchsorted(tg, t, side="right") - 1, 0, n - 2)
        v0 = V[rows, i]
        v1 = V[rows, i + 1]
        t0 = tg[i]
        t1 = tg[i + 1]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            g = np.log(v1 / v0) / np.log(t1 / t0)
            val = v0 * (t / t0) ** g
            val = np.where(v0 == 0.0, v1 * (t - t0) / (t1 - t0), val)
            val = np.where(~np.isfinite(v1) & (t > t0), np.inf, val)
            val = np.where(~np.isfinite(v0), np.inf, val)
            val = np.where(t == t0, v0, val)
            val = np.where(t == t1, v1, val)
            below = t < tg[0]
            vfirst = V[rows, 0]
            ext_lo = np.where(np.isfinite(vfirst), vfirst * (t / tg[0]) ** first, np.inf)
            val = np.where(below, ext_lo, val)
            vlast = V[rows, n - 1]
            ext_hi = np.where(np.isfinite(vlast), vlast * (t / tg[-1]) ** last, np.inf)
            val = np.where(above, ext_hi, val)
        val = np.where(t == 0.0, 0.0, val)
        return val

    def _first_slope(self, row):
        v = self.values[row]
        j = 0
        while j + 1 < len(v) and (v[j] == 0.0 or not np.isfinite(v[j + 1])):
            j += 1
        if v[j] == 0.0 or v[j + 1] <= v[j]:
            return 1.0
        return math.log(v[j + 1] / v[j]) / math.log(self.t_grid[j + 1] / self.t_grid[j])

    def _last_slope(self, row):
        v = self.values[row]
        j = len(v) - 2
        while j > 0 and (not np.isfinite(v[j]) or v[j] == 0.0):
            j -= 1
        if v[j] == 0.0 or not np.isfinite(v[j + 1]) or v[j + 1] <= v[j]:
            return 1.0
        return math.log(v[j + 1] / v[j]) / math.log(self.t_grid[j + 1] / self.t_grid[j])

    def _deriv(self, rows, t, side, slopes=None):
        tg, V = self.t_grid, self.values
        t = np.asarray(t, dtype=float)
        rows = np.asarray(rows)
        n = len(tg)
        above = t > tg[-1]
        if above.any() and not self.allow_extrapolation:
            raise ExtrapolationError(
                f"t={float(t[above][0])} above sampled grid (max {tg[-1]})"
            )
        first, last = slopes if slopes is not None else self._row_slopes(rows)
        val = self._interp(rows, t, (first, last))
        i = np.clip(np.searchsorted(tg, t, side="right") - 1, 0, n - 2)
        v0 = V[rows, i]
        v1 = V[rows, i + 1]
        t0 = tg[i]
        t1 = tg[i + 1]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            g = np.log(v1 / v0) / np.log(t1 / t0)
            d = g * val / t
            d = np.where(v0 == 0.0, v1 / (t1 - t0), d)
            d = np.where(~np.isfinite(v0) | (~np.isfinite(v1) & (t > t0)), np.inf, d)
            below = t < tg[0]
            d = np.where(below, first * val / t, d)
            d = np.where(above, last * val / t, d)
            d = np.where(above & ~np.isfinite(val), np.inf, d)
        # node hits: one-sided difference quotients on the native grid
        idx = np.searchsorted(tg, t)
        for j_cand in (idx - 1, idx):
            jc = np.clip(j_cand, 0, n - 1)
            hit = np.abs(t - tg[jc]) <= 1e-12 * tg[jc]
            if not hit.any():
                continue
            j = jc[hit]
            r = rows[hit]
            dd = np.empty(j.shape, dtype=float)
            if side < 0:
                interiorj = j > 0
                with np.errstate(invalid="ignore"):
                    prev = np.where(
                        interiorj,
                        (V[r, j] - V[r, np.maximum(j - 1, 0)])
                        / (tg[j] - tg[np.maximum(j - 1, 0)]),
                        first[hit] * V[r, 0] / tg[0],
                    )
                bad = interiorj & ~(np.isfinite(V[r, j]) & np.isfinite(V[r, np.maximum(j - 1, 0)]))
                dd = np.where(bad, np.inf, prev)
                dd = np.where(~interiorj & ~np.isfinite(V[r, 0]), np.inf, dd)
            else:
                lastj = j == n - 1
                jn = np.minimum(j + 1, n - 1)
                with np.errstate(invalid="ignore"):
                    nxt = np.where(
                        lastj,
                        last[hit] * V[r, n - 1] / tg[-1],
                        (V[r, jn] - V[r, j]) / (tg[jn] - tg[j]),
                    )
                bad = ~lastj & ~(np.isfinite(V[r, jn]) & np.isfinite(V[r, j]))
                dd = np.where(bad, np.inf, nxt)
                dd = np.where(lastj & ~np.isfinite(V[r, n - 1]), np.inf, dd)
                if np.any(lastj) and not self.allow_extrapolation:
                    raise ExtrapolationError("right derivative at grid top needs extrapolation")
            d[hit] = dd
        # origin conventions
        zero = t == 0.0
        if zero.any():
            if side < 0:
                d = np.where(zero, 0.0, d)
            else:
                v00 = V[rows, 0]
                d0 = np.where(first > 1.0, 0.0, np.where(first == 1.0, v00 / tg[0], np.inf))
                d = np.where(zero, d0, d)
        return d

    @property
    def is_convex(self):
        return True

    # --- serialization ----------------------------------------------------

    def to_json(self):
        raise NotImplementedError

    def _base_json(self):
        return {"variant": self.variant, "scale": self.scale}


def _conjugate_numeric(eval_vec, s, lo=1e-12, hi=1e12, per_decade=200):
    """Grid/golden-section maximization of t -> s*t - phi(t)."""
    best = 0.0  # value at t = 0
    t_hi = hi
    for _round in range(4):
        n = max(64, int(per_decade * math.log10(t_hi / lo)))
        t = np.geomspace(lo, t_hi, n)
        with np.errstate(over="ignore", invalid="ignore"):
            ph = eval_vec(t)
            g = np.where(np.isfinite(ph), s * t - ph, -np.inf)
        i = int(np.argmax(g))
        if not np.isfinite(g[i]):
            return best  # phi infinite everywhere sampled beyond 0
        best = max(best, float(g[i]))
        if i < len(t) - 1:
            break
        # still increasing at the top of the bracket: either extend or diverge
        if t_hi >= 1e30:
            return np.inf
        t_hi = t_hi * 1e6
    # golden-section polish around the coarse argmax
    a = t[max(i - 1, 0)]
    b = t[min(i + 1, len(t) - 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - (b - a) * invphi
    d = a + (b - a) * invphi
    for _ in range(80):
        with np.errstate(over="ignore", invalid="ignore"):
            fc = s * c - float(eval_vec(np.array([c]))[0])
            fd = s * d - float(eval_vec(np.array([d]))[0])
        fc = -np.inf if not np.isfinite(fc) else fc
        fd = -np.inf if not np.isfinite(fd) else fd
        if fc >= fd:
            b, d = d, c
            c = b - (b - a) * invphi
        else:
            a, c = c, d
            d = a + (b - a) * invphi
        best = max(best, fc, fd)
    return best


# ---------------------------------------------------------------------------
# power law
# ---------------------------------------------------------------------------

class _BoundPower:
    def __init__(self, p, coef, m):
        self.p, self.coef, self.m = p, coef, m

    def eval(self, t):
        with np.errstate(over="ignore"):
            return self.coef * np.asarray(t, dtype=float) ** self.p

    def d_minus(self, t):
        return self._d(t)

    def d_plus(self, t):
        return self._d(t)

    def _d(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            d = self.coef * self.p * t ** (self.p - 1.0)
        if self.p == 1.0:
            return np.full_like(t, self.coef * self.p)
        return np.where(t > 0, d, 0.0)


class PowerPhi(PhiSpec):
    """phi(t) = scale * t**p, x-independent, p >= 1."""

    variant = "power"

    def __init__(self, p, scale=1.0):
        super().__init__(scale)
        if not (p >= 1):
            raise ValueError("exponent must be >= 1")
        self.p = float(p)

    def bind(self, points):
        return _BoundPower(self.p, self.scale, len(points))

    def conjugate(self, x, s):
        s = float(s)
        if s < 0:
            raise ValueError("s must be non-negative")
        if s == 0.0:
            return 0.0
        p, c = self.p, self.scale
        if p == 1.0:
            return 0.0 if s <= c else np.inf
        # maximize s*t - c*t^p at t* = (s/(c p))^(1/(p-1))
        pc = p / (p - 1.0)
        return ((p - 1.0) / p) * (c * p) ** (-1.0 / (p - 1.0)) * s**pc

    def to_json(self):
        return {**self._base_json(), "p": self.p}


# ---------------------------------------------------------------------------
# variable exponent
# ---------------------------------------------------------------------------

class _BoundVarExp:
    def __init__(self, p_arr, coef):
        self.p = p_arr
        self.coef = coef
        self.fin = np.isfinite(p_arr)

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            v = t**self.p  # IEEE: t**inf is 0 for t<1, 1 at t=1, inf for t>1
        v = np.where(t == 0.0, 0.0, v)
        return self.coef * v

    def d_minus(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            d = self.coef * self.p * t ** (self.p - 1.0)
        d = np.where(t > 0, d, 0.0)
        if not self.fin.all():
            inf_fiber = ~self.fin
            d = np.where(inf_fiber & (t <= 1.0), 0.0, d)
            d = np.where(inf_fiber & (t > 1.0), np.inf, d)
        return d

    def d_plus(self, t):
        t = np.asarray(t, dtype=float)
        d = self.d_minus(t)
        if not self.fin.all():
            d = np.where(~self.fin & (t >= 1.0), np.inf, d)
            d = np.where(~self.fin & (t < 1.0), 0.0, d)
        return d


class VariableExponentPhi(PhiSpec):
    """phi(x, t) = scale * t**p(x) with an exponent field p(x) > 1 (inf allowed)."""

    variant = "variable-exponent"

    def __init__(self, p_field, scale=1.0):
        super().__init__(scale)
        self.p_field = p_field

    def bind(self, points):
        p = np.asarray(self.p_field(points), dtype=float)
        if np.any(p[np.isfinite(p)] <= 1.0):
            raise DomainError("exponent field must exceed 1 wherever finite")
        return _BoundVarExp(p, self.scale)

    def to_json(self):
        return {**self._base_json(), "p_field": self.p_field.to_json()}


# ---------------------------------------------------------------------------
# double phase
# ---------------------------------------------------------------------------

class _BoundDoublePhase:
    def __init__(self, p, q, a_arr, coef):
        self.p, self.q, self.a, self.coef = p, q, a_arr, coef

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):
            return self.coef * (t**self.p + self.a * t**self.q)

    def d_minus(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            d = self.coef * (self.p * t ** (self.p - 1.0) + self.a * self.q * t ** (self.q - 1.0))
        return np.where(t > 0, d, 0.0)

    def d_plus(self, t):
        return self.d_minus(t)


class DoublePhasePhi(PhiSpec):
    """phi(x, t) = scale * (t**p + a(x) * t**q), 1 <= p <= q, weight a >= 0."""

    variant = "double-phase"

    def __init__(self, p, q, a_field, scale=1.0):
        super().__init__(scale)
        if not (1 <= p <= q):
            raise ValueError("need 1 <= p <= q")
        self.p, self.q = float(p), float(q)
        self.a_field = a_field

    def bind(self, points):
        a = np.asarray(self.a_field(points), dtype=float)
        if np.any(a < 0):
            raise DomainError("double-phase weight must be non-negative")
        return _BoundDoublePhase(self.p, self.q, a, self.scale)

    def to_json(self):
        return {**self._base_json(), "p": self.p, "q": self.q, "a_field": self.a_field.to_json()}


# ---------------------------------------------------------------------------
# sampled
# ---------------------------------------------------------------------------

class _BoundSampled:
    def __init__(self, spec, rows):
        self.spec = spec
        self.rows = np.asarray(rows)  # sample-row index per bound point
        self.slopes = spec._row_slopes(self.rows)

    def eval(self, t):
        return self.spec._interp(self.rows, np.asarray(t, dtype=float), self.slopes) * self.spec.scale

    def d_minus(self, t):
        return (
            self.spec._deriv(self.rows, np.asarray(t, dtype=float), -1, self.slopes)
            * self.spec.scale
        )

    def d_plus(self, t):
        return (
            self.spec._deriv(self.rows, np.asarray(t, dtype=float), +1, self.slopes)
            * self.spec.scale
        )


class SampledPhi(PhiSpec):
    """Growth function tabulated on a positive t-grid.

    Between nodes the interpolation is a power law (linear in log-log), which
    preserves monotone-ratio properties that straight linear interpolation can
    break.  Values may be +inf; the function is +inf past its first infinite
    node.  Queries above the grid raise ExtrapolationError unless
    ``allow_extrapolation`` continues the last finite slope.
    """

    variant = "sampled"

    def __init__(self, t_grid, values, points=None, allow_extrapolation=False, scale=1.0):
        super().__init__(scale)
        self.t_grid = np.asarray(t_grid, dtype=float)
        if self.t_grid.ndim != 1 or len(self.t_grid) < 2:
            raise ValueError("t_grid must be a 1-D grid with at least two nodes")
        if np.any(self.t_grid <= 0) or np.any(np.diff(self.t_grid) <= 0):
            raise ValueError("t_grid must be strictly increasing and positive")
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v.reshape(1, -1)
        if v.shape[1] != len(self.t_grid):
            raise ValueError("values shape does not match t_grid")
        if np.any(v < 0):
            raise ValueError("values must be non-negative")
        fin = np.where(np.isfinite(v), v, np.inf)
        with np.errstate(invalid="ignore"):
            if np.any(np.diff(fin, axis=1) < -1e-12 * np.maximum(fin[:, :-1], 1.0)):
                raise ValueError("values must be non-decreasing along the t-grid")
        self.values = v
        self.points = None if points is None else np.asarray(points, dtype=float).reshape(-1, 2)
        if self.points is not None and len(self.points) != v.shape[0]:
            raise ValueError("one value row per sample point required")
        self.allow_extrapolation = bool(allow_extrapolation)

    # row lookup: nearest spatial sample (single row if x-independent)
    def _row_of(self, points):
        if self.points is None or self.values.shape[0] == 1:
            return np.zeros(len(points), dtype=int)
        d2 = ((points[:, None, :] - self.points[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d2, axis=1)

    def bind(self, points):
        return _BoundSampled(self, self._row_of(np.atleast_2d(points)))

    def _segment_exponent(self, row, i):
        """Power-law exponent on segment [t_i, t_{i+1}] for one row."""
        v0, v1 = self.values[row, i], self.values[row, i + 1]
        t0, t1 = self.t_grid[i], self.t_grid[i + 1]
        if not np.isfinite(v1) or v0 == 0.0:
            return np.nan  # handled by callers
        return math.log(v1 / v0) / math.log(t1 / t0)

    def _row_slopes(self, rows):
        uniq, inv = np.unique(rows, return_inverse=True)
        first = np.array([self._first_slope(r) for r in uniq])[inv]
        last = np.array([self._last_slope(r) for r in uniq])[inv]
        return first, last

    def _interp(self, rows, t, slopes=None):
        tg, V = self.t_grid, self.values
        t = np.asarray(t, dtype=float)
        rows = np.asarray(rows)
        n = len(tg)
        above = t > tg[-1]
        if above.any() and not self.allow_extrapolation:
            raise ExtrapolationError(
                f"t={float(t[above][0])} above sampled grid (max {tg[-1]})"
            )
        first, last = slopes if slopes is not None else self._row_slopes(rows)
        i = np.clip(np.searchsorted(tg, t, side="right") - 1, 0, n - 2)
        v0 = V[rows, i]
        v1 = V[rows, i + 1]
        t0 = tg[i]
        t1 = tg[i + 1]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            g = np.log(v1 / v0) / np.log(t1 / t0)
            val = v0 * (t / t0) ** g
            val = np.where(v0 == 0.0, v1 * (t - t0) / (t1 - t0), val)
            val = np.where(~np.isfinite(v1) & (t > t0), np.inf, val)
            val = np.where(~np.isfinite(v0), np.inf, val)
            val = np.where(t == t0, v0, val)
            val = np.where(t == t1, v1, val)
            below = t < tg[0]
            vfirst = V[rows, 0]
            ext_lo = np.where(np.isfinite(vfirst), vfirst * (t / tg[0]) ** first, np.inf)
            val = np.where(below, ext_lo, val)
            vlast = V[rows, n - 1]
            ext_hi = np.where(np.isfinite(vlast), vlast * (t / tg[-1]) ** last, np.inf)
            val = np.where(above, ext_hi, val)
        val = np.where(t == 0.0, 0.0, val)
        return val

    def _first_slope(self, row):
        v = self.values[row]
        j = 0
        while j + 1 < len(v) and (v[j] == 0.0 or not np.isfinite(v[j + 1])):
            j += 1
        if v[j] == 0.0 or v[j + 1] <= v[j]:
            return 1.0
        return math.log(v[j + 1] / v[j]) / math.log(self.t_grid[j + 1] / self.t_grid[j])

    def _last_slope(self, row):
        v = self.values[row]
        j = len(v) - 2
        while j > 0 and (not np.isfinite(v[j]) or v[j] == 0.0):
            j -= 1
        if v[j] == 0.0 or not np.isfinite(v[j + 1]) or v[j + 1] <= v[j]:
            return 1.0
        return math.log(v[j + 1] / v[j]) / math.log(self.t_grid[j + 1] / self.t_grid[j])

    def _deriv(self, rows, t, side, slopes=None):
        tg, V = self.t_grid, self.values
        t = np.asarray(t, dtype=float)
        rows = np.asarray(rows)
        n = len(tg)
        above = t > tg[-1]
        if above.any() and not self.allow_extrapolation:
            raise ExtrapolationError(
                f"t={float(t[above][0])} above sampled grid (max {tg[-1]})"
            )
        first, last = slopes if slopes is not None else self._row_slopes(rows)
        val = self._interp(rows, t, (first, last))
        i = np.clip(np.searchsorted(tg, t, side="right") - 1, 0, n - 2)
        v0 = V[rows, i]
        v1 = V[rows, i + 1]
        t0 = tg[i]
        t1 = tg[i + 1]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            g = np.log(v1 / v0) / np.log(t1 / t0)
            d = g * val / t
            d = np.where(v0 == 0.0, v1 / (t1 - t0), d)
            d = np.where(~np.isfinite(v0) | (~np.isfinite(v1) & (t > t0)), np.inf, d)
            below = t < tg[0]
            d = np.where(below, first * val / t, d)
            d = np.where(above, last * val / t, d)
            d = np.where(above & ~np.isfinite(val), np.inf, d)
        # node hits: one-sided difference quotients on the native grid
        idx = np.searchsorted(tg, t)
        for j_cand in (idx - 1, idx):
            jc = np.clip(j_cand, 0, n - 1)
            hit = np.abs(t - tg[jc]) <= 1e-12 * tg[jc]
            if not hit.any():
                continue
            j = jc[hit]
            r = rows[hit]
            dd = np.empty(j.shape, dtype=float)
            if side < 0:
                interiorj = j > 0
                with np.errstate(invalid="ignore"):
                    prev = np.where(
                        interiorj,
                        (V[r, j] - V[r, np.maximum(j - 1, 0)])
                        / (tg[j] - tg[np.maximum(j - 1, 0)]),
                        first[hit] * V[r, 0] / tg[0],
                    )
                bad = interiorj & ~(np.isfinite(V[r, j]) & np.isfinite(V[r, np.maximum(j - 1, 0)]))
                dd = np.where(bad, np.inf, prev)
                dd = np.where(~interiorj & ~np.isfinite(V[r, 0]), np.inf, dd)
            else:
                lastj = j == n - 1
                jn = np.minimum(j + 1, n - 1)
                with np.errstate(invalid="ignore"):
                    nxt = np.where(
                        lastj,
                        last[hit] * V[r, n - 1] / tg[-1],
                        (V[r, jn] - V[r, j]) / (tg[jn] - tg[j]),
                    )
                bad = ~lastj & ~(np.isfinite(V[r, jn]) & np.isfinite(V[r, j]))
                dd = np.where(bad, np.inf, nxt)
                dd = np.where(lastj & ~np.isfinite(V[r, n - 1]), np.inf, dd)
                if np.any(lastj) and not self.allow_extrapolation:
                    raise ExtrapolationError("right derivative at grid top needs extrapolation")
            d[hit] = dd
        # origin conventions
        zero = t == 0.0
        if zero.any():
            if side < 0:
                d = np.where(zero, 0.0, d)
            else:
                v00 = V[rows, 0]
                d0 = np.where(first > 1.0, 0.0, np.where(first == 1.0, v00 / tg[0], np.inf))
                d = np.where(zero, d0, d)
        return d

    def _deriv_one(self, row, t, side):
        tg, v = self.t_grid, self.values[row]
        if t == 0.0:
            if side < 0:
                return 0.0
            g = self._first_slope(row)
            if g > 1.0:
                return 0.0
            return v[0] / tg[0] if g == 1.0 else np.inf
        # locate: node (within 1e-12 relative) or interior of a segment
        i = int(np.searchsorted(tg, t))
        at_node = None
        for j in (i - 1, i):
            if 0 <= j < len(tg) and abs(t - tg[j]) <= 1e-12 * tg[j]:
                at_node = j
                break
        if at_node is not None:
            j = at_node
            if side < 0:
                if j == 0:
                    g = self._first_slope(row)
                    return g * v[0] / tg[0] if np.isfinite(v[0]) else np.inf
                if not (np.isfinite(v[j]) and np.isfinite(v[j - 1])):
                    return np.inf
                return (v[j] - v[j - 1]) / (tg[j] - tg[j - 1])
            if j == len(tg) - 1:
                if not self.allow_extrapolation:
                    raise ExtrapolationError("right derivative at grid top needs extrapolation")
                g = self._last_slope(row)
                return g * v[-1] / tg[-1] if np.isfinite(v[-1]) else np.inf
            if not np.isfinite(v[j + 1]):
                return np.inf
            return (v[j + 1] - v[j]) / (tg[j + 1] - tg[j])
        # strictly inside a segment (or outside the grid): smooth interpolant
        if t < tg[0]:
            g = self._first_slope(row)
            val = self._interp_one(row, t)
            return g * val / t
        if t > tg[-1]:
            if not self.allow_extrapolation:
                raise ExtrapolationError(f"t={t} above sampled grid (max {tg[-1]})")
            g = self._last_slope(row)
            val = self._interp_one(row, t)
            return g * val / t if np.isfinite(val) else np.inf
        i = min(int(np.searchsorted(tg, t, side="right")) - 1, len(tg) - 2)
        if not np.isfinite(v[i]) or not np.isfinite(v[i + 1]):
            return np.inf
        if v[i] == 0.0:
            return v[i + 1] / (tg[i + 1] - tg[i])
        g = math.log(v[i + 1] / v[i]) / math.log(tg[i + 1] / tg[i]) if v[i + 1] > 0 else 0.0
        return g * self._interp_one(row, t) / t

    @property
    def is_convex(self):
        # midpoint convexity spot check on the native grid
        tg = self.t_grid
        for row in range(self.values.shape[0]):
            b = _BoundSampled(self, np.array([row]))
            for i in range(0, len(tg) - 2, max(1, len(tg) // 64)):
                s, t = tg[i], tg[i + 2]
                mid = 0.5 * (s + t)
                vm = b.eval(np.array([mid]))[0]
                vs = b.eval(np.array([s]))[0]
                vt = b.eval(np.array([t]))[0]
                if np.isfinite(vs) and np.isfinite(vt):
                    if vm > 0.5 * (vs + vt) + 1e-9 * (1.0 + abs(vs) + abs(vt)):
                        return False
        return True

    def to_json(self):
        out = {
            **self._base_json(),
            "t_grid": self.t_grid.tolist(),
            "values": self.values.tolist(),
            "allow_extrapolation": self.allow_extrapolation,
        }
        if self.points is not None:
            out["points"] = self.points.tolist()
        return out


# ---------------------------------------------------------------------------
# conjugate as a growth function (evaluation only)
# ---------------------------------------------------------------------------

class _BoundConjugate:
    def __init__(self, source, points):
        self.source = source
        self.points = points

    def eval(self, t):
        t = np.asarray(t, dtype=float)
        return np.array(
            [self.source.conjugate(self.points[k], t[k]) for k in range(len(t))]
        )

    def d_minus(self, t):  # numeric; conjugates are only modular-evaluated
        return self._num_d(t)

    def d_plus(self, t):
        return self._num_d(t)

    def _num_d(self, t):
        t = np.asarray(t, dtype=float)
        h = np.maximum(1e-7 * t, 1e-12)
        up = self.eval(t + h)
        lo = self.eval(np.maximum(t - h, 0.0))
        with np.errstate(invalid="ignore"):
            return (up - lo) / (2 * h)


class ConjugatePhi(PhiSpec):
    """The conjugate of another growth function, as an evaluatable function."""

    variant = "conjugate"

    def __init__(self, source):
        super().__init__(1.0)
        self.source = source

    def bind(self, points):
        return _BoundConjugate(self.source, np.atleast_2d(points))

    def to_json(self):
        return {**self._base_json(), "source": self.source.to_json()}


# ---------------------------------------------------------------------------
# serialization entry point
# ---------------------------------------------------------------------------

def phi_from_json(obj):
    """Rebuild any serialized growth function (including truncations)."""
    variant = obj["variant"]
    scale = obj.get("scale", 1.0)
    if variant == "power":
        return PowerPhi(obj["p"], scale=scale)
    if variant == "variable-exponent":
        return VariableExponentPhi(SpatialField.from_json(obj["p_field"]), scale=scale)
    if variant == "double-phase":
        return DoublePhasePhi(
            obj["p"], obj["q"], SpatialField.from_json(obj["a_field"]), scale=scale
        )
    if variant == "sampled":
        return SampledPhi(
            obj["t_grid"],
            obj["values"],
            points=obj.get("points"),
            allow_extrapolation=obj.get("allow_extrapolation", False),
            scale=scale,
        )
    if variant == "truncated":
        from .regularize import TruncatedPhi

        return TruncatedPhi(phi_from_json(obj["source"]), obj["p"], obj["lambda"], scale=scale)
    if variant == "conjugate":
        return ConjugatePhi(phi_from_json(obj["source"]))
    raise ValueError(f"unknown variant {variant!r}")
