"""Sampled certification of structural conditions on growth functions.

Checks the normalization condition (A0), the almost-continuity condition
(A1) across balls, and the growth conditions (aInc)_p / (aDec)_q, returning
certified constants or explicit counterexample witnesses.  All certificates
are sampled: the almost-everywhere statements of the continuum theory are
verified on finitely many spatial points and t-nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .phi import PowerPhi, geometric_grid, r2_points_in_ball, r2_unit_square

__all__ = [
    "BallRegion",
    "PointsRegion",
    "ShapeRegion",
    "GrowthEnvelope",
    "GrowthResult",
    "A0Result",
    "A1Result",
    "phi_matrix",
    "phi_sup",
    "phi_inf",
    "check_growth",
    "check_a0",
    "check_a1",
    "caccioppoli_constant",
]

BETA_FLOOR = 2.0**-20


# ---------------------------------------------------------------------------
# regions: finite spatial sample sets standing in for subsets of the domain
# ---------------------------------------------------------------------------

class BallRegion:
    """A ball sampled by its center, quasi-random interior points and a
    boundary ring (64 + 1 + 16 points by default)."""

    def __init__(self, center, radius, n_interior=64, n_boundary=16, clip=None):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        self.n_interior = n_interior
        self.n_boundary = n_boundary
        self.clip = clip  # optional predicate pts -> bool mask (domain membership)

    @property
    def measure(self):
        return np.pi * self.radius**2

    def points(self):
        pts = [self.center.reshape(1, 2)]
        pts.append(r2_points_in_ball(self.center, self.radius, self.n_interior))
        th = 2 * np.pi * np.arange(self.n_boundary) / max(self.n_boundary, 1)
        ring = self.center + self.radius * np.stack([np.cos(th), np.sin(th)], axis=1)
        pts.append(ring)
        out = np.concatenate(pts, axis=0)
        if self.clip is not None:
            out = out[self.clip(out)]
        return out

    def describe(self):
        return {"region": "ball", "center": self.center.tolist(), "radius": self.radius}


class PointsRegion:
    """An explicit finite sample set."""

    def __init__(self, points):
        self._pts = np.atleast_2d(np.asarray(points, dtype=float))

    def points(self):
        return self._pts

    def describe(self):
        return {"region": "points", "count": len(self._pts)}


class ShapeRegion:
    """Quasi-random samples of a whole meshed shape (square/disk/annulus)."""

    def __init__(self, shape_descr, n=256):
        self.shape = dict(shape_descr)
        self.n = n

    def points(self):
        kind = self.shape["shape"]
        if kind == "square":
            lo = np.asarray(self.shape.get("lo", (0.0, 0.0)), dtype=float)
            size = float(self.shape.get("size", 1.0))
            return lo + size * r2_unit_square(self.n)
        center = np.asarray(self.shape.get("center", (0.0, 0.0)), dtype=float)
        if kind == "disk":
            return r2_points_in_ball(center, float(self.shape["radius"]), self.n)
        if kind == "annulus":
            r_in, r_out = float(self.shape["r_in"]), float(self.shape["r_out"])
            uv = r2_unit_square(2 * self.n)
            # area-uniform radii restricted to the ring, drop hole hits
            r = r_out * np.sqrt(uv[:, 0])
            keep = r >= r_in
            r, u = r[keep][: self.n], uv[keep, 1][: self.n]
            th = 2 * np.pi * u
            return center + np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
        raise ValueError(f"unknown shape {kind!r}")

    def describe(self):
        return {"region": "shape", **self.shape}


# ---------------------------------------------------------------------------
# matrices of phi over (points, t-grid)
# ---------------------------------------------------------------------------

def phi_matrix(phi, points, t_grid):
    """Values phi(x_i, t_j) as an (n_points, n_t) array (entries may be inf)."""
    points = np.atleast_2d(points)
    t_grid = np.asarray(t_grid, dtype=float)
    b = phi.bind(points)
    out = np.empty((len(points), len(t_grid)))
    for j, t in enumerate(t_grid):
        out[:, j] = b.eval(np.full(len(points), t))
    return out


def phi_sup(phi, points, t):
    """Sampled sup over the points of phi(., t); t may be an array."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return phi_matrix(phi, points, t).max(axis=0)


def phi_inf(phi, points, t):
    """Sampled inf over the points of phi(., t); t may be an array."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return phi_matrix(phi, points, t).min(axis=0)


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass
class GrowthResult:
    ok: bool
    L_p: float
    L_q: float
    witness: Optional[dict] = None

    def to_json(self):
        return {"ok": self.ok, "L_p": self.L_p, "L_q": self.L_q, "witness": self.witness}


@dataclass
class A0Result:
    ok: bool
    beta: Optional[float]
    witness: Optional[dict] = None

    def to_json(self):
        return {"ok": self.ok, "beta": self.beta, "witness": self.witness}


@dataclass
class A1Result:
    ok: bool
    beta: Optional[float]
    vacuous: bool = False
    band: Optional[tuple] = None
    witness: Optional[dict] = None

    def to_json(self):
        return {
            "ok": self.ok,
            "beta": self.beta,
            "vacuous": self.vacuous,
            "band": list(self.band) if self.band else None,
            "witness": self.witness,
        }


@dataclass
class GrowthEnvelope:
    """Certified growth constants on a region: (aInc)_p with L_p, (aDec)_q
    with L_q, plus the (A0)/(A1) normalization constants."""

    p: float
    q: float
    L_p: float
    L_q: float
    beta_a0: float
    beta_a1: float
    region: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.p <= self.q):
            raise ValueError("need p <= q")
        if self.L_p < 1 or self.L_q < 1:
            raise ValueError("growth constants are >= 1")
        for b in (self.beta_a0, self.beta_a1):
            if not (0 < b <= 1):
                raise ValueError("beta constants lie in (0, 1]")

    def to_json(self):
        return {
            "p": self.p,
            "q": self.q,
            "L_p": self.L_p,
            "L_q": self.L_q,
            "beta_a0": self.beta_a0,
            "beta_a1": self.beta_a1,
            "region": self.region,
        }


# ---------------------------------------------------------------------------
# growth: almost-increasing / almost-decreasing ratio constants
# ---------------------------------------------------------------------------

def _ratio_constant(R, increasing):
    """Smallest sampled L for L-almost monotone rows of R (inf entries allowed).

    For *almost increasing* rows we need R[i, j] <= L R[i, k] for j < k; the
    smallest such L is max over k of prefix_max(R)[k-1] / R[i, k].  Almost
    decreasing is the mirrored statement.
    Returns (L, (i, j, k)) with the witness achieving the max.
    """
    R = np.asarray(R, dtype=float)
    if increasing:
        pref = np.maximum.accumulate(R, axis=1)[:, :-1]
        cur = R[:, 1:]
    else:
        pref = cur = None
        prefmin = np.minimum.accumulate(R, axis=1)[:, :-1]
        cur = prefmin
        pref = R[:, 1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = pref / cur
    # inf/inf means both sides infinite: condition holds trivially
    ratio = np.where(np.isnan(ratio), 1.0, ratio)
    # 0/0 handled above; finite/0 correctly gives inf (genuine violation)
    L = float(max(1.0, np.max(ratio))) if ratio.size else 1.0
    i, k = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    if increasing:
        j = int(np.argmax(R[i, : k + 1]))
        wit = (int(i), int(j), int(k) + 1)
    else:
        j = int(np.argmin(R[i, : k + 1]))
        wit = (int(i), int(j), int(k) + 1)
    return L, wit


def check_growth(phi, region, p, q, t_grid=None, cap=1e8):
    """Certify (aInc)_p and (aDec)_q on the region's sample points.

    Returns the smallest sampled constants L_p, L_q, or a failure with a
    witness triple (x, s, t) when no constant below ``cap`` works.
    """
    if t_grid is None:
        t_grid = geometric_grid()
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0) or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing and positive")
    pts = region.points()
    V = phi_matrix(phi, pts, t_grid)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        Rp = V / t_grid[None, :] ** p
        Rq = V / t_grid[None, :] ** q
    # 0**p underflow of t**p cannot occur (t_grid > 0); V may hold 0 or inf
    L_p, wit_p = _ratio_constant(Rp, increasing=True)
    L_q, wit_q = _ratio_constant(Rq, increasing=False)
    ok = (L_p <= cap) and (L_q <= cap)
    witness = None
    if not ok:
        which, (i, j, k) = ("aInc", wit_p) if L_p > cap else ("aDec", wit_q)
        witness = {
            "condition": which,
            "x": pts[i].tolist(),
            "s": float(t_grid[j]),
            "t": float(t_grid[k]),
        }
    return GrowthResult(ok=ok, L_p=L_p, L_q=L_q, witness=witness)


# ---------------------------------------------------------------------------
# (A0): phi(x, beta) <= 1 <= phi(x, 1/beta)
# ---------------------------------------------------------------------------

def check_a0(phi, region, floor=BETA_FLOOR):
    """Largest beta = 2**-k with phi(x,beta) <= 1 <= phi(x,1/beta) at all samples."""
    pts = region.points()
    b = phi.bind(pts)
    m = len(pts)
    beta = 1.0
    last_witness = None
    while beta >= floor:
        lo = b.eval(np.full(m, beta))
        hi = b.eval(np.full(m, 1.0 / beta))
        bad_lo = lo > 1.0
        bad_hi = hi < 1.0
        if not bad_lo.any() and not bad_hi.any():
            return A0Result(ok=True, beta=beta)
        i = int(np.argmax(bad_lo | bad_hi))
        last_witness = {"x": pts[i].tolist(), "beta": beta}
        beta *= 0.5
    return A0Result(ok=False, beta=None, witness=last_witness)


# ---------------------------------------------------------------------------
# (A1): phi_B^+(beta t) <= phi_B^-(t) on the band omega_B^-(t) in [1, K/|B|]
# ---------------------------------------------------------------------------

def _monotone_threshold(fvals_of, target, side, lo=1e-12, hi=1e12, iters=200):
    """For a non-decreasing f, find the threshold where f crosses ``target``.

    side=+1: smallest t with f(t) >= target; side=-1: largest t with
    f(t) <= target.  Returns None when no such t exists in [lo, hi].
    """
    flo, fhi = fvals_of(lo), fvals_of(hi)
    if side > 0:
        if flo >= target:
            return lo
        if fhi < target:
            return None
    else:
        if fhi <= target:
            return hi
        if flo > target:
            return None
    a, bnd = np.log(lo), np.log(hi)
    for _ in range(iters):
        mid = 0.5 * (a + bnd)
        fm = fvals_of(np.exp(mid))
        if side > 0:
            if fm >= target:
                bnd = mid
            else:
                a = mid
        else:
            if fm <= target:
                a = mid
            else:
                bnd = mid
    return np.exp(bnd if side > 0 else a)


def check_a1(phi, ball, K, t_band_samples=64, omega=None, floor=BETA_FLOOR):
    """Certify the almost-continuity condition across one ball.

    The band is where the sampled inf of omega over the ball lies in
    [1, K/|B|] (omega defaults to phi itself; pass PowerPhi(s) for the
    classical t**s variant).  Returns the largest dyadic beta such that
    the sampled sup at beta*t stays below the sampled inf at t across the
    band, a vacuous pass when the band is empty, or a failure witness.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if not isinstance(ball, BallRegion):
        ball = BallRegion(*ball)
    pts = ball.points()
    m = len(pts)
    bphi = phi.bind(pts)
    bomega = (omega or phi).bind(pts)

    def omega_inf(t):
        return float(bomega.eval(np.full(m, float(t))).min())

    upper = K / ball.measure
    t_lo = _monotone_threshold(omega_inf, 1.0, side=+1)
    t_hi = _monotone_threshold(omega_inf, upper, side=-1)
    if t_lo is None or t_hi is None or t_lo > t_hi:
        return A1Result(ok=True, beta=None, vacuous=True, band=None)
    band = np.geomspace(t_lo, t_hi, t_band_samples) if t_hi > t_lo else np.array([t_lo])
    inf_on_band = np.array([bphi.eval(np.full(m, t)).min() for t in band])
    beta = 1.0
    witness = None
    while beta >= floor:
        sup_shift = np.array([bphi.eval(np.full(m, beta * t)).max() for t in band])
        bad = sup_shift > inf_on_band
        if not bad.any():
            return A1Result(ok=True, beta=beta, band=(float(t_lo), float(t_hi)))
        witness = {"t": float(band[int(np.argmax(bad))]), "beta": beta}
        beta *= 0.5
    return A1Result(ok=False, beta=None, band=(float(t_lo), float(t_hi)), witness=witness)


# ---------------------------------------------------------------------------
# explicit zero-order estimate constant
# ---------------------------------------------------------------------------

def caccioppoli_constant(p, q, L_p, L_q, s, ell, sigma, p1):
    """The explicit constant K of the zero-order gradient estimate."""
    if not (0 < sigma < 1):
        raise ValueError("sigma must lie in (0, 1)")
    if not (ell > 1.0 / p1):
        raise ValueError("need ell > 1/p1")
    if s < q:
        raise ValueError("need s >= q")
    num = 8.0 * s * q * (L_q * np.e - 1.0) * L_q * np.log(2.0 * L_p)
    den = p * (p1 * ell - 1.0) * (1.0 - sigma)
    return num / den + L_p
