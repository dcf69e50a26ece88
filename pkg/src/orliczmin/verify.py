"""Regularity diagnostics computed on discrete fields.

Every estimate the library is built to examine, evaluated on meshes:
Harnack quotients of shifted fields over balls, the log-gradient (Bloch)
integral, both sides of the zero-order Caccioppoli estimate with its
explicit constant, first-variation residuals with the exact one-sided slope
selection, extrema-on-the-boundary (Lebesgue monotonicity) checks, and
circle-oscillation integrals with their gradient bound.

Triangle sums over a ball select triangles by centroid; ball extrema are
taken over the vertices inside the ball.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .conditions import caccioppoli_constant
from .spaces import ScalarField, gradient_field

__all__ = [
    "PositivityError",
    "RefinementError",
    "CaccioppoliParams",
    "CaccioppoliResult",
    "OscillationResult",
    "MonotonicityResult",
    "VerificationReport",
    "harnack_quotient",
    "bloch_integral",
    "caccioppoli_check",
    "variational_residual",
    "random_bump_fields",
    "monotonicity_check",
    "sphere_oscillation",
    "make_cutoff",
]


class PositivityError(ValueError):
    """A field that must be positive is not, at an identified vertex."""


class RefinementError(ValueError):
    """Mesh too coarse for the requested circle sampling."""


def _vertices_in_ball(domain, center, r):
    d = np.hypot(*(domain.vertices - np.asarray(center, dtype=float)).T)
    return d <= r * (1 + 1e-12)


def _triangles_in_ball(domain, center, r):
    d = np.hypot(*(domain.centroids - np.asarray(center, dtype=float)).T)
    return d <= r * (1 + 1e-12)


# ---------------------------------------------------------------------------
# Harnack quotient and log-gradient integral
# ---------------------------------------------------------------------------

def harnack_quotient(u, center, r, shift=0.0):
    """max/min of (u + shift) over the vertices in the ball."""
    sel = _vertices_in_ball(u.domain, center, r)
    if not sel.any():
        raise ValueError("no vertices inside the ball")
    vals = u.values[sel] + shift
    if vals.min() <= 0.0:
        i = int(np.argmin(vals))
        vid = np.flatnonzero(sel)[i]
        raise PositivityError(
            f"non-positive shifted value {vals[i]} at vertex {vid} "
            f"{u.domain.vertices[vid].tolist()}"
        )
    return float(vals.max() / vals.min())


def bloch_integral(w, center, r, exponent=2.0):
    """Integral over the ball of |grad log w|^exponent (P1 log-gradient).

    The logarithm is taken vertexwise, so log-affine fields are exact.
    """
    dom = w.domain
    sel = _triangles_in_ball(dom, center, r)
    verts = np.unique(dom.triangles[sel])
    if np.any(w.values[verts] <= 0.0):
        vid = verts[int(np.argmax(w.values[verts] <= 0.0))]
        raise PositivityError(f"non-positive value at vertex {vid}")
    logw = ScalarField(dom, np.log(w.values.clip(min=1e-300)))
    g = gradient_field(dom, logw)
    m = g.magnitude().values[sel]
    return float(np.sum(dom.areas[sel] * m**exponent))


# ---------------------------------------------------------------------------
# Caccioppoli estimate
# ---------------------------------------------------------------------------

def make_cutoff(domain, center, R, sigma):
    """Radial cutoff: 1 inside sigma*R, 0 outside R, linear ramp between."""
    d = np.hypot(*(domain.vertices - np.asarray(center, dtype=float)).T)
    vals = np.clip((R - d) / ((1.0 - sigma) * R), 0.0, 1.0)
    return ScalarField(domain, vals)


@dataclass
class CaccioppoliParams:
    """Parameters of the zero-order gradient estimate on a ball.

    psi is the x-independent comparison function (from the ball
    regularization), beta its normalization constant, p1 its power-growth
    exponent.  ``eta`` defaults to the radial ramp cutoff.  ``q_override``
    replaces the envelope's upper exponent by a sup over the cutoff's
    transition annulus (where its gradient does not vanish).
    """

    center: tuple
    R: float
    sigma: float
    ell: float
    s: float
    psi: object
    beta: float
    p1: float
    eta: Optional[ScalarField] = None
    q_override: Optional[float] = None

    def __post_init__(self):
        if not (0 < self.sigma < 1):
            raise ValueError("sigma in (0,1) required")
        if not (0 < self.beta <= 1):
            raise ValueError("beta in (0,1] required")
        if not (self.ell > 1.0 / self.p1):
            raise ValueError("need ell > 1/p1")


@dataclass
class CaccioppoliResult:
    lhs: float
    rhs: float
    K: float
    margin: float
    infinite_psi_terms: int

    def to_json(self):
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "K": self.K,
            "margin": self.margin,
            "infinite_psi_terms": self.infinite_psi_terms,
        }


def _validate_cutoff(domain, eta, center, R, sigma):
    d = np.hypot(*(domain.vertices - np.asarray(center, dtype=float)).T)
    v = eta.values
    if np.any(v < -1e-12) or np.any(v > 1 + 1e-12):
        raise ValueError("cutoff must take values in [0, 1]")
    inner = d <= sigma * R * (1 - 1e-12)
    outer = d >= R * (1 + 1e-12)
    if np.any(v[inner] < 1 - 1e-12):
        raise ValueError("cutoff must equal 1 inside the inner ball")
    if np.any(v[outer] > 1e-12):
        raise ValueError("cutoff must vanish outside the ball")
    g = gradient_field(domain, eta).magnitude().values
    bound = 2.0 / ((1.0 - sigma) * R)
    if np.any(g > bound * (1 + 1e-9)):
        raise ValueError("cutoff gradient exceeds 2/((1-sigma)R)")


def caccioppoli_check(phi, u, params, envelope):
    """Both sides of the zero-order estimate, with the explicit constant K.

    lhs = sum area phi(x,|grad u|) psi(v)^{-ell} eta^s,
    rhs = K sum area psi(v)^{-ell} phi(x, K v) eta^{s-q},
    where v = (u + R)/(beta R) at centroids.  psi values of +inf contribute
    zero through psi^{-ell}; their count is reported.
    """
    dom = u.domain
    center, R = params.center, params.R
    if u.values[_vertices_in_ball(dom, center, R)].min() < -1e-12:
        raise PositivityError("the estimate applies to non-negative fields")
    eta = params.eta or make_cutoff(dom, center, R, params.sigma)
    _validate_cutoff(dom, eta, center, R, params.sigma)

    q = params.q_override if params.q_override is not None else envelope.q
    K = caccioppoli_constant(
        p=envelope.p,
        q=q,
        L_p=envelope.L_p,
        L_q=envelope.L_q,
        s=params.s,
        ell=params.ell,
        sigma=params.sigma,
        p1=params.p1,
    )

    sel = _triangles_in_ball(dom, center, R)
    areas = dom.areas[sel]
    cent = dom.centroids[sel]
    tris = dom.triangles[sel]
    u_c = u.values[tris].mean(axis=1)
    eta_c = np.clip(eta.values[tris].mean(axis=1), 0.0, 1.0)
    v = (u_c + R) / (params.beta * R)
    psi_v = np.asarray(params.psi.eval(v), dtype=float)
    n_inf = int(np.sum(~np.isfinite(psi_v)))
    with np.errstate(divide="ignore", over="ignore"):
        psi_neg = np.where(np.isfinite(psi_v), psi_v ** (-params.ell), 0.0)
        psi_neg = np.where(psi_v == 0.0, np.inf, psi_neg)

    gmag = gradient_field(dom, u).magnitude().values[sel]
    bound = phi.bind(cent)
    phi_g = bound.eval(gmag)
    phi_Kv = bound.eval(K * v)
    with np.errstate(invalid="ignore"):
        lhs = float(np.sum(areas * phi_g * psi_neg * eta_c**params.s))
        rhs = float(K * np.sum(areas * psi_neg * phi_Kv * eta_c ** (params.s - q)))
    margin = rhs - lhs if np.isfinite(rhs) and np.isfinite(lhs) else np.inf
    return CaccioppoliResult(lhs=lhs, rhs=rhs, K=K, margin=margin, infinite_psi_terms=n_inf)


# ---------------------------------------------------------------------------
# first variation
# ---------------------------------------------------------------------------

def variational_residual(phi, u, tests, normalized=False):
    """Minimum over test fields of the one-sided first variation.

    Per triangle the slope is the right derivative where grad u . grad h >= 0
    and the left derivative otherwise, with zero contribution from triangles
    where grad u vanishes.  Each test must vanish on the boundary vertices.
    With ``normalized`` each residual is divided by the absolute-integrand
    sum of its own test, so values lie in [-1, 1].
    """
    dom = u.domain
    gu = gradient_field(dom, u).vectors
    m = np.hypot(gu[:, 0], gu[:, 1])
    bound = phi.bind(dom.centroids)
    dm = bound.d_minus(m)
    dp = bound.d_plus(m)
    best = np.inf
    for hfield in tests:
        h = hfield.values if isinstance(hfield, ScalarField) else np.asarray(hfield, dtype=float)
        if np.max(np.abs(h[dom.boundary_mask]), initial=0.0) > 1e-14 * max(
            1.0, float(np.max(np.abs(h)))
        ):
            raise ValueError("test fields must vanish on boundary vertices")
        tv = h[dom.triangles]
        gh = np.einsum("tv,tvd->td", tv - tv[:, :1], dom.grad_lambda)
        ip = np.einsum("td,td->t", gu, gh)
        sel = np.where(ip >= 0.0, dp, dm)
        with np.errstate(divide="ignore", invalid="ignore"):
            integrand = np.where(m > 0, sel / np.where(m > 0, m, 1.0) * ip, 0.0)
        val = float(np.sum(dom.areas * integrand))
        if normalized:
            mh = np.hypot(gh[:, 0], gh[:, 1])
            scale = float(np.sum(dom.areas * sel * mh))
            val = val / scale if scale > 0 else 0.0
        best = min(best, val)
    return best


def random_bump_fields(domain, n, seed=0, signed=True):
    """Deterministic compactly supported hat-squared test fields.

    Centers are interior vertices well away from the boundary; each bump is
    (1 - |x-c|^2/rho^2)_+^2 and is explicitly zeroed on boundary vertices.
    """
    rng = np.random.default_rng(seed)
    bd = domain.vertices[domain.boundary_mask]
    d_bd = np.min(
        np.hypot(
            domain.vertices[:, 0][:, None] - bd[:, 0][None, :],
            domain.vertices[:, 1][:, None] - bd[:, 1][None, :],
        ),
        axis=1,
    )
    interior = np.flatnonzero(d_bd > 4 * domain.h)
    if interior.size == 0:
        raise ValueError("mesh too coarse for interior bump tests")
    out = []
    for k in range(n):
        idx = int(interior[int(rng.integers(interior.size))])
        c = domain.vertices[idx]
        rho = domain.h * float(rng.uniform(3.0, 8.0))
        rho = min(rho, float(d_bd[idx]) - 1.5 * domain.h)
        rho = max(rho, 2.5 * domain.h)
        r2 = ((domain.vertices - c) ** 2).sum(axis=1) / rho**2
        vals = np.clip(1.0 - r2, 0.0, None) ** 2
        vals[domain.boundary_mask] = 0.0
        if signed and k % 2 == 1:
            vals = -vals
        out.append(ScalarField(domain, vals))
    return out


# ---------------------------------------------------------------------------
# Lebesgue monotonicity
# ---------------------------------------------------------------------------

@dataclass
class MonotonicityResult:
    passed: bool
    witness: Optional[dict] = None
    tolerance: float = 0.0

    def to_json(self):
        return {"passed": self.passed, "witness": self.witness, "tolerance": self.tolerance}


def _inside_mask(domain, spec):
    v = domain.vertices
    if spec.get("type", "ball") == "ball":
        d = np.hypot(*(v - np.asarray(spec["center"], dtype=float)).T)
        return d <= spec["r"]
    lo = np.asarray(spec["lo"], dtype=float)
    hi = np.asarray(spec["hi"], dtype=float)
    return np.all((v >= lo) & (v <= hi), axis=1)


def monotonicity_check(u, subdomains, slack=2.0):
    """Extrema of u over each subdomain against its discrete boundary layer.

    The boundary layer consists of the vertices of triangles straddling the
    subdomain boundary; the comparison tolerance is slack * h * max|grad u|
    over the triangles involved (interpolation slack on a Lipschitz field).
    """
    dom = u.domain
    gmag = gradient_field(dom, u).magnitude().values
    for spec in subdomains:
        inside = _inside_mask(dom, spec)
        if not inside.any():
            continue
        tri_inside = inside[dom.triangles]
        crossing = tri_inside.any(axis=1) & ~tri_inside.all(axis=1)
        if not crossing.any():
            continue
        layer = np.unique(dom.triangles[crossing])
        touched = tri_inside.any(axis=1)
        tol = slack * dom.h * float(gmag[touched].max(initial=0.0))
        in_vals = u.values[inside]
        ly_vals = u.values[layer]
        hi_bad = in_vals.max() > ly_vals.max() + tol
        lo_bad = in_vals.min() < ly_vals.min() - tol
        if hi_bad or lo_bad:
            if hi_bad:
                which = np.argmax(np.where(inside, u.values, -np.inf))
            else:
                which = np.argmin(np.where(inside, u.values, np.inf))
            return MonotonicityResult(
                passed=False,
                witness={
                    "subdomain": spec,
                    "vertex": int(which),
                    "x": dom.vertices[int(which)].tolist(),
                    "value": float(u.values[int(which)]),
                },
                tolerance=tol,
            )
    return MonotonicityResult(passed=True, tolerance=0.0)


# ---------------------------------------------------------------------------
# circle oscillations
# ---------------------------------------------------------------------------

@dataclass
class OscillationResult:
    osc_integral: float
    gradient_bound: float
    inner_term: float

    def to_json(self):
        return {
            "osc_integral": self.osc_integral,
            "gradient_bound": self.gradient_bound,
            "inner_term": self.inner_term,
        }


def sphere_oscillation(v, center, r, p, n_radii=32, n_angles=128, min_points=64):
    """Oscillation of v over discrete circles between radii r and 2r.

    Returns the midpoint-rule integral over R in (r, 2r) of the circle
    oscillation to the p-th power, the scaled gradient energy
    r^(p-n+1) * int_{B_2r} |grad v|^p (n = 2), and the inner comparison term
    r * (osc over the ball of radius r)^p.
    """
    dom = v.domain
    center = np.asarray(center, dtype=float)
    dR = r / n_radii
    radii = r + (np.arange(n_radii) + 0.5) * dR
    th = 2 * np.pi * np.arange(n_angles) / n_angles
    ring = np.stack([np.cos(th), np.sin(th)], axis=1)
    osc_int = 0.0
    for R in radii:
        pts = center + R * ring
        vals = dom.interpolate(pts, v.values)
        good = np.isfinite(vals)
        if good.sum() < min_points:
            raise RefinementError(
                f"only {int(good.sum())} of {n_angles} circle points hit the mesh at R={R}"
            )
        osc = float(vals[good].max() - vals[good].min())
        osc_int += osc**p * dR
    sel = _triangles_in_ball(dom, center, 2 * r)
    gmag = gradient_field(dom, v).magnitude().values[sel]
    grad_bound = r ** (p - 1.0) * float(np.sum(dom.areas[sel] * gmag**p))  # n = 2
    inner = _vertices_in_ball(dom, center, r)
    osc_inner = float(v.values[inner].max() - v.values[inner].min()) if inner.any() else 0.0
    return OscillationResult(
        osc_integral=osc_int, gradient_bound=grad_bound, inner_term=r * osc_inner**p
    )


# ---------------------------------------------------------------------------
# aggregated report
# ---------------------------------------------------------------------------

@dataclass
class VerificationReport:
    harnack_quotient: Optional[float] = None
    bloch_integral: Optional[float] = None
    caccioppoli: Optional[CaccioppoliResult] = None
    residual_min: Optional[float] = None
    monotonicity: Optional[MonotonicityResult] = None
    oscillation: Optional[OscillationResult] = None
    slack: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    passed: bool = True
    failures: list = field(default_factory=list)

    def to_json(self):
        def enc(x):
            if x is None:
                return None
            if isinstance(x, float):
                return x if np.isfinite(x) else repr(x)
            return x.to_json()

        return {
            "harnack_quotient": enc(self.harnack_quotient),
            "bloch_integral": enc(self.bloch_integral),
            "caccioppoli": enc(self.caccioppoli),
            "residual_min": enc(self.residual_min),
            "monotonicity": enc(self.monotonicity),
            "oscillation": enc(self.oscillation),
            "slack": self.slack,
            "extras": self.extras,
            "passed": self.passed,
            "failures": self.failures,
        }
