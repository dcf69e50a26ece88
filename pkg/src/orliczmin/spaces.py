"""Discrete fields, P1 gradients, the modular and the Luxemburg quasinorm.

Quadrature conventions: triangle-valued data (gradients) integrates with one
point per triangle at the centroid; vertex-valued data uses lumped vertex
masses.  All reductions are plain deterministic numpy sums, so results are
bit-reproducible for a fixed thread configuration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ScalarField",
    "TriangleField",
    "GradientField",
    "gradient_field",
    "modular",
    "luxemburg_norm",
    "DivergenceError",
]


class DivergenceError(ValueError):
    """No finite scaling brings the modular below one."""


@dataclass
class ScalarField:
    domain: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.domain.n_vertices,):
            raise ValueError("one value per vertex required")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("vertex values must be finite")

    @classmethod
    def from_rule(cls, domain, rule):
        """Evaluate a SpatialField (or callable on points) at the vertices."""
        return cls(domain, np.asarray(rule(domain.vertices), dtype=float))

    def copy(self):
        return ScalarField(self.domain, self.values.copy())


@dataclass
class TriangleField:
    domain: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.domain.n_triangles,):
            raise ValueError("one value per triangle required")


@dataclass
class GradientField:
    domain: object
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.shape != (self.domain.n_triangles, 2):
            raise ValueError("one 2-vector per triangle required")

    def magnitude(self):
        return TriangleField(self.domain, np.hypot(self.vectors[:, 0], self.vectors[:, 1]))


def gradient_field(domain, u):
    """Exact gradient of the piecewise-linear interpolant, per triangle.

    Computed from vertex-value differences (the shape gradients sum to zero
    analytically), so constant fields have exactly zero gradient.
    """
    vals = u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)
    tv = vals[domain.triangles]
    rel = tv - tv[:, :1]
    g = np.einsum("tv,tvd->td", rel, domain.grad_lambda)
    return GradientField(domain, g)


def modular(phi, domain, g):
    """The energy integral of phi(x, |g|) over the mesh (may be +inf).

    Triangle-valued data uses centroid quadrature, vertex-valued data uses
    lumped vertex masses.
    """
    if isinstance(g, GradientField):
        mags = g.magnitude().values
        pts, w = domain.centroids, domain.areas
    elif isinstance(g, TriangleField):
        mags = np.abs(g.values)
        pts, w = domain.centroids, domain.areas
    elif isinstance(g, ScalarField):
        mags = np.abs(g.values)
        pts, w = domain.vertices, domain.vertex_masses()
    else:
        raise TypeError("expected a ScalarField, TriangleField or GradientField")
    vals = phi.bind(pts).eval(mags)
    with np.errstate(invalid="ignore"):
        total = float(np.sum(w * vals))
    return total


def _scaled(g, lam):
    if isinstance(g, GradientField):
        return GradientField(g.domain, g.vectors / lam)
    if isinstance(g, TriangleField):
        return TriangleField(g.domain, g.values / lam)
    return ScalarField(g.domain, g.values / lam)


def luxemburg_norm(phi, domain, g, rtol=1e-10, max_iter=200):
    """inf{lam > 0 : modular(g / lam) <= 1} by bisection (0 for the zero field).

    Monotonicity of lam -> modular(g/lam) makes the bracket search safe; the
    returned value is the upper bracket end, so its modular is <= 1.
    """
    vals = g.values if not isinstance(g, GradientField) else g.vectors
    if not np.any(vals):
        return 0.0
    hi = 1.0
    it = 0
    while modular(phi, domain, _scaled(g, hi)) > 1.0:
        hi *= 2.0
        it += 1
        if it > max_iter:
            raise DivergenceError("no finite scaling brings the modular below one")
    lo = hi
    while modular(phi, domain, _scaled(g, lo)) <= 1.0 and lo > 1e-280:
        lo *= 0.5
        it += 1
        if it > max_iter:
            break
    if lo <= 1e-280:
        return 0.0
    for _ in range(max_iter):
        if hi - lo <= rtol * hi:
            break
        mid = 0.5 * (lo + hi)
        if modular(phi, domain, _scaled(g, mid)) <= 1.0:
            hi = mid
        else:
            lo = mid
    return hi
