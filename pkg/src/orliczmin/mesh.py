"""Crossed-triangle meshes of squares, disks and annuli, plus field CSV I/O.

Meshes come from a structured grid on the bounding box with every cell split
into four triangles through its center.  For disks and annuli, triangles
whose centroid lies outside the shape are dropped and every vertex on the
resulting mesh boundary is snapped radially onto the analytic boundary
circle, so boundary vertices sit on the true boundary exactly and the area
defect against the analytic shape is O(h^2).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MeshError",
    "TriangulatedDomain",
    "build_square",
    "build_disk",
    "build_annulus",
    "build_from_descriptor",
    "write_field_csv",
    "read_field_csv",
    "atomic_write_text",
]


class MeshError(ValueError):
    """Mesh construction produced an invalid triangulation."""


def _crossed_grid(n, lo, size):
    """Structured crossed mesh on a square box: grid nodes plus cell centers."""
    h = size / n
    xs = lo[0] + h * np.arange(n + 1)
    ys = lo[1] + h * np.arange(n + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    grid_pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    cx, cy = np.meshgrid(xs[:-1] + h / 2, ys[:-1] + h / 2, indexing="xy")
    center_pts = np.stack([cx.ravel(), cy.ravel()], axis=1)
    vertices = np.concatenate([grid_pts, center_pts], axis=0)

    def vid(i, j):
        return j * (n + 1) + i

    ngrid = (n + 1) * (n + 1)
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    ii, jj = ii.ravel(), jj.ravel()
    sw = vid(ii, jj)
    se = vid(ii + 1, jj)
    ne = vid(ii + 1, jj + 1)
    nw = vid(ii, jj + 1)
    c = ngrid + jj * n + ii
    tris = np.concatenate(
        [
            np.stack([sw, se, c], axis=1),
            np.stack([se, ne, c], axis=1),
            np.stack([ne, nw, c], axis=1),
            np.stack([nw, sw, c], axis=1),
        ],
        axis=0,
    )
    return vertices, tris, h


def _compact(vertices, tris, keep_tri):
    tris = tris[keep_tri]
    used = np.unique(tris)
    remap = -np.ones(len(vertices), dtype=int)
    remap[used] = np.arange(len(used))
    return vertices[used], remap[tris]


def _boundary_vertices(n_vertices, tris):
    """Vertices on edges that belong to exactly one triangle."""
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]], axis=0)
    edges = np.sort(edges, axis=1)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    e = edges[order]
    single = np.ones(len(e), dtype=bool)
    same_next = (e[1:] == e[:-1]).all(axis=1)
    single[1:] &= ~same_next
    single[:-1] &= ~same_next
    mask = np.zeros(n_vertices, dtype=bool)
    mask[np.unique(e[single])] = True
    return mask


@dataclass
class TriangulatedDomain:
    """A 2-D triangulated shape with per-triangle geometry precomputed."""

    shape: dict
    h: float
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_mask: np.ndarray
    areas: np.ndarray = field(init=False)
    centroids: np.ndarray = field(init=False)
    grad_lambda: np.ndarray = field(init=False)

    def __post_init__(self):
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        if np.any(det <= 0):
            raise MeshError(f"{int((det <= 0).sum())} non-positive triangle(s)")
        self.areas = 0.5 * det
        self.centroids = (a + b + c) / 3.0
        # P1 shape-function gradients: grad lambda_a = rot90(c - b) / (2A)
        g = np.empty((len(self.triangles), 3, 2))
        for k, (u, v) in enumerate(((b, c), (c, a), (a, b))):
            g[:, k, 0] = u[:, 1] - v[:, 1]
            g[:, k, 1] = v[:, 0] - u[:, 0]
        self.grad_lambda = g / (2.0 * self.areas)[:, None, None]

    # --- derived quantities ------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def total_area(self):
        return float(self.areas.sum())

    def vertex_masses(self):
        """Lumped vertex quadrature weights (a third of adjacent areas)."""
        w = np.repeat(self.areas / 3.0, 3)
        return np.bincount(self.triangles.ravel(), weights=w, minlength=self.n_vertices)

    def descriptor(self):
        return {**self.shape, "h": self.h}

    # --- point location ------------------------------------------------------

    def _buckets(self):
        if not hasattr(self, "_bucket_map"):
            lo = self.vertices.min(axis=0) - 1e-12
            cell = np.floor((self.centroids - lo) / self.h).astype(int)
            self._bucket_lo = lo
            self._bucket_map = {}
            for t, (i, j) in enumerate(cell):
                self._bucket_map.setdefault((int(i), int(j)), []).append(t)
        return self._bucket_map

    def locate(self, points, tol=1e-9):
        """Triangle index and barycentric coordinates per point (-1 if outside)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        buckets = self._buckets()
        lo = self._bucket_lo
        tri_idx = np.full(len(points), -1, dtype=int)
        bary = np.zeros((len(points), 3))
        for k, pt in enumerate(points):
            ci, cj = int(np.floor((pt[0] - lo[0]) / self.h)), int(np.floor((pt[1] - lo[1]) / self.h))
            cands = []
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    cands.extend(buckets.get((ci + di, cj + dj), ()))
            if not cands:
                continue
            cands = np.asarray(cands)
            a = self.vertices[self.triangles[cands, 0]]
            b = self.vertices[self.triangles[cands, 1]]
            c = self.vertices[self.triangles[cands, 2]]
            det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
            l2 = ((pt[0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (pt[1] - a[:, 1]) * (c[:, 0] - a[:, 0])) / det
            l3 = ((b[:, 0] - a[:, 0]) * (pt[1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (pt[0] - a[:, 0])) / det
            l1 = 1.0 - l2 - l3
            lam = np.stack([l1, l2, l3], axis=1)
            best = int(np.argmax(lam.min(axis=1)))
            if lam[best].min() >= -tol:
                tri_idx[k] = cands[best]
                bary[k] = np.clip(lam[best], 0.0, 1.0)
                bary[k] /= bary[k].sum()
        return tri_idx, bary

    def interpolate(self, points, vertex_values):
        """P1 interpolation at arbitrary points; NaN where outside the mesh."""
        tri_idx, bary = self.locate(points)
        out = np.full(len(np.atleast_2d(points)), np.nan)
        ok = tri_idx >= 0
        vv = np.asarray(vertex_values)
        out[ok] = (vv[self.triangles[tri_idx[ok]]] * bary[ok]).sum(axis=1)
        return out


def build_square(h, lo=(0.0, 0.0), size=1.0):
    n = max(1, round(size / h))
    vertices, tris, h_eff = _crossed_grid(n, np.asarray(lo, dtype=float), size)
    mask = _boundary_vertices(len(vertices), tris)
    return TriangulatedDomain(
        shape={"shape": "square", "lo": list(map(float, lo)), "size": float(size)},
        h=h_eff,
        vertices=vertices,
        triangles=tris,
        boundary_mask=mask,
    )


def _snap_radial(vertices, mask, center, radius):
    v = vertices[mask] - center
    r = np.hypot(v[:, 0], v[:, 1])
    if np.any(r < 1e-14):
        raise MeshError("boundary vertex at the center cannot be snapped")
    vertices[mask] = center + v * (radius / r)[:, None]


def _trim_and_snap(vertices, tris, vertex_ok, snap):
    """Shared disk/annulus boundary treatment.

    Keeps triangles whose vertices all satisfy ``vertex_ok``, then drops
    triangles made of boundary vertices only (snapping could fold those),
    and finally snaps every remaining mesh-boundary vertex onto the analytic
    boundary via ``snap``.
    """
    keep = vertex_ok(vertices)[tris].all(axis=1)
    vertices, tris = _compact(vertices, tris, keep)
    for _ in range(3):
        mask = _boundary_vertices(len(vertices), tris)
        all_bd = mask[tris].all(axis=1)
        if not all_bd.any():
            break
        vertices, tris = _compact(vertices, tris, ~all_bd)
    mask = _boundary_vertices(len(vertices), tris)
    vertices = vertices.copy()
    snap(vertices, mask)
    return vertices, tris, mask


def build_disk(h, center=(0.0, 0.0), radius=1.0):
    center = np.asarray(center, dtype=float)
    n = max(2, round(2.0 * radius / h))
    vertices, tris, h_eff = _crossed_grid(n, center - radius, 2.0 * radius)
    tol = radius * 1e-12

    def inside(v):
        return np.hypot(*(v - center).T) <= radius + tol

    def snap(v, mask):
        _snap_radial(v, mask, center, radius)

    vertices, tris, mask = _trim_and_snap(vertices, tris, inside, snap)
    return TriangulatedDomain(
        shape={"shape": "disk", "center": center.tolist(), "radius": float(radius)},
        h=h_eff,
        vertices=vertices,
        triangles=tris,
        boundary_mask=mask,
    )


def build_annulus(h, center=(0.0, 0.0), r_in=0.25, r_out=1.0):
    if not (0 < r_in < r_out):
        raise MeshError("need 0 < r_in < r_out")
    center = np.asarray(center, dtype=float)
    n = max(2, round(2.0 * r_out / h))
    vertices, tris, h_eff = _crossed_grid(n, center - r_out, 2.0 * r_out)
    tol = r_out * 1e-12

    def inside(v):
        r = np.hypot(*(v - center).T)
        return (r >= r_in - tol) & (r <= r_out + tol)

    def snap(v, mask):
        rv = np.hypot(*(v - center).T)
        inner = mask & (np.abs(rv - r_in) < np.abs(rv - r_out))
        _snap_radial(v, inner, center, r_in)
        _snap_radial(v, mask & ~inner, center, r_out)

    vertices, tris, mask = _trim_and_snap(vertices, tris, inside, snap)
    return TriangulatedDomain(
        shape={
            "shape": "annulus",
            "center": center.tolist(),
            "r_in": float(r_in),
            "r_out": float(r_out),
        },
        h=h_eff,
        vertices=vertices,
        triangles=tris,
        boundary_mask=mask,
    )


def build_from_descriptor(descr):
    d = dict(descr)
    kind = d.pop("shape")
    h = d.pop("h")
    if kind == "square":
        return build_square(h, lo=tuple(d.get("lo", (0.0, 0.0))), size=d.get("size", 1.0))
    if kind == "disk":
        return build_disk(h, center=tuple(d.get("center", (0.0, 0.0))), radius=d["radius"])
    if kind == "annulus":
        return build_annulus(
            h, center=tuple(d.get("center", (0.0, 0.0))), r_in=d["r_in"], r_out=d["r_out"]
        )
    raise MeshError(f"unknown shape {kind!r}")


# ---------------------------------------------------------------------------
# field CSV I/O (header x,y,u; one vertex per row in index order)
# ---------------------------------------------------------------------------

def atomic_write_text(path, text):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def write_field_csv(path, domain, values, comments=()):
    lines = [f"# {c}" for c in comments]
    lines.append("x,y,u")
    for (x, y), u in zip(domain.vertices, np.asarray(values)):
        lines.append(f"{x:.17e},{y:.17e},{u:.17e}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_field_csv(path, domain=None, tol=1e-9):
    xs, ys, us = [], [], []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("x,"):
                continue
            x, y, u = line.split(",")
            xs.append(float(x))
            ys.append(float(y))
            us.append(float(u))
    xy = np.stack([xs, ys], axis=1)
    u = np.asarray(us)
    if domain is not None:
        if len(u) != domain.n_vertices:
            raise MeshError("field length does not match mesh vertex count")
        if np.max(np.abs(xy - domain.vertices)) > tol:
            raise MeshError("field coordinates do not match mesh vertices")
    return xy, u
