"""Parametric bluff-body generator.

Shapes are boxes with a rear slant, a 45-degree chamfer around the front
face (the desk-scale stand-in for a rounded fillet) and a ground clearance
that offsets the body above the z=0 plane. Facets are tessellated into a
watertight triangle mesh and rescaled into [-1, 1]^3 with aspect preserved
(the bounding box used for normalization includes the ground plane, so the
clearance parameter genuinely moves the body inside the domain).

Each convex facet is meshed as concentric inset rings stitched by a
two-pointer walk, with a fan at the core: boundary points on shared facet
edges are generated once globally, so adjacent facets join without cracks.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from ..errors import ValidationError
from ..rng import substream
from .mesh import Mesh

PARAM_BOUNDS = {
    "length": (644.0, 1444.0),
    "width": (239.0, 539.0),
    "height": (208.0, 368.0),
    "ground_clearance": (30.0, 90.0),
    "slant_angle": (0.0, 40.0),
    "fillet_radius": (80.0, 120.0),
    "inlet_velocity": (10.0, 70.0),
}

# Chord length of the rear slant cut, fixed across the family (mm).
SLANT_CHORD = 222.0

# Fraction of the bounding box mapped onto the domain half-width, leaving a
# margin so the surface stays strictly inside [-1, 1]^3.
DOMAIN_FIT = 0.96


@dataclass
class AhmedParams:
    """Design parameters (mm, degrees, m/s) within the sampling-table bounds."""

    length: float
    width: float
    height: float
    ground_clearance: float
    slant_angle: float
    fillet_radius: float
    inlet_velocity: float

    def validate(self) -> None:
        bad = []
        for name, (lo, hi) in PARAM_BOUNDS.items():
            v = getattr(self, name)
            if not (lo <= v <= hi):
                bad.append(f"{name}={v} not in [{lo}, {hi}]")
        if bad:
            raise ValidationError("parameters out of bounds: " + "; ".join(bad))

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "AhmedParams":
        return AhmedParams(**{k: float(d[k]) for k in PARAM_BOUNDS})

    @staticmethod
    def midpoint() -> "AhmedParams":
        return AhmedParams(**{k: (lo + hi) / 2 for k, (lo, hi) in PARAM_BOUNDS.items()})


def _corners_and_facets(p: AhmedParams):
    """Corner table and facet loops (with analytic outward normals) in mm."""
    w2 = p.width / 2.0
    gc = p.ground_clearance
    top = gc + p.height
    theta = np.deg2rad(p.slant_angle)
    xs = p.length - SLANT_CHORD * np.cos(theta)
    zr = top - SLANT_CHORD * np.sin(theta)
    # Chamfer width: the fillet radius, capped so the front face never
    # degenerates at the small end of the height/width ranges.
    c = min(p.fillet_radius, 0.45 * p.height, 0.45 * p.width)

    corners = np.array([
        (0.0, -(w2 - c), gc + c),   # 0  A-
        (0.0, +(w2 - c), gc + c),   # 1  A+
        (0.0, -(w2 - c), top - c),  # 2  B-
        (0.0, +(w2 - c), top - c),  # 3  B+
        (c, -w2, top),              # 4  C-
        (c, +w2, top),              # 5  C+
        (c, -w2, gc),               # 6  D-
        (c, +w2, gc),               # 7  D+
        (xs, -w2, top),             # 8  E-
        (xs, +w2, top),             # 9  E+
        (p.length, -w2, zr),        # 10 F-
        (p.length, +w2, zr),        # 11 F+
        (p.length, -w2, gc),        # 12 G-
        (p.length, +w2, gc),        # 13 G+
    ])

    s2 = 1.0 / np.sqrt(2.0)
    facets = [
        ([0, 1, 3, 2], (-1.0, 0.0, 0.0)),                       # front
        ([2, 3, 5, 4], (-s2, 0.0, s2)),                         # chamfer top
        ([0, 1, 7, 6], (-s2, 0.0, -s2)),                        # chamfer bottom
        ([0, 2, 4, 6], (-s2, -s2, 0.0)),                        # chamfer left
        ([1, 3, 5, 7], (-s2, s2, 0.0)),                         # chamfer right
        ([4, 5, 9, 8], (0.0, 0.0, 1.0)),                        # top
        ([8, 9, 11, 10], (np.sin(theta), 0.0, np.cos(theta))),  # slant
        ([10, 11, 13, 12], (1.0, 0.0, 0.0)),                    # rear
        ([6, 7, 13, 12], (0.0, 0.0, -1.0)),                     # bottom
        ([6, 12, 10, 8, 4], (0.0, -1.0, 0.0)),                  # side left
        ([7, 13, 11, 9, 5], (0.0, 1.0, 0.0)),                   # side right
    ]
    return corners, facets


def _polygon_area3d(pts: np.ndarray) -> float:
    s = np.zeros(3)
    for i in range(1, len(pts) - 1):
        s += np.cross(pts[i] - pts[0], pts[i + 1] - pts[0])
    return 0.5 * float(np.linalg.norm(s))


def _signed_area2(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _inset_polygon(poly: np.ndarray, d: float, min_edge: float) -> np.ndarray | None:
    """Inward offset of a ccw convex polygon; None once it degenerates."""
    m = len(poly)
    pts = []
    for i in range(m):
        a_prev, b_prev = poly[(i - 1) % m], poly[i]
        a_next, b_next = poly[i], poly[(i + 1) % m]
        lines = []
        for a, b in ((a_prev, b_prev), (a_next, b_next)):
            e = b - a
            n = np.array([-e[1], e[0]])
            ln = np.linalg.norm(n)
            if ln < 1e-12:
                return None
            n /= ln
            lines.append((a + d * n, e))
        (p1, e1), (p2, e2) = lines
        denom = e1[0] * e2[1] - e1[1] * e2[0]
        if abs(denom) < 1e-12:  # collinear adjacent edges
            pts.append(p2)
            continue
        t = ((p2[0] - p1[0]) * e2[1] - (p2[1] - p1[1]) * e2[0]) / denom
        pts.append(p1 + t * e1)
    out = np.array(pts)
    # merge vertices of collapsed edges
    keep = [0]
    for i in range(1, m):
        if np.linalg.norm(out[i] - out[keep[-1]]) > min_edge:
            keep.append(i)
    if len(keep) > 2 and np.linalg.norm(out[keep[-1]] - out[keep[0]]) <= min_edge:
        keep.pop()
    out = out[keep]
    if len(out) < 3 or _signed_area2(out) < min_edge * min_edge:
        return None
    if _signed_area2(out) >= _signed_area2(poly):
        return None
    # every inset vertex must stay strictly inside the source polygon
    for i in range(m):
        a, b = poly[i], poly[(i + 1) % m]
        e = b - a
        elen = np.linalg.norm(e)
        lhs = (out[:, 0] - a[0]) * e[1] - (out[:, 1] - a[1]) * e[0]
        if np.any(lhs > -1e-9 * elen):
            return None
    # still convex?
    m2 = len(out)
    for i in range(m2):
        e1v = out[(i + 1) % m2] - out[i]
        e2v = out[(i + 2) % m2] - out[(i + 1) % m2]
        if e1v[0] * e2v[1] - e1v[1] * e2v[0] < -1e-9:
            return None
    return out


def _subdivide_loop(poly: np.ndarray, h: float) -> np.ndarray:
    """Insert points along each side so segment lengths are close to h."""
    pts = []
    m = len(poly)
    for i in range(m):
        a, b = poly[i], poly[(i + 1) % m]
        nseg = max(1, int(round(np.linalg.norm(b - a) / h)))
        for k in range(nseg):
            pts.append(a + (b - a) * (k / nseg))
    return np.array(pts)


def _loop_fractions(pts: np.ndarray, start: int) -> np.ndarray:
    """Cumulative arclength fraction of each loop point, 0 at `start`."""
    rolled = np.roll(pts, -start, axis=0)
    seg = np.linalg.norm(np.diff(np.vstack([rolled, rolled[:1]]), axis=0), axis=1)
    cum = np.concatenate(([0.0], np.cumsum(seg[:-1])))
    return cum / max(seg.sum(), 1e-300)


def _triangulate_convex_ring(ids, pts, verts3, origin, u, v, faces) -> int:
    """Fan a convex ccw ring from its vertex centroid (a new Steiner point).

    The centroid of a positive-area convex ring is strictly interior, so
    every fan triangle has positive area regardless of collinear runs of
    subdivided side points. Returns the new vertex id.
    """
    centroid = np.asarray(pts).mean(axis=0)
    verts3.append(origin + centroid[0] * u + centroid[1] * v)
    cid = len(verts3) - 1
    m = len(ids)
    for i in range(m):
        faces.append((ids[i], ids[(i + 1) % m], cid))
    return cid


def _stitch_rings(outer_ids, outer_pts, inner_ids, inner_pts, faces) -> None:
    """Triangulate the band between two nested ccw loops.

    Pointers advance by cumulative arclength fraction, which keeps the sweep
    monotone around both loops: the band closes without crossing triangles.
    """
    p, q = len(outer_ids), len(inner_ids)
    j0 = int(np.argmin(np.einsum("ij,ij->i", inner_pts - outer_pts[0],
                                 inner_pts - outer_pts[0])))
    fa = _loop_fractions(outer_pts, 0)
    fb = _loop_fractions(inner_pts, j0)
    ai = bj = 0  # positions relative to the aligned starts
    while ai < p or bj < q:
        next_fa = fa[ai + 1] if ai + 1 < p else 1.0
        next_fb = fb[bj + 1] if bj + 1 < q else 1.0
        a_cur = outer_ids[ai % p]
        b_cur = inner_ids[(bj + j0) % q]
        if ai < p and (bj >= q or next_fa <= next_fb):
            faces.append((a_cur, outer_ids[(ai + 1) % p], b_cur))
            ai += 1
        else:
            faces.append((a_cur, inner_ids[(bj + j0 + 1) % q], b_cur))
            bj += 1


def generate_ahmed_like(params: AhmedParams, seed: int,
                        target_vertices: int = 2000) -> Mesh:
    """Watertight triangle mesh of the parametric body, normalized into D.

    Deterministic for a given (params, seed, target_vertices); the seed only
    jitters ring spacing inside facets (shared facet boundaries stay exact).
    """
    params.validate()
    corners, facets = _corners_and_facets(params)

    total_area = sum(_polygon_area3d(corners[loop]) for loop, _ in facets)
    h = float(np.sqrt(total_area / (0.83 * max(target_vertices, 8))))
    rng = substream(seed, "tessellation")

    verts: list[np.ndarray] = [corners[i] for i in range(len(corners))]
    edge_pts: dict[tuple[int, int], list[int]] = {}

    def edge_interior(a: int, b: int) -> list[int]:
        key = (min(a, b), max(a, b))
        if key not in edge_pts:
            pa, pb = verts[key[0]], verts[key[1]]
            nseg = max(1, int(round(np.linalg.norm(pb - pa) / h)))
            ids = []
            for i in range(1, nseg):
                verts.append(pa + (pb - pa) * (i / nseg))
                ids.append(len(verts) - 1)
            edge_pts[key] = ids
        ids = edge_pts[key]
        return ids if a < b else ids[::-1]

    faces: list[tuple[int, int, int]] = []
    row_h = 0.82 * h
    for loop, outward in facets:
        n = np.asarray(outward, dtype=np.float64)
        origin = verts[loop[0]].copy()
        u = verts[loop[1]] - origin
        u = u / np.linalg.norm(u)
        v = np.cross(n, u)

        def to2(pt3):
            return np.array([np.dot(pt3 - origin, u), np.dot(pt3 - origin, v)])

        loop2 = np.array([to2(corners[i]) for i in loop])
        if _signed_area2(loop2) < 0:  # ccw in (u, v) so triangles face outward
            loop = loop[::-1]
            loop2 = loop2[::-1]

        for cid in loop:
            off = verts[cid] - origin
            if abs(float(np.dot(off, n))) > 1e-6 * (1.0 + np.linalg.norm(off)):
                raise ValidationError("internal: non-planar facet in generator")

        # outer ring: corners plus globally shared edge subdivisions
        outer_ids: list[int] = []
        for a, b in zip(loop, loop[1:] + loop[:1]):
            outer_ids.append(a)
            outer_ids.extend(edge_interior(a, b))
        outer_pts = np.array([to2(verts[i]) for i in outer_ids])

        poly = loop2
        diag = float(np.linalg.norm(loop2.max(axis=0) - loop2.min(axis=0)))
        max_rings = int(diag / (2.0 * row_h)) + 8
        rings = 0
        while True:
            rings += 1
            depth = row_h * float(rng.uniform(0.9, 1.1))
            inner_poly = _inset_polygon(poly, depth, 0.3 * h) if rings <= max_rings else None
            if inner_poly is None:
                _triangulate_convex_ring(outer_ids, outer_pts, verts, origin, u, v, faces)
                break
            inner_pts = _subdivide_loop(inner_poly, h)
            inner_ids = []
            for x, y in inner_pts:
                verts.append(origin + x * u + y * v)
                inner_ids.append(len(verts) - 1)
            _stitch_rings(outer_ids, outer_pts, inner_ids, inner_pts, faces)
            outer_ids, outer_pts, poly = inner_ids, inner_pts, inner_poly

    vertices = np.array(verts)
    # Normalize into D with aspect preserved; the box includes the ground
    # plane z=0 so ground clearance shifts the body upward inside D.
    lo = np.array([0.0, -params.width / 2.0, 0.0])
    hi = np.array([params.length, params.width / 2.0,
                   params.ground_clearance + params.height])
    scale = 2.0 * DOMAIN_FIT / float((hi - lo).max())
    center = (lo + hi) / 2.0
    return Mesh((vertices - center) * scale, np.array(faces, dtype=np.int64))
