"""Indexed triangle surfaces: areas, normals, quadrature, subsampling, OBJ I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from ..rng import substream


@dataclass
class Mesh:
    """Triangle surface with per-face unit normals and areas.

    Vertices are expected in the normalized domain [-1, 1]^3 once a shape has
    been through the generator; raw-unit meshes are fine for intermediate use.
    """

    vertices: np.ndarray          # [N, 3] float64
    faces: np.ndarray             # [F, 3] int64
    face_normals: np.ndarray = field(init=False)
    face_areas: np.ndarray = field(init=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise ValidationError("face indices out of range")
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        cross = np.cross(b - a, c - a)
        norm = np.linalg.norm(cross, axis=1)
        if np.any(norm <= 0):
            raise ValidationError("mesh contains degenerate (zero-area) faces")
        self.face_normals = cross / norm[:, None]
        self.face_areas = 0.5 * norm

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def total_area(self) -> float:
        return float(self.face_areas.sum())

    def face_centroids(self) -> np.ndarray:
        return self.vertices[self.faces].mean(axis=1)

    def vertex_normals(self) -> np.ndarray:
        """Area-weighted average of incident face normals, unit length."""
        n = np.zeros_like(self.vertices)
        w = self.face_normals * self.face_areas[:, None]
        for k in range(3):
            np.add.at(n, self.faces[:, k], w)
        length = np.linalg.norm(n, axis=1)
        length[length == 0] = 1.0
        return n / length[:, None]

    def signed_volume(self) -> float:
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        return float(np.einsum("ij,ij->i", np.cross(a, b), c).sum() / 6.0)


def closed_surface_residual(mesh: Mesh) -> float:
    """||sum_f area_f * n_f||; zero (to roundoff) for watertight meshes."""
    return float(np.linalg.norm((mesh.face_normals * mesh.face_areas[:, None]).sum(axis=0)))


def is_watertight(mesh: Mesh) -> bool:
    """Every directed edge must be matched by exactly one reversed twin."""
    f = mesh.faces
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    fwd = set(map(tuple, edges))
    if len(fwd) != len(edges):
        return False
    return all((b, a) in fwd for a, b in fwd)


def quadrature_weights(mesh: Mesh) -> np.ndarray:
    """Per-vertex Riemann weights: one third of the incident face areas.

    The weights partition the surface: sum(mu) == sum(face areas).
    """
    thirds = mesh.face_areas / 3.0
    mu = np.zeros(mesh.n_vertices)
    for k in range(3):
        mu += np.bincount(mesh.faces[:, k], weights=thirds, minlength=mesh.n_vertices)
    return mu


def subsample_mesh(mesh_or_points, weights: np.ndarray, k: int, seed: int,
                   stream: str = "sampling") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Uniform-random ceil(N/k) vertices without replacement, weights scaled by k.

    Deterministic under the seed; indices come back sorted ascending. Returns
    (points, scaled weights, selected indices).
    """
    points = mesh_or_points.vertices if isinstance(mesh_or_points, Mesh) else mesh_or_points
    n = len(points)
    if k < 1:
        raise ValidationError(f"sampling rate must be >= 1, got {k}")
    if k > n:
        raise ValidationError(f"sampling rate {k} exceeds vertex count {n}")
    if k == 1:
        return points, weights, np.arange(n, dtype=np.int64)
    m = int(np.ceil(n / k))
    rng = substream(seed, stream)
    idx = np.sort(rng.choice(n, size=m, replace=False)).astype(np.int64)
    return points[idx], weights[idx] * k, idx


def make_icosphere(subdivisions: int = 2, radius: float = 0.5) -> Mesh:
    """Icosahedron refined by edge-midpoint splitting, projected to a sphere."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = list(verts)
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                p = verts[i] + verts[j]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        faces = [
            tri
            for a, b, c in faces
            for ab, bc, ca in [(midpoint(a, b), midpoint(b, c), midpoint(c, a))]
            for tri in ((a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca))
        ]
    return Mesh(np.array(verts) * radius, np.array(faces, dtype=np.int64))


def save_obj(mesh: Mesh, path) -> None:
    """Wavefront OBJ subset: `v` and triangle `f` lines only."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def load_obj(path) -> Mesh:
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    for line in Path(path).read_text(encoding="ascii").splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(v) for v in parts[1:4]])
        elif parts[0] == "f":
            if len(parts) != 4:
                raise ValidationError(f"{path}: only triangle faces supported: {line!r}")
            faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    if not verts or not faces:
        raise ValidationError(f"{path}: no usable v/f records")
    return Mesh(np.array(verts), np.array(faces, dtype=np.int64))
