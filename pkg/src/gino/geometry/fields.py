"""Surface fields, the manufactured training target and drag post-processing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from .mesh import Mesh

INLET_DIR = np.array([-1.0, 0.0, 0.0])


@dataclass
class SurfaceField:
    """Per-vertex pressure and wall-shear component along the inlet direction."""

    mesh: Mesh
    pressure: np.ndarray | None = None   # [N]
    shear: np.ndarray | None = None      # [N], already projected onto i_hat

    def __post_init__(self):
        n = self.mesh.n_vertices
        for name in ("pressure", "shear"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.asarray(v, dtype=np.float64)
            if v.shape != (n,):
                raise ValidationError(f"{name} must have one value per vertex")
            if not np.isfinite(v).all():
                raise ValidationError(f"{name} contains non-finite values")
            setattr(self, name, v)

    def stacked(self) -> np.ndarray:
        """[N, 2] (pressure, shear); both channels must be present."""
        if self.pressure is None or self.shear is None:
            raise ValidationError("field requires both pressure and shear channels")
        return np.stack([self.pressure, self.shear], axis=1)


def oracle_field(mesh: Mesh, inlet_velocity: float) -> SurfaceField:
    """Analytic pseudo-pressure standing in for a flow solve.

    p(x) = v^2 (n.i) exp(-|x - x_front|) decays away from the upstream
    stagnation region; the shear proxy 0.05 v^2 (1 - (n.i)^2) peaks where the
    surface is tangent to the inlet direction. Smooth in the design
    parameters, quadratic in velocity and cheap to evaluate exactly.
    """
    v2 = float(inlet_velocity) ** 2
    normals = mesh.vertex_normals()
    ndoti = normals @ INLET_DIR
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    x_front = np.array([lo[0], 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])])
    decay = np.exp(-np.linalg.norm(mesh.vertices - x_front, axis=1))
    pressure = v2 * ndoti * decay
    shear = 0.05 * v2 * (1.0 - ndoti ** 2)
    return SurfaceField(mesh=mesh, pressure=pressure, shear=shear)


def frontal_area(mesh: Mesh, i_hat: np.ndarray = INLET_DIR) -> float:
    """Area of the axis-aligned bounding rectangle of the projection onto
    the plane perpendicular to the inlet direction."""
    d = np.asarray(i_hat, dtype=np.float64)
    d = d / np.linalg.norm(d)
    tmp = np.array([0.0, 1.0, 0.0]) if abs(d[0]) > 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(d, tmp)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(d, e1)
    u = mesh.vertices @ e1
    w = mesh.vertices @ e2
    return float((u.max() - u.min()) * (w.max() - w.min()))


def drag_coefficient(field: SurfaceField, inlet_velocity: float, area: float,
                     i_hat: np.ndarray = INLET_DIR) -> float:
    """c_d = 2/(v^2 A) (sum_f p_f (n_f . i) a_f + sum_f s_f a_f).

    Face values are the mean of the three vertex values; the shear channel is
    already the component along i_hat.
    """
    if not (area > 0):
        raise ValidationError(f"frontal area must be positive, got {area}")
    if inlet_velocity == 0:
        raise ValidationError("inlet velocity must be nonzero")
    if field.pressure is None or field.shear is None:
        raise ValidationError("drag needs both pressure and shear channels")
    mesh = field.mesh
    d = np.asarray(i_hat, dtype=np.float64)
    d = d / np.linalg.norm(d)
    p_face = field.pressure[mesh.faces].mean(axis=1)
    s_face = field.shear[mesh.faces].mean(axis=1)
    ndoti = mesh.face_normals @ d
    pressure_term = float(np.sum(p_face * ndoti * mesh.face_areas))
    shear_term = float(np.sum(s_face * mesh.face_areas))
    return 2.0 / (inlet_velocity ** 2 * area) * (pressure_term + shear_term)
