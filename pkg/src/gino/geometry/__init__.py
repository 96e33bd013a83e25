"""Shape generation, signed distance fields, quadrature and drag."""

from .ahmed import AhmedParams, PARAM_BOUNDS, generate_ahmed_like
from .fields import (INLET_DIR, SurfaceField, drag_coefficient, frontal_area,
                     oracle_field)
from .mesh import (Mesh, closed_surface_residual, is_watertight, load_obj,
                   make_icosphere, quadrature_weights, save_obj, subsample_mesh)
from .sdf import SdfGrid, grid_coords, grid_nodes, rasterize_sdf, sdf_eval

__all__ = [
    "AhmedParams", "PARAM_BOUNDS", "generate_ahmed_like",
    "INLET_DIR", "SurfaceField", "drag_coefficient", "frontal_area", "oracle_field",
    "Mesh", "closed_surface_residual", "is_watertight", "load_obj",
    "make_icosphere", "quadrature_weights", "save_obj", "subsample_mesh",
    "SdfGrid", "grid_coords", "grid_nodes", "rasterize_sdf", "sdf_eval",
]
