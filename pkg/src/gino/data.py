"""Synthetic dataset generation and persistence.

Design points come from a Latin hypercube over the parameter table (each
marginal hits every stratum exactly once); every sample is stored as a mesh
OBJ, a field container (pressure/shear/quadrature weights) and one SDF-grid
container per rasterized resolution, all listed in a JSON manifest.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from . import checkpoint as container
from .errors import ValidationError
from .geometry import (AhmedParams, PARAM_BOUNDS, generate_ahmed_like, load_obj,
                       oracle_field, quadrature_weights, rasterize_sdf, save_obj)
from .model import Sample
from .rng import substream

log = logging.getLogger(__name__)

MANIFEST_VERSION = "gino-dataset-v1"


def latin_hypercube(count: int, dims: int, rng: np.random.Generator) -> np.ndarray:
    """[count, dims] samples in [0, 1): one point per stratum per dimension."""
    u = np.empty((count, dims))
    for d in range(dims):
        u[:, d] = (rng.permutation(count) + rng.uniform(size=count)) / count
    return u


def sample_design_points(count: int, seed: int) -> list[AhmedParams]:
    """Latin-hypercube draw of shape parameters plus inlet velocity."""
    rng = substream(seed, "datagen")
    names = list(PARAM_BOUNDS)
    u = latin_hypercube(count, len(names), rng)
    out = []
    for row in u:
        vals = {n: lo + (hi - lo) * x
                for n, (lo, hi), x in zip(names, PARAM_BOUNDS.values(), row)}
        out.append(AhmedParams(**vals))
    return out


def _sdf_dir(res: int) -> str:
    return f"sdf_{res:03d}"


def generate_dataset(count: int, seed: int, out_dir, sdf_resolution: int = 32,
                     target_vertices: int = 2000) -> Path:
    """Write `count` samples and a manifest under `out_dir`; returns its path."""
    if count < 1:
        raise ValidationError(f"count must be >= 1, got {count}")
    out_dir = Path(out_dir)
    (out_dir / "meshes").mkdir(parents=True, exist_ok=True)
    (out_dir / "fields").mkdir(exist_ok=True)
    (out_dir / _sdf_dir(sdf_resolution)).mkdir(exist_ok=True)

    entries = []
    for i, params in enumerate(sample_design_points(count, seed)):
        sid = f"sample_{i:04d}"
        mesh = generate_ahmed_like(params, seed=seed + i,
                                   target_vertices=target_vertices)
        field = oracle_field(mesh, params.inlet_velocity)
        mu = quadrature_weights(mesh)
        mesh_path = f"meshes/{sid}.obj"
        field_path = f"fields/{sid}.bin"
        save_obj(mesh, out_dir / mesh_path)
        container.save(out_dir / field_path,
                       {"pressure": field.pressure, "shear": field.shear,
                        "weights": mu},
                       meta={"sample_id": sid, "velocity": params.inlet_velocity})
        grid = rasterize_sdf(mesh, sdf_resolution)
        container.save(out_dir / _sdf_dir(sdf_resolution) / f"{sid}.bin",
                       {"values": grid.values},
                       meta={"sample_id": sid, "resolution": sdf_resolution})
        entries.append({"id": sid, "params": params.to_dict(),
                        "velocity": params.inlet_velocity,
                        "mesh": mesh_path, "field": field_path})
        log.info("generated %s (%d vertices)", sid, mesh.n_vertices)

    manifest = {
        "version": MANIFEST_VERSION,
        "seed": seed,
        "count": count,
        "target_vertices": target_vertices,
        "sdf_resolutions": [sdf_resolution],
        "samples": entries,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_manifest(manifest_path) -> dict:
    path = Path(manifest_path)
    if not path.exists():
        raise FileNotFoundError(f"dataset manifest not found: {path}")
    manifest = json.loads(path.read_text())
    if manifest.get("version") != MANIFEST_VERSION:
        raise ValidationError(f"{path}: unsupported manifest version")
    ids = [e["id"] for e in manifest["samples"]]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"{path}: duplicate sample ids")
    return manifest


def load_dataset(manifest_path, sdf_resolution: int,
                 sample_ids: list[str] | None = None) -> list[Sample]:
    """Materialize samples at the requested SDF resolution.

    Grids missing at that resolution are rasterized once and cached next to
    the manifest, so repeated runs at a new latent resolution stay cheap.
    """
    path = Path(manifest_path)
    manifest = load_manifest(path)
    root = path.parent
    sdf_root = root / _sdf_dir(sdf_resolution)
    samples = []
    wanted = set(sample_ids) if sample_ids is not None else None
    for entry in manifest["samples"]:
        if wanted is not None and entry["id"] not in wanted:
            continue
        mesh = load_obj(root / entry["mesh"])
        arrays, meta = container.load(root / entry["field"])
        sdf_path = sdf_root / f"{entry['id']}.bin"
        if sdf_path.exists():
            values = container.load(sdf_path)[0]["values"]
        else:
            log.info("rasterizing %s at S=%d", entry["id"], sdf_resolution)
            values = rasterize_sdf(mesh, sdf_resolution).values
            container.save(sdf_path, {"values": values},
                           meta={"sample_id": entry["id"],
                                 "resolution": sdf_resolution})
        samples.append(Sample(
            sample_id=entry["id"], mesh=mesh, sdf_values=values,
            weights=arrays["weights"], velocity=float(meta["velocity"]),
            target=np.stack([arrays["pressure"], arrays["shear"]], axis=1)))
    if wanted is not None and len(samples) != len(wanted):
        missing = wanted - {s.sample_id for s in samples}
        raise ValidationError(f"samples not in manifest: {sorted(missing)}")
    return samples
