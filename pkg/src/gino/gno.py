"""Graph-based local kernel integration.

The encoder turns an irregular surface point cloud into a function on the
regular latent grid; the decoder reads the latent function back out at
arbitrary query points. Both approximate a ball-truncated kernel integral by
a Riemann sum over in-ball points: surface quadrature weights on the way in,
the uniform cell volume 8/S^3 on the way out.

The kernel is an MLP over fixed random Fourier features of the two endpoint
coordinates, producing a full c_out x c_in matrix per edge, optionally
multiplied by a smooth radial cutoff so the sum converges cleanly as the
discretization is refined.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tt
from .errors import ContractError, ValidationError
from .geometry.sdf import grid_coords, grid_nodes
from .neighbors import EdgeList, HashGrid, build, radius_query
from .tensor import Tensor

log = logging.getLogger(__name__)


@dataclass
class LatentGrid:
    """Regular voxel grid over D = [-1, 1]^3 (half-open lattice, torus)."""

    resolution: int
    nodes: np.ndarray = field(init=False)

    def __post_init__(self):
        self.nodes = grid_nodes(self.resolution)

    @property
    def spacing(self) -> float:
        return 2.0 / self.resolution

    @property
    def coords(self) -> np.ndarray:
        return grid_coords(self.resolution)

    @property
    def node_volume(self) -> float:
        return 8.0 / self.resolution ** 3

    @property
    def n_nodes(self) -> int:
        return self.resolution ** 3


def fourier_features(x: np.ndarray, b_freq: np.ndarray) -> np.ndarray:
    """[sin(2 pi B x); cos(2 pi B x)] feature map, bounded in [-1, 1]."""
    phase = 2.0 * np.pi * (np.atleast_2d(x) @ b_freq.T)
    return np.concatenate([np.sin(phase), np.cos(phase)], axis=1)


class KernelMlp:
    """MLP kernel over Fourier features of (query, source) coordinates.

    Output is a flattened c_out x c_in matrix per point pair. In the
    weighted variant the source quadrature weight also enters the MLP input.
    """

    def __init__(self, c_in: int, c_out: int, n_features: int = 8,
                 hidden: tuple[int, ...] = (64, 64), weighted: bool = False,
                 cutoff: bool = True, feature_scale: float = 1.0,
                 dtype: str = "f32", rng: np.random.Generator | None = None,
                 prefix: str = "kernel"):
        rng = rng or np.random.default_rng(0)
        self.c_in = c_in
        self.c_out = c_out
        self.weighted = weighted
        self.cutoff = cutoff
        self.prefix = prefix
        self.dtype = dtype
        self.b_freq = Tensor(rng.normal(0.0, feature_scale, (n_features, 3)), dtype=dtype)
        in_dim = 4 * n_features + (1 if weighted else 0)
        dims = (in_dim,) + tuple(hidden) + (c_in * c_out,)
        self.layers: list[tuple[Tensor, Tensor]] = []
        for i in range(len(dims) - 1):
            w = rng.normal(0.0, np.sqrt(2.0 / dims[i]), (dims[i + 1], dims[i]))
            self.layers.append((
                Tensor(w, dtype=dtype, requires_grad=True),
                Tensor(np.zeros(dims[i + 1]), dtype=dtype, requires_grad=True),
            ))

    def params(self) -> dict[str, Tensor]:
        out = {f"{self.prefix}.b_freq": self.b_freq}
        for i, (w, b) in enumerate(self.layers):
            out[f"{self.prefix}.{i}.w"] = w
            out[f"{self.prefix}.{i}.b"] = b
        return out

    def edge_inputs(self, xq: np.ndarray, ys: np.ndarray,
                    mu: np.ndarray | None = None) -> np.ndarray:
        """Per-edge MLP input: features(x) || features(y) [|| mu(y)]."""
        b = self.b_freq.data
        feats = [fourier_features(xq, b), fourier_features(ys, b)]
        if self.weighted:
            if mu is None:
                raise ContractError("weighted kernel needs quadrature weights")
            feats.append(np.asarray(mu, dtype=b.dtype)[:, None])
        return np.concatenate(feats, axis=1)

    def __call__(self, edge_feats: np.ndarray) -> Tensor:
        h = Tensor(edge_feats, dtype=self.dtype)
        for i, (w, b) in enumerate(self.layers):
            h = tt.linear(h, w, b)
            if i < len(self.layers) - 1:
                h = tt.gelu(h)
        return h

    def radial_weight(self, dist: np.ndarray, r: float) -> np.ndarray:
        """Smooth cutoff (1 - (d/r)^2)^2; identity when disabled."""
        if not self.cutoff:
            return np.ones_like(dist)
        t = np.clip(dist / r, 0.0, 1.0)
        return (1.0 - t * t) ** 2


def _ball_edges(grid_points: np.ndarray, queries: np.ndarray, r: float,
                hash_grid: HashGrid | None = None) -> EdgeList:
    hg = hash_grid if hash_grid is not None else build(grid_points, r)
    return radius_query(hg, queries, r)


def gno_encode(points: np.ndarray, values: np.ndarray | Tensor | None,
               weights: np.ndarray, grid: LatentGrid, r_in: float,
               kernel: KernelMlp, edges: EdgeList | None = None) -> Tensor:
    """Integrate the point cloud onto the latent grid.

    out(node) = sum_{y in B_r(node)} kappa(node, y) value(y) mu(y); grid nodes
    with empty neighborhoods come out exactly zero.
    """
    s = grid.resolution
    if edges is None:
        edges = _ball_edges(points, grid.nodes, r_in)
    if edges.n_queries != grid.n_nodes or edges.n_points != len(points):
        raise ContractError("edge list does not match grid nodes / points")
    seg = np.repeat(np.arange(edges.n_queries), np.diff(edges.offsets))
    src = edges.indices
    xq = grid.nodes[seg]
    ys = points[src]
    mu = np.asarray(weights, dtype=np.float64)[src]

    feats = kernel.edge_inputs(xq, ys, mu)
    mat = tt.reshape(kernel(feats), (len(src), kernel.c_out, kernel.c_in))
    if values is None:
        vals_arr = np.ones((len(src), 1), dtype=feats.dtype)
    elif isinstance(values, Tensor):
        vals_arr = None
    else:
        vals_arr = np.asarray(values, dtype=feats.dtype)[src]
    scale = mu * kernel.radial_weight(np.linalg.norm(xq - ys, axis=1), r_in)
    if vals_arr is not None:
        v_e = Tensor(vals_arr * scale[:, None], dtype=kernel.dtype)
    else:
        v_e = tt.mul(tt.take_rows(values, src), Tensor(scale[:, None], dtype=kernel.dtype))
    msg = tt.einsum("eoi,ei->eo", mat, v_e)
    agg = tt.segment_sum(msg, seg, grid.n_nodes)  # [S^3, c_out]
    return tt.reshape(tt.transpose(agg, (1, 0)), (kernel.c_out, s, s, s))


def gno_decode(grid_values: Tensor, queries: np.ndarray, r_out: float,
               kernel: KernelMlp, grid: LatentGrid,
               batch_size: int = 5000,
               hash_grid: HashGrid | None = None) -> Tensor:
    """Read the latent function out at arbitrary query points.

    u(x) = sum_{node in B_r(x)} kappa(x, node) v(node) * (8/S^3), processed in
    independent query batches; results do not depend on the batch size.
    Queries with empty neighborhoods yield zero (counted and logged).
    """
    c_in, s = grid_values.shape[0], grid_values.shape[1]
    if grid_values.shape != (c_in, s, s, s) or s != grid.resolution:
        raise ContractError(
            f"grid values {grid_values.shape} do not match latent grid S={grid.resolution}")
    if c_in != kernel.c_in:
        raise ContractError(f"kernel expects c_in={kernel.c_in}, grid has {c_in}")
    if len(queries) == 0:
        raise ContractError("empty query set")
    flat = tt.reshape(grid_values, (c_in, grid.n_nodes))
    hg = hash_grid if hash_grid is not None else build(grid.nodes, r_out)

    pieces = []
    empty = 0
    for b0 in range(0, len(queries), batch_size):
        q = queries[b0: b0 + batch_size]
        edges = radius_query(hg, q, r_out)
        seg = np.repeat(np.arange(edges.n_queries), np.diff(edges.offsets))
        src = edges.indices
        empty += int(np.sum(np.diff(edges.offsets) == 0))
        xq = q[seg]
        ys = grid.nodes[src]
        feats = kernel.edge_inputs(xq, ys, np.full(len(src), grid.node_volume))
        mat = tt.reshape(kernel(feats), (len(src), kernel.c_out, kernel.c_in))
        v_nodes = tt.take_rows(tt.transpose(flat, (1, 0)), src)  # [E, c_in]
        scale = grid.node_volume * kernel.radial_weight(
            np.linalg.norm(xq - ys, axis=1), r_out)
        v_nodes = tt.mul(v_nodes, Tensor(scale[:, None], dtype=kernel.dtype))
        msg = tt.einsum("eoi,ei->eo", mat, v_nodes)
        pieces.append(tt.segment_sum(msg, seg, len(q)))
    if empty:
        log.debug("gno_decode: %d queries had empty neighborhoods", empty)
    return pieces[0] if len(pieces) == 1 else tt.concat(pieces, axis=0)
