"""Fixed-radius neighbor search on point clouds.

A spatial hash grid with cell size equal to the query radius: each query
scans its own cell plus the 26 adjacent ones, prunes candidates with an
l-inf test and keeps pairs passing the exact l2 test (boundary inclusive).
`brute_force_radius` is the O(N*Q) reference; both return identical CSR
edge lists (neighbor indices sorted ascending per query).

Integer cell keys are hashed with a 3-prime multiply-xor scheme into a
power-of-two table; collisions are resolved by exact packed-key comparison,
so correctness never depends on hash quality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ValidationError

_P1 = np.uint64(73856093)
_P2 = np.uint64(19349663)
_P3 = np.uint64(83492791)
_COORD_OFFSET = np.int64(1 << 20)
_QUERY_CHUNK = 8192

_STENCIL = np.array(
    [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)],
    dtype=np.int64,
)


@dataclass
class EdgeList:
    """CSR radius-graph connectivity: queries index rows, points are neighbors."""

    offsets: np.ndarray  # int64 [Q + 1]
    indices: np.ndarray  # int64 [E]
    n_queries: int
    n_points: int

    @property
    def n_edges(self) -> int:
        return int(self.offsets[-1])

    def neighbors(self, q: int) -> np.ndarray:
        return self.indices[self.offsets[q]: self.offsets[q + 1]]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, EdgeList)
            and self.n_queries == other.n_queries
            and self.n_points == other.n_points
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.indices, other.indices)
        )


def _cells_of(points: np.ndarray, cell_size: float) -> np.ndarray:
    cells = np.floor(points / cell_size).astype(np.int64)
    if np.any(np.abs(cells) >= _COORD_OFFSET):
        raise ValidationError("cell coordinates exceed the supported range")
    return cells


def _pack(cells: np.ndarray) -> np.ndarray:
    c = (cells + _COORD_OFFSET).astype(np.uint64)
    return (c[:, 0] << np.uint64(42)) | (c[:, 1] << np.uint64(21)) | c[:, 2]


def _hash(cells: np.ndarray, mask: np.uint64) -> np.ndarray:
    c = cells.astype(np.uint64)
    return ((c[:, 0] * _P1) ^ (c[:, 1] * _P2) ^ (c[:, 2] * _P3)) & mask


class HashGrid:
    """Immutable voxel hash over a point set; voxel size equals the radius."""

    def __init__(self, points: np.ndarray, cell_size: float):
        points = np.ascontiguousarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValidationError(f"points must be [N, 3], got {points.shape}")
        if not (cell_size > 0):
            raise ValidationError(f"radius/cell size must be positive, got {cell_size}")
        if points.size and not np.isfinite(points).all():
            raise ValidationError("points must be finite")
        self.points = points
        self.cell_size = float(cell_size)
        n = points.shape[0]

        bits = max(4, int(np.ceil(np.log2(max(n, 1) * 2 + 1))))
        self._mask = np.uint64((1 << bits) - 1)

        cells = _cells_of(points, self.cell_size) if n else np.zeros((0, 3), np.int64)
        keys = _pack(cells)
        hashes = _hash(cells, self._mask)
        # bucket contents ordered by point index (stable lexsort, index minor)
        order = np.lexsort((np.arange(n), keys, hashes))
        self._order = order
        hs, ks = hashes[order], keys[order]
        if n:
            boundary = np.flatnonzero(np.concatenate(([True], (hs[1:] != hs[:-1]) | (ks[1:] != ks[:-1]))))
            self._cell_start = boundary
            self._cell_count = np.diff(np.concatenate((boundary, [n])))
            self._cell_hash = hs[boundary]
            self._cell_key = ks[boundary]
            runs = np.diff(np.concatenate(([0], np.flatnonzero(np.diff(self._cell_hash)) + 1,
                                           [self._cell_hash.size])))
            self._max_run = int(runs.max()) if runs.size else 0
        else:
            self._cell_start = np.zeros(0, np.int64)
            self._cell_count = np.zeros(0, np.int64)
            self._cell_hash = np.zeros(0, np.uint64)
            self._cell_key = np.zeros(0, np.uint64)
            self._max_run = 0

    @property
    def n_cells(self) -> int:
        return int(self._cell_key.size)

    def _lookup(self, cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map cell triples to (start, count) bucket ranges; count 0 if absent."""
        qkey = _pack(cells)
        qh = _hash(cells, self._mask)
        lo = np.searchsorted(self._cell_hash, qh, side="left")
        hi = np.searchsorted(self._cell_hash, qh, side="right")
        found = np.full(cells.shape[0], -1, np.int64)
        for probe in range(self._max_run):
            pos = lo + probe
            ok = (pos < hi) & (found < 0)
            if not ok.any():
                break
            idx = np.where(ok, pos, 0)
            match = ok & (self._cell_key[idx] == qkey)
            found[match] = pos[match]
        start = np.where(found >= 0, self._cell_start[np.maximum(found, 0)], 0)
        count = np.where(found >= 0, self._cell_count[np.maximum(found, 0)], 0)
        return start, count


def build(points: np.ndarray, r: float) -> HashGrid:
    """Hash all points into voxels of edge length `r`."""
    return HashGrid(points, r)


def radius_query(grid: HashGrid, queries: np.ndarray, r: float) -> EdgeList:
    """All (query, point) pairs with ||q - p||_2 <= r, via the 27-cell stencil."""
    if abs(r - grid.cell_size) > 0:
        raise ContractError(f"query radius {r} != grid cell size {grid.cell_size}")
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != 3:
        raise ValidationError(f"queries must be [Q, 3], got {queries.shape}")
    nq = queries.shape[0]
    pts = grid.points
    r2 = r * r

    all_q: list[np.ndarray] = []
    all_p: list[np.ndarray] = []
    for base in range(0, nq, _QUERY_CHUNK):
        chunk = queries[base: base + _QUERY_CHUNK]
        if grid.points.shape[0] == 0:
            continue
        qcells = _cells_of(chunk, grid.cell_size)
        for off in _STENCIL:
            start, count = grid._lookup(qcells + off)
            total = int(count.sum())
            if total == 0:
                continue
            qid = np.repeat(np.arange(chunk.shape[0], dtype=np.int64), count)
            within = np.arange(total, dtype=np.int64) - np.repeat(
                np.cumsum(count) - count, count)
            cand = grid._order[np.repeat(start, count) + within]
            dx = chunk[qid, 0] - pts[cand, 0]
            dy = chunk[qid, 1] - pts[cand, 1]
            dz = chunk[qid, 2] - pts[cand, 2]
            keep = (np.abs(dx) <= r) & (np.abs(dy) <= r) & (np.abs(dz) <= r)
            if not keep.any():
                continue
            dx, dy, dz = dx[keep], dy[keep], dz[keep]
            qid, cand = qid[keep], cand[keep]
            keep2 = dx * dx + dy * dy + dz * dz <= r2
            all_q.append(qid[keep2] + base)
            all_p.append(cand[keep2])

    if all_q:
        q = np.concatenate(all_q)
        p = np.concatenate(all_p)
        order = np.lexsort((p, q))
        q, p = q[order], p[order]
    else:
        q = np.zeros(0, np.int64)
        p = np.zeros(0, np.int64)
    offsets = np.zeros(nq + 1, np.int64)
    np.cumsum(np.bincount(q, minlength=nq), out=offsets[1:])
    return EdgeList(offsets, p, nq, pts.shape[0])


def brute_force_radius(points: np.ndarray, queries: np.ndarray, r: float) -> EdgeList:
    """Exhaustive O(N*Q) reference with identical inclusivity and ordering."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    nq, npts = queries.shape[0], points.shape[0]
    r2 = r * r
    rows: list[np.ndarray] = []
    counts = np.zeros(nq, np.int64)
    for base in range(0, nq, 512):
        chunk = queries[base: base + 512]
        dx = chunk[:, None, 0] - points[None, :, 0]
        dy = chunk[:, None, 1] - points[None, :, 1]
        dz = chunk[:, None, 2] - points[None, :, 2]
        mask = dx * dx + dy * dy + dz * dz <= r2
        qi, pi = np.nonzero(mask)
        rows.append(pi)
        counts[base: base + chunk.shape[0]] = mask.sum(axis=1)
    indices = np.concatenate(rows) if rows else np.zeros(0, np.int64)
    offsets = np.zeros(nq + 1, np.int64)
    np.cumsum(counts, out=offsets[1:])
    return EdgeList(offsets, indices.astype(np.int64), nq, npts)
