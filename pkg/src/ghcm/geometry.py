"""Torus geometry, Poisson point sampling, and grid-accelerated neighbor search.

The model lives on the d-dimensional torus [-L/2, L/2]^d with L = n^(1/d).
Points are plain float arrays of shape (d,) for a single location or (N, d)
for a batch; vertex ids are row indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolation

# Guard for Poisson count sampling: far beyond any desk-scale run but well
# inside the int64-safe range of the generator.
_MAX_POISSON_MEAN = 1e15


def torus_side(n: float, d: int) -> float:
    """Side length L = n^(1/d) of the cube of volume n."""
    return float(n) ** (1.0 / d)


def toroidal_distance(a, b, L: float) -> float:
    """Euclidean toroidal distance between two points on [-L/2, L/2]^d."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ContractViolation(f"dimension mismatch: {a.shape} vs {b.shape}")
    delta = np.abs(a - b)
    delta = np.minimum(delta, L - delta)
    return float(np.sqrt(np.sum(delta * delta)))


def toroidal_distance_batch(a: np.ndarray, b: np.ndarray, L: float) -> np.ndarray:
    """Row-wise toroidal distances between two (N, d) coordinate arrays."""
    delta = np.abs(a - b)
    np.minimum(delta, L - delta, out=delta)
    return np.sqrt(np.einsum("ij,ij->i", delta, delta))


def sample_poisson_points(lam: float, n: float, d: int, rng: np.random.Generator) -> np.ndarray:
    """Sample a homogeneous Poisson process of intensity lam on the volume-n torus.

    The count is Poisson(lam * n); locations are i.i.d. uniform. Returns an
    (N, d) array. Deterministic given the generator state.
    """
    if not (lam > 0 and n > 0):
        raise ConfigurationError("lambda and n must be positive")
    mean = lam * n
    if not mean < _MAX_POISSON_MEAN:
        raise ConfigurationError(f"lambda*n = {mean:g} exceeds count sampling range")
    count = int(rng.poisson(mean))
    L = torus_side(n, d)
    return rng.uniform(-L / 2.0, L / 2.0, size=(count, d))


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform bucket grid over the torus for fixed-radius pair queries.

    cell_side * cells_per_axis == torus_side exactly by construction, and
    cell_side >= the query radius the grid was built for, so any pair within
    that radius sits in cells that differ by at most one index per axis
    (with wraparound).
    """

    cell_side: float
    cells_per_axis: int
    torus_side: float
    cell_of_point: np.ndarray        # (N,) flat cell index per point
    bucket_points: np.ndarray        # (N,) point ids grouped by cell
    bucket_start: np.ndarray         # (#cells + 1,) CSR offsets into bucket_points

    def bucket(self, flat_index: int) -> np.ndarray:
        """Point ids in one cell."""
        return self.bucket_points[self.bucket_start[flat_index]:self.bucket_start[flat_index + 1]]


def build_grid(points: np.ndarray, radius: float, L: float) -> SpatialGrid:
    """Build a SpatialGrid with the largest cell count whose cells are >= radius
    (capped so the bucket table stays proportional to the point count; any
    smaller cell count keeps the cell_side >= radius invariant)."""
    points = np.asarray(points, dtype=float)
    if radius <= 0:
        raise ConfigurationError("radius must be positive")
    if radius > L:
        raise ConfigurationError(f"radius {radius:g} exceeds torus side {L:g}")
    d_ = points.shape[1] if points.ndim == 2 else 1
    cap = max(4, int(math.ceil((8.0 * max(len(points), 1)) ** (1.0 / d_))))
    m = max(1, min(int(math.floor(L / radius)), cap))
    cell_side = L / m
    d = points.shape[1] if points.ndim == 2 else 1
    if points.size == 0:
        idx = np.zeros(0, dtype=np.int64)
    else:
        axis_idx = np.floor((points + L / 2.0) / cell_side).astype(np.int64)
        np.clip(axis_idx, 0, m - 1, out=axis_idx)
        idx = np.zeros(len(points), dtype=np.int64)
        for k in range(d):
            idx = idx * m + axis_idx[:, k]
    order = np.argsort(idx, kind="stable")
    counts = np.bincount(idx, minlength=m ** d)
    start = np.concatenate([[0], np.cumsum(counts)])
    return SpatialGrid(
        cell_side=cell_side,
        cells_per_axis=m,
        torus_side=L,
        cell_of_point=idx,
        bucket_points=order,
        bucket_start=start,
    )


def _canonical_offsets(d: int) -> list[tuple[int, ...]]:
    """Half of the 3^d neighbor offsets (plus the zero offset), so that each
    unordered cell pair is visited exactly once."""
    offsets = [()]
    for _ in range(d):
        offsets = [o + (s,) for o in offsets for s in (-1, 0, 1)]
    keep = []
    for o in offsets:
        # keep zero and the lexicographically positive half
        for s in o:
            if s > 0:
                keep.append(o)
                break
            if s < 0:
                break
        else:
            keep.append(o)  # all zero
    return keep


def visible_pairs(points: np.ndarray, radius: float, grid: SpatialGrid):
    """All unordered point pairs within `radius` under the toroidal metric.

    Returns (u, v, dist) arrays with u < v, sorted by (u, v). The grid must
    have been built over the same points with cell_side >= radius. Radii
    beyond L/2 are rejected: a wrap on the far side would make pair
    multiplicity ambiguous.
    """
    points = np.asarray(points, dtype=float)
    L = grid.torus_side
    if radius > L / 2.0:
        raise ConfigurationError(
            f"radius {radius:g} > L/2 = {L / 2.0:g}; toroidal pairs would wrap twice"
        )
    if grid.cell_side < radius:
        raise ContractViolation("grid cell_side smaller than query radius")
    n_pts = len(points)
    if n_pts < 2:
        e = np.zeros(0, dtype=np.int64)
        return e, e.copy(), np.zeros(0)

    d = points.shape[1]
    m = grid.cells_per_axis
    us, vs, ds = [], [], []

    # Cell multi-indices in a fixed order; scan each cell against itself and
    # its canonical half of neighbors (wraparound via modulo).
    nonempty = np.nonzero(np.diff(grid.bucket_start))[0]
    offsets = _canonical_offsets(d)
    multi = np.empty((len(nonempty), d), dtype=np.int64)
    rem = nonempty.copy()
    for k in range(d - 1, -1, -1):
        multi[:, k] = rem % m
        rem //= m

    for ci, cell in enumerate(nonempty):
        a_ids = grid.bucket(cell)
        pa = points[a_ids]
        for off in offsets:
            if all(s == 0 for s in off):
                if len(a_ids) < 2:
                    continue
                iu, iv = np.triu_indices(len(a_ids), k=1)
                pu, pv = pa[iu], pa[iv]
                uu, vv = a_ids[iu], a_ids[iv]
            else:
                nb = multi[ci] + np.asarray(off)
                nb %= m
                flat = 0
                for k in range(d):
                    flat = flat * m + nb[k]
                if m <= 2 and flat == cell:
                    continue  # tiny grids: offset wraps back onto the same cell
                b_ids = grid.bucket(int(flat))
                if len(b_ids) == 0:
                    continue
                iu = np.repeat(np.arange(len(a_ids)), len(b_ids))
                iv = np.tile(np.arange(len(b_ids)), len(a_ids))
                pu, pv = pa[iu], points[b_ids][iv]
                uu, vv = a_ids[iu], b_ids[iv]
            dist = toroidal_distance_batch(pu, pv, L)
            keep = dist <= radius
            if not np.any(keep):
                continue
            uk, vk, dk = uu[keep], vv[keep], dist[keep]
            lo = np.minimum(uk, vk)
            hi = np.maximum(uk, vk)
            us.append(lo)
            vs.append(hi)
            ds.append(dk)

    if not us:
        e = np.zeros(0, dtype=np.int64)
        return e, e.copy(), np.zeros(0)
    u = np.concatenate(us)
    v = np.concatenate(vs)
    dist = np.concatenate(ds)
    if m <= 2:
        # with <=2 cells per axis distinct offsets can reach the same cell
        # pair twice; deduplicate on (u, v)
        key = u * n_pts + v
        _, first = np.unique(key, return_index=True)
        u, v, dist = u[first], v[first], dist[first]
        order = np.arange(len(u))
    else:
        order = np.lexsort((v, u))
    return u[order], v[order], dist[order]


def brute_force_pairs(points: np.ndarray, radius: float, L: float):
    """O(N^2) reference pair scan; oracle for visible_pairs."""
    points = np.asarray(points, dtype=float)
    n_pts = len(points)
    if n_pts < 2:
        e = np.zeros(0, dtype=np.int64)
        return e, e.copy(), np.zeros(0)
    iu, iv = np.triu_indices(n_pts, k=1)
    dist = toroidal_distance_batch(points[iu], points[iv], L)
    keep = dist <= radius
    return iu[keep].astype(np.int64), iv[keep].astype(np.int64), dist[keep]
