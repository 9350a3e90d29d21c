"""Three-phase exact recovery: seed labeling, block propagation, refinement.

Phase I partitions the torus into blocks whose visibility graph is connected
with high probability, labels a small seed set by exhaustive posterior
maximization, and propagates labels block to block along a BFS spanning
tree. Phase II relabels every vertex against the phase-I labeling by
genie-style likelihood. A segmented variant covers d = 1 with lambda * r < 1,
where the block graph is expected to fall apart into independent runs.

Estimated labelings are integer arrays with UNLABELED (-1) for the
not-yet-labeled state, which is only permitted between the two phases.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .distributions import validate_family
from .errors import (AssumptionViolation, ConfigurationError, ContractViolation,
                     RecoveryFailure)
from .evaluation import loglik_score_matrix, permissible_relabelings
from .infotheory import nu_d
from .model import UNLABELED, Instance

DEFAULT_SEED_BUDGET = 10 ** 6


# ---------------------------------------------------------------------------
# phase-I parameters
# ---------------------------------------------------------------------------

def choose_chi_delta(config, delta: float | None = None) -> tuple[float, float, float]:
    """Block-volume fraction chi and occupancy constant delta.

    d = 1 needs lambda * r > 1 and takes chi_0 as 0.9 of (1 - 1/(lambda r))/2;
    d >= 2 finds by bisection the largest chi_0 with
    lambda r^d (nu_d (1 - (3 sqrt(d)/2) chi_0^(1/d))^d - chi_0) > 1 and scales
    by 0.9. Either way chi = 0.75 chi_0 sits inside the admissible band
    (chi_0/2, chi_0). delta defaults to min(0.05, lambda r^d chi nu_d / 8).
    """
    lam, r, d = config.lam, config.r, config.d
    if d == 1:
        if lam * r <= 1.0:
            raise ConfigurationError(
                "d=1 with lambda*r <= 1: the block visibility graph is expected to be "
                "disconnected; use the segmented variant (recover_1d_segments)")
        chi0 = 0.9 * (1.0 - 1.0 / (lam * r)) / 2.0
    else:
        nu = nu_d(d)
        c = 1.5 * math.sqrt(d)

        def satisfied(x: float) -> bool:
            margin = 1.0 - c * x ** (1.0 / d)
            return margin > 0.0 and lam * r ** d * (nu * margin ** d - x) > 1.0

        if lam * nu * r ** d <= 1.0 or not satisfied(1e-12):
            raise ConfigurationError(
                f"no admissible chi_0: lambda*nu_d*r^d = {lam * nu * r ** d:.6g} "
                "leaves no slack over the geometric connectivity limit")
        lo, hi = 1e-12, (1.0 / c) ** d
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if satisfied(mid):
                lo = mid
            else:
                hi = mid
        chi0 = 0.9 * lo
    chi = 0.75 * chi0
    if delta is None:
        delta = min(0.05, config.lam * config.r ** d * chi * nu_d(d) / 8.0)
    if delta <= 0:
        raise ConfigurationError("delta must be positive")
    return chi, float(delta), chi0


# ---------------------------------------------------------------------------
# block partition
# ---------------------------------------------------------------------------

@dataclass
class BlockGrid:
    """Cube partition of the torus with per-block occupancy bookkeeping."""

    blocks_per_axis: int
    block_side: float
    d: int
    chi_effective: float
    delta: float
    occupancy_threshold: float      # delta * log n
    block_of_vertex: np.ndarray     # (N,)
    counts: np.ndarray              # (m^d,)
    occupied: np.ndarray            # (m^d,) bool
    _vert_sorted: np.ndarray = field(repr=False)
    _block_start: np.ndarray = field(repr=False)

    @property
    def num_blocks(self) -> int:
        return self.blocks_per_axis ** self.d

    def block_vertices(self, b: int) -> np.ndarray:
        """Vertex ids in block b, ascending."""
        return self._vert_sorted[self._block_start[b]:self._block_start[b + 1]]

    def gather_block_vertices(self, blocks: np.ndarray) -> np.ndarray:
        """Concatenated vertex ids of several blocks (ascending within each)."""
        return np.concatenate([self.block_vertices(int(b)) for b in np.atleast_1d(blocks)]) \
            if len(np.atleast_1d(blocks)) else np.zeros(0, dtype=np.int64)


def partition_blocks(instance: Instance, chi: float, delta: float) -> BlockGrid:
    """Partition into ~ n / (r^d chi log n) cube blocks; vertices are assigned
    by half-open coordinate intervals per axis."""
    if chi <= 0 or delta <= 0:
        raise ConfigurationError("chi and delta must be positive")
    cfg = instance.config
    log_n = cfg.log_n
    target_axis = (cfg.n / (cfg.r ** cfg.d * chi * log_n)) ** (1.0 / cfg.d)
    m = max(1, int(round(target_axis)))
    if m ** cfg.d < 2:
        raise ConfigurationError("instance too small: partition would have a single block")
    L = cfg.torus_side
    side = L / m
    chi_eff = cfg.n / (m ** cfg.d * cfg.r ** cfg.d * log_n)
    if instance.num_vertices:
        axis_idx = np.floor((instance.locations + L / 2.0) / side).astype(np.int64)
        np.clip(axis_idx, 0, m - 1, out=axis_idx)
        flat = np.zeros(instance.num_vertices, dtype=np.int64)
        for kk in range(cfg.d):
            flat = flat * m + axis_idx[:, kk]
    else:
        flat = np.zeros(0, dtype=np.int64)
    counts = np.bincount(flat, minlength=m ** cfg.d)
    threshold = delta * log_n
    occupied = counts >= threshold
    order = np.argsort(flat, kind="stable")
    start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return BlockGrid(
        blocks_per_axis=m, block_side=side, d=cfg.d, chi_effective=chi_eff,
        delta=delta, occupancy_threshold=threshold, block_of_vertex=flat,
        counts=counts, occupied=occupied, _vert_sorted=order, _block_start=start,
    )


# ---------------------------------------------------------------------------
# block visibility graph
# ---------------------------------------------------------------------------

def _axis_sup(delta_idx: int, side: float, L: float) -> float:
    """Largest toroidal axis distance between points of two blocks whose index
    difference along the axis is delta_idx."""
    lo = (delta_idx - 1.0) * side
    hi = (delta_idx + 1.0) * side
    k0 = math.ceil((lo - L / 2.0) / L)
    if L / 2.0 + k0 * L <= hi:
        return L / 2.0

    def wrap(w: float) -> float:
        w = abs(w) % L
        return min(w, L - w)

    return max(wrap(lo), wrap(hi))


def block_pair_sup_distance(offset, side: float, L: float) -> float:
    """Worst-case toroidal distance between points of two blocks at the given
    per-axis index offset."""
    return math.sqrt(sum(_axis_sup(o, side, L) ** 2 for o in offset))


def _passing_offsets(grid: BlockGrid, radius: float, L: float) -> list[tuple[int, ...]]:
    """Nonzero index offsets whose worst-case inter-point distance is within
    the radius, i.e. the mutual-visibility footprint."""
    m, s, d = grid.blocks_per_axis, grid.block_side, grid.d
    reach = min(int(radius / s) + 1, m - 1)
    out = []
    for off in product(range(-reach, reach + 1), repeat=d):
        if all(o == 0 for o in off):
            continue
        if block_pair_sup_distance(off, s, L) <= radius:
            out.append(off)
    return out


@dataclass
class VisibilityGraph:
    """Occupied blocks with edges between mutually visible pairs, plus the BFS
    spanning forest data from the lowest-indexed occupied block."""

    nodes: np.ndarray               # occupied block ids, ascending
    edges: np.ndarray               # (E, 2) block id pairs, first < second
    connected: bool
    bfs_order: np.ndarray           # reached blocks, root first
    parent: np.ndarray              # (m^d,) parent block id; -1 at root, -2 unreached
    levels: list                    # bfs_order split by depth


def build_visibility_graph(grid: BlockGrid, instance: Instance) -> VisibilityGraph:
    cfg = instance.config
    L = cfg.torus_side
    radius = cfg.visibility_radius
    m, d = grid.blocks_per_axis, grid.d
    nodes = np.nonzero(grid.occupied)[0]
    if len(nodes) == 0:
        raise ConfigurationError("no occupied blocks: delta too large for this instance")
    offsets = _passing_offsets(grid, radius, L)
    off_arr = np.asarray(offsets, dtype=np.int64).reshape(len(offsets), d)

    multi = np.empty((len(nodes), d), dtype=np.int64)
    rem = nodes.copy()
    for kk in range(d - 1, -1, -1):
        multi[:, kk] = rem % m
        rem //= m

    # edge list: canonical half of the offsets, deduplicated for tiny grids
    pair_chunks = []
    for off in offsets:
        first_nonzero = next(o for o in off if o != 0)
        if first_nonzero < 0:
            continue
        nb = (multi + np.asarray(off, dtype=np.int64)) % m
        flat = np.zeros(len(nodes), dtype=np.int64)
        for kk in range(d):
            flat = flat * m + nb[:, kk]
        mask = grid.occupied[flat] & (flat != nodes)
        if np.any(mask):
            a, b = nodes[mask], flat[mask]
            pair_chunks.append(np.column_stack([np.minimum(a, b), np.maximum(a, b)]))
    if pair_chunks:
        edges = np.unique(np.concatenate(pair_chunks), axis=0)
    else:
        edges = np.zeros((0, 2), dtype=np.int64)

    # BFS with deterministic parents: offsets in listed order, frontier ascending
    parent = np.full(m ** d, -2, dtype=np.int64)
    visited = np.zeros(m ** d, dtype=bool)
    root = int(nodes[0])
    visited[root] = True
    parent[root] = -1
    levels = [np.array([root], dtype=np.int64)]
    frontier = levels[0]
    while True:
        fmulti = np.empty((len(frontier), d), dtype=np.int64)
        rem = frontier.copy()
        for kk in range(d - 1, -1, -1):
            fmulti[:, kk] = rem % m
            rem //= m
        claimed = []
        for oi in range(len(offsets)):
            nb = (fmulti + off_arr[oi]) % m
            flat = np.zeros(len(frontier), dtype=np.int64)
            for kk in range(d):
                flat = flat * m + nb[:, kk]
            mask = grid.occupied[flat] & ~visited[flat]
            if not np.any(mask):
                continue
            cand, first = np.unique(flat[mask], return_index=True)
            visited[cand] = True
            parent[cand] = frontier[mask][first]
            claimed.append(cand)
        if not claimed:
            break
        level = np.sort(np.concatenate(claimed))
        levels.append(level)
        frontier = level
    bfs_order = np.concatenate(levels)
    connected = bool(visited[nodes].all())
    return VisibilityGraph(nodes=nodes, edges=edges, connected=connected,
                           bfs_order=bfs_order, parent=parent, levels=levels)


# ---------------------------------------------------------------------------
# seed MAP
# ---------------------------------------------------------------------------

def seed_map_labeling(instance: Instance, seed_vertices, budget: int = DEFAULT_SEED_BUDGET):
    """Exhaustive posterior maximization over the seed set: prior terms plus
    pairwise log-likelihoods of observed within-seed edges. Returns the
    (possibly budget-capped) vertex ids and their labels; ties break to the
    lexicographically smallest label vector."""
    cfg = instance.config
    k = cfg.k
    seed = np.sort(np.asarray(seed_vertices, dtype=np.int64))
    if len(seed) == 0:
        raise ContractViolation("seed set must be nonempty")
    if k ** len(seed) > budget:
        cap = int(math.floor(math.log(budget) / math.log(k)))
        if cap < 1:
            raise ConfigurationError(f"seed budget {budget} cannot fit a single vertex")
        warnings.warn(f"seed set capped from {len(seed)} to {cap} vertices to fit "
                      f"the enumeration budget {budget}", RuntimeWarning, stacklevel=2)
        seed = seed[:cap]
    s = len(seed)

    count = k ** s
    codes = np.arange(count, dtype=np.int64)
    labelings = np.empty((count, s), dtype=np.int64)
    for pos in range(s - 1, -1, -1):
        labelings[:, pos] = codes % k
        codes //= k

    scores = np.zeros(count)
    with np.errstate(divide="ignore"):
        logpi = np.log(cfg.pi)
    for pos in range(s):
        scores += logpi[labelings[:, pos]]

    local = {int(v): idx for idx, v in enumerate(seed)}
    for v in seed:
        nbrs, xs, ys = instance.neighbors(int(v))
        for u, xx, yy in zip(nbrs, xs, ys):
            if int(u) in local and int(u) > int(v):
                mat = np.empty((k, k))
                for a in range(k):
                    for b in range(a, k):
                        val = float(cfg.family.log_density_values(a, b, xx, yy))
                        mat[a, b] = mat[b, a] = val
                scores += mat[labelings[:, local[int(v)]], labelings[:, local[int(u)]]]

    best = int(np.argmax(scores))   # first maximum = lexicographically smallest
    return seed, labelings[best].copy()


# ---------------------------------------------------------------------------
# propagation
# ---------------------------------------------------------------------------

def _gather_csr_rows(indptr: np.ndarray, ids: np.ndarray):
    """(local row index, flat CSR position) for the concatenated rows of ids."""
    starts = indptr[ids]
    lens = (indptr[ids + 1] - starts).astype(np.int64)
    total = int(lens.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    rows = np.repeat(np.arange(len(ids), dtype=np.int64), lens)
    base = np.cumsum(lens) - lens
    flat = np.arange(total, dtype=np.int64) - np.repeat(base, lens) + np.repeat(starts, lens)
    return rows, flat


def propagate_block(instance: Instance, parent_ids, parent_labels, child_ids):
    """Label child vertices against the largest estimated community of the
    parent set. Children that see no reference vertex stay UNLABELED; all
    argmax ties break to the smallest community index."""
    cfg = instance.config
    k = cfg.k
    parent_ids = np.asarray(parent_ids, dtype=np.int64)
    parent_labels = np.asarray(parent_labels, dtype=np.int64)
    child_ids = np.asarray(child_ids, dtype=np.int64)
    labeled = parent_labels != UNLABELED
    if not np.any(labeled):
        raise ContractViolation("parent set has no labeled vertex")
    counts = np.bincount(parent_labels[labeled], minlength=k)
    i_star = int(np.argmax(counts))
    refs = parent_ids[labeled & (parent_labels == i_star)]
    is_ref = np.zeros(instance.num_vertices, dtype=bool)
    is_ref[refs] = True

    indptr, nbr, x, y = instance.csr
    rows, flat = _gather_csr_rows(indptr, child_ids)
    keep = is_ref[nbr[flat]]
    rows, flat = rows[keep], flat[keep]
    scores = np.zeros((len(child_ids), k))
    for j in range(k):
        vals = cfg.family.log_density_values(i_star, j, x[flat], y[flat])
        scores[:, j] += np.bincount(rows, weights=vals, minlength=len(child_ids))
    out = np.argmax(scores, axis=1).astype(np.int64)
    seen = np.bincount(rows, minlength=len(child_ids)) > 0
    out[~seen] = UNLABELED
    return out


def _istar_by_block(grid: BlockGrid, sigma: np.ndarray, k: int,
                    exclude: np.ndarray | None = None) -> np.ndarray:
    """Largest estimated community per block (ties to the smallest index),
    optionally ignoring some vertices (the consumed seed)."""
    lab = sigma
    if exclude is not None and len(exclude):
        lab = sigma.copy()
        lab[exclude] = UNLABELED
    mask = lab != UNLABELED
    nb = grid.num_blocks
    pairs = grid.block_of_vertex[mask] * k + lab[mask]
    counts = np.bincount(pairs, minlength=nb * k).reshape(nb, k)
    return np.argmax(counts, axis=1).astype(np.int64)


def _propagate_levels(instance: Instance, grid: BlockGrid, sigma: np.ndarray,
                      levels: list, parent: np.ndarray,
                      seed_excluded: np.ndarray) -> None:
    """Label every block in `levels` (in order) against its parent block's
    largest community, vectorizing each level in one pass. Equivalent to
    calling propagate_block per block in BFS order."""
    cfg = instance.config
    k = cfg.k
    indptr, nbr, x, y = instance.csr
    n = instance.num_vertices
    token = np.full(n, -1, dtype=np.int64)   # reference membership: block id or -1
    for level in levels:
        level = np.asarray(level, dtype=np.int64)
        parents = np.unique(parent[level])
        istar = _istar_by_block(grid, sigma, k, exclude=seed_excluded)
        pverts = grid.gather_block_vertices(parents)
        if len(seed_excluded):
            pverts = pverts[~np.isin(pverts, seed_excluded)]
        ref_mask = sigma[pverts] == istar[grid.block_of_vertex[pverts]]
        token[:] = -1
        token[pverts[ref_mask]] = grid.block_of_vertex[pverts[ref_mask]]

        child = grid.gather_block_vertices(level)
        if len(child) == 0:
            continue
        want = parent[grid.block_of_vertex[child]]
        rows, flat = _gather_csr_rows(indptr, child)
        tok = token[nbr[flat]]
        keep = tok == want[rows]
        rows, flat, tok = rows[keep], flat[keep], tok[keep]
        ref_comm = istar[tok]
        scores = np.zeros((len(child), k))
        for s in range(k):
            ms = ref_comm == s
            if not np.any(ms):
                continue
            rs, fs = rows[ms], flat[ms]
            for j in range(k):
                vals = cfg.family.log_density_values(s, j, x[fs], y[fs])
                scores[:, j] += np.bincount(rs, weights=vals, minlength=len(child))
        lab = np.argmax(scores, axis=1).astype(np.int64)
        seen = np.bincount(rows, minlength=len(child)) > 0
        lab[~seen] = UNLABELED
        sigma[child] = lab


# ---------------------------------------------------------------------------
# refinement
# ---------------------------------------------------------------------------

def refine_all(instance: Instance, sigma_hat: np.ndarray,
               include_prior: bool = False) -> np.ndarray:
    """Relabel every vertex by likelihood against its labeled visible
    neighbors; vertices with none fall back to the prior argmax. The output
    is total."""
    cfg = instance.config
    scores, counts = loglik_score_matrix(instance, sigma_hat, include_prior=include_prior)
    out = np.argmax(scores, axis=1).astype(np.int64)
    if not include_prior:
        out[counts == 0] = int(np.argmax(cfg.pi))
    return out


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

@dataclass
class PhaseDiagnostics:
    """Per-phase artifacts for post-hoc metrics; recovery itself never touches
    the ground truth, so mistake counts are computed downstream."""

    algorithm: str
    connected: bool
    chi: float | None
    chi0: float | None
    delta: float
    chi_effective: float | None
    blocks_per_axis: int
    occupied_blocks: int
    segment_count: int
    seed_vertices: np.ndarray
    seed_capped: bool
    sigma_hat: np.ndarray | None        # after propagation, before refinement
    unlabeled_after_propagation: int
    refine_changes: int
    block_of_vertex: np.ndarray | None


def _require_standard_assumptions(config) -> None:
    report = validate_family(config.family)
    if not (report.identifiability_ok and report.distinctness_ok):
        raise AssumptionViolation(
            "family fails the identifiability/distinctness checks required by the "
            "standard algorithm:\n" + report.format_text())


def _require_segmented_assumptions(config) -> None:
    report = validate_family(config.family)
    if not (report.identifiability_ok and report.strong_distinctness_ok):
        raise AssumptionViolation(
            "family fails the identifiability/strong-distinctness checks required by "
            "the segmented variant:\n" + report.format_text())
    omega = permissible_relabelings(config.pi, config.family)
    if len(omega) > 1:
        raise AssumptionViolation(
            f"segmented variant needs a trivial symmetry group; found {len(omega)} "
            "permissible relabelings (impossible regime or unsupported symmetric family)")


def _seed_size(eps0: float, log_n: float, available: int) -> int:
    return min(max(1, int(math.floor(eps0 * log_n))), available)


def recover(instance: Instance, delta: float | None = None,
            budget: int = DEFAULT_SEED_BUDGET, include_prior: bool = False,
            validate: bool = True) -> tuple[np.ndarray, PhaseDiagnostics]:
    """Standard pipeline for d >= 2 or (d = 1 and lambda r > 1).

    Raises RecoveryFailure when the block visibility graph is disconnected;
    the diagnostics ride along on the exception.
    """
    cfg = instance.config
    if validate:
        _require_standard_assumptions(cfg)
    chi, delta_, chi0 = choose_chi_delta(cfg, delta)
    grid = partition_blocks(instance, chi, delta_)
    if not (chi0 / 2.0 < grid.chi_effective < chi0):
        raise ConfigurationError(
            f"block-count rounding pushed chi_effective = {grid.chi_effective:.6g} "
            f"outside the admissible band ({chi0 / 2:.6g}, {chi0:.6g}); "
            "the instance is too small for this configuration")
    vis = build_visibility_graph(grid, instance)
    diag = PhaseDiagnostics(
        algorithm="standard", connected=vis.connected, chi=chi, chi0=chi0,
        delta=delta_, chi_effective=grid.chi_effective,
        blocks_per_axis=grid.blocks_per_axis, occupied_blocks=int(len(vis.nodes)),
        segment_count=1, seed_vertices=np.zeros(0, dtype=np.int64), seed_capped=False,
        sigma_hat=None, unlabeled_after_propagation=0, refine_changes=0,
        block_of_vertex=grid.block_of_vertex,
    )
    if not vis.connected:
        raise RecoveryFailure("FAIL: block visibility graph is disconnected", diag)

    sigma = np.full(instance.num_vertices, UNLABELED, dtype=np.int64)
    root = int(vis.bfs_order[0])
    root_verts = grid.block_vertices(root)
    eps0 = min(1.0 / (2.0 * math.log(cfg.k)), delta_)
    want = _seed_size(eps0, cfg.log_n, len(root_verts))
    seed_req = root_verts[:want]
    seed, seed_labels = seed_map_labeling(instance, seed_req, budget)
    diag.seed_vertices = seed
    diag.seed_capped = len(seed) < len(seed_req)
    sigma[seed] = seed_labels

    rest = root_verts[~np.isin(root_verts, seed)]
    if len(rest):
        sigma[rest] = propagate_block(instance, seed, seed_labels, rest)
    # children read the root's remainder; only an emptied root falls back to the seed
    seed_excluded = seed if len(rest) else np.zeros(0, dtype=np.int64)
    _propagate_levels(instance, grid, sigma, vis.levels[1:], vis.parent, seed_excluded)

    diag.sigma_hat = sigma.copy()
    diag.unlabeled_after_propagation = int(np.sum(sigma == UNLABELED))
    tilde = refine_all(instance, sigma, include_prior=include_prior)
    labeled = sigma != UNLABELED
    diag.refine_changes = int(np.sum(tilde[labeled] != sigma[labeled]))
    return tilde, diag


def _segments_of_circle(occupied: np.ndarray) -> list:
    """Maximal runs of adjacent occupied blocks on the circle, each as an
    ascending-in-run array of block ids; runs may wrap."""
    m = len(occupied)
    if occupied.all():
        return [np.arange(m, dtype=np.int64)]
    if not occupied.any():
        return []
    starts = np.nonzero(occupied & ~np.roll(occupied, 1))[0]
    segments = []
    for s in starts:
        run = [int(s)]
        b = (int(s) + 1) % m
        while occupied[b]:
            run.append(b)
            b = (b + 1) % m
        segments.append(np.asarray(run, dtype=np.int64))
    return segments


def recover_1d_segments(instance: Instance, delta: float | None = None,
                        budget: int = DEFAULT_SEED_BUDGET, include_prior: bool = False,
                        validate: bool = True) -> tuple[np.ndarray, PhaseDiagnostics]:
    """Segmented variant for d = 1: blocks of length r log(n) / 2, one seed per
    maximal run of occupied blocks, left-to-right propagation inside each run,
    then the usual refinement. Requires strong distinctness and a trivial
    permissible group."""
    cfg = instance.config
    if cfg.d != 1:
        raise ConfigurationError("the segmented variant is defined for d = 1 only")
    if validate:
        _require_segmented_assumptions(cfg)
    chi = 0.5
    if delta is None:
        delta = min(0.05, cfg.lam * cfg.r * chi * nu_d(1) / 8.0)
    grid = partition_blocks(instance, chi, delta)
    segments = _segments_of_circle(grid.occupied)
    if not segments:
        raise ConfigurationError("no occupied blocks: delta too large for this instance")
    m = grid.blocks_per_axis

    diag = PhaseDiagnostics(
        algorithm="segmented_1d", connected=len(segments) == 1, chi=chi, chi0=None,
        delta=grid.delta, chi_effective=grid.chi_effective, blocks_per_axis=m,
        occupied_blocks=int(grid.occupied.sum()), segment_count=len(segments),
        seed_vertices=np.zeros(0, dtype=np.int64), seed_capped=False, sigma_hat=None,
        unlabeled_after_propagation=0, refine_changes=0,
        block_of_vertex=grid.block_of_vertex,
    )

    sigma = np.full(instance.num_vertices, UNLABELED, dtype=np.int64)
    eps0 = min(cfg.lam * cfg.r / (4.0 * math.log(cfg.k)), grid.delta)
    parent = np.full(grid.num_blocks, -1, dtype=np.int64)
    all_seeds = []
    excluded_seeds = []     # seeds whose root block kept a nonempty remainder
    capped = False
    for seg in segments:
        first = int(seg[0])
        verts = grid.block_vertices(first)
        want = _seed_size(eps0, cfg.log_n, len(verts))
        seed_req = verts[:want]
        seed, seed_labels = seed_map_labeling(instance, seed_req, budget)
        capped = capped or len(seed) < len(seed_req)
        sigma[seed] = seed_labels
        all_seeds.append(seed)
        rest = verts[~np.isin(verts, seed)]
        if len(rest):
            sigma[rest] = propagate_block(instance, seed, seed_labels, rest)
            excluded_seeds.append(seed)
        for prev, cur in zip(seg[:-1], seg[1:]):
            parent[int(cur)] = int(prev)
    seed_all = np.concatenate(excluded_seeds) if excluded_seeds else np.zeros(0, dtype=np.int64)
    diag.seed_vertices = np.concatenate(all_seeds)

    # level l = the (l+1)-th block of every long-enough segment
    max_len = max(len(seg) for seg in segments)
    levels = []
    for depth in range(1, max_len):
        blocks = [int(seg[depth]) for seg in segments if len(seg) > depth]
        if blocks:
            levels.append(np.asarray(sorted(blocks), dtype=np.int64))
    _propagate_levels(instance, grid, sigma, levels, parent, seed_all)

    diag.seed_capped = capped
    diag.sigma_hat = sigma.copy()
    diag.unlabeled_after_propagation = int(np.sum(sigma == UNLABELED))
    tilde = refine_all(instance, sigma, include_prior=include_prior)
    labeled = sigma != UNLABELED
    diag.refine_changes = int(np.sum(tilde[labeled] != sigma[labeled]))
    return tilde, diag
