import itertools
import math

import numpy as np
import pytest

from conftest import bernoulli_family, gaussian_family, make_config
from ghcm.errors import (AssumptionViolation, ConfigurationError, ContractViolation,
                         RecoveryFailure)
from ghcm.evaluation import agreement, loglik_score_matrix, permissible_relabelings
from ghcm.geometry import toroidal_distance
from ghcm.infotheory import nu_d
from ghcm.model import UNLABELED, ModelConfig, build_instance, sample_instance
from ghcm.recovery import (build_visibility_graph, choose_chi_delta, partition_blocks,
                           propagate_block, recover, recover_1d_segments, refine_all,
                           seed_map_labeling, _seed_size)


def instance_from_points(family, locations, labels, n=400.0, d=1, lam=2.0,
                         pi=(0.5, 0.5), seed=0):
    cfg = ModelConfig(lam=lam, n=n, r=family.r, d=d, k=family.k,
                      pi=np.asarray(pi, dtype=float), family=family)
    return build_instance(cfg, np.asarray(locations, dtype=float).reshape(-1, d),
                          np.asarray(labels, dtype=np.int64), seed)


# -- phase-I parameters --------------------------------------------------------

def test_choose_chi_delta_one_dimensional():
    cfg = make_config(bernoulli_family(), lam=2.0, r=1.0, d=1, n=50_000.0)
    chi, delta, chi0 = choose_chi_delta(cfg)
    assert chi0 == pytest.approx(0.9 * 0.25, abs=1e-12)
    assert chi == pytest.approx(0.16875, abs=1e-12)
    assert delta == pytest.approx(min(0.05, 2.0 * chi * nu_d(1) / 8.0), abs=1e-12)
    assert chi0 / 2 < chi < chi0


def test_choose_chi_delta_rejects_sparse_1d():
    cfg = make_config(bernoulli_family(), lam=1.0, r=1.0, d=1)
    with pytest.raises(ConfigurationError) as exc:
        choose_chi_delta(cfg)
    assert "segmented" in str(exc.value)


def test_choose_chi_delta_plugs_back_in_two_dimensions():
    cfg = make_config(bernoulli_family(), lam=2.0, r=1.0, d=2)
    chi, delta, chi0 = choose_chi_delta(cfg)
    lam, r, d = cfg.lam, cfg.r, cfg.d
    c = 1.5 * math.sqrt(d)
    margin = 1.0 - c * chi0 ** (1.0 / d)
    assert margin > 0
    assert lam * r ** d * (nu_d(d) * margin ** d - chi0) > 1.0
    assert chi0 / 2 < chi < chi0
    assert delta > 0


def test_choose_chi_delta_rejects_thin_geometry():
    # lambda * nu_d * r^d barely above zero: no admissible chi_0
    cfg = make_config(bernoulli_family(r=0.2), lam=1.0, r=0.2, d=2)
    with pytest.raises(ConfigurationError):
        choose_chi_delta(cfg)


def test_user_override_delta():
    cfg = make_config(bernoulli_family(), lam=2.0, r=1.0, d=1)
    _, delta, _ = choose_chi_delta(cfg, delta=0.2)
    assert delta == 0.2


# -- partition -------------------------------------------------------------------

def test_partition_arithmetic():
    cfg = make_config(bernoulli_family(), lam=1.0, n=10_000.0, r=1.0, d=2)
    inst = sample_instance(cfg, 1)
    grid = partition_blocks(inst, chi=0.2, delta=0.05)
    assert grid.blocks_per_axis == 74        # round((n / (0.2 ln n))^(1/2))
    assert grid.block_side * grid.blocks_per_axis == pytest.approx(cfg.torus_side)
    want_chi_eff = cfg.n / (74 ** 2 * math.log(cfg.n))
    assert grid.chi_effective == pytest.approx(want_chi_eff, rel=1e-12)
    assert grid.counts.sum() == inst.num_vertices
    # block assignment consistent with coordinates
    L, m = cfg.torus_side, grid.blocks_per_axis
    axis = np.clip(np.floor((inst.locations + L / 2) / grid.block_side), 0, m - 1)
    assert np.array_equal(grid.block_of_vertex, (axis[:, 0] * m + axis[:, 1]).astype(int))


def test_partition_boundary_half_open():
    fam = bernoulli_family()
    cfg = make_config(fam, lam=2.0, n=100.0, r=1.0, d=1)
    inst = sample_instance(cfg, 0)
    grid = partition_blocks(inst, chi=0.2, delta=0.05)
    side, L = grid.block_side, cfg.torus_side
    probe = instance_from_points(fam, [[-L / 2 + side], [-L / 2 + side * 0.999]],
                                 [0, 0], n=100.0, lam=2.0)
    pgrid = partition_blocks(probe, chi=0.2, delta=0.05)
    assert pgrid.block_of_vertex[0] == 1      # exactly on the boundary: right block
    assert pgrid.block_of_vertex[1] == 0


def test_partition_single_corner_cluster():
    fam = bernoulli_family()
    locs = [[-45.0 + 0.01 * i] for i in range(40)]
    inst = instance_from_points(fam, locs, [0] * 40, n=100.0)
    grid = partition_blocks(inst, chi=0.5, delta=0.05)
    assert int(grid.occupied.sum()) == 1
    b = int(np.nonzero(grid.occupied)[0][0])
    assert np.array_equal(np.sort(grid.block_vertices(b)), np.arange(40))


def test_partition_rejects_single_block():
    fam = bernoulli_family()
    inst = instance_from_points(fam, [[0.0], [1.0]], [0, 1], n=100.0)
    with pytest.raises(ConfigurationError):
        partition_blocks(inst, chi=40.0, delta=0.05)


# -- visibility graph --------------------------------------------------------------

def _near_field_oracle_edges(grid, cfg):
    """Independent near-field mutual-visibility oracle: with the minimal
    circular index offset per axis, the worst-case pair distance is
    sqrt(sum ((|off|+1) side)^2) as long as nothing wraps past L/2."""
    m, s, d = grid.blocks_per_axis, grid.block_side, grid.d
    R = cfg.visibility_radius
    reach = int(R / s) + 1
    assert (reach + 2) * s < cfg.torus_side / 2, "test config must keep the near field clear"
    nodes = np.nonzero(grid.occupied)[0]
    edges = set()
    for a, b in itertools.combinations(nodes.tolist(), 2):
        offs = []
        ra, rb = a, b
        for _ in range(d):
            da, ra = ra % m, ra // m
            db, rb = rb % m, rb // m
            o = (da - db) % m
            if o > m / 2:
                o -= m
            offs.append(abs(o))
        if any(o > reach for o in offs):
            continue
        sup = math.sqrt(sum(((o + 1) * s) ** 2 for o in offs))
        if sup <= R:
            edges.add((a, b))
    return edges


@pytest.mark.parametrize("d,n,lam", [(1, 400.0, 3.0), (2, 2000.0, 1.0)])
def test_visibility_edges_match_near_field_oracle(d, n, lam):
    fam = bernoulli_family()
    cfg = make_config(fam, lam=lam, n=n, r=1.0, d=d)
    inst = sample_instance(cfg, 3)
    chi, delta, _ = choose_chi_delta(cfg) if not (d == 1 and lam <= 1) else (0.2, 0.05, None)
    grid = partition_blocks(inst, chi, delta)
    vis = build_visibility_graph(grid, inst)
    got = {tuple(e) for e in vis.edges.tolist()}
    assert got == _near_field_oracle_edges(grid, cfg)


def test_visibility_edges_have_no_false_positives_on_points():
    # every edge also satisfies the sup criterion on the realized points
    fam = bernoulli_family()
    cfg = make_config(fam, lam=3.0, n=400.0, r=1.0, d=1)
    inst = sample_instance(cfg, 5)
    chi, delta, _ = choose_chi_delta(cfg)
    grid = partition_blocks(inst, chi, delta)
    vis = build_visibility_graph(grid, inst)
    R, L = cfg.visibility_radius, cfg.torus_side
    for a, b in vis.edges.tolist():
        pa = inst.locations[grid.block_vertices(a)]
        pb = inst.locations[grid.block_vertices(b)]
        worst = max(toroidal_distance(x, y, L) for x in pa for y in pb)
        assert worst <= R + 1e-9


def test_visibility_distance_two_neighbors_visible_1d():
    # small chi makes blocks much shorter than the radius, so blocks two
    # apart are still mutually visible
    fam = bernoulli_family()
    cfg = make_config(fam, lam=3.0, n=500.0, r=1.0, d=1)
    inst = sample_instance(cfg, 2)
    chi, delta, _ = choose_chi_delta(cfg)
    grid = partition_blocks(inst, chi, delta)
    vis = build_visibility_graph(grid, inst)
    occ = np.nonzero(grid.occupied)[0]
    m = grid.blocks_per_axis
    for a in occ[:20]:
        b = (a + 2) % m
        if grid.occupied[b]:
            key = (min(a, b), max(a, b))
            assert key in {tuple(e) for e in vis.edges.tolist()}
            break
    else:
        pytest.skip("no occupied pair at offset two in this draw")


def test_visibility_single_occupied_block():
    fam = bernoulli_family()
    locs = [[0.0 + 0.01 * i] for i in range(30)]
    inst = instance_from_points(fam, locs, [0] * 30, n=400.0)
    grid = partition_blocks(inst, chi=0.3, delta=0.05)
    assert grid.occupied.sum() == 1
    vis = build_visibility_graph(grid, inst)
    assert vis.connected
    assert list(vis.bfs_order) == [int(np.nonzero(grid.occupied)[0][0])]
    assert len(vis.edges) == 0


def test_visibility_two_far_blocks_disconnected():
    fam = bernoulli_family()
    locs = [[-150.0 + 0.05 * i] for i in range(20)] + [[50.0 + 0.05 * i] for i in range(20)]
    inst = instance_from_points(fam, locs, [0] * 40, n=400.0)
    grid = partition_blocks(inst, chi=0.3, delta=0.05)
    vis = build_visibility_graph(grid, inst)
    assert not vis.connected


def test_visibility_rejects_zero_occupied():
    fam = bernoulli_family()
    inst = instance_from_points(fam, [[0.0], [5.0]], [0, 1], n=400.0)
    grid = partition_blocks(inst, chi=0.3, delta=50.0)
    with pytest.raises(ConfigurationError):
        build_visibility_graph(grid, inst)


# -- seed MAP ---------------------------------------------------------------------

def test_seed_map_single_vertex_prior_argmax():
    fam = bernoulli_family()
    inst = instance_from_points(fam, [[0.0], [50.0]], [1, 0], pi=(0.7, 0.3))
    used, labels = seed_map_labeling(inst, [0])
    assert list(used) == [0] and list(labels) == [0]


def test_seed_map_two_vertices_assortative_edge():
    fam = bernoulli_family(a=0.9, b=0.1)
    inst = instance_from_points(fam, [[0.0], [0.5], [50.0]], [0, 0, 1], seed=3)
    # force the observation on the (0, 1) edge to 1
    x = inst.edges_x.copy()
    x[:] = 1.0
    forced = inst.with_labels(inst.labels)
    object.__setattr__(forced, "edges_x", x)
    used, labels = seed_map_labeling(forced, [0, 1])
    assert list(labels) == [0, 0]      # same-community wins; lex tie-break picks 0


def test_seed_map_budget_capping_warns():
    fam = bernoulli_family()
    locs = [[0.1 * i] for i in range(6)]
    inst = instance_from_points(fam, locs, [0] * 6)
    with pytest.warns(RuntimeWarning):
        used, labels = seed_map_labeling(inst, np.arange(6), budget=4)
    assert len(used) == 2 and len(labels) == 2


def test_seed_map_budget_too_small():
    fam = bernoulli_family()
    inst = instance_from_points(fam, [[0.0], [0.5]], [0, 1])
    with pytest.raises(ConfigurationError):
        seed_map_labeling(inst, [0, 1], budget=1)


def seed_map_brute_force(instance, seed_ids):
    """Independent exhaustive reference: prior plus observed within-seed pairs."""
    cfg = instance.config
    seed_ids = sorted(int(v) for v in seed_ids)
    local = {v: i for i, v in enumerate(seed_ids)}
    pairs = []
    for v in seed_ids:
        nbrs, xs, ys = instance.neighbors(v)
        for u, x, y in zip(nbrs, xs, ys):
            if int(u) in local and int(u) > v:
                pairs.append((local[v], local[int(u)], float(x), float(y)))
    best, best_score = None, -math.inf
    for assign in itertools.product(range(cfg.k), repeat=len(seed_ids)):
        score = sum(math.log(cfg.pi[a]) if cfg.pi[a] > 0 else -math.inf for a in assign)
        for (i, j, x, y) in pairs:
            score += float(cfg.family.log_density_values(assign[i], assign[j], x, y))
        if score > best_score:
            best, best_score = assign, score
    return np.asarray(best), best_score


@pytest.mark.parametrize("seed", range(6))
def test_seed_map_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    fam = [bernoulli_family(a=0.85, b=0.25), gaussian_family(-1.0, 0.5, 2.0)][seed % 2]
    cfg = make_config(fam, lam=2.0, n=300.0, r=1.0, d=1)
    inst = sample_instance(cfg, 100 + seed)
    size = int(rng.integers(2, 8))
    ids = rng.choice(inst.num_vertices, size=size, replace=False)
    used, labels = seed_map_labeling(inst, ids)
    brute, brute_score = seed_map_brute_force(inst, ids)
    assert np.array_equal(labels, brute)


# -- propagation ---------------------------------------------------------------------

def test_propagate_hand_example():
    fam = bernoulli_family(a=0.9, b=0.1)
    locs = [[0.1 * i] for i in range(10)] + [[2.0]]
    inst = instance_from_points(fam, locs, [0] * 11, seed=1)
    x = np.ones_like(inst.edges_x)
    forced = inst.with_labels(inst.labels)
    object.__setattr__(forced, "edges_x", x)
    out = propagate_block(forced, np.arange(10), np.zeros(10, dtype=int), np.array([10]))
    assert out[0] == 0                          # 10 ln 0.9 beats 10 ln 0.1


def test_propagate_unreferenced_child_unlabeled():
    fam = bernoulli_family()
    inst = instance_from_points(fam, [[0.0], [0.5], [100.0]], [0, 0, 1])
    out = propagate_block(inst, np.array([0, 1]), np.array([0, 0]), np.array([2]))
    assert out[0] == UNLABELED


def test_propagate_flipping_parent_flips_child():
    fam = bernoulli_family(a=0.9, b=0.1)
    cfg = make_config(fam, lam=3.0, n=500.0, r=1.0, d=1)
    inst = sample_instance(cfg, 9)
    parents = np.arange(0, 12)
    children = np.arange(12, 24)
    base = propagate_block(inst, parents, np.zeros(12, dtype=int), children)
    flip = propagate_block(inst, parents, np.ones(12, dtype=int), children)
    labeled = base != UNLABELED
    assert np.array_equal(flip[labeled], 1 - base[labeled])


def test_propagate_requires_labeled_parent():
    fam = bernoulli_family()
    inst = instance_from_points(fam, [[0.0], [0.5]], [0, 0])
    with pytest.raises(ContractViolation):
        propagate_block(inst, np.array([0]), np.array([UNLABELED]), np.array([1]))


# -- refinement -----------------------------------------------------------------------

def test_refine_from_truth_keeps_almost_everything():
    cfg = make_config(bernoulli_family(a=0.9, b=0.1), lam=1.0, n=5000.0, r=1.0, d=2)
    inst = sample_instance(cfg, 31)
    out = refine_all(inst, inst.labels)
    assert np.mean(out == inst.labels) >= 0.99


def test_refine_isolated_vertex_prior_argmax():
    fam = bernoulli_family()
    inst = instance_from_points(fam, [[0.0], [100.0]], [0, 1], pi=(0.3, 0.7))
    sigma = np.array([0, UNLABELED])
    out = refine_all(inst, sigma)
    assert out[1] == 1                          # argmax pi
    with_prior = refine_all(inst, sigma, include_prior=True)
    assert with_prior[1] == 1


def test_refine_idempotent_in_distribution():
    cfg = make_config(gaussian_family(), lam=1.0, n=5000.0, r=1.0, d=2)
    inst = sample_instance(cfg, 13)
    _, diag = recover(inst)
    once = refine_all(inst, diag.sigma_hat)
    twice = refine_all(inst, once)
    assert np.mean(twice != once) < 0.01


def test_score_shift_leaves_argmax_unchanged():
    # adding a constant to every log-density against one fixed reference label
    # shifts all rows uniformly and cannot move any argmax
    cfg = make_config(bernoulli_family(), lam=1.0, n=2000.0, r=1.0, d=2)
    inst = sample_instance(cfg, 23)
    scores, _ = loglik_score_matrix(inst, inst.labels)
    ref_label = 0
    indptr, nbr, _, _ = inst.csr
    vert = np.repeat(np.arange(inst.num_vertices), np.diff(indptr))
    count_ref = np.bincount(vert[inst.labels[nbr] == ref_label],
                            minlength=inst.num_vertices)
    shifted = scores + 7.3 * count_ref[:, None]
    assert np.array_equal(np.argmax(scores, axis=1), np.argmax(shifted, axis=1))


# -- orchestration -----------------------------------------------------------------------

def test_recover_deterministic_and_truth_blind(rng):
    cfg = make_config(gaussian_family(), lam=1.0, n=3000.0, r=1.0, d=2)
    inst = sample_instance(cfg, 41)
    a, _ = recover(inst)
    b, _ = recover(inst)
    assert np.array_equal(a, b)
    scrambled = inst.with_labels(rng.integers(0, 2, size=inst.num_vertices))
    c, _ = recover(scrambled)
    assert np.array_equal(a, c)


def test_recover_disconnected_raises_with_diagnostics():
    fam = gaussian_family()
    locs = [[-150.0 + 0.2 * i] for i in range(40)] + [[50.0 + 0.2 * i] for i in range(40)]
    labels = [0, 1] * 40
    inst = instance_from_points(fam, locs, labels, n=400.0, lam=2.0)
    with pytest.raises(RecoveryFailure) as exc:
        recover(inst)
    assert exc.value.diagnostics is not None
    assert not exc.value.diagnostics.connected


def test_recover_rejects_indistinct_family():
    cfg = make_config(bernoulli_family(a=0.5, b=0.5), lam=1.0, n=2000.0, r=1.0, d=2)
    inst = sample_instance(cfg, 1)
    with pytest.raises(AssumptionViolation):
        recover(inst)


def test_recover_matches_sequential_propagation():
    # the batched level pass must equal block-by-block BFS propagation
    cfg = make_config(gaussian_family(), lam=1.0, n=3000.0, r=1.0, d=2)
    inst = sample_instance(cfg, 77)
    _, diag = recover(inst)

    chi, delta, chi0 = choose_chi_delta(cfg)
    grid = partition_blocks(inst, chi, delta)
    vis = build_visibility_graph(grid, inst)
    sigma = np.full(inst.num_vertices, UNLABELED, dtype=np.int64)
    root = int(vis.bfs_order[0])
    root_verts = grid.block_vertices(root)
    eps0 = min(1.0 / (2.0 * math.log(cfg.k)), delta)
    seed_req = root_verts[:_seed_size(eps0, cfg.log_n, len(root_verts))]
    seed, seed_labels = seed_map_labeling(inst, seed_req)
    sigma[seed] = seed_labels
    rest = root_verts[~np.isin(root_verts, seed)]
    if len(rest):
        sigma[rest] = propagate_block(inst, seed, seed_labels, rest)
    ref_of_block = {root: rest if len(rest) else seed}
    for b in vis.bfs_order[1:]:
        b = int(b)
        p = int(vis.parent[b])
        refs = ref_of_block.get(p, grid.block_vertices(p))
        child = grid.block_vertices(b)
        sigma[child] = propagate_block(inst, refs, sigma[refs], child)
        ref_of_block[b] = child
    assert np.array_equal(diag.sigma_hat, sigma)


def test_seed_size_guard():
    assert _seed_size(0.9, 10.0, available=2) == 2
    assert _seed_size(0.001, 10.0, available=5) == 1


def test_recover_three_dimensional():
    from ghcm.distributions import GaussianShift, PiecewisePoly
    r = 1.2
    mu = {(0, 0): PiecewisePoly.constant(-4.0, r), (0, 1): PiecewisePoly.constant(0.0, r),
          (1, 1): PiecewisePoly.constant(4.0, r)}
    fam = GaussianShift(2, r, mu, sigma=1.0)
    cfg = ModelConfig(lam=1.0, n=3000.0, r=r, d=3, k=2,
                      pi=np.array([0.5, 0.5]), family=fam)
    inst = sample_instance(cfg, 5)
    labels, diag = recover(inst)
    assert diag.connected
    om = permissible_relabelings(cfg.pi, fam)
    assert agreement(labels, inst.labels, om) == 1.0


# -- segmented variant ----------------------------------------------------------------------

def seg_config(n=3000.0, lam=0.8):
    return make_config(gaussian_family(), lam=lam, n=n, r=1.0, d=1)


def test_segments_require_dimension_one():
    cfg = make_config(gaussian_family(), lam=1.0, n=2000.0, r=1.0, d=2)
    inst = sample_instance(cfg, 1)
    with pytest.raises(ConfigurationError):
        recover_1d_segments(inst)


def test_segments_reject_symmetric_family():
    cfg = make_config(bernoulli_family(), lam=0.8, n=2000.0, r=1.0, d=1)
    inst = sample_instance(cfg, 1)
    with pytest.raises(AssumptionViolation):
        recover_1d_segments(inst)


def test_single_segment_equals_manual_chain():
    cfg = seg_config(lam=8.0)       # dense: every block occupied
    inst = sample_instance(cfg, 19)
    labels, diag = recover_1d_segments(inst)
    assert diag.segment_count == 1

    grid = partition_blocks(inst, 0.5, diag.delta)
    assert grid.occupied.all()
    sigma = np.full(inst.num_vertices, UNLABELED, dtype=np.int64)
    eps0 = min(cfg.lam * cfg.r / (4.0 * math.log(cfg.k)), diag.delta)
    first = grid.block_vertices(0)
    seed_req = first[:_seed_size(eps0, cfg.log_n, len(first))]
    seed, seed_labels = seed_map_labeling(inst, seed_req)
    sigma[seed] = seed_labels
    rest = first[~np.isin(first, seed)]
    refs = rest if len(rest) else seed
    if len(rest):
        sigma[rest] = propagate_block(inst, seed, seed_labels, rest)
    prev = refs
    for b in range(1, grid.num_blocks):
        child = grid.block_vertices(b)
        sigma[child] = propagate_block(inst, prev, sigma[prev], child)
        prev = child
    assert np.array_equal(diag.sigma_hat, sigma)
    assert np.array_equal(labels, refine_all(inst, sigma))


def test_two_segments_do_not_interact_before_refinement():
    fam = gaussian_family()
    rng = np.random.default_rng(6)
    left = -180.0 + np.cumsum(rng.uniform(0.3, 0.8, size=60))
    right = 60.0 + np.cumsum(rng.uniform(0.3, 0.8, size=60))
    locs = np.concatenate([left, right])[:, None]
    labels = rng.integers(0, 2, size=120)
    inst = instance_from_points(fam, locs, labels, n=400.0, lam=0.8)
    out1, diag1 = recover_1d_segments(inst)
    assert diag1.segment_count >= 2

    # perturb every observation on the right half only
    x = inst.edges_x.copy()
    right_edge = (inst.locations[inst.edges_u, 0] > 0) & (inst.locations[inst.edges_v, 0] > 0)
    x[right_edge] += 3.5
    twisted = inst.with_labels(inst.labels)
    object.__setattr__(twisted, "edges_x", x)
    out2, diag2 = recover_1d_segments(twisted)
    left_vertices = np.nonzero(inst.locations[:, 0] < 0)[0]
    assert np.array_equal(diag1.sigma_hat[left_vertices], diag2.sigma_hat[left_vertices])


def test_unoccupied_vertices_unlabeled_until_refinement():
    cfg = seg_config(lam=0.8, n=3000.0)
    inst = sample_instance(cfg, 23)
    labels, diag = recover_1d_segments(inst)
    assert diag.unlabeled_after_propagation >= 0
    assert np.all(labels != UNLABELED)
    occupied_of_vertex = diag.block_of_vertex is not None
    assert occupied_of_vertex
