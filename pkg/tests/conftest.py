import numpy as np
import pytest

from ghcm.distributions import (BernoulliGate, GaussianShift, PiecewisePoly, TablePMF,
                                symmetric_bernoulli)
from ghcm.model import ModelConfig


def bernoulli_family(k=2, r=1.0, a=0.9, b=0.1, eta_bound=None):
    return symmetric_bernoulli(k, r, a, b, eta_bound=eta_bound)


def gaussian_family(mu00=-4.0, mu01=0.0, mu11=4.0, sigma=1.0, r=1.0):
    mu = {
        (0, 0): PiecewisePoly.constant(mu00, r),
        (0, 1): PiecewisePoly.constant(mu01, r),
        (1, 1): PiecewisePoly.constant(mu11, r),
    }
    return GaussianShift(2, r, mu, sigma=sigma)


def table_family(r=1.0):
    """Two bins, three symbols, distinct rows everywhere."""
    pmf = {
        (0, 0): [[0.7, 0.2, 0.1], [0.5, 0.3, 0.2]],
        (0, 1): [[0.2, 0.3, 0.5], [0.3, 0.4, 0.3]],
        (1, 1): [[0.1, 0.6, 0.3], [0.2, 0.2, 0.6]],
    }
    return TablePMF(2, r, alphabet=[0.0, 1.0, 2.0], bin_edges=[0.0, r / 2, r], pmf=pmf)


def crossing_bernoulli(r=1.0):
    """Within/between probabilities that cross: strongly informative close by,
    weak and order-reversed near the support edge."""
    f_in = PiecewisePoly([0.0, r / 2, r], [[0.97], [0.2]])
    f_out = PiecewisePoly([0.0, r / 2, r], [[0.03], [0.3]])
    return BernoulliGate(2, r, {(0, 0): f_in, (1, 1): f_in, (0, 1): f_out})


def make_config(family, lam=1.0, n=5000.0, r=1.0, d=2, pi=(0.5, 0.5)):
    return ModelConfig(lam=lam, n=n, r=r, d=d, k=family.k,
                       pi=np.asarray(pi, dtype=float), family=family)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _seed_map_terms(instance, seed_ids):
    import math

    cfg = instance.config
    seed_ids = sorted(int(v) for v in seed_ids)
    local = {v: i for i, v in enumerate(seed_ids)}
    pairs = []
    for v in seed_ids:
        nbrs, xs, ys = instance.neighbors(v)
        for u, x, y in zip(nbrs, xs, ys):
            if int(u) in local and int(u) > v:
                mat = [[float(cfg.family.log_density_values(a, b, float(x), float(y)))
                        for b in range(cfg.k)] for a in range(cfg.k)]
                pairs.append((local[v], local[int(u)], mat))
    logpi = [math.log(p) if p > 0 else -math.inf for p in cfg.pi]
    return seed_ids, logpi, pairs


def seed_map_score(instance, seed_ids, assign):
    """Seed-MAP objective of one labeling, via the brute-force term table."""
    _, logpi, pairs = _seed_map_terms(instance, seed_ids)
    score = sum(logpi[a] for a in assign)
    for (i, j, mat) in pairs:
        score += mat[assign[i]][assign[j]]
    return score


def seed_map_brute_force(instance, seed_ids):
    """Independent exhaustive seed-MAP reference: lexicographic enumeration,
    prior terms plus observed within-seed pairwise log-likelihoods."""
    import itertools
    import math

    seed_ids, logpi, pairs = _seed_map_terms(instance, seed_ids)
    best, best_score = None, -math.inf
    for assign in itertools.product(range(instance.config.k), repeat=len(seed_ids)):
        score = sum(logpi[a] for a in assign)
        for (i, j, mat) in pairs:
            score += mat[assign[i]][assign[j]]
        if score > best_score:
            best, best_score = assign, score
    return np.asarray(best), best_score
