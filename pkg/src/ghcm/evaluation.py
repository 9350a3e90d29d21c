"""Ground-truth-aware metrics and oracles.

Everything here reads a frozen instance and label arrays; nothing mutates
state. Estimated labelings are integer arrays over communities with the
UNLABELED (-1) sentinel; the true labeling is always total.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .distributions import DistributionFamily, pair_key
from .errors import ConfigurationError, ContractViolation
from .model import UNLABELED, Instance

_MAX_OMEGA_K = 10
_MAX_ORACLE_SEED = 12


@dataclass(frozen=True)
class PermissibleSet:
    """The symmetry group of (pi, family): community permutations preserving
    the prior exactly and every pairwise distribution."""

    k: int
    permutations: tuple

    def __len__(self) -> int:
        return len(self.permutations)

    def __iter__(self):
        return iter(self.permutations)

    def apply(self, omega, labels: np.ndarray) -> np.ndarray:
        """omega composed with a labeling (UNLABELED passes through)."""
        table = np.concatenate([np.asarray(omega, dtype=np.int64), [UNLABELED]])
        return table[labels]


def permissible_relabelings(pi, fam: DistributionFamily) -> PermissibleSet:
    """All community permutations omega with pi_i == pi_omega(i) and
    P_ij == P_omega(i)omega(j) for every pair. Exhaustive over k! permutations."""
    pi = np.asarray(pi, dtype=float)
    k = fam.k
    if k > _MAX_OMEGA_K:
        raise ConfigurationError(f"permissible-set enumeration supports k <= {_MAX_OMEGA_K}")
    # equality verdicts between unordered pairs, computed once
    pairs = fam.all_pairs()
    eq = {}
    for a in range(len(pairs)):
        for b in range(a + 1, len(pairs)):
            eq[(pairs[a], pairs[b])] = fam.pairs_equal(pairs[a], pairs[b])

    def pairs_same(p, q) -> bool:
        if p == q:
            return True
        return eq[(p, q)] if (p, q) in eq else eq[(q, p)]

    out = []
    for perm in itertools.permutations(range(k)):
        if any(pi[i] != pi[perm[i]] for i in range(k)):
            continue
        if all(pairs_same(pair_key(i, j), pair_key(perm[i], perm[j]))
               for i in range(k) for j in range(i, k)):
            out.append(perm)
    return PermissibleSet(k=k, permutations=tuple(out))


def agreement(sigma_est: np.ndarray, sigma_true: np.ndarray, omega_set: PermissibleSet) -> float:
    """Fraction of vertices labeled correctly up to the best permissible
    relabeling. Requires a total estimate (call after refinement)."""
    sigma_est = np.asarray(sigma_est)
    sigma_true = np.asarray(sigma_true)
    if sigma_est.shape != sigma_true.shape:
        raise ContractViolation("labelings must have equal length")
    if np.any(sigma_est == UNLABELED):
        raise ContractViolation("agreement needs a total labeling; found UNLABELED entries")
    if len(sigma_true) == 0:
        return 1.0
    best = 0
    for omega in omega_set:
        best = max(best, int(np.sum(sigma_est == omega_set.apply(omega, sigma_true))))
    return best / len(sigma_true)


def discrepancy(sigma: np.ndarray, sigma_true: np.ndarray, omega_set: PermissibleSet) -> int:
    """min over permissible omega of the Hamming distance between
    omega composed with sigma and sigma_true."""
    sigma = np.asarray(sigma)
    sigma_true = np.asarray(sigma_true)
    if sigma.shape != sigma_true.shape:
        raise ContractViolation("labelings must have equal length")
    best = len(sigma) + 1
    for omega in omega_set:
        best = min(best, int(np.sum(omega_set.apply(omega, sigma) != sigma_true)))
    return best


def best_relabeling(sigma: np.ndarray, sigma_true: np.ndarray, omega_set: PermissibleSet):
    """The permissible omega minimizing Hamming distance of omega
    composed with sigma to sigma_true over the labeled entries; ties go to the
    first permutation in enumeration order."""
    sigma = np.asarray(sigma)
    labeled = sigma != UNLABELED
    best_omega, best_err = None, None
    for omega in omega_set:
        err = int(np.sum(omega_set.apply(omega, sigma)[labeled] != sigma_true[labeled]))
        if best_err is None or err < best_err:
            best_omega, best_err = omega, err
    return best_omega, best_err


def loglik_score_matrix(instance: Instance, reference: np.ndarray,
                        include_prior: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Genie-style score matrix: scores[v, j] = sum over labeled visible
    neighbors u of log p_{j, reference(u)}(x_uv; y_uv), plus log pi_j when
    include_prior is set. Also returns the labeled-neighbor count per vertex.
    UNLABELED reference entries are skipped."""
    cfg = instance.config
    k = cfg.k
    n = instance.num_vertices
    indptr, nbr, x, y = instance.csr
    vert = np.repeat(np.arange(n), np.diff(indptr))
    ref = np.asarray(reference)[nbr]
    scores = np.zeros((n, k))
    counts = np.zeros(n, dtype=np.int64)
    labeled = ref != UNLABELED
    np.add.at(counts, vert[labeled], 1)
    for s in range(k):
        m = labeled & (ref == s)
        if not np.any(m):
            continue
        vm, xm, ym = vert[m], x[m], y[m]
        for j in range(k):
            vals = cfg.family.log_density_values(j, s, xm, ym)
            scores[:, j] += np.bincount(vm, weights=vals, minlength=n)
    if include_prior:
        with np.errstate(divide="ignore"):
            scores += np.log(cfg.pi)
    return scores, counts


def genie_loglik(instance: Instance, v: int, i: int, sigma: np.ndarray,
                 include_prior: bool = False) -> float:
    """Posterior log-likelihood of vertex v carrying community i when its
    visible neighbors are labeled by sigma (UNLABELED neighbors skipped)."""
    cfg = instance.config
    nbr, x, y = instance.neighbors(v)
    sig = np.asarray(sigma)[nbr]
    total = 0.0
    for s in range(cfg.k):
        m = sig == s
        if np.any(m):
            total += float(np.sum(cfg.family.log_density_values(i, s, x[m], y[m])))
    if include_prior:
        with np.errstate(divide="ignore"):
            total += float(np.log(cfg.pi[i]))
    return total


def flip_bad_vertices(instance: Instance) -> np.ndarray:
    """Vertices whose true label fails to strictly beat every alternative in
    genie log-likelihood against the true labeling (no prior term). Isolated
    vertices tie at zero and count as Flip-Bad."""
    scores, _ = loglik_score_matrix(instance, instance.labels, include_prior=False)
    n = instance.num_vertices
    idx = np.arange(n)
    own = scores[idx, instance.labels]
    masked = scores.copy()
    masked[idx, instance.labels] = -np.inf
    best_other = masked.max(axis=1)
    return idx[best_other >= own]


def restricted_mle_oracle(instance: Instance, seed_vertices, epsilon: float):
    """Exhaustive restricted maximum-likelihood labeling of a small seed set.

    Searches all labelings whose per-community counts lie strictly inside
    ((pi_j - eps) * s, (pi_j + eps) * s) and maximizes the within-seed pairwise
    log-likelihood (no prior term). Pure-Python reference implementation; ties
    break to the lexicographically smallest label vector.
    """
    cfg = instance.config
    seed = np.sort(np.asarray(seed_vertices, dtype=np.int64))
    s = len(seed)
    if s == 0 or s > _MAX_ORACLE_SEED:
        raise ContractViolation(f"oracle supports 1..{_MAX_ORACLE_SEED} seed vertices")
    k = cfg.k
    lo = [(cfg.pi[j] - epsilon) * s for j in range(k)]
    hi = [(cfg.pi[j] + epsilon) * s for j in range(k)]

    in_seed = {int(v): idx for idx, v in enumerate(seed)}
    pair_terms = []  # (local u, local v, x, y) for visible within-seed pairs
    for v in seed:
        nbrs, xs, ys = instance.neighbors(int(v))
        for u, xx, yy in zip(nbrs, xs, ys):
            if int(u) in in_seed and int(u) > int(v):
                pair_terms.append((in_seed[int(v)], in_seed[int(u)], float(xx), float(yy)))

    feasible = 0
    best_labels, best_score = None, None
    for labels in itertools.product(range(k), repeat=s):
        counts = [0] * k
        for lab in labels:
            counts[lab] += 1
        if any(not (lo[j] < counts[j] < hi[j]) for j in range(k)):
            continue
        feasible += 1
        score = 0.0
        for (a, b, xx, yy) in pair_terms:
            # ordered double sum = twice the unordered sum for symmetric pairs
            score += 2.0 * float(cfg.family.log_density_values(labels[a], labels[b], xx, yy))
        if best_score is None or score > best_score:
            best_labels, best_score = labels, score
    if best_labels is None:
        want = ", ".join(f"community {j}: ({lo[j]:.3g}, {hi[j]:.3g})" for j in range(k))
        raise ConfigurationError(
            f"no labeling of {s} seed vertices satisfies the count windows {want}"
        )
    return seed, np.asarray(best_labels, dtype=np.int64)
