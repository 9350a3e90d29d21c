"""Information-theoretic threshold machinery.

The exact-recovery threshold is capacity = lambda * nu_d * r^d * min_{i != j}
D_plus(i, j), where D_plus is one minus the minimized (over t in [0, 1])
prior- and distance-averaged Chernoff coefficient between the distribution
rows of two communities. The distance average uses the density
g(y) = d y^(d-1) / r^d on [0, r].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .distributions import DistributionFamily, TablePMF, pair_key
from .errors import ContractViolation

_GL_NODES = 64
_T_TOL = 1e-10
_BOUNDARY_BAND = 1e-6
_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

REGIME_IMPOSSIBLE = "ImpossibleBelowThreshold"
REGIME_ACHIEVABLE = "AchievableAboveThreshold"
REGIME_IMPOSSIBLE_1D = "Impossible1D"
REGIME_BOUNDARY = "Boundary"


def nu_d(d: int) -> float:
    """Volume of the d-dimensional unit ball."""
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


@lru_cache(maxsize=8)
def _gl_rule(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    return x, w


def _integration_pieces(fam: DistributionFamily, pair1, pair2) -> np.ndarray:
    """Union of both pairs' parameter breakpoints; quadrature is applied per
    smooth piece so fixed-order Gauss-Legendre stays at machine accuracy."""
    cuts = np.concatenate([fam.pair_breakpoints(pair1), fam.pair_breakpoints(pair2)])
    cuts = np.unique(np.clip(cuts, 0.0, fam.r))
    if cuts[0] > 0.0:
        cuts = np.concatenate([[0.0], cuts])
    if cuts[-1] < fam.r:
        cuts = np.concatenate([cuts, [fam.r]])
    return cuts


def phibar_t(fam: DistributionFamily, pair1, pair2, t: float, d: int,
             nodes: int = _GL_NODES) -> float:
    """Distance-averaged Chernoff coefficient
    integral_0^r phi_t(P_pair1(y), P_pair2(y)) d y^(d-1) / r^d dy."""
    if not 0.0 <= t <= 1.0:
        raise ContractViolation("t must lie in [0, 1]")
    r = fam.r
    if isinstance(fam, TablePMF):
        # piecewise-constant integrand: per-bin weight integrals are exact
        edges = fam.bin_edges
        mids = 0.5 * (edges[:-1] + edges[1:])
        phis = fam.phi_t_values(pair1, pair2, t, mids)
        weights = (edges[1:] ** d - edges[:-1] ** d) / r ** d
        return float(np.dot(phis, weights))
    xi, wi = _gl_rule(nodes)
    cuts = _integration_pieces(fam, pair1, pair2)
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        half = 0.5 * (b - a)
        y = half * xi + 0.5 * (a + b)
        g = d * y ** (d - 1) / r ** d
        total += half * float(np.dot(wi, fam.phi_t_values(pair1, pair2, t, y) * g))
    return total


def _golden_section(f, a: float, b: float, tol: float) -> tuple[float, float]:
    """Minimize a convex scalar function on [a, b] to interval width tol."""
    c = b - (b - a) * _INV_GOLDEN
    d_ = a + (b - a) * _INV_GOLDEN
    fc, fd = f(c), f(d_)
    while (b - a) > tol:
        if fc < fd:
            b, d_, fd = d_, c, fc
            c = b - (b - a) * _INV_GOLDEN
            fc = f(c)
        else:
            a, c, fc = c, d_, fd
            d_ = a + (b - a) * _INV_GOLDEN
            fd = f(d_)
    t = 0.5 * (a + b)
    return t, f(t)


def ch_divergence(fam: DistributionFamily, pi, i: int, j: int, d: int) -> tuple[float, float]:
    """(D_plus, t_star) between the distribution rows of communities i and j.

    Minimizes sum_a pi_a * phibar_t(P_ia, P_ja) over t by golden-section; the
    objective is convex and equals 1 at both endpoints, which serve as sanity
    bounds on the result.
    """
    if i == j:
        raise ContractViolation("ch_divergence needs two distinct communities")
    pi = np.asarray(pi, dtype=float)
    pairs = [(pair_key(i, a), pair_key(j, a)) for a in range(fam.k)]

    def objective(t: float) -> float:
        return float(sum(pi[a] * phibar_t(fam, pairs[a][0], pairs[a][1], t, d)
                         for a in range(fam.k)))

    t_star, val = _golden_section(objective, 0.0, 1.0, _T_TOL)
    for t_edge in (0.0, 1.0):
        v_edge = objective(t_edge)
        if v_edge < val:
            t_star, val = t_edge, v_edge
    d_plus = 1.0 - val
    return float(min(max(d_plus, 0.0), 1.0)), float(t_star)


@dataclass
class ThresholdReport:
    """Pairwise divergences, the capacity lambda*nu_d*r^d*min D_plus, and the
    regime the recovery threshold assigns to the configuration."""

    d: int
    lam: float
    r: float
    k: int
    pair_divergence: dict          # (i, j) -> (D_plus, t_star), i < j
    min_divergence: float
    nu_d: float
    capacity: float
    omega_count: int
    regime: str

    def format_text(self) -> str:
        lines = [
            f"dimension d = {self.d}, lambda = {self.lam:g}, r = {self.r:g}, k = {self.k}",
            f"unit-ball volume nu_d = {self.nu_d:.9g}",
            f"permissible relabelings |Omega| = {self.omega_count}",
        ]
        for (i, j), (dp, ts) in sorted(self.pair_divergence.items()):
            lines.append(f"D_plus({i}, {j}) = {dp:.9g}   (t* = {ts:.6g})")
        lines.append(f"min divergence = {self.min_divergence:.9g}")
        lines.append(f"capacity = lambda * nu_d * r^d * min D_plus = {self.capacity:.9g}")
        lines.append(f"regime: {self.regime}")
        return "\n".join(lines)


def classify_regime(capacity: float, d: int, lam: float, r: float, omega_count: int) -> str:
    """Regime per the impossibility/achievability conditions. The d = 1,
    lambda*r < 1, |Omega| >= 2 case trumps the capacity comparison; a band of
    1e-6 around capacity 1 is refused as Boundary (the theory is silent
    exactly at threshold), as is the uncovered d = 1, lambda*r = 1,
    |Omega| >= 2 corner."""
    if d == 1 and lam * r < 1.0 and omega_count >= 2:
        return REGIME_IMPOSSIBLE_1D
    if abs(capacity - 1.0) < _BOUNDARY_BAND:
        return REGIME_BOUNDARY
    if capacity < 1.0:
        return REGIME_IMPOSSIBLE
    if d >= 2 or lam * r > 1.0 or omega_count == 1:
        return REGIME_ACHIEVABLE
    return REGIME_BOUNDARY


def threshold_report(config) -> ThresholdReport:
    """Full pairwise divergence table and regime classification for a model
    configuration."""
    from .evaluation import permissible_relabelings  # deferred: avoids import cycle at init

    fam = config.family
    pair_div = {}
    for i in range(config.k):
        for j in range(i + 1, config.k):
            pair_div[(i, j)] = ch_divergence(fam, config.pi, i, j, config.d)
    min_div = min(dp for dp, _ in pair_div.values())
    nu = nu_d(config.d)
    capacity = config.lam * nu * config.r ** config.d * min_div
    omega = permissible_relabelings(config.pi, fam)
    regime = classify_regime(capacity, config.d, config.lam, config.r, len(omega))
    return ThresholdReport(
        d=config.d, lam=config.lam, r=config.r, k=config.k,
        pair_divergence=pair_div, min_divergence=min_div, nu_d=nu,
        capacity=capacity, omega_count=len(omega), regime=regime,
    )
