"""Distance-dependent pairwise observation families.

A family holds one distribution P_ij(y) per unordered community pair (i, j),
evaluated at the normalized distance y in [0, r]. Three kinds are supported:

* BernoulliGate  -- x in {0, 1}, success probability f_ij(y)
* GaussianShift  -- real x, mean mu_ij(y), one shared standard deviation
* TablePMF       -- finite alphabet, per-bin probability tables

Per-pair parameter functions (f_ij, mu_ij) are piecewise polynomials in y.
All evaluation methods are vectorized over y (and x where applicable).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractViolation, DomainError

_LOG_2PI = math.log(2.0 * math.pi)
_PARAM_TOL = 1e-12          # kind-aware parameter equality tolerance
_EQUALITY_GRID = 256        # midpoint grid resolution for y-equality verdicts
_GAUSS_TRUNC = 8.0          # sampling truncated to mu +- 8 sigma


def pair_key(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i <= j else (j, i)


class PiecewisePoly:
    """Piecewise polynomial on [0, r]; pieces are half-open [b_k, b_{k+1}),
    the last piece closed at r. Coefficients are ascending powers of y."""

    def __init__(self, breakpoints, coefficients):
        self.breaks = np.asarray(breakpoints, dtype=float)
        if self.breaks.ndim != 1 or len(self.breaks) < 2:
            raise ConfigurationError("breakpoints must be an ascending 1-d list")
        if np.any(np.diff(self.breaks) <= 0):
            raise ConfigurationError("breakpoints must be strictly increasing")
        if len(coefficients) != len(self.breaks) - 1:
            raise ConfigurationError("need one coefficient list per piece")
        self.coeffs = [np.atleast_1d(np.asarray(c, dtype=float)) for c in coefficients]

    @classmethod
    def constant(cls, value: float, r: float) -> "PiecewisePoly":
        return cls([0.0, r], [[float(value)]])

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        piece = np.searchsorted(self.breaks[1:-1], y, side="right")
        out = np.zeros_like(y)
        for k, c in enumerate(self.coeffs):
            mask = piece == k
            if np.any(mask):
                out[mask] = np.polynomial.polynomial.polyval(y[mask], c)
        return out

    def to_dict(self) -> dict:
        if len(self.coeffs) == 1 and len(self.coeffs[0]) == 1:
            return {"constant": float(self.coeffs[0][0])}
        return {
            "breakpoints": [float(b) for b in self.breaks],
            "coefficients": [[float(v) for v in c] for c in self.coeffs],
        }

    @classmethod
    def from_dict(cls, spec: dict, r: float) -> "PiecewisePoly":
        if "constant" in spec:
            return cls.constant(spec["constant"], r)
        return cls(spec["breakpoints"], spec["coefficients"])


def _require_all_pairs(params: dict, k: int, what: str) -> None:
    for i in range(k):
        for j in range(i, k):
            if (i, j) not in params:
                raise ConfigurationError(f"missing {what} for community pair ({i}, {j})")


class DistributionFamily:
    """Base for the three family kinds. Subclasses fill in density, sampling,
    Chernoff coefficients, and kind-aware parameter equality."""

    kind: str

    def __init__(self, k: int, r: float, eta_bound: float | None):
        if k < 2:
            raise ConfigurationError("need at least two communities")
        if not r > 0:
            raise ConfigurationError("support radius r must be positive")
        self.k = int(k)
        self.r = float(r)
        self.eta_bound = None if eta_bound is None else float(eta_bound)

    # -- kind-specific hooks ------------------------------------------------
    def log_density_values(self, i, j, x, y):
        raise NotImplementedError

    def sample_values(self, i, j, y, rng):
        raise NotImplementedError

    def phi_t_values(self, pair_pq, pair_ab, t, y):
        raise NotImplementedError

    def params_equal_at(self, pair1, pair2, y):
        """Boolean array: distributions identical at each grid distance."""
        raise NotImplementedError

    def check_support(self, x) -> bool:
        raise NotImplementedError

    def pair_breakpoints(self, pair) -> np.ndarray:
        """y-values where the pair's parameters switch pieces (for quadrature)."""
        return np.array([0.0, self.r])

    def eta_estimate(self) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    # -- shared machinery ----------------------------------------------------
    def _check_pair(self, i: int, j: int) -> tuple[int, int]:
        if not (0 <= i < self.k and 0 <= j < self.k):
            raise ContractViolation(f"community index out of range: ({i}, {j})")
        return pair_key(i, j)

    def equality_grid(self) -> np.ndarray:
        """Midpoints of a uniform subdivision of [0, r]; dodges breakpoints."""
        step = self.r / _EQUALITY_GRID
        return (np.arange(_EQUALITY_GRID) + 0.5) * step

    def pairs_equal(self, pair1, pair2) -> bool:
        """Distributions identical at (essentially) every distance."""
        eq = self.params_equal_at(pair1, pair2, self.equality_grid())
        return bool(np.mean(eq) > 1.0 - 1.0 / 64)

    def all_pairs(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.k) for j in range(i, self.k)]


class BernoulliGate(DistributionFamily):
    """Binary observations: P(x=1) = f_ij(y)."""

    kind = "bernoulli_gate"

    def __init__(self, k, r, f: dict, eta_bound=None):
        super().__init__(k, r, eta_bound)
        _require_all_pairs(f, k, "edge probability function")
        self.f = {pair_key(*p): v for p, v in f.items()}
        grid = np.linspace(0.0, self.r, 513)
        for p, fn in self.f.items():
            vals = fn(grid)
            if np.any(vals < 0.0) or np.any(vals > 1.0):
                raise ConfigurationError(f"f_{p} leaves [0, 1]")
            if self.eta_bound is not None and (np.any(vals <= 0.0) or np.any(vals >= 1.0)):
                raise ConfigurationError(
                    f"f_{p} touches 0 or 1; likelihood ratio unbounded despite declared eta"
                )

    def log_density_values(self, i, j, x, y):
        f = self.f[self._check_pair(i, j)](y)
        with np.errstate(divide="ignore"):
            return np.where(np.asarray(x) == 1.0, np.log(f), np.log1p(-f))

    def sample_values(self, i, j, y, rng):
        f = self.f[self._check_pair(i, j)](y)
        return (rng.random(size=np.shape(y)) < f).astype(float)

    def phi_t_values(self, pair_pq, pair_ab, t, y):
        p = self.f[pair_key(*pair_pq)](y)
        q = self.f[pair_key(*pair_ab)](y)
        return p ** t * q ** (1.0 - t) + (1.0 - p) ** t * (1.0 - q) ** (1.0 - t)

    def params_equal_at(self, pair1, pair2, y):
        f1 = self.f[pair_key(*pair1)](y)
        f2 = self.f[pair_key(*pair2)](y)
        return np.abs(f1 - f2) <= _PARAM_TOL

    def check_support(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all((x == 0.0) | (x == 1.0)))

    def pair_breakpoints(self, pair):
        return self.f[pair_key(*pair)].breaks

    def eta_estimate(self) -> float:
        grid = self.equality_grid()
        vals = {p: fn(grid) for p, fn in self.f.items()}
        best = 0.0
        with np.errstate(divide="ignore"):
            for p1, f1 in vals.items():
                for p2, f2 in vals.items():
                    if p1 == p2:
                        continue
                    ratios = np.maximum(np.log(f1) - np.log(f2),
                                        np.log1p(-f1) - np.log1p(-f2))
                    ratios = np.where(np.isnan(ratios), 0.0, ratios)  # 0/0 at equal zeros
                    best = max(best, float(np.max(ratios)))
        return best

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "k": self.k,
            "r": self.r,
            "eta_bound": self.eta_bound,
            "pairs": [dict(i=i, j=j, **self.f[(i, j)].to_dict()) for i, j in self.all_pairs()],
        }


class GaussianShift(DistributionFamily):
    """Real observations: N(mu_ij(y), sigma^2) with one sigma for all pairs.

    Sampling is truncated to mu +- 8 sigma (mass ~1e-15 outside), which keeps
    log-likelihood ratios bounded on the realized observation range.
    """

    kind = "gaussian_shift"

    def __init__(self, k, r, mu: dict, sigma: float, eta_bound=None):
        super().__init__(k, r, eta_bound)
        if not sigma > 0:
            raise ConfigurationError("sigma must be positive")
        _require_all_pairs(mu, k, "mean function")
        self.mu = {pair_key(*p): v for p, v in mu.items()}
        self.sigma = float(sigma)

    def log_density_values(self, i, j, x, y):
        m = self.mu[self._check_pair(i, j)](y)
        z = (np.asarray(x, dtype=float) - m) / self.sigma
        return -0.5 * z * z - math.log(self.sigma) - 0.5 * _LOG_2PI

    def sample_values(self, i, j, y, rng):
        m = self.mu[self._check_pair(i, j)](y)
        z = np.clip(rng.standard_normal(size=np.shape(y)), -_GAUSS_TRUNC, _GAUSS_TRUNC)
        return m + self.sigma * z

    def phi_t_values(self, pair_pq, pair_ab, t, y):
        dm = self.mu[pair_key(*pair_pq)](y) - self.mu[pair_key(*pair_ab)](y)
        return np.exp(-t * (1.0 - t) * dm * dm / (2.0 * self.sigma ** 2))

    def params_equal_at(self, pair1, pair2, y):
        m1 = self.mu[pair_key(*pair1)](y)
        m2 = self.mu[pair_key(*pair2)](y)
        return np.abs(m1 - m2) <= _PARAM_TOL

    def check_support(self, x) -> bool:
        return bool(np.all(np.isfinite(np.asarray(x, dtype=float))))

    def pair_breakpoints(self, pair):
        return self.mu[pair_key(*pair)].breaks

    def eta_estimate(self) -> float:
        grid = self.equality_grid()
        vals = {p: fn(grid) for p, fn in self.mu.items()}
        lo = min(float(np.min(v)) for v in vals.values()) - _GAUSS_TRUNC * self.sigma
        hi = max(float(np.max(v)) for v in vals.values()) + _GAUSS_TRUNC * self.sigma
        best = 0.0
        for p1, m1 in vals.items():
            for p2, m2 in vals.items():
                if p1 == p2:
                    continue
                # log ratio is linear in x, so the max sits at a window end
                for x in (lo, hi):
                    ratios = ((x - m2) ** 2 - (x - m1) ** 2) / (2.0 * self.sigma ** 2)
                    best = max(best, float(np.max(ratios)))
        return best

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "k": self.k,
            "r": self.r,
            "eta_bound": self.eta_bound,
            "sigma": self.sigma,
            "pairs": [dict(i=i, j=j, **self.mu[(i, j)].to_dict()) for i, j in self.all_pairs()],
        }


class TablePMF(DistributionFamily):
    """Finite-alphabet observations with per-bin probability tables.

    pmf[pair][bin][symbol]; bins partition [0, r], the alphabet is a strictly
    increasing list of observation values shared by all pairs.
    """

    kind = "table_pmf"

    def __init__(self, k, r, alphabet, bin_edges, pmf: dict, eta_bound=None):
        super().__init__(k, r, eta_bound)
        self.alphabet = np.asarray(alphabet, dtype=float)
        if self.alphabet.ndim != 1 or len(self.alphabet) < 2:
            raise ConfigurationError("alphabet must list at least two values")
        if np.any(np.diff(self.alphabet) <= 0):
            raise ConfigurationError("alphabet must be strictly increasing")
        self.bin_edges = np.asarray(bin_edges, dtype=float)
        if self.bin_edges[0] != 0.0 or abs(self.bin_edges[-1] - self.r) > 1e-12:
            raise ConfigurationError("bins must partition [0, r]")
        if np.any(np.diff(self.bin_edges) <= 0):
            raise ConfigurationError("bin edges must be strictly increasing")
        _require_all_pairs(pmf, k, "pmf table")
        B, S = len(self.bin_edges) - 1, len(self.alphabet)
        self.pmf = {}
        for p, table in pmf.items():
            table = np.asarray(table, dtype=float)
            if table.shape != (B, S):
                raise ConfigurationError(f"pmf table for {p} must have shape ({B}, {S})")
            if np.any(table < 0.0):
                raise ConfigurationError(f"pmf table for {p} has negative entries")
            if np.any(np.abs(table.sum(axis=1) - 1.0) > 1e-12):
                raise ConfigurationError(f"pmf rows for {p} must sum to 1")
            if self.eta_bound is not None and np.any(table <= 0.0):
                raise ConfigurationError(
                    f"pmf table for {p} has zero entries; likelihood ratio unbounded despite declared eta"
                )
            self.pmf[pair_key(*p)] = table
        self._cdf = {p: np.cumsum(t, axis=1) for p, t in self.pmf.items()}

    def _bin_of(self, y):
        return np.searchsorted(self.bin_edges[1:-1], y, side="right")

    def _symbol_of(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.searchsorted(self.alphabet, x)
        idx = np.clip(idx, 0, len(self.alphabet) - 1)
        if np.any(self.alphabet[idx] != x):
            raise DomainError("observation outside the family alphabet")
        return idx

    def log_density_values(self, i, j, x, y):
        table = self.pmf[self._check_pair(i, j)]
        b = np.atleast_1d(self._bin_of(y))
        s = self._symbol_of(x)
        with np.errstate(divide="ignore"):
            out = np.log(table[b, s])
        return out.reshape(np.shape(y)) if np.shape(y) else out[0]

    def sample_values(self, i, j, y, rng):
        cdf = self._cdf[self._check_pair(i, j)]
        b = np.atleast_1d(self._bin_of(y))
        u = rng.random(size=b.shape)
        idx = (u[:, None] < cdf[b]).argmax(axis=1)
        out = self.alphabet[idx]
        return out.reshape(np.shape(y)) if np.shape(y) else out[0]

    def phi_t_values(self, pair_pq, pair_ab, t, y):
        p = self.pmf[pair_key(*pair_pq)]
        q = self.pmf[pair_key(*pair_ab)]
        b = np.atleast_1d(self._bin_of(y))
        per_bin = np.sum(p ** t * q ** (1.0 - t), axis=1)
        out = per_bin[b]
        return out.reshape(np.shape(y)) if np.shape(y) else out[0]

    def params_equal_at(self, pair1, pair2, y):
        p = self.pmf[pair_key(*pair1)]
        q = self.pmf[pair_key(*pair2)]
        b = np.atleast_1d(self._bin_of(y))
        eq = np.all(np.abs(p - q) <= _PARAM_TOL, axis=1)
        return eq[b]

    def equality_grid(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def check_support(self, x) -> bool:
        try:
            self._symbol_of(x)
        except DomainError:
            return False
        return True

    def pair_breakpoints(self, pair):
        return self.bin_edges

    def eta_estimate(self) -> float:
        best = 0.0
        with np.errstate(divide="ignore"):
            for p1, t1 in self.pmf.items():
                for p2, t2 in self.pmf.items():
                    if p1 == p2:
                        continue
                    ratios = np.log(t1) - np.log(t2)
                    ratios = np.where(np.isnan(ratios), 0.0, ratios)
                    best = max(best, float(np.max(ratios)))
        return best

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "k": self.k,
            "r": self.r,
            "eta_bound": self.eta_bound,
            "alphabet": [float(a) for a in self.alphabet],
            "bins": [float(b) for b in self.bin_edges],
            "pairs": [
                dict(i=i, j=j, pmf=[[float(v) for v in row] for row in self.pmf[(i, j)]])
                for i, j in self.all_pairs()
            ],
        }


# ---------------------------------------------------------------------------
# module-level operations (domain-checked entry points)
# ---------------------------------------------------------------------------

def _check_y(fam: DistributionFamily, y) -> None:
    y = np.asarray(y, dtype=float)
    if np.any(y < 0.0) or np.any(y > fam.r):
        raise DomainError(f"no observation exists at normalized distance outside [0, {fam.r:g}]")


def log_density(fam: DistributionFamily, i: int, j: int, x, y):
    """Natural log of p_ij(x; y); symmetric in (i, j)."""
    _check_y(fam, y)
    if not fam.check_support(x):
        raise DomainError("observation outside the family support")
    out = fam.log_density_values(i, j, x, y)
    return float(out) if np.isscalar(y) or np.shape(y) == () else out


def sample_edge_weight(fam: DistributionFamily, i: int, j: int, y, rng: np.random.Generator):
    """Draw one observation per distance from P_ij(y)."""
    _check_y(fam, y)
    out = fam.sample_values(i, j, y, rng)
    return float(out) if np.isscalar(y) or np.shape(y) == () else out


def phi_t(fam: DistributionFamily, pair_pq, pair_ab, t: float, y):
    """Chernoff coefficient sum_x p^t q^(1-t) between two pair distributions at y."""
    if not 0.0 <= t <= 1.0:
        raise ContractViolation("t must lie in [0, 1]")
    _check_y(fam, y)
    out = fam.phi_t_values(pair_pq, pair_ab, t, np.asarray(y, dtype=float))
    return float(out) if np.isscalar(y) or np.shape(y) == () else out


@dataclass
class FamilyValidationReport:
    """Outcome of the assumption checks; advisory, never raises."""

    kind: str
    identifiability_ok: bool                     # every pair-of-pairs fully equal or fully distinct
    mixed_pairs: list = field(default_factory=list)
    distinctness_ok: bool = True                 # rows: P_ia != P_ib for a != b
    strong_distinctness_ok: bool = True          # all distinct unordered pairs differ
    equal_classes: list = field(default_factory=list)
    eta_estimate: float = 0.0
    eta_bound: float | None = None
    eta_ok: bool | None = None
    messages: list = field(default_factory=list)

    def format_text(self) -> str:
        lines = [
            f"family kind: {self.kind}",
            f"identifiability (equal-or-distinct at almost every distance): {'ok' if self.identifiability_ok else 'VIOLATED'}",
            f"distinctness (per-community rows): {'ok' if self.distinctness_ok else 'VIOLATED'}",
            f"strong distinctness (all pairs): {'ok' if self.strong_distinctness_ok else 'VIOLATED'}",
            f"log-likelihood-ratio bound estimate: {self.eta_estimate:.6g}"
            + (f" (declared {self.eta_bound:g}: {'ok' if self.eta_ok else 'EXCEEDED'})"
               if self.eta_bound is not None else " (no bound declared)"),
        ]
        if self.mixed_pairs:
            lines.append("mixed equal/distinct pair-of-pairs: " + ", ".join(map(str, self.mixed_pairs)))
        for c in self.equal_classes:
            if len(c) > 1:
                lines.append("identical pair class: " + " == ".join(map(str, c)))
        lines.extend(self.messages)
        return "\n".join(lines)


def validate_family(fam: DistributionFamily) -> FamilyValidationReport:
    """Grid-based check of the identifiability, distinctness, and bounded-ratio
    assumptions. Report only; callers decide whether to refuse."""
    grid = fam.equality_grid()
    pairs = fam.all_pairs()
    verdict = {}
    mixed = []
    for a in range(len(pairs)):
        for b in range(a + 1, len(pairs)):
            eq = fam.params_equal_at(pairs[a], pairs[b], grid)
            frac = float(np.mean(eq))
            if frac > 1.0 - 1.0 / 64:
                verdict[(pairs[a], pairs[b])] = True
            elif frac < 1.0 / 64:
                verdict[(pairs[a], pairs[b])] = False
            else:
                verdict[(pairs[a], pairs[b])] = None
                mixed.append((pairs[a], pairs[b]))

    # equivalence classes under grid equality (mixed counts as unequal)
    classes = []
    for p in pairs:
        for c in classes:
            q = c[0]
            key = (q, p) if (q, p) in verdict else (p, q)
            if verdict.get(key) is True:
                c.append(p)
                break
        else:
            classes.append([p])

    distinct = True
    for i in range(fam.k):
        for a in range(fam.k):
            for b in range(a + 1, fam.k):
                key = tuple(sorted((pair_key(i, a), pair_key(i, b))))
                if verdict.get(key) is not False:
                    distinct = False
    strong = all(v is False for v in verdict.values())

    eta_est = fam.eta_estimate()
    eta_ok = None if fam.eta_bound is None else bool(eta_est < fam.eta_bound)
    return FamilyValidationReport(
        kind=fam.kind,
        identifiability_ok=not mixed,
        mixed_pairs=mixed,
        distinctness_ok=distinct,
        strong_distinctness_ok=strong,
        equal_classes=classes,
        eta_estimate=eta_est,
        eta_bound=fam.eta_bound,
        eta_ok=eta_ok,
    )


# ---------------------------------------------------------------------------
# dict (de)serialization shared by config files and instance files
# ---------------------------------------------------------------------------

def _pair_funcs_from_dicts(entries, r) -> dict:
    out = {}
    for e in entries:
        out[pair_key(int(e["i"]), int(e["j"]))] = PiecewisePoly.from_dict(e, r)
    return out


def family_from_dict(spec: dict) -> DistributionFamily:
    kind = spec.get("kind")
    k = int(spec["k"])
    r = float(spec["r"])
    eta = spec.get("eta_bound")
    if kind == BernoulliGate.kind:
        return BernoulliGate(k, r, _pair_funcs_from_dicts(spec["pairs"], r), eta_bound=eta)
    if kind == GaussianShift.kind:
        return GaussianShift(k, r, _pair_funcs_from_dicts(spec["pairs"], r),
                             sigma=float(spec["sigma"]), eta_bound=eta)
    if kind == TablePMF.kind:
        pmf = {(int(e["i"]), int(e["j"])): e["pmf"] for e in spec["pairs"]}
        return TablePMF(k, r, spec["alphabet"], spec["bins"], pmf, eta_bound=eta)
    raise ConfigurationError(f"unknown family kind: {kind!r}")


def symmetric_bernoulli(k: int, r: float, a: float, b: float, eta_bound=None) -> BernoulliGate:
    """Constant-probability family: a within a community, b across."""
    f = {}
    for i in range(k):
        for j in range(i, k):
            f[(i, j)] = PiecewisePoly.constant(a if i == j else b, r)
    return BernoulliGate(k, r, f, eta_bound=eta_bound)
