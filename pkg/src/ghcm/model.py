"""Instance sampling for the geometric hidden community model.

An instance is a Poisson cloud of vertices on the volume-n torus, i.i.d.
community labels, and one observation per pair of vertices within the
visibility radius r * (log n)^(1/d). Families are always evaluated at the
normalized distance y = ||u - v|| / (log n)^(1/d) in [0, r]; the raw
distance never leaves this module.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from . import geometry
from .distributions import DistributionFamily, family_from_dict
from .errors import ConfigurationError

FORMAT_TAG = "ghcm-instance"
FORMAT_VERSION = 1

# Sentinel for "not yet labeled" entries in estimated labelings.
UNLABELED = -1


@dataclass(frozen=True)
class ModelConfig:
    """Sampling parameters: intensity, volume, normalized radius, dimension,
    community count, prior, and the observation family."""

    lam: float
    n: float
    r: float
    d: int
    k: int
    pi: np.ndarray
    family: DistributionFamily

    def __post_init__(self):
        object.__setattr__(self, "pi", np.asarray(self.pi, dtype=float))
        if self.lam <= 0 or self.n <= 0 or self.r <= 0:
            raise ConfigurationError("lambda, n, r must be positive")
        if self.d < 1:
            raise ConfigurationError("dimension must be >= 1")
        if self.k < 2:
            raise ConfigurationError("need at least two communities")
        if self.pi.shape != (self.k,):
            raise ConfigurationError("pi must have one entry per community")
        # degenerate priors (zero entries) are admitted; sampling simply never
        # draws those communities
        if np.any(self.pi < 0) or abs(float(self.pi.sum()) - 1.0) > 1e-12:
            raise ConfigurationError("pi entries must be nonnegative and sum to 1")
        if self.family.k != self.k:
            raise ConfigurationError("family community count differs from k")
        if abs(self.family.r - self.r) > 1e-12:
            raise ConfigurationError("family support radius differs from r")

    @property
    def log_n(self) -> float:
        return math.log(self.n)

    @property
    def torus_side(self) -> float:
        return geometry.torus_side(self.n, self.d)

    @property
    def distance_scale(self) -> float:
        """(log n)^(1/d): raw distance per unit of normalized distance."""
        return self.log_n ** (1.0 / self.d)

    @property
    def visibility_radius(self) -> float:
        """r * (log n)^(1/d) in model length units."""
        return self.r * self.distance_scale

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "n": self.n,
            "r": self.r,
            "d": self.d,
            "k": self.k,
            "pi": [float(p) for p in self.pi],
            "family": self.family.to_dict(),
        }

    @classmethod
    def from_dict(cls, spec: dict) -> "ModelConfig":
        return cls(
            lam=float(spec["lambda"]),
            n=float(spec["n"]),
            r=float(spec["r"]),
            d=int(spec["d"]),
            k=int(spec["k"]),
            pi=np.asarray(spec["pi"], dtype=float),
            family=family_from_dict(spec["family"]),
        )


def minimal_admissible_n(r: float, d: int) -> float:
    """Smallest n with r (log n)^(1/d) <= n^(1/d) / 2, i.e. n >= (2r)^d log n."""
    c = (2.0 * r) ** d
    n = max(math.e, 2.0 * c)
    for _ in range(200):
        nxt = c * math.log(n)
        if abs(nxt - n) < 1e-9 * n:
            break
        n = max(nxt, math.e)
    return n


@dataclass(frozen=True)
class Instance:
    """A sampled model instance. Arrays are frozen after construction.

    Edge arrays hold each unordered visible pair once with u < v; `x` is the
    observation and `y` the normalized distance. The CSR view duplicates both
    directions sorted by (vertex, neighbor id).
    """

    config: ModelConfig
    seed: int
    locations: np.ndarray    # (N, d)
    labels: np.ndarray       # (N,) ground truth sigma*
    edges_u: np.ndarray      # (M,)
    edges_v: np.ndarray      # (M,)
    edges_x: np.ndarray      # (M,)
    edges_y: np.ndarray      # (M,) normalized distances, all <= r

    def __post_init__(self):
        for a in (self.locations, self.labels, self.edges_u, self.edges_v,
                  self.edges_x, self.edges_y):
            a.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return len(self.labels)

    @property
    def num_edges(self) -> int:
        return len(self.edges_u)

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(indptr, neighbor, x, y) with neighbors ascending within each row."""
        n = self.num_vertices
        vert = np.concatenate([self.edges_u, self.edges_v])
        nbr = np.concatenate([self.edges_v, self.edges_u])
        x = np.concatenate([self.edges_x, self.edges_x])
        y = np.concatenate([self.edges_y, self.edges_y])
        order = np.lexsort((nbr, vert))
        vert, nbr, x, y = vert[order], nbr[order], x[order], y[order]
        indptr = np.concatenate([[0], np.cumsum(np.bincount(vert, minlength=n))])
        return indptr.astype(np.int64), nbr, x, y

    def neighbors(self, v: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(neighbor ids, observations, normalized distances), ids ascending."""
        indptr, nbr, x, y = self.csr
        s, e = indptr[v], indptr[v + 1]
        return nbr[s:e], x[s:e], y[s:e]

    def with_labels(self, labels: np.ndarray) -> "Instance":
        """Copy with a different ground-truth array (observations untouched)."""
        return replace(self, labels=np.asarray(labels))


def normalized_distance(instance: Instance, u: int, v: int) -> float:
    """Toroidal distance between vertices u, v divided by (log n)^(1/d)."""
    cfg = instance.config
    raw = geometry.toroidal_distance(instance.locations[u], instance.locations[v],
                                     cfg.torus_side)
    return raw / cfg.distance_scale


def _sample_observations(config: ModelConfig, labels, u, v, y, rng) -> np.ndarray:
    """One observation per edge, grouped by unordered label pair in a fixed
    order so the draw sequence is seed-determined."""
    fam = config.family
    lab_u = labels[u]
    lab_v = labels[v]
    lo = np.minimum(lab_u, lab_v)
    hi = np.maximum(lab_u, lab_v)
    x = np.empty(len(u), dtype=float)
    for i in range(config.k):
        for j in range(i, config.k):
            mask = (lo == i) & (hi == j)
            if np.any(mask):
                x[mask] = fam.sample_values(i, j, y[mask], rng)
    return x


def build_instance(config: ModelConfig, locations: np.ndarray, labels: np.ndarray,
                   seed: int, rng: np.random.Generator | None = None) -> Instance:
    """Assemble an instance from given locations and labels, sampling only the
    pairwise observations. Used by sample_instance and by hand-built tests."""
    locations = np.asarray(locations, dtype=float).reshape(-1, config.d)
    labels = np.asarray(labels, dtype=np.int64)
    if rng is None:
        rng = np.random.default_rng(seed)
    L = config.torus_side
    R = config.visibility_radius
    if R > L / 2.0:
        raise ConfigurationError(
            f"visibility radius {R:g} exceeds L/2 = {L / 2:g}; "
            f"smallest admissible n for r={config.r:g}, d={config.d} is "
            f"{minimal_admissible_n(config.r, config.d):.6g}"
        )
    grid = geometry.build_grid(locations, R, L)
    u, v, dist = geometry.visible_pairs(locations, R, grid)
    y = dist / config.distance_scale
    np.minimum(y, config.r, out=y)  # guard the r boundary against roundoff
    x = _sample_observations(config, labels, u, v, y, rng)
    return Instance(config=config, seed=seed, locations=locations, labels=labels,
                    edges_u=u, edges_v=v, edges_x=x, edges_y=y)


def sample_instance(config: ModelConfig, seed: int) -> Instance:
    """Draw a full instance: Poisson locations, i.i.d. labels from pi, and one
    observation per visible pair. Bit-reproducible given the seed."""
    rng = np.random.default_rng(seed)
    locations = geometry.sample_poisson_points(config.lam, config.n, config.d, rng)
    labels = rng.choice(config.k, size=len(locations), p=config.pi).astype(np.int64)
    return build_instance(config, locations, labels, seed, rng)


# ---------------------------------------------------------------------------
# line-based instance files
# ---------------------------------------------------------------------------

def save_instance(instance: Instance, path) -> None:
    """Versioned text format: a tag line, a JSON header with config and seed,
    then one line per vertex (coordinates + label) and one per edge
    (u v x y). Floats are written with repr precision and round-trip."""
    with open(path, "w") as fh:
        fh.write(f"{FORMAT_TAG} v{FORMAT_VERSION}\n")
        header = {"seed": int(instance.seed), "config": instance.config.to_dict()}
        fh.write(json.dumps(header) + "\n")
        fh.write(f"vertices {instance.num_vertices}\n")
        for row, lab in zip(instance.locations, instance.labels):
            fh.write(" ".join(repr(float(c)) for c in row) + f" {int(lab)}\n")
        fh.write(f"edges {instance.num_edges}\n")
        for u, v, x, y in zip(instance.edges_u, instance.edges_v,
                              instance.edges_x, instance.edges_y):
            fh.write(f"{int(u)} {int(v)} {repr(float(x))} {repr(float(y))}\n")


def load_instance(path) -> Instance:
    with open(path) as fh:
        tag = fh.readline().strip()
        if tag != f"{FORMAT_TAG} v{FORMAT_VERSION}":
            raise ConfigurationError(f"unsupported instance file header: {tag!r}")
        header = json.loads(fh.readline())
        config = ModelConfig.from_dict(header["config"])
        kind, count = fh.readline().split()
        assert kind == "vertices"
        n = int(count)
        locations = np.empty((n, config.d), dtype=float)
        labels = np.empty(n, dtype=np.int64)
        for i in range(n):
            parts = fh.readline().split()
            locations[i] = [float(p) for p in parts[:-1]]
            labels[i] = int(parts[-1])
        kind, count = fh.readline().split()
        assert kind == "edges"
        m = int(count)
        u = np.empty(m, dtype=np.int64)
        v = np.empty(m, dtype=np.int64)
        x = np.empty(m, dtype=float)
        y = np.empty(m, dtype=float)
        for i in range(m):
            parts = fh.readline().split()
            u[i], v[i] = int(parts[0]), int(parts[1])
            x[i], y[i] = float(parts[2]), float(parts[3])
    return Instance(config=config, seed=int(header["seed"]), locations=locations,
                    labels=labels, edges_u=u, edges_v=v, edges_x=x, edges_y=y)
