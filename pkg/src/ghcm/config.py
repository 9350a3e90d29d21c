"""TOML configuration files.

A config has sections:

  [model]    lambda, n, r, d, k, pi
  [family]   kind + kind-specific parameter tables (see below)
  [sweep]    axes (name -> list), trials_per_point, base_seed, algorithm,
             optional workers and delta
  [output]   path for sweep CSVs

Family section, by kind:

  kind = "bernoulli_gate":  [[family.pairs]] with i, j and either
      constant = p  or  breakpoints = [...] plus coefficients = [[...], ...]
      (one ascending-power coefficient list per piece, absolute y).
  kind = "gaussian_shift":  sigma plus [[family.pairs]] with i, j and a
      constant / piecewise mean.
  kind = "table_pmf":  alphabet, bins (bin edges from 0 to r) plus
      [[family.pairs]] with i, j, pmf = [[...], ...] (one row per bin).

The family inherits k and r from [model]. Sweep axes may be the model scalars
"n", "r", "lambda", "d", "k" or dotted paths into the family section such as
"family.pairs.0.constant".
"""

from __future__ import annotations

import copy

try:
    import tomllib
except ModuleNotFoundError:          # Python < 3.11
    import tomli as tomllib

from .errors import ConfigurationError
from .model import ModelConfig

_MODEL_KEYS = {"lambda", "n", "r", "d", "k", "pi"}


def load_raw_config(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def model_config_from_raw(raw: dict) -> ModelConfig:
    """Assemble a ModelConfig from the [model] and [family] sections."""
    if "model" not in raw or "family" not in raw:
        raise ConfigurationError("config needs [model] and [family] sections")
    model = dict(raw["model"])
    unknown = set(model) - _MODEL_KEYS
    if unknown:
        raise ConfigurationError(f"unknown [model] keys: {sorted(unknown)}")
    missing = _MODEL_KEYS - set(model)
    if missing:
        raise ConfigurationError(f"missing [model] keys: {sorted(missing)}")
    family = dict(raw["family"])
    family.setdefault("k", model["k"])
    family.setdefault("r", model["r"])
    spec = dict(model)
    spec["family"] = family
    return ModelConfig.from_dict(spec)


def apply_override(raw: dict, axis: str, value) -> dict:
    """New raw config with one axis value substituted. Bare names address the
    [model] section; dotted paths starting with "family." descend into the
    family tables (integer segments index arrays)."""
    out = copy.deepcopy(raw)
    if axis in _MODEL_KEYS:
        out["model"][axis] = value
        return out
    parts = axis.split(".")
    if parts[0] != "family":
        raise ConfigurationError(
            f"sweep axis {axis!r} must be a model scalar or a family.* path")
    node = out["family"]
    for p in parts[1:-1]:
        node = node[int(p)] if p.isdigit() else node[p]
    last = parts[-1]
    if last.isdigit():
        node[int(last)] = value
    else:
        node[last] = value
    return out
