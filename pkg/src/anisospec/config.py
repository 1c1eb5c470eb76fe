"""
Experiment configuration: one JSON schema, defaults merged from the packaged
default.json, validated on load, hashed canonically.
"""

from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources

from .dynamics import AnosovMap, ConeViolation, TrigTerm, perturbed_cat_terms


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    text = resources.files("anisospec").joinpath("configs/default.json").read_text()
    return json.loads(text)


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "map":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def canonical(cfg) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg) -> str:
    return hashlib.sha256(canonical(cfg).encode()).hexdigest()[:16]


class ExperimentConfig:
    """Validated configuration.  `raw` is the merged dictionary that is hashed."""

    def __init__(self, raw: dict):
        self.raw = raw
        self.validate()

    @classmethod
    def load(cls, path=None, seed_override=None):
        cfg = default_config()
        if path is not None:
            try:
                with open(path) as f:
                    user = json.load(f)
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigError(f"cannot read config {path}: {e}") from e
            if not isinstance(user, dict):
                raise ConfigError("config root must be an object")
            cfg = _merge(cfg, user)
        if seed_override is not None:
            cfg["seed"] = int(seed_override)
            cfg["dictionary"]["seed"] = int(seed_override)
        return cls(cfg)

    @property
    def hash(self):
        return config_hash(self.raw)

    def __getitem__(self, k):
        return self.raw[k]

    # -- validation ----------------------------------------------------------
    def validate(self):
        r = self.raw
        self.amap = self.build_map()
        d0 = r["delta0"]
        if not (0 < d0 <= 0.125):
            raise ConfigError(f"delta0 must lie in (0, 1/8] (got {d0})")
        nm = r["norms"]
        if nm["varpi"] < 2:
            raise ConfigError(f"varpi must be >= 2 (got {nm['varpi']})")
        if nm["q"] < 1 or nm["r"] < 2:
            raise ConfigError("q >= 1 and r >= 2 are required")
        if nm["L"] <= 1:
            raise ConfigError(f"regularity budget L must exceed 1 (got {nm['L']})")
        for N in r["ulam"]["N"]:
            if N < 1 or N & (N - 1):
                raise ConfigError(f"Ulam partition size must be a power of 2 (got {N})")
        if r["ulam"]["method"] not in ("monte-carlo", "exact-polygon"):
            raise ConfigError(f"unknown Ulam method {r['ulam']['method']!r}")
        if r["ulam"]["method"] == "exact-polygon" and not self.amap.is_linear:
            raise ConfigError("exact-polygon assembly requires an affine map (eps = 0)")
        s = int(round(r["ulam"]["samples"] ** 0.5))
        if s * s != r["ulam"]["samples"]:
            raise ConfigError("Ulam samples per cell must be a perfect square")
        if not (1 <= r["spectrum"]["k"] <= 32):
            raise ConfigError("spectrum k must lie in [1, 32]")
        if r["projector"]["n_terms"] > 10 ** 4:
            raise ConfigError("projector n_terms must be <= 1e4")
        if r["cheb_deg"] < nm["r"] + 2:
            raise ConfigError("Chebyshev degree must be at least r + 2")

    def build_map(self) -> AnosovMap:
        m = self.raw["map"]
        try:
            if "perturbation" in m:
                terms = [TrigTerm.from_dict(t) for t in m["perturbation"]]
            else:
                terms = perturbed_cat_terms(float(m.get("eps", 0.0)))
            return AnosovMap(m["matrix"], terms)
        except ConeViolation as e:
            raise ConfigError(f"map fails cone invariance: {e}") from e
        except KeyError as e:
            raise ConfigError(f"invalid map: missing key {e} (the map section is replaced as a whole)") from e
        except (ValueError, TypeError) as e:
            raise ConfigError(f"invalid map: {e}") from e
