"""Experiment configuration: strict TOML loading, validation, hashing.

The file format is flat TOML plus one [phi] table.  Unknown keys are
rejected, every parameter is range-checked against the admissible ranges
the analytics assume, and a stable hash of the physics-relevant fields is
embedded in every output record so results can be traced to their exact
configuration.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field, asdict

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import disorder
from .testfunc import TestFunction, from_spec

SCHEMA_VERSION = 1

# execution details that do not affect the produced numbers
_NON_PHYSICS = ("out_dir", "checkpoint_every", "threads")

_DEFAULTS = dict(
    schema=SCHEMA_VERSION,
    d=3,
    n_grid=[16, 32, 64],
    law="gaussian",
    beta="0.5*betaL2",
    replicas=1000,
    master_seed=0,
    eps=0.9,
    alpha=0.05,
    rho=0.95,
    padding=None,
    degree_cap=16,
    observables=["linear", "log", "tail"],
    allow_supercritical=False,
    out_dir="results",
    checkpoint_every=200,
    threads=1,
    phi=dict(kind="gaussian", scale=0.35),
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    schema: int
    d: int
    n_grid: tuple
    law: str
    beta: object            # float, or a string like "0.5*betaL2"
    replicas: int
    master_seed: int
    eps: float
    alpha: float
    rho: float
    padding: int | None
    degree_cap: int
    observables: tuple
    allow_supercritical: bool
    out_dir: str
    checkpoint_every: int
    threads: int
    phi: tuple              # sorted (key, value) pairs of the phi table

    # ---- derived ----------------------------------------------------------

    def law_object(self) -> disorder.DisorderLaw:
        return disorder.law_from_name(self.law)

    def phi_object(self) -> TestFunction:
        return from_spec(dict(self.phi), self.d)

    def beta_value(self) -> float:
        """Resolve the inverse temperature, possibly as a multiple of the
        L2-critical one."""
        if isinstance(self.beta, (int, float)):
            return float(self.beta)
        m = re.fullmatch(r"\s*([0-9.eE+-]+)\s*\*\s*betaL2\s*", str(self.beta))
        if not m:
            raise ConfigError(
                f"beta must be a number or 'c*betaL2', got {self.beta!r}")
        frac = float(m.group(1))
        crit = disorder.beta_l2(self.law_object(), self.d)
        if math.isinf(crit):
            raise ConfigError(
                "beta given as a fraction of betaL2, but this law never "
                "reaches the L2-critical threshold in this dimension")
        return frac * crit

    def config_hash(self) -> str:
        data = asdict(self)
        for k in _NON_PHYSICS:
            data.pop(k)
        blob = json.dumps(data, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def validate(self):
        if self.schema != SCHEMA_VERSION:
            raise ConfigError(f"schema version {self.schema} unsupported "
                              f"(expected {SCHEMA_VERSION})")
        if self.d < 3:
            raise ConfigError("d must be >= 3 (the L2 regime needs a "
                              "transient walk)")
        if not self.n_grid or any(int(n) < 1 for n in self.n_grid):
            raise ConfigError("n_grid must be nonempty positive integers")
        if self.law not in ("gaussian", "rademacher"):
            raise ConfigError(f"unknown law {self.law!r}")
        if not 7.0 / 8.0 < self.eps < 1.0:
            raise ConfigError("eps must lie in (7/8, 1): the window "
                              "time-cut exponent is only admissible there")
        if not 0.0 < self.alpha < self.eps / 2.0:
            raise ConfigError("alpha must lie in (0, eps/2)")
        if not self.eps < self.rho < 1.0:
            raise ConfigError("rho must lie in (eps, 1): the tail slab "
                              "must start after the window time cut")
        if self.padding is not None and self.padding < 1:
            raise ConfigError("padding must be >= 1 when given")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if self.degree_cap < 0:
            raise ConfigError("degree_cap must be >= 0")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        bad = set(self.observables) - {"linear", "log", "tail"}
        if bad:
            raise ConfigError(f"unknown observables {sorted(bad)}")
        try:
            self.phi_object()
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid phi spec: {exc}") from exc
        beta = self.beta_value()
        if beta < 0:
            raise ConfigError("beta must be >= 0")
        crit = disorder.beta_l2(self.law_object(), self.d)
        if beta >= crit and not self.allow_supercritical:
            raise ConfigError(
                f"beta = {beta:.6g} is not below the L2-critical value "
                f"{crit:.6g}; set allow_supercritical = true to override")


def from_mapping(data: dict) -> ExperimentConfig:
    data = dict(data)
    unknown = set(data) - set(_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged = {**_DEFAULTS, **data}
    merged["n_grid"] = tuple(int(n) for n in merged["n_grid"])
    merged["observables"] = tuple(merged["observables"])
    phi = merged["phi"]
    if "center" in phi:
        phi = {**phi, "center": tuple(float(c) for c in phi["center"])}
    merged["phi"] = tuple(sorted(phi.items()))
    cfg = ExperimentConfig(**merged)
    cfg.validate()
    return cfg


def load_config(path: str) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return from_mapping(data)


# ---------------------------------------------------------------------------
# saving (minimal TOML emitter for the round-trip contract)
# ---------------------------------------------------------------------------

def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v)}")


def save_config(cfg: ExperimentConfig, path: str):
    data = asdict(cfg)
    phi = dict(data.pop("phi"))
    lines = []
    for k, v in data.items():
        if v is None:
            continue  # optional keys are omitted and re-defaulted on load
        lines.append(f"{k} = {_toml_value(v)}")
    lines.append("")
    lines.append("[phi]")
    for k, v in phi.items():
        lines.append(f"{k} = {_toml_value(v)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
