# Copyright (c) momsjump contributors.
#
# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Optional

import yaml

from momsjump.errors import ConfigError
from momsjump.exact import MAX_ENUMERATION_P, QuadratureConfig
from momsjump.linmodel import DEFAULT_COND_CAP
from momsjump.tuning import ACCEPTANCE_RULES, AcceptanceRule, ProposalScales

METHODS = ("enumerate", "moms", "rjmcmc")
SCAN_ORDERS = ("systematic", "random")
RJ_TRANSFORMS = ("forster", "identity")


@dataclass(frozen=True)
class SamplerConfig:
    """Run-control settings shared by the samplers and the CLI.

    Config files are flat JSON or YAML mappings whose keys are the field names
    below; unknown keys are rejected.

    Examples:
        >>> config = SamplerConfig(method="rjmcmc", iterations=1000, warmup=100)
        >>> config.validate()
        >>> config.update(seed=3).seed
        3

    """

    method: str = "moms"
    iterations: int = 50000
    warmup: int = 5000
    chains: int = 4
    seed: int = 0
    phi: float = 0.75
    target_accept: float = 0.44
    tau_init: float = 1.0
    acceptance_rule: str = "metropolis"
    scan_order: str = "systematic"
    rj_transform: str = "forster"
    quad_tolerance: float = 1e-8
    max_subdivisions: int = 200
    top_k: int = 10
    workers: Optional[int] = None
    cond_cap: float = DEFAULT_COND_CAP
    max_enumeration_p: int = MAX_ENUMERATION_P

    def validate(self) -> None:
        _check_choice("method", self.method, METHODS)
        _check_int("iterations", self.iterations, 1)
        _check_int("warmup", self.warmup, 0)
        _check_int("chains", self.chains, 1)
        _check_int("seed", self.seed, None)
        _check_interval("phi", self.phi, 0.5, 1.0, closed_right=True)
        _check_interval("target_accept", self.target_accept, 0.0, 1.0)
        _check_interval("tau_init", self.tau_init, 0.0, float("inf"))
        _check_choice("acceptance_rule", self.acceptance_rule, ACCEPTANCE_RULES)
        _check_choice("scan_order", self.scan_order, SCAN_ORDERS)
        _check_choice("rj_transform", self.rj_transform, RJ_TRANSFORMS)
        _check_interval("quad_tolerance", self.quad_tolerance, 0.0, float("inf"))
        _check_int("max_subdivisions", self.max_subdivisions, 1)
        _check_int("top_k", self.top_k, 1)
        if self.workers is not None:
            _check_int("workers", self.workers, 1)
        _check_interval("cond_cap", self.cond_cap, 1.0, float("inf"))
        _check_int("max_enumeration_p", self.max_enumeration_p, 0)

    def update(self, **kwargs: Any) -> SamplerConfig:
        """Returns a copy with the non-``None`` keyword arguments overridden."""
        kwargs = {key: value for key, value in kwargs.items() if value is not None}
        _check_keys(kwargs)
        return replace(self, **kwargs)

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> SamplerConfig:
        _check_keys(values)
        values = dict(values)
        for f in fields(cls):
            # YAML reads "1e-8" as a string
            if f.type == "float" and isinstance(values.get(f.name), str):
                try:
                    values[f.name] = float(values[f.name])
                except ValueError:
                    raise ConfigError(
                        f"{f.name} must be a number, got {values[f.name]!r}."
                    )
        config = cls(**values)
        config.validate()
        return config

    @classmethod
    def from_file(cls, path: str) -> SamplerConfig:
        ext = os.path.splitext(str(path))[1].lower()
        try:
            with open(path) as f:
                if ext in (".yaml", ".yml"):
                    values = yaml.safe_load(f)
                else:
                    values = json.load(f)
        except (OSError, ValueError, yaml.YAMLError) as err:
            raise ConfigError(f"could not read config file {path}: {err}") from err
        if values is None:
            values = {}
        if not isinstance(values, dict):
            raise ConfigError(
                f"config file {path} must contain a flat key-value mapping, got {type(values).__name__}."
            )
        return cls.from_dict(values)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def save(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @property
    def num_workers(self) -> int:
        return self.workers if self.workers is not None else self.chains

    def quadrature(self) -> QuadratureConfig:
        return QuadratureConfig(self.quad_tolerance, self.max_subdivisions)

    def acceptance(self) -> AcceptanceRule:
        return AcceptanceRule(self.acceptance_rule)

    def initial_scales(self, p: int) -> ProposalScales:
        return ProposalScales.initial(p, self.tau_init, self.phi, self.target_accept)


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _check_keys(values: Dict[str, Any]) -> None:
    known = {f.name for f in fields(SamplerConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(
            f"unknown config key(s) {unknown}, valid keys are {sorted(known)}."
        )


def _check_int(name: str, value: Any, minimum: Optional[int]) -> None:
    if not _is_int(value) or (minimum is not None and value < minimum):
        bound = f" >= {minimum}" if minimum is not None else ""
        raise ConfigError(f"{name} must be an integer{bound}, got {value!r}.")


def _check_choice(name: str, value: Any, choices) -> None:
    if value not in choices:
        raise ConfigError(f"{name} must be one of {choices}, got {value!r}.")


def _check_interval(
    name: str, value: Any, low: float, high: float, closed_right: bool = False
) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}.")
    inside = low < value <= high if closed_right else low < value < high
    if not inside:
        right = "]" if closed_right else ")"
        raise ConfigError(f"{name} must lie in ({low}, {high}{right}, got {value}.")
