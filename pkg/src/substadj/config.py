"""Experiment configuration and run manifests.

The default configuration is the full synthetic study: K = 10 classes,
p_max = n_max = 1000, mean scales {0.75, 1, 1.5}, confounding scales
{0, 20, 40, 100, 200}, dimension grid {50, 100, 200, 1000} for the
mislabeling sweep and {125, 175} for the estimation sweep, sample grid
{50, 100, 200, 500, 1000}, 10 replications. Configs load from JSON and every
field can be overridden by a CLI flag; a :class:`RunManifest` written next to
each output records everything needed to reproduce it byte for byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .exceptions import InvalidArgument

TOOL_VERSION = "0.1.0"


@dataclass
class ExperimentConfig:
    # mixture / outcome design
    K: int = 10
    p_max: int = 1000
    n_max: int = 1000
    mu_scales: list = field(default_factory=lambda: [0.75, 1.0, 1.5])
    gamma_scales: list = field(default_factory=lambda: [0.0, 20.0, 40.0, 100.0, 200.0])
    p_grid: list = field(default_factory=lambda: [50, 100, 200, 1000])
    mse_p_grid: list = field(default_factory=lambda: [125, 175])
    mse_mu_scale: float = 1.0
    n_grid: list = field(default_factory=lambda: [50, 100, 200, 500, 1000])
    replications: int = 10
    base_seed: int = 20240
    family: str = "gaussian"
    noise_sd: float = 1.0
    # recovery / assignment
    assignment_space: str = "whitened"
    split_mode: bool = False
    restarts: int = 30
    iters: int = 100
    tol: float = 1e-8
    tie_threshold: float = 0.0
    # ridge baselines
    ridge_grid_low: float = 1e-4
    ridge_grid_high: float = 1e4
    ridge_grid_size: int = 50
    folds: int = 5
    # bound checks
    bound_coords: list = field(default_factory=lambda: [1])
    mc_draws: int = 100000
    r_threshold: float = 0.1
    divergence_threshold: float = 10.0

    def validate(self) -> None:
        if self.replications < 1:
            raise InvalidArgument("replications must be >= 1")
        for name, grid, hi in (
            ("p_grid", self.p_grid, self.p_max),
            ("mse_p_grid", self.mse_p_grid, self.p_max),
            ("n_grid", self.n_grid, self.n_max),
        ):
            for v in grid:
                if not 1 <= v <= hi:
                    raise InvalidArgument(
                        f"{name} entry {v} outside [1, {hi}]"
                    )
        if self.K < 1 or self.p_max < 1 or self.n_max < 1:
            raise InvalidArgument("K, p_max, n_max must be positive")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        doc = json.loads(text)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise InvalidArgument(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def replaced(self, **overrides) -> "ExperimentConfig":
        return dataclasses.replace(self, **overrides)


@dataclass
class RunManifest:
    """Everything needed to reproduce one harness invocation."""

    command: str
    config: dict
    tool_version: str
    replication_seeds: list
    wall_clock_seconds: float
    output_digests: dict

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
