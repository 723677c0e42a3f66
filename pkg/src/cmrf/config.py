"""Experiment configuration (JSON) with validation and bundled defaults."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from cmrf.lattice import Lattice
from cmrf.optimize import OptimizerConfig
from cmrf.priors import PriorSpec
from cmrf.samplers import SamplerConfig

PROBLEMS = ("deconv1d", "deconv2d")
PHANTOMS = ("test_function_1d", "phantom_2d")
BUNDLED = ("deconv1d", "deconv2d_desk", "deconv2d_full")


class ConfigError(ValueError):
    pass


def _default_diagnostics():
    return {"kde_nodes": [], "kde_points": 200, "max_lag": 100, "squared_v": False}


def _default_realize():
    return {"n": 200, "h": 1 / 199, "orders": [1, 2], "families": ["cauchy", "gaussian"],
            "noise_scale": 1.0, "spde_shape": [200], "spde_ell": 0.015 ** 2, "spde_h": None,
            "normalize": True}


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    data_grid: Lattice
    recon_grid: Lattice
    kernel_s: float
    noise_sigma: float
    prior: PriorSpec
    sim_grid: Lattice | None = None
    phantom: str = "test_function_1d"
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    n_chains: int = 4
    output_dir: str = "runs/default"
    master_seed: int = 0
    diagnostics: dict = field(default_factory=_default_diagnostics)
    realize: dict = field(default_factory=_default_realize)

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}")
        if self.phantom not in PHANTOMS:
            raise ConfigError(f"phantom must be one of {PHANTOMS}")
        dims = 1 if self.problem == "deconv1d" else 2
        for name in ("data_grid", "recon_grid", "sim_grid"):
            g = getattr(self, name)
            if g is not None and g.dims != dims:
                raise ConfigError(f"{name} must be {dims}D for {self.problem}")
        if dims == 2 and self.sim_grid is None:
            raise ConfigError("deconv2d needs a simulation grid")
        if (dims == 1) != (self.phantom == "test_function_1d"):
            raise ConfigError("phantom does not match the problem dimension")
        if self.kernel_s <= 0 or self.noise_sigma < 0:
            raise ConfigError("need kernel_s > 0 and noise_sigma >= 0")
        if self.n_chains < 1:
            raise ConfigError("n_chains must be >= 1")
        unknown = ((set(self.diagnostics) - set(_default_diagnostics()))
                   | (set(self.realize) - set(_default_realize())))
        if unknown:
            raise ConfigError(f"unknown diagnostics/realize keys: {sorted(unknown)}")
        diag = {**_default_diagnostics(), **self.diagnostics}
        real = {**_default_realize(), **self.realize}
        if any(not 0 <= k < self.recon_grid.size for k in diag["kde_nodes"]):
            raise ConfigError("kde_nodes out of range")
        object.__setattr__(self, "diagnostics", diag)
        object.__setattr__(self, "realize", real)

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "phantom": self.phantom,
            "grids": {
                "simulation": None if self.sim_grid is None else list(self.sim_grid.shape),
                "data": list(self.data_grid.shape),
                "reconstruction": list(self.recon_grid.shape),
            },
            "kernel_s": self.kernel_s,
            "noise_sigma": self.noise_sigma,
            "prior": self.prior.to_dict(),
            "optimizer": self.optimizer.to_dict(),
            "sampler": self.sampler.to_dict(),
            "n_chains": self.n_chains,
            "output_dir": self.output_dir,
            "master_seed": self.master_seed,
            "diagnostics": copy.deepcopy(self.diagnostics),
            "realize": copy.deepcopy(self.realize),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = copy.deepcopy(d)
        known = {"problem", "phantom", "grids", "kernel_s", "noise_sigma", "prior", "optimizer",
                 "sampler", "n_chains", "output_dir", "master_seed", "diagnostics", "realize"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            grids = d.pop("grids")
            sim = grids.get("simulation")
            return cls(
                problem=d.pop("problem"),
                data_grid=Lattice(tuple(grids["data"])),
                recon_grid=Lattice(tuple(grids["reconstruction"])),
                sim_grid=None if sim is None else Lattice(tuple(sim)),
                kernel_s=float(d.pop("kernel_s")),
                noise_sigma=float(d.pop("noise_sigma")),
                prior=PriorSpec.from_dict(d.pop("prior")),
                optimizer=OptimizerConfig.from_dict(d.pop("optimizer", {})),
                sampler=SamplerConfig.from_dict(d.pop("sampler", {})),
                **d,
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigError(f"invalid config: {err}") from err

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as err:
            raise ConfigError(f"config is not valid JSON: {err}") from err

    def digest(self) -> str:
        """SHA-256 of the canonical JSON, excluding the output location."""
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(changes)
        return ExperimentConfig.from_dict(d)


def load_config(source: str | Path) -> ExperimentConfig:
    """Load a config file, or a bundled config by name (see ``BUNDLED``)."""
    path = Path(source)
    if path.is_file():
        return ExperimentConfig.from_json(path.read_text())
    name = str(source).removesuffix(".json")
    if name in BUNDLED:
        return ExperimentConfig.from_json(bundled_text(name))
    raise ConfigError(f"no config file or bundled config named {source!r}")


def bundled_text(name: str) -> str:
    return resources.files("cmrf").joinpath("configs", f"{name}.json").read_text()
