"""Experiment configuration.

A config file is a JSON object; every key is optional and defaults to the
values below (the N=100, K=40 Jakes setup).  Example::

    {
      "scenario": "jakes",
      "scenario_params": {"spacing_factor": 2.0},
      "n_rx": 100, "n_tx": 40,
      "L_values": [2, 3, 6],
      "snr_grid_db": [-10, -5, 0, 5, 10, 15, 20, 25],
      "trials": 1000,
      "seed": 0,
      "weight_source": "asymptotic",
      "sinr_eval": "exact-formula",
      "user": "all",
      "outputs": "results"
    }

``scenario_params`` by scenario:

jakes
    ``spacing_factor`` (antenna spacing in wavelengths, default 2.0),
    ``n_distinct`` (number of distinct angle intervals shared round-robin;
    default one per transmitter), ``angle_intervals`` (explicit list of
    ``[phi_min, phi_max]`` pairs; otherwise drawn uniformly from the seed).
distributed-antenna
    ``pathloss_exponent`` (default 3.0), ``min_distance`` (default 0.05);
    antennas and transmitters are dropped uniformly in the unit square.
    ``powers`` (per-transmitter, default all 1).
mimo-mac
    ``n_links`` (M, default 4); link ``m`` gets exponential receive
    correlation ``rho_m^|i-j|`` with ``rho_m ~ U[0, rho_max]`` (``rho_max``
    default 0.9) and a diagonal transmit correlation with entries
    ``U[gain_min, gain_max]`` (defaults 0.5, 1.5).
identity-mp
    no parameters (``R_j = I``).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Union

from .channel_models import ENTRY_DISTRIBUTIONS

SCENARIOS = ("jakes", "distributed-antenna", "mimo-mac", "identity-mp")
WEIGHT_SOURCES = ("empirical", "asymptotic")
SINR_EVALS = ("exact-formula", "asymptotic", "monte-carlo")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    scenario: str = "jakes"
    scenario_params: dict = field(default_factory=dict)
    n_rx: int = 100
    n_tx: int = 40
    L_values: list = field(default_factory=lambda: [2, 3, 6])
    snr_grid_db: list = field(default_factory=lambda: [-10, -5, 0, 5, 10, 15, 20, 25])
    trials: int = 1000
    seed: int = 0
    weight_source: str = "asymptotic"
    sinr_eval: str = "exact-formula"
    user: Union[str, int] = "all"
    entry_distribution: str = "gaussian"
    mc_symbols: int = 2000
    moment_order: int = 8
    moment_users: int = 10
    workers: int = 1
    figures: bool = True
    gnuplot: bool = True
    outputs: str = "results"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if not isinstance(self.scenario_params, dict):
            raise ConfigError("scenario_params must be an object")
        for name in ("n_rx", "n_tx", "trials", "mc_symbols", "moment_users", "workers"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not isinstance(self.moment_order, int) or self.moment_order < 0:
            raise ConfigError("moment_order must be a non-negative integer")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        if not self.L_values:
            raise ConfigError("L_values must be non-empty")
        r = min(self.n_rx, self.n_tx)
        for L in self.L_values:
            if not isinstance(L, int) or not 1 <= L <= r:
                raise ConfigError(f"every L must be an integer in [1, min(N, K)] = [1, {r}], got {L!r}")
        if not self.snr_grid_db:
            raise ConfigError("snr_grid_db must be non-empty")
        for s in self.snr_grid_db:
            if not isinstance(s, (int, float)) or s != s or abs(s) == float("inf"):
                raise ConfigError(f"SNR values must be finite numbers, got {s!r}")
        if self.weight_source not in WEIGHT_SOURCES:
            raise ConfigError(f"weight_source must be one of {WEIGHT_SOURCES}")
        if self.sinr_eval not in SINR_EVALS:
            raise ConfigError(f"sinr_eval must be one of {SINR_EVALS}")
        if self.entry_distribution not in ENTRY_DISTRIBUTIONS:
            raise ConfigError(f"entry_distribution must be one of {ENTRY_DISTRIBUTIONS}")
        if self.user != "all" and not (isinstance(self.user, int) and 0 <= self.user < self.n_tx):
            raise ConfigError(f"user must be 'all' or an index in [0, {self.n_tx}), got {self.user!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must contain a JSON object")
        return cls.from_dict(data)

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        data = self.to_dict()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return ExperimentConfig.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def sha256(self) -> str:
        """Hash of the canonical JSON form, excluding the output directory and worker count."""
        data = self.to_dict()
        data.pop("outputs")
        data.pop("workers")
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()
