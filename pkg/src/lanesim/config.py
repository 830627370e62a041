"""Run configuration: one JSON document covering every tunable default."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from lanesim.augment import AugmentConfig, ControlGains
from lanesim.control.controllers import ControllerSpec
from lanesim.data import POLICIES, SelectionPolicy
from lanesim.dynamics import VehicleParams
from lanesim.errors import DomainError
from lanesim.geometry import ProjectionSpec
from lanesim.simloop import SimConfig

DEFAULTS: dict = {
    "seed": 0,
    "projection": ProjectionSpec().to_dict(),
    "vehicle": VehicleParams().to_dict(),
    "gains": ControlGains().to_dict(),
    "sim": {k: v for k, v in SimConfig().to_dict().items() if k != "vehicle"},
    "augment": {
        "sigma_de": 0.45,
        "sigma_dtheta_deg": 5.0,
        "clip_de": 0.9,
        "clip_dtheta_deg": 10.0,
        "samples_per_frame": 1,
        "policy": "original",
    },
    "filter": {"min_speed": 2.0, "blinker_margin": 2.0},
    "selection": {
        "small_angle_threshold_deg": 5.0,
        "large_angle_threshold_deg": 45.0,
    },
    "synth": {
        "duration": 60.0,
        "noise_std_deg": 0.0,
        "noise_correlation": 0.9,
        "supersample": 3,
        "v_max": 13.9,
        "a_lat": 3.0,
        "write_frames": True,
    },
    "controller": ControllerSpec().to_dict(),
    "sweep": {"grid": {}},
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise DomainError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and isinstance(value, dict) and key not in ("grid", "options"):
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass
class RunConfig:
    """Merged configuration document (defaults overlaid by user values)."""

    doc: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        doc = copy.deepcopy(DEFAULTS)
        if path is not None:
            try:
                user = json.loads(Path(path).read_text())
            except json.JSONDecodeError as exc:
                raise DomainError(f"config {path} is not valid JSON: {exc}") from None
            if not isinstance(user, dict):
                raise DomainError("config document must be a JSON object")
            doc = _merge(doc, user)
        if overrides:
            doc = _merge(doc, overrides)
        cfg = cls(doc)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        """Build every typed object once so bad values fail early."""
        self.projection, self.vehicle, self.gains, self.sim, self.augment_config
        self.policy(self.doc["augment"]["policy"])
        self.controller

    @property
    def seed(self) -> int:
        return int(self.doc["seed"])

    @property
    def projection(self) -> ProjectionSpec:
        return ProjectionSpec.from_dict(self.doc["projection"])

    @property
    def vehicle(self) -> VehicleParams:
        return VehicleParams.from_dict(self.doc["vehicle"])

    @property
    def gains(self) -> ControlGains:
        return ControlGains(**self.doc["gains"])

    @property
    def sim(self) -> SimConfig:
        return SimConfig.from_dict({**self.doc["sim"], "vehicle": self.doc["vehicle"]})

    @property
    def augment_config(self) -> AugmentConfig:
        a = self.doc["augment"]
        return AugmentConfig(
            sigma_de=a["sigma_de"],
            sigma_dtheta=math.radians(a["sigma_dtheta_deg"]),
            clip_de=a["clip_de"],
            clip_dtheta=math.radians(a["clip_dtheta_deg"]),
            seed=self.seed,
        )

    @property
    def controller(self) -> ControllerSpec:
        return ControllerSpec.from_dict(self.doc["controller"])

    def policy(self, name: str) -> SelectionPolicy:
        if name not in POLICIES:
            raise DomainError(f"unknown selection policy {name!r}; choose from {sorted(POLICIES)}")
        sel = self.doc["selection"]
        base = POLICIES[name]
        return SelectionPolicy(
            small_angle_threshold=math.radians(sel["small_angle_threshold_deg"]),
            keep_fraction_small=base.keep_fraction_small,
            oversample_factor_large=base.oversample_factor_large,
            large_angle_threshold=math.radians(sel["large_angle_threshold_deg"]),
            seed=self.seed,
        )

    def to_json(self) -> str:
        return json.dumps(self.doc, sort_keys=True, indent=2)
