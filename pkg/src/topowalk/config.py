"""Sweep configuration for the command-line driver."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

from .errors import InvalidInputError
from .protocols import ProtocolSpec, registry_lookup

SCHEMA = "topowalk/v1"

OUTPUT_CHOICES = ("bands", "velocity", "d_vector", "gap_points", "boundary_class",
                  "winding", "chern", "symmetry")


@dataclass
class LinkedAngle:
    on: str
    scale: float
    offset: float


@dataclass
class SweepConfig:
    protocol: str
    sweep_symbol: str  # angle symbol or "T"
    sweep_start: float
    sweep_stop: float
    sweep_count: int
    steps: int = 1
    angles: Dict[str, float] = field(default_factory=dict)
    linked: Dict[str, LinkedAngle] = field(default_factory=dict)
    grid: int = 64
    phi: Optional[float] = None
    outputs: Tuple[str, ...] = ()
    out: Optional[str] = None
    workers: int = 1
    step_independent: bool = False

    def validate(self) -> "SweepConfig":
        spec = registry_lookup(self.protocol)  # raises for unknown ids
        if self.sweep_count < 2:
            raise InvalidInputError("sweep sample count must be >= 2")
        if self.grid < 8:
            raise InvalidInputError("momentum grid size must be >= 8")
        if self.sweep_symbol != "T":
            if self.sweep_symbol not in spec.symbols:
                raise InvalidInputError(
                    f"{self.protocol!r} has no angle {self.sweep_symbol!r};"
                    f" it uses {sorted(spec.symbols)}")
            if self.sweep_symbol in self.angles:
                raise InvalidInputError(
                    f"swept angle {self.sweep_symbol!r} must not also be fixed")
        else:
            for edge in (self.sweep_start, self.sweep_stop):
                if abs(edge - round(edge)) > 1e-12 or round(edge) < 1:
                    raise InvalidInputError("a step-number sweep needs integer bounds >= 1")
        for sym in self.angles:
            if sym not in spec.symbols:
                raise InvalidInputError(f"{self.protocol!r} has no angle {sym!r}")
        for sym, link in self.linked.items():
            if sym not in spec.symbols:
                raise InvalidInputError(f"{self.protocol!r} has no linked angle {sym!r}")
            if sym in self.angles:
                raise InvalidInputError(f"linked angle {sym!r} must not also be fixed")
            if link.on != self.sweep_symbol:
                raise InvalidInputError(
                    f"linked angle {sym!r} must follow the swept symbol {self.sweep_symbol!r}")
        if self.step_independent and self.steps != 1:
            raise InvalidInputError("step-independent evaluation requires steps == 1")
        if self.workers < 1:
            raise InvalidInputError("workers must be >= 1")
        for name in self.outputs:
            if name not in OUTPUT_CHOICES:
                raise InvalidInputError(f"unknown output {name!r}; choose from {OUTPUT_CHOICES}")
        return self

    def sweep_values(self):
        n = self.sweep_count
        step = (self.sweep_stop - self.sweep_start) / (n - 1)
        vals = [self.sweep_start + i * step for i in range(n)]
        if self.sweep_symbol == "T":
            return [int(round(v)) for v in vals]
        return vals

    def spec_at(self, value) -> ProtocolSpec:
        angles = dict(self.angles)
        if self.sweep_symbol == "T":
            T = int(value)
        else:
            T = self.steps
            angles[self.sweep_symbol] = float(value)
        for sym, link in self.linked.items():
            angles[sym] = link.scale * float(value) + link.offset
        return registry_lookup(self.protocol, T=T, angles=angles, phi=self.phi)


def config_from_dict(doc: dict) -> SweepConfig:
    if not isinstance(doc, dict):
        raise InvalidInputError("config document must be a JSON object")
    schema = doc.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise InvalidInputError(f"unsupported config schema {schema!r} (expected {SCHEMA!r})")
    sweep = doc.get("sweep") or {}
    for key in ("symbol", "start", "stop", "count"):
        if key not in sweep:
            raise InvalidInputError(f"sweep.{key} missing from config")
    linked = {}
    for sym, entry in (doc.get("linked") or {}).items():
        linked[sym] = LinkedAngle(on=entry["on"], scale=float(entry["scale"]),
                                  offset=float(entry["offset"]))
    cfg = SweepConfig(
        protocol=doc.get("protocol", ""),
        sweep_symbol=str(sweep["symbol"]),
        sweep_start=float(sweep["start"]),
        sweep_stop=float(sweep["stop"]),
        sweep_count=int(sweep["count"]),
        steps=int(doc.get("steps", 1)),
        angles={k: float(v) for k, v in (doc.get("angles") or {}).items()},
        linked=linked,
        grid=int(doc.get("grid", 64)),
        phi=float(doc["phi"]) if "phi" in doc else None,
        outputs=tuple(doc.get("outputs") or ()),
        out=doc.get("out"),
        workers=int(doc.get("workers", 1)),
        step_independent=bool(doc.get("step_independent", False)),
    )
    return cfg


def load_config(path: str) -> SweepConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise InvalidInputError(f"config {path!r} is not valid JSON: {err}") from None
    return config_from_dict(doc)
