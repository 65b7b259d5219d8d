"""Run configuration: a JSON document validated with pydantic.

Grammar (all keys optional unless noted)::

    {
      "lattice":  {"kind": "square" | "hexagonal" | "custom", "d": 1.0,
                   "a1": [x, y], "a2": [x, y]},          # a1/a2 only for custom
      "grid":     {"kind": "oblique" | "hexagonal", "n": 48, "n1": .., "n2": ..},
      "n_cut":    96,                                     # default 2 * n
      "traps":    [{"label": "A", "position": [u, v, z],  # required, >= 1
                    "gamma": {"cylindrical": true}
                           | {"tensor": [[..], [..], [..]]}
                           | {"frequencies": [r1, r2, r3], "axes": [[..], ..]}}],
      "extras":   [{"point": [u, v, z], "relative_to": "A", "lam": 0.0,
                    "relation": "equal" | "at_least" | "at_most",
                    "component": "Ez"}],
      "solver":   {"method": "highs-ds", "equality_tol": 1e-8, "rail_tol": 1e-7,
                   "gap_tol": 1e-9, "max_iter": null, "time_limit": null,
                   "rounding_threshold": 0.5},
      "analysis": {"resolution": [96, 96, 128], "region": null,
                   "suppress_spurious": false,
                   "physical": {"mass":   {"value": 9.012182, "unit": "u"},
                                "charge": {"value": 1, "unit": "e"},
                                "U_rf":   {"value": 50, "unit": "V"},
                                "Omega_rf": {"value": 200, "unit": "MHz"},
                                "z":      {"value": 30, "unit": "um"},
                                "mathieu_limit": 0.9}},
      "sweep":    {"z_over_d": [0.2, 0.4]},
      "output":   {"map": "electrode_map.txt", "report": "report.json",
                   "svg": "electrodes.svg", "sweep_csv": "sweep.csv"}
    }

Fractional trap coordinates ``u, v`` refer to ``a1, a2``; heights are in the
lattice length unit.  An extra with ``relative_to`` is placed at the named
trap's in-plane position plus ``point[:2]``, at absolute height ``point[2]``.
Frequencies given in Hz-type units (``Hz``, ``kHz``, ``MHz``) are cyclic and
converted to angular; ``rad/s`` is taken as is.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .analysis import PhysicalParams
from .constraints import (
    ConstraintError,
    ExtraConstraint,
    TrapSpec,
    curvature_from_frequencies,
    cylindrical_gamma,
)
from .lattice import BravaisLattice, PatchGrid
from .optimize import SolverOptions


class ConfigError(ValueError):
    """Invalid configuration; ``details`` is a list of machine-readable issues."""

    def __init__(self, message: str, details=None):
        super().__init__(message)
        self.details = details or []


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LatticeConfig(_Model):
    kind: Literal["square", "hexagonal", "custom"] = "square"
    d: float = Field(1.0, gt=0)
    a1: tuple[float, float] | None = None
    a2: tuple[float, float] | None = None

    @model_validator(mode="after")
    def _custom_vectors(self):
        if self.kind == "custom" and (self.a1 is None or self.a2 is None):
            raise ValueError("custom lattice needs both a1 and a2")
        if self.kind != "custom" and (self.a1 is not None or self.a2 is not None):
            raise ValueError("a1/a2 are only allowed with kind 'custom'")
        return self

    def build(self) -> BravaisLattice:
        if self.kind == "square":
            return BravaisLattice.square(self.d)
        if self.kind == "hexagonal":
            return BravaisLattice.hexagonal(self.d)
        return BravaisLattice(self.a1, self.a2)


class GridConfig(_Model):
    kind: Literal["oblique", "hexagonal"] = "oblique"
    n: int | None = Field(None, ge=1)
    n1: int | None = Field(None, ge=1)
    n2: int | None = Field(None, ge=1)

    @model_validator(mode="after")
    def _sizes(self):
        if self.n is None and (self.n1 is None or self.n2 is None):
            raise ValueError("give either n or both n1 and n2")
        if self.kind == "hexagonal" and self.n is None and self.n1 != self.n2:
            raise ValueError("hexagonal grids need n1 == n2")
        return self

    @property
    def sizes(self) -> tuple[int, int]:
        if self.n is not None:
            return self.n, self.n
        return self.n1, self.n2

    def build(self) -> PatchGrid:
        n1, n2 = self.sizes
        if self.kind == "hexagonal":
            return PatchGrid.hexagonal(n1)
        return PatchGrid.oblique(n1, n2)


class GammaConfig(_Model):
    cylindrical: bool | None = None
    tensor: list[list[float]] | None = None
    frequencies: tuple[float, float, float] | None = None
    axes: list[list[float]] | None = None

    @model_validator(mode="after")
    def _one_source(self):
        given = [self.cylindrical is not None, self.tensor is not None, self.frequencies is not None]
        if sum(given) != 1:
            raise ValueError("gamma needs exactly one of cylindrical, tensor, frequencies")
        if self.axes is not None and self.frequencies is None:
            raise ValueError("axes only apply to frequencies")
        if self.cylindrical is False:
            raise ValueError("cylindrical must be true when given")
        return self

    def build(self) -> np.ndarray:
        if self.cylindrical:
            return cylindrical_gamma()
        if self.tensor is not None:
            return np.asarray(self.tensor, dtype=float)
        axes = None if self.axes is None else np.asarray(self.axes, dtype=float)
        return curvature_from_frequencies(self.frequencies, axes)


class TrapConfig(_Model):
    label: str
    position: tuple[float, float, float]
    gamma: GammaConfig = GammaConfig(cylindrical=True)


class ExtraConfig(_Model):
    point: tuple[float, float, float]
    relative_to: str | None = None
    lam: float = 0.0
    relation: Literal["equal", "at_least", "at_most"] = "equal"
    component: str = "Ez"


class SolverConfig(_Model):
    method: Literal["highs-ds", "highs-ipm", "highs"] = "highs-ds"
    equality_tol: float = Field(1e-8, gt=0)
    rail_tol: float = Field(1e-7, gt=0, lt=0.5)
    gap_tol: float = Field(1e-9, gt=0)
    max_iter: int | None = Field(None, ge=1)
    time_limit: float | None = Field(None, gt=0)
    rounding_threshold: float = Field(0.5, gt=0, lt=1)

    def build(self) -> SolverOptions:
        return SolverOptions(
            method=self.method, equality_tol=self.equality_tol, rail_tol=self.rail_tol,
            gap_tol=self.gap_tol, max_iter=self.max_iter, time_limit=self.time_limit,
        )


_UNITS = {
    "mass": {"u": 1.0, "amu": 1.0, "Da": 1.0, "kg": 1.0 / 1.66053906660e-27},
    "charge": {"e": 1.0, "C": 1.0 / 1.602176634e-19},
    "U_rf": {"V": 1.0, "mV": 1e-3, "kV": 1e3},
    "Omega_rf": {"rad/s": 1.0, "Hz": 2 * np.pi, "kHz": 2 * np.pi * 1e3,
                 "MHz": 2 * np.pi * 1e6, "GHz": 2 * np.pi * 1e9},
    "z": {"m": 1.0, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9},
}


class Quantity(_Model):
    value: float = Field(gt=0)
    unit: str


class PhysicalConfig(_Model):
    mass: Quantity = Quantity(value=9.012182, unit="u")
    charge: Quantity = Quantity(value=1.0, unit="e")
    U_rf: Quantity = Quantity(value=50.0, unit="V")
    Omega_rf: Quantity = Quantity(value=200.0, unit="MHz")
    z: Quantity = Quantity(value=30.0, unit="um")
    mathieu_limit: float = Field(0.9, gt=0)

    @model_validator(mode="after")
    def _known_units(self):
        for name, table in _UNITS.items():
            unit = getattr(self, name).unit
            if unit not in table:
                raise ValueError(f"{name}: unknown unit {unit!r}; use one of {sorted(table)}")
        return self

    def build(self) -> PhysicalParams:
        si = {name: getattr(self, name).value * _UNITS[name][getattr(self, name).unit]
              for name in _UNITS}
        return PhysicalParams(
            mass_amu=si["mass"], charge_e=si["charge"], U_rf=si["U_rf"],
            Omega_rf=si["Omega_rf"], z=si["z"], mathieu_limit=self.mathieu_limit,
        )


class AnalysisConfig(_Model):
    resolution: tuple[int, int, int] = (96, 96, 128)
    region: tuple[float, float] | None = None
    suppress_spurious: bool = False
    physical: PhysicalConfig | None = None

    @field_validator("resolution")
    @classmethod
    def _positive(cls, v):
        if min(v) < 4:
            raise ValueError("each grid resolution must be at least 4")
        return v

    @field_validator("region")
    @classmethod
    def _ordered(cls, v):
        if v is not None and not 0 < v[0] < v[1]:
            raise ValueError("region must satisfy 0 < z_lo < z_hi")
        return v


class SweepConfig(_Model):
    z_over_d: list[float] = []

    @field_validator("z_over_d")
    @classmethod
    def _positive(cls, v):
        if any(z <= 0 for z in v):
            raise ValueError("sweep heights must be positive")
        return v


class OutputConfig(_Model):
    map: str = "electrode_map.txt"
    report: str = "report.json"
    svg: str | None = "electrodes.svg"
    sweep_csv: str = "sweep.csv"


class RunConfig(_Model):
    lattice: LatticeConfig = LatticeConfig()
    grid: GridConfig = GridConfig(n=48)
    n_cut: int | None = Field(None, ge=1)
    traps: list[TrapConfig] = Field(min_length=1)
    extras: list[ExtraConfig] = []
    solver: SolverConfig = SolverConfig()
    analysis: AnalysisConfig = AnalysisConfig()
    sweep: SweepConfig = SweepConfig()
    output: OutputConfig = OutputConfig()

    @model_validator(mode="after")
    def _references(self):
        labels = [t.label for t in self.traps]
        if len(set(labels)) != len(labels):
            raise ValueError("trap labels must be unique")
        for i, extra in enumerate(self.extras):
            if extra.relative_to is not None and extra.relative_to not in labels:
                raise ValueError(f"extras[{i}].relative_to: unknown trap label {extra.relative_to!r}")
        return self

    # -- builders -------------------------------------------------------------

    @property
    def effective_n_cut(self) -> int:
        return self.n_cut if self.n_cut is not None else 2 * max(self.grid.sizes)

    def build_traps(self) -> list[TrapSpec]:
        traps = []
        for t in self.traps:
            try:
                traps.append(TrapSpec(t.position, t.gamma.build(), t.label))
            except ConstraintError as exc:
                msg = str(exc)
                if t.label not in msg:
                    msg = f"trap {t.label!r}: {msg}"
                raise ConfigError(msg, [{"field": f"traps.{t.label}", "message": msg}]) from exc
        return traps

    def build_extras(self) -> list[ExtraConstraint]:
        where = {t.label: t.position for t in self.traps}
        out = []
        for i, e in enumerate(self.extras):
            u, v, z = e.point
            if e.relative_to is not None:
                u0, v0, _ = where[e.relative_to]
                u, v = u0 + u, v0 + v
            try:
                out.append(ExtraConstraint((u, v, z), e.lam, e.relation, e.component))
            except ConstraintError as exc:
                raise ConfigError(str(exc), [{"field": f"extras.{i}", "message": str(exc)}]) from exc
        return out

    def with_height(self, z: float) -> RunConfig:
        """Copy with every trap moved to height ``z`` (used by sweeps)."""
        traps = [t.model_copy(update={"position": (t.position[0], t.position[1], z)})
                 for t in self.traps]
        return self.model_copy(update={"traps": traps})

    # -- serialization --------------------------------------------------------

    def dumps(self) -> str:
        return self.model_dump_json(indent=2)

    @classmethod
    def loads(cls, text: str) -> RunConfig:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            detail = {"line": exc.lineno, "column": exc.colno, "message": exc.msg}
            raise ConfigError(f"config is not valid JSON: line {exc.lineno}: {exc.msg}",
                              [detail]) from exc
        try:
            return cls.model_validate(raw)
        except ValidationError as exc:
            details = [
                {"field": ".".join(str(p) for p in err["loc"]), "message": err["msg"]}
                for err in exc.errors()
            ]
            first = details[0]
            raise ConfigError(f"invalid config at {first['field'] or '<root>'}: {first['message']}",
                              details) from exc

    @classmethod
    def load(cls, path) -> RunConfig:
        return cls.loads(Path(path).read_text())
