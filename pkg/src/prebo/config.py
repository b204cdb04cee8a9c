"""Scenario configuration: a JSON document with a fixed key schema.

All physical quantities are in atomic units. Keys not listed in
:data:`SCHEMA` are rejected, and missing keys take the model defaults.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from prebo.electronic import ModelParams, SpatialGrid

METHODS = ("exact", "trotter", "bo-full", "bo-gboa")
INTEGRAL_SOURCES = ("computed", "table")

#: documented key schema (key -> meaning)
SCHEMA = {
    "model": "Shin-Metiu parameters {M, k, L, C_l, C_r, C_c, C_e}",
    "electron_grid": "electron grid {lo, hi, n}",
    "r_table": "nuclear grid for orbitals and integrals {lo, hi, n}",
    "density_table": "nuclear grid of the orbital table used for densities {lo, hi, n}",
    "fit_window": "[lo, hi] window of the linear integral fit",
    "integrals": "'computed' (grid pipeline) or 'table' (published expansion)",
    "n_fock": "oscillator levels kept",
    "dvr": "Born-Huang DVR grid {lo, hi, n}",
    "kpoints": "momentum samples for tomography",
    "kspacing": "momentum spacing for tomography",
    "method": "one of exact, trotter, bo-full, bo-gboa",
    "states": "BO states (1-based) for bo runs; empty means method default",
    "order": "Trotter splitting order (1 or 2)",
    "dt": "nominal Trotter step",
    "t_final": "final propagation time",
    "dt_out": "trajectory output spacing",
    "output_times": "times at which densities and states are written",
    "R0": "initial displacement of the nuclear packet",
    "shots": "Hadamard-test shots per setting (0 = exact expectations)",
    "seed": "seed of the sampling generator",
    "density_R_stride": "stride over DVR points for joint-density output",
    "density_r_stride": "stride over electron grid points for joint-density output",
    "out": "output directory",
}


_FLOATS = ("kspacing", "dt", "t_final", "dt_out", "R0")
_INTS = ("n_fock", "kpoints", "order", "shots", "seed", "density_R_stride", "density_r_stride")


def _grid(d) -> SpatialGrid:
    if isinstance(d, SpatialGrid):
        return d
    extra = set(d) - {"lo", "hi", "n"}
    if extra:
        raise ValueError(f"unknown grid keys: {sorted(extra)}")
    return SpatialGrid(float(d["lo"]), float(d["hi"]), int(d["n"]))


@dataclass(frozen=True)
class ScenarioConfig:
    model: ModelParams = field(default_factory=ModelParams)
    electron_grid: SpatialGrid = SpatialGrid(-9.0, 9.0, 601)
    r_table: SpatialGrid = SpatialGrid(-0.4, 0.4, 81)
    density_table: SpatialGrid = SpatialGrid(-1.0, 1.0, 201)
    fit_window: tuple[float, float] = (-0.1, 0.1)
    integrals: str = "computed"
    n_fock: int = 20
    dvr: SpatialGrid = SpatialGrid(-1.0, 1.0, 1500)
    kpoints: int = 250
    kspacing: float = 1.26
    method: str = "exact"
    states: tuple[int, ...] = ()
    order: int = 1
    dt: float = 5.6
    t_final: float = 2500.0
    dt_out: float = 5.6
    output_times: tuple[float, ...] = (56.1, 1514.4)
    R0: float = 0.1
    shots: int = 0
    seed: int = 0
    density_R_stride: int = 10
    density_r_stride: int = 3
    out: str = "prebo_out"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.integrals not in INTEGRAL_SOURCES:
            raise ValueError(f"integrals must be one of {INTEGRAL_SOURCES}, got {self.integrals!r}")
        if self.n_fock < 2:
            raise ValueError("n_fock must be at least 2")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        for name in ("dt", "t_final", "dt_out", "kspacing"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.kpoints < 2:
            raise ValueError("kpoints must be at least 2")
        if self.shots < 0:
            raise ValueError("shots must be non-negative")
        if any(t < 0 for t in self.output_times):
            raise ValueError("output times must be non-negative")
        if any(s not in (1, 2, 3) for s in self.states):
            raise ValueError("states must be drawn from 1, 2, 3")
        if self.density_R_stride < 1 or self.density_r_stride < 1:
            raise ValueError("density strides must be positive")
        lo, hi = self.fit_window
        if not hi > lo:
            raise ValueError("fit window must satisfy hi > lo")

    @property
    def bo_states(self) -> tuple[int, ...]:
        if self.states:
            return tuple(sorted(self.states))
        return (2, 3) if self.method == "bo-gboa" else (1, 2, 3)

    def density_times(self) -> list[float]:
        times = {round(float(t), 9) for t in self.output_times if t <= self.t_final + 1e-9}
        times.add(round(float(self.t_final), 9))
        return sorted(times)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fit_window"] = list(self.fit_window)
        d["states"] = list(self.states)
        d["output_times"] = list(self.output_times)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        unknown = set(data) - set(SCHEMA)
        if unknown:
            raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
        kwargs = {}
        for f in fields(cls):
            if f.name not in data:
                continue
            v = data[f.name]
            if f.name == "model":
                extra = set(v) - {g.name for g in fields(ModelParams)}
                if extra:
                    raise ValueError(f"unknown model keys: {sorted(extra)}")
                v = ModelParams(**{k: float(x) for k, x in v.items()})
            elif f.name in ("electron_grid", "r_table", "density_table", "dvr"):
                v = _grid(v)
            elif f.name in ("fit_window", "output_times"):
                v = tuple(float(x) for x in v)
            elif f.name == "states":
                v = tuple(int(x) for x in v)
            elif f.name in _FLOATS:
                v = float(v)
            elif f.name in _INTS:
                if float(v) != int(v):
                    raise ValueError(f"{f.name} must be an integer")
                v = int(v)
            kwargs[f.name] = v
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        return cls.from_json(Path(path).read_text())

    def updated(self, **changes) -> "ScenarioConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})
