"""Run configuration: a YAML file with nested sections, no code evaluation.

A config references a mesh file (native or msh), material parameters in SI
units, the phase-field variant and solver mode, the load case by edge tags,
and the sampling/output setup. ``load_config``/``save_config`` round-trip
exactly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import engine
from .material import MaterialParams, PhaseFieldVariant
from .mesh import Mesh, select_boundary


@dataclass(frozen=True)
class TractionConfig:
    edges: str  # edge tag in the mesh file
    value: tuple[float, float]
    ramp: float = 0.0


@dataclass(frozen=True)
class KinematicConfig:
    edges: str
    velocity: tuple[float, float]
    components: tuple[bool, bool] = (True, True)


@dataclass(frozen=True)
class RunConfig:
    mesh: str
    material: dict  # keys E, nu, rho, gc, ell
    variant: str = "at2"
    cfl: float = 0.6
    t0: float = 0.0
    tf: float = 0.0
    rayleigh_speed: float | None = None
    mode: str = "patch"
    fracture: bool = True
    tractions: tuple[TractionConfig, ...] = ()
    body: tuple[float, float] = (0.0, 0.0)
    kinematic: tuple[KinematicConfig, ...] = ()
    sampling_every: int = 10000
    isocurve_level: float = 0.9
    tip: tuple[float, float] | None = None
    output_dir: str = "out"
    vtk_every: int = 0  # write field snapshots every N samples; 0 disables
    tol_scale: float = 1e-8
    max_outer: int = 20
    max_newton: int = 25

    def __post_init__(self):
        if self.tf < self.t0:
            raise ValueError("end time precedes start time")
        if self.sampling_every < 1:
            raise ValueError("sampling interval must be at least 1")
        if self.mode not in ("patch", "local"):
            raise ValueError("solver mode must be 'patch' or 'local'")
        PhaseFieldVariant.from_name(self.variant)

    def material_params(self) -> MaterialParams:
        return MaterialParams(**self.material)

    def variant_obj(self) -> PhaseFieldVariant:
        return PhaseFieldVariant.from_name(self.variant)


def to_dict(cfg: RunConfig) -> dict:
    return {
        "mesh": cfg.mesh,
        "material": dict(cfg.material),
        "variant": cfg.variant,
        "cfl": cfg.cfl,
        "time": {"start": cfg.t0, "end": cfg.tf},
        "rayleigh_speed": cfg.rayleigh_speed,
        "solver": {"mode": cfg.mode, "tol_scale": cfg.tol_scale,
                   "max_outer": cfg.max_outer, "max_newton": cfg.max_newton},
        "fracture": cfg.fracture,
        "loads": {
            "tractions": [{"edges": t.edges, "value": list(t.value), "ramp": t.ramp}
                          for t in cfg.tractions],
            "body": list(cfg.body),
            "kinematic": [{"edges": k.edges, "velocity": list(k.velocity),
                           "components": list(k.components)} for k in cfg.kinematic],
        },
        "sampling": {"every": cfg.sampling_every, "isocurve_level": cfg.isocurve_level,
                     "tip": list(cfg.tip) if cfg.tip is not None else None},
        "output": {"directory": cfg.output_dir, "vtk_every": cfg.vtk_every},
    }


def from_dict(data: dict) -> RunConfig:
    loads = data.get("loads", {})
    sampling = data.get("sampling", {})
    solver = data.get("solver", {})
    output = data.get("output", {})
    time = data.get("time", {})
    tip = sampling.get("tip")
    return RunConfig(
        mesh=data["mesh"],
        material=dict(data["material"]),
        variant=data.get("variant", "at2"),
        cfl=float(data.get("cfl", 0.6)),
        t0=float(time.get("start", 0.0)),
        tf=float(time.get("end", 0.0)),
        rayleigh_speed=data.get("rayleigh_speed"),
        mode=solver.get("mode", "patch"),
        fracture=bool(data.get("fracture", True)),
        tractions=tuple(TractionConfig(edges=t["edges"],
                                       value=tuple(float(v) for v in t["value"]),
                                       ramp=float(t.get("ramp", 0.0)))
                        for t in loads.get("tractions", [])),
        body=tuple(float(v) for v in loads.get("body", (0.0, 0.0))),
        kinematic=tuple(KinematicConfig(edges=k["edges"],
                                        velocity=tuple(float(v) for v in k["velocity"]),
                                        components=tuple(bool(c) for c in
                                                         k.get("components", (True, True))))
                        for k in loads.get("kinematic", [])),
        sampling_every=int(sampling.get("every", 10000)),
        isocurve_level=float(sampling.get("isocurve_level", 0.9)),
        tip=tuple(float(v) for v in tip) if tip is not None else None,
        output_dir=output.get("directory", "out"),
        vtk_every=int(output.get("vtk_every", 0)),
        tol_scale=float(solver.get("tol_scale", 1e-8)),
        max_outer=int(solver.get("max_outer", 20)),
        max_newton=int(solver.get("max_newton", 25)),
    )


def load_config(path) -> RunConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} does not contain a mapping")
    return from_dict(data)


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(to_dict(cfg), fh, sort_keys=False)


def resolve_mesh_path(cfg: RunConfig, config_path) -> Path:
    p = Path(cfg.mesh)
    if not p.is_absolute():
        p = Path(config_path).parent / p
    return p


def build_load_case(cfg: RunConfig, mesh: Mesh) -> engine.LoadCase:
    """Resolve tag references into concrete edge and node sets."""
    tractions = []
    for t in cfg.tractions:
        _, edges = select_boundary(mesh, tag=t.edges)
        if not edges:
            raise ValueError(f"traction tag {t.edges!r} selects no edges")
        tractions.append(engine.TractionLoad(edges=edges, value=t.value, ramp=t.ramp))
    kinematic = []
    for k in cfg.kinematic:
        nodes, edges = select_boundary(mesh, tag=k.edges)
        if not len(nodes):
            raise ValueError(f"kinematic tag {k.edges!r} selects no nodes")
        kinematic.append(engine.KinematicBC(nodes=nodes, velocity=k.velocity,
                                            components=k.components))
    return engine.LoadCase(tractions=tractions, body=cfg.body, kinematic=kinematic)


def build_state(cfg: RunConfig, mesh: Mesh) -> engine.SimState:
    return engine.initialize(
        mesh, cfg.material_params(), cfg.variant_obj(), build_load_case(cfg, mesh),
        cfl=cfg.cfl, t0=cfg.t0, tf=cfg.tf, mode=cfg.mode, fracture=cfg.fracture,
        tol_scale=cfg.tol_scale, max_outer=cfg.max_outer, max_newton=cfg.max_newton)
