"""Benchmark presets: pre-notched plate meshes, materials and run configs.

Three setups are bundled: a pre-notched plate under boundary tension, the
same plate loaded on the pre-crack faces (compact tension), and an
edge-cracked half plate under impact. Geometries follow the dimensions this
family of problems is conventionally run with (plate sizes are not part of
the material data and can be overridden through the config files).

Meshes are refined along the expected crack corridor and coarsen away from
it, which is what makes the event-driven integrator pay off. Desk-scale
defaults keep runs in the minutes; paper-scale variants are generated with
``paper_scale=True`` but are not meant for CI.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import diagnostics, element
from .config import KinematicConfig, RunConfig, TractionConfig, save_config
from .material import MaterialParams
from .mesh import Mesh, save_mesh
from .meshgen import (SizeField, add_slit, boundary_edge_list, edges_on_line,
                      graded_rect_mesh)

MATERIALS = {
    "tension": dict(E=32e9, nu=0.2, rho=2450.0, gc=3.0),      # silica glass
    "ct": dict(E=72e9, nu=0.22, rho=2440.0, gc=3.8),          # soda-lime glass
    "kalthoff": dict(E=190e9, nu=0.3, rho=8000.0, gc=2.213e4),  # 18Ni(300) steel
}

RAYLEIGH_SPEED = {"tension": 2119.0, "ct": 3172.0, "kalthoff": 2803.0}

BENCHMARK_NAMES = ("tension", "ct", "kalthoff")

_BRANCH_SLOPE = math.tan(math.radians(27.5))


def _fine_cells(name: str, mesh_scale: float, paper_scale: bool) -> int:
    """Fine cells across the width; quantized so every refinement level and
    the notch line land exactly on cell boundaries."""
    if name in ("tension", "ct"):
        quantum, desk, paper = 45, 4, 9  # n_fine = 45 k
    else:
        quantum, desk, paper = 36, 5, 15  # n_fine = 36 k
    k = paper if paper_scale else max(1, round(desk / mesh_scale))
    return quantum * k


def _plate_mesh(name: str, n_fine: int, levels: int, ell: float):
    """Graded, slit plate mesh plus its edge tags."""
    if name in ("tension", "ct"):
        width, height, yc, xtip = 0.1, 0.04, 0.02, 0.05
        guides = [((0.045, yc), (0.075, yc)),
                  ((0.075, yc), (0.105, yc + 0.03 * _BRANCH_SLOPE)),
                  ((0.075, yc), (0.105, yc - 0.03 * _BRANCH_SLOPE))]
        if name == "ct":
            # branching moves toward the notch as the face load grows
            guides += [((0.055, yc), (0.105, yc + 0.05 * _BRANCH_SLOPE)),
                       ((0.055, yc), (0.105, yc - 0.05 * _BRANCH_SLOPE)),
                       ((0.02, yc), (0.045, yc))]
    else:
        width, height, yc, xtip = 0.1, 0.1, 0.025, 0.05
        guides = [((0.03, yc), (xtip, yc))]
        for deg in (58.0, 67.0, 76.0):
            dx = (height - yc + 0.004) / math.tan(math.radians(deg))
            guides.append(((xtip, yc), (xtip + dx, height + 0.004)))
    h = width / n_fine
    field = SizeField(guides, [(3.2 * ell, h), (8.0 * ell, 3 * h)], coarse=9 * h)
    nodes, elems = graded_rect_mesh(width, height, h, levels, field)
    nodes, elems = add_slit(nodes, elems, (0.0, yc), (xtip, yc), include_start=True)
    edges = boundary_edge_list(elems)
    tags = {
        "top": edges_on_line(nodes, elems, edges, 1, height),
        "bottom": edges_on_line(nodes, elems, edges, 1, 0.0),
        "left": edges_on_line(nodes, elems, edges, 0, 0.0),
        "right": edges_on_line(nodes, elems, edges, 0, width),
        "crack_upper": edges_on_line(nodes, elems, edges, 1, yc, 0.0, xtip, side="+"),
        "crack_lower": edges_on_line(nodes, elems, edges, 1, yc, 0.0, xtip, side="-"),
    }
    if name == "kalthoff":
        tags["impact"] = edges_on_line(nodes, elems, edges, 0, 0.0, 0.0, yc)
        tags["free_left"] = edges_on_line(nodes, elems, edges, 0, 0.0, yc, height)
        del tags["left"]
    tags = {k: v for k, v in tags.items() if v}
    return nodes, elems, tags, (xtip, yc)


def build_benchmark(name: str, out_dir, *, mesh_scale: float = 1.0,
                    variant: str = "at2", mode: str = "patch",
                    paper_scale: bool = False, sigma_mpa: float = 3.0,
                    tf: float | None = None, sampling_every: int | None = None,
                    vtk_every: int = 0, ell_over_h: float = 2.0,
                    samples_target: int | None = None) -> Path:
    """Write the mesh and config of a benchmark preset; returns the config path.

    mesh_scale > 1 coarsens (element size and the regularization length scale
    together, at fixed ell/h). sigma_mpa sets the crack-face load of the
    compact tension case.
    """
    if name not in BENCHMARK_NAMES:
        raise ValueError(f"unknown benchmark {name!r}; pick one of {BENCHMARK_NAMES}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    n_fine = _fine_cells(name, mesh_scale, paper_scale)
    levels = 3 if (paper_scale and name == "kalthoff") else 2
    width = 0.1
    h = width / n_fine
    ell = ell_over_h * h
    nodes, elems, tags, tip = _plate_mesh(name, n_fine, levels, ell)

    mesh_path = out_dir / f"{name}_mesh.txt"
    save_mesh((nodes, elems), mesh_path, edge_tags=tags)

    mat = dict(MATERIALS[name], ell=ell)
    if tf is None:
        tf = {"tension": 9.0e-5, "ct": 4.0e-5, "kalthoff": 9.0e-5}[name]

    tractions: tuple[TractionConfig, ...] = ()
    kinematic: tuple[KinematicConfig, ...] = ()
    if name == "tension":
        tractions = (TractionConfig(edges="top", value=(0.0, 1.0e6)),
                     TractionConfig(edges="bottom", value=(0.0, -1.0e6)))
    elif name == "ct":
        sigma = sigma_mpa * 1.0e6
        tractions = (TractionConfig(edges="crack_upper", value=(0.0, sigma)),
                     TractionConfig(edges="crack_lower", value=(0.0, -sigma)))
    else:
        kinematic = (KinematicConfig(edges="impact", velocity=(16.5, 0.0),
                                     components=(True, False)),
                     KinematicConfig(edges="bottom", velocity=(0.0, 0.0),
                                     components=(False, True)))

    if sampling_every is None:
        params = MaterialParams(**mat)
        dt_e = element.critical_time_steps(nodes, elems, params, 0.6)
        stats = diagnostics.schedule_statistics(dt_e, 0.0, tf)
        target = samples_target or {"tension": 200, "ct": 320, "kalthoff": 220}[name]
        sampling_every = max(1, stats.total // target)

    cfg = RunConfig(
        mesh=mesh_path.name, material=mat, variant=variant, cfl=0.6,
        t0=0.0, tf=tf, rayleigh_speed=RAYLEIGH_SPEED[name], mode=mode,
        fracture=True, tractions=tractions, kinematic=kinematic,
        sampling_every=sampling_every, isocurve_level=0.9, tip=tip,
        output_dir=str(out_dir / "out"), vtk_every=vtk_every)
    suffix = "paper" if paper_scale else "desk"
    cfg_path = out_dir / f"{name}_{suffix}.yaml"
    save_config(cfg, cfg_path)
    return cfg_path


def efficiency_strip_mesh(width: float = 0.27, height: float = 0.63,
                          h_fine: float = 1.0e-3, levels: int = 2,
                          band: tuple[float, float] = (0.9e-3, 6.0e-3)):
    """Long strip with a thin fine band, graded like the update-count study
    meshes: a small share of fine elements and a deep stable-step spread."""
    seg = [((0.0, height / 2.0), (width, height / 2.0))]
    field = SizeField(seg, [(band[0], h_fine), (band[1], 3 * h_fine)],
                      coarse=9 * h_fine)
    return graded_rect_mesh(width, height, h_fine, levels, field)
