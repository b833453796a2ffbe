"""Command line front end: run <config>, benchmark <name>, mesh-info <path>."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import benchmarks, diagnostics, element, engine
from .config import build_load_case, build_state, load_config, resolve_mesh_path
from .material import MaterialParams
from .mesh import load_mesh
from .vtk_io import write_vtk


def cmd_run(config_path: str) -> int:
    cfg = load_config(config_path)
    mesh_path = resolve_mesh_path(cfg, config_path)
    if not mesh_path.exists():
        raise FileNotFoundError(f"mesh file not found: {mesh_path}")
    mesh = load_mesh(mesh_path)
    state = build_state(cfg, mesh)

    out_dir = Path(cfg.output_dir)
    if not out_dir.is_absolute():
        out_dir = Path(config_path).parent / out_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    trace = diagnostics.TraceRecorder(mesh, cfg.material_params().gc,
                                      tip0=cfg.tip, level=cfg.isocurve_level,
                                      v_rayleigh=cfg.rayleigh_speed)
    sinks = [trace]
    if cfg.vtk_every > 0:
        sinks.append(_VtkSink(out_dir, cfg.vtk_every, cfg.isocurve_level))

    t_start = time.perf_counter()
    engine.run(state, cfg.sampling_every, sinks)
    elapsed = time.perf_counter() - t_start

    trace.write_csv(out_dir / "trace.csv")
    stats = diagnostics.update_statistics(state)
    with open(out_dir / "stats.txt", "w") as fh:
        fh.write(stats.table() + "\n")
        fh.write(f"wall_time_s {elapsed:.3f}\n")
        fh.write(f"n_nodes {mesh.n_nodes}\nn_elements {mesh.n_elements}\n")
    print(f"run finished: {state.n_updates} elemental updates in {elapsed:.1f} s, "
          f"outputs in {out_dir}")
    return 0


class _VtkSink:
    def __init__(self, out_dir: Path, every: int, mask_level: float):
        self.out_dir = out_dir
        self.every = every
        self.mask_level = mask_level
        self.sample = 0

    def __call__(self, state: engine.SimState) -> None:
        self.sample += 1
        if (self.sample - 1) % self.every:
            return
        smax, mask = diagnostics.max_principal_stress(state, self.mask_level)
        write_vtk(self.out_dir / f"fields_{self.sample - 1:04d}.vtk",
                  state.mesh.nodes, state.mesh.elements,
                  point_data={"d": state.d, "u": state.u, "v": state.velocity()},
                  cell_data={"max_principal_stress": smax,
                             "stress_masked": mask.astype(float)},
                  title=f"t={state.t_now:.9e}")


def cmd_benchmark(name: str, out: str | None, mesh_scale: float, variant: str,
                  mode: str, paper_scale: bool, sigma: float, tf: float | None,
                  vtk: int, build_only: bool) -> int:
    out_dir = Path(out) if out else Path(f"bench-{name}")
    cfg_path = benchmarks.build_benchmark(
        name, out_dir, mesh_scale=mesh_scale, variant=variant, mode=mode,
        paper_scale=paper_scale, sigma_mpa=sigma, tf=tf, vtk_every=vtk)
    print(f"benchmark config written to {cfg_path}")
    if build_only:
        return 0
    return cmd_run(str(cfg_path))


def cmd_mesh_info(mesh_path: str, config: str | None, mat_args: dict | None,
                  cfl: float, tf: float | None) -> int:
    mesh = load_mesh(mesh_path)
    cache = element.build_cache(mesh.nodes, mesh.elements)
    sizes = np.sqrt(cache.areas)
    print(f"nodes      {mesh.n_nodes}")
    print(f"elements   {mesh.n_elements}")
    print(f"size min   {sizes.min():.6e} m")
    print(f"size max   {sizes.max():.6e} m")
    print(f"tags       {sorted(mesh.edge_tags)}")

    params = None
    if config is not None:
        cfg = load_config(config)
        params = cfg.material_params()
        tf = cfg.tf if tf is None else tf
    elif mat_args and all(v is not None for v in mat_args.values()):
        params = MaterialParams(E=mat_args["E"], nu=mat_args["nu"],
                                rho=mat_args["rho"], gc=1.0, ell=1.0)
    if params is None:
        print("(pass --config or --E/--nu/--rho for time-step statistics)")
        return 0

    dt_e = element.critical_time_steps(mesh.nodes, mesh.elements, params, cfl, cache)
    print(f"dt min     {dt_e.min():.6e} s")
    print(f"dt max     {dt_e.max():.6e} s")
    edges = np.geomspace(dt_e.min(), dt_e.max() * (1 + 1e-12), 9)
    hist, _ = np.histogram(dt_e, bins=edges)
    print("dt histogram (geometric bins):")
    for k in range(len(hist)):
        print(f"  [{edges[k]:.3e}, {edges[k + 1]:.3e}) {hist[k]}")
    if tf is not None and tf > 0:
        stats = diagnostics.schedule_statistics(dt_e, 0.0, tf)
        print(f"schedule for tf={tf:g}:")
        print("  " + stats.table().replace("\n", "\n  "))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="avifrac",
        description="event-driven explicit dynamics with an implicit phase field "
                    "for 2D brittle fracture")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a run config")
    p_run.add_argument("config")

    p_bench = sub.add_parser("benchmark", help="generate and run a bundled preset")
    p_bench.add_argument("name", choices=benchmarks.BENCHMARK_NAMES)
    p_bench.add_argument("--out", default=None, help="output directory")
    p_bench.add_argument("--mesh-scale", type=float, default=1.0,
                         help="coarsening factor (>1 is coarser)")
    p_bench.add_argument("--variant", choices=("at1", "at2"), default="at2")
    p_bench.add_argument("--mode", choices=("patch", "local"), default="patch")
    p_bench.add_argument("--paper-scale", action="store_true")
    p_bench.add_argument("--sigma", type=float, default=3.0,
                         help="compact-tension face load in MPa")
    p_bench.add_argument("--tf", type=float, default=None)
    p_bench.add_argument("--vtk", type=int, default=0,
                         help="write VTK snapshots every N samples")
    p_bench.add_argument("--build-only", action="store_true",
                         help="write mesh and config without running")

    p_info = sub.add_parser("mesh-info", help="mesh statistics and time steps")
    p_info.add_argument("mesh")
    p_info.add_argument("--config", default=None)
    p_info.add_argument("--E", type=float, default=None)
    p_info.add_argument("--nu", type=float, default=None)
    p_info.add_argument("--rho", type=float, default=None)
    p_info.add_argument("--cfl", type=float, default=0.6)
    p_info.add_argument("--tf", type=float, default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config)
        if args.command == "benchmark":
            return cmd_benchmark(args.name, args.out, args.mesh_scale, args.variant,
                                 args.mode, args.paper_scale, args.sigma, args.tf,
                                 args.vtk, args.build_only)
        if args.command == "mesh-info":
            mat = {"E": args.E, "nu": args.nu, "rho": args.rho}
            return cmd_mesh_info(args.mesh, args.config, mat, args.cfl, args.tf)
    except Exception as exc:  # surface a one-line diagnostic, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
