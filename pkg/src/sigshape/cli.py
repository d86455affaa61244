"""Command-line entry point: ``sigshape <command> [options]``.

Each command prints JSON lines on stdout. On failure the last line is a JSON
error record and the exit status is 1.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .contact import compare_with_oracle, complementarity_report, solve_signorini
from .exceptions import SigshapeError
from .fem import ElasticSystem, constant_load
from .io import (
    default_config_path,
    parse_config,
    read_mesh,
    write_history_csv,
    write_mesh,
    write_vtk,
)
from .mesh import SIGNORINI, generate_disk_mesh, jittered_rect_mesh
from .optim import arc_centroid_shifts, optimize
from .sensitivity import verify_material_theorem
from .shape import bump_direction, energy, energy_density, fd_shape_gradient, shape_gradient_boundary


def _emit(record):
    print(json.dumps(record, sort_keys=True, default=float), flush=True)


def _setup(args):
    cfg = parse_config(args.config or default_config_path())
    if args.solver:
        cfg.optim.solver = args.solver
    if args.out:
        cfg.out_dir = args.out
    mesh = read_mesh(args.seed_mesh) if args.seed_mesh else cfg.build_mesh()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, mesh, out


def _solution_fields(mesh, params, f, sol):
    cells = {"energy_density": energy_density(mesh, params, f, sol.u)}
    return {"displacement": sol.u}, cells


def cmd_mesh_gen(args):
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    mesh = generate_disk_mesh(args.n_boundary, args.n_refine)
    write_mesh(mesh, out / "mesh.txt")
    write_vtk(mesh, {}, out / "mesh.vtk")
    _emit({"command": "mesh-gen", "vertices": mesh.n_vertices, "triangles": len(mesh.triangles)})


def cmd_solve(args):
    cfg, mesh, out = _setup(args)
    f = cfg.build_load()
    system = ElasticSystem(mesh, cfg.params)
    sol = solve_signorini(mesh, cfg.params, f, cfg.optim.solver, system=system, **cfg.optim.solver_kwargs())
    points, cells = _solution_fields(mesh, cfg.params, f, sol)
    write_vtk(mesh, points, out / "solution.vtk", cell_fields=cells)
    record = {
        "command": "solve",
        "solver": sol.method,
        "energy": energy(mesh, cfg.params, f, sol.u, system=system),
        "active_count": sol.active_count,
    }
    record.update(complementarity_report(mesh, cfg.params, sol).as_dict())
    _emit(record)


def cmd_optimize(args):
    cfg, mesh0, out = _setup(args)
    f = cfg.build_load()

    def snapshot(it, mesh, sol):
        if it % cfg.snapshot_period == 0:
            points, cells = _solution_fields(mesh, cfg.params, f, sol)
            write_vtk(mesh, points, out / f"shape_{it:04d}.vtk", cell_fields=cells)
        last[:] = [it, mesh, sol]

    last = []
    start = time.perf_counter()
    mesh, history = optimize(mesh0, cfg.params, f, cfg.optim, callback=snapshot)
    it, _, sol = last
    if it % cfg.snapshot_period:
        points, cells = _solution_fields(mesh, cfg.params, f, sol)
        write_vtk(mesh, points, out / f"shape_{it:04d}.vtk", cell_fields=cells)
    write_history_csv(history, out / "history.csv")
    write_mesh(mesh, out / "final_mesh.txt")
    centroids, shifts = arc_centroid_shifts(mesh0, mesh)
    J = history.column("J")
    _emit(
        {
            "command": "optimize",
            "stopped_by": history.stopped_by,
            "iterations": len(history),
            "J_initial": J[0],
            "J_final": J[-1],
            "volume_final": history.records[-1].volume,
            "arc_centroids": centroids.tolist(),
            "arc_normal_shifts": shifts.tolist(),
            "final_direction_norm": history.final_direction_norm,
            "seconds": time.perf_counter() - start,
        }
    )


def _fd_directions(mesh):
    return {
        "radial_right": bump_direction(mesh, (1.0, 0.0)),
        "radial_left": bump_direction(mesh, (-1.0, 0.0)),
        "mixed": bump_direction(mesh, (-1.0, 0.0), vector=(1.0, 0.5))
        + 0.5 * bump_direction(mesh, (1.0, 0.0), vector=(-1.0, 0.3)),
    }


def cmd_verify_shape_gradient(args):
    cfg, mesh, out = _setup(args)
    f = cfg.build_load()
    solver = args.solver or "qp"
    kw = {"tol": 1e-12} if solver == "qp" else cfg.optim.solver_kwargs()
    sol = solve_signorini(mesh, cfg.params, f, solver, **kw)
    form = shape_gradient_boundary(mesh, cfg.params, f, sol.u)
    rows = []
    for name, theta in _fd_directions(mesh).items():
        exact = form(theta)
        for t in args.t:
            fd = fd_shape_gradient(mesh, cfg.params, f, theta, t, solver=solver, **kw)
            rows.append({"direction": name, "t": t, "form": exact, "fd": fd, "rel_error": abs(fd - exact) / abs(fd)})
            _emit({"command": "verify-shape-gradient", **rows[-1]})
    with open(out / "shape_gradient.csv", "w") as fh:
        fh.write("direction,t,form,fd,rel_error\n")
        for r in rows:
            fh.write(f"{r['direction']},{r['t']!r},{r['form']!r},{r['fd']!r},{r['rel_error']!r}\n")


def cmd_verify_material(args):
    cfg, mesh, out = _setup(args)
    f = cfg.build_load()
    theta = bump_direction(mesh, (1.0, 0.0))
    report = verify_material_theorem(mesh, cfg.params, f, theta, args.t, csv_path=out / "material.csv")
    for row in report.rows:
        _emit({"command": "verify-material", **row})
    _emit(
        {
            "command": "verify-material",
            "min_error": report.min_error,
            "identity_error": report.identity_error,
            "weak_set_nonempty": report.weak_set_nonempty,
        }
    )


def cmd_oracle_check(args):
    cfg = parse_config(args.config or default_config_path())
    worst = 0.0
    count = 1 if args.seed_mesh else args.count
    for k in range(count):
        rng = np.random.default_rng([args.seed, k])
        angle = rng.uniform(0.0, 2.0 * np.pi)
        if args.seed_mesh:
            mesh = read_mesh(args.seed_mesh)
        else:
            mesh = jittered_rect_mesh(5, 3, seed=rng, labels={"bottom": SIGNORINI, "right": SIGNORINI})
        rec = compare_with_oracle(mesh, cfg.params, constant_load(np.cos(angle), np.sin(angle)))
        worst = max(worst, rec["energy_gap"])
        _emit({"command": "oracle-check", "case": k, **rec})
    _emit({"command": "oracle-check", "cases": count, "max_energy_gap": worst})


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file (default: shipped defaults)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--solver", choices=("nitsche", "qp"), help="contact solver")
    common.add_argument("--seed-mesh", help="mesh file to use instead of the configured one")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="sigshape", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh-gen", parents=[common], help="write a disk mesh")
    p.add_argument("--n-boundary", type=int, default=96)
    p.add_argument("--n-refine", type=int, default=0)
    p.set_defaults(func=cmd_mesh_gen)

    p = sub.add_parser("solve", parents=[common], help="one contact solve with VTK output")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("optimize", parents=[common], help="volume-constrained shape optimization")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("verify-shape-gradient", parents=[common], help="finite-difference check of the gradient")
    p.add_argument("--t", type=float, nargs="+", default=[1e-2, 1e-3])
    p.set_defaults(func=cmd_verify_shape_gradient)

    p = sub.add_parser("verify-material", parents=[common], help="material derivative against finite differences")
    p.add_argument("--t", type=float, nargs="+", default=[1e-2, 1e-3, 1e-4])
    p.set_defaults(func=cmd_verify_material)

    p = sub.add_parser("oracle-check", parents=[common], help="dual Uzawa against active-set enumeration")
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args.func(args)
    except SigshapeError as exc:
        _emit(exc.to_record())
        return 1
    except (ValueError, OSError) as exc:
        _emit({"error": type(exc).__name__, "message": str(exc)})
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
