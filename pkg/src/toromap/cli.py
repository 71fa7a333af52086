"""Command-line interface: mesh generation, density-equalizing runs,
toroidal parameterization, and map metrics.

Exit codes: 0 success, 1 I/O failure, 2 validation failure, 3 runtime
failure (including non-convergence under ``--strict``).  Every command
prints a single machine-readable JSON summary line to stdout; output
files are deterministic (timing appears only in the stdout summary).

A ``--config`` file holds ``key=value`` lines (``#`` comments allowed)
whose keys are the long flag names; explicit flags override the file.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .engine import (
    EngineError,
    EqualizeConfig,
    run_equalization,
    write_report_csv,
)
from .mesh import MeshError, TriangleMesh, generate_torus_mesh, load_mesh, save_mesh
from .operators import SolverError
from .parameterize import ParameterizationError, run_parameterization
from .populations import mesh_population
from .shapes import SHAPE_NAMES, builtin_shape
from .torus import ProjectionError, TorusSpec, canonicalize
from . import __version__

__all__ = ["main", "build_parser"]


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _write_uv_sidecar(path, uv: np.ndarray, spec: TorusSpec) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            f"# major_radius={_fmt(spec.major_radius)},minor_radius={_fmt(spec.minor_radius)}\n"
        )
        fh.write("u,v\n")
        for u, v in uv:
            fh.write(f"{_fmt(u)},{_fmt(v)}\n")


def _read_uv_sidecar_spec(path) -> TorusSpec:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
    if not first.startswith("#"):
        raise ValueError(f"{path}: missing radius header")
    fields = dict(
        item.split("=", 1) for item in first.lstrip("# ").split(",") if "=" in item
    )
    try:
        return TorusSpec(float(fields["major_radius"]), float(fields["minor_radius"]))
    except KeyError as exc:
        raise ValueError(f"{path}: radius header missing {exc}") from exc


def _sidecar_path(mesh_path) -> Path:
    p = Path(mesh_path)
    return p.with_suffix(".uv.csv")


def _resolve_spec(args) -> TorusSpec:
    if args.major is not None and args.minor is not None:
        return TorusSpec(args.major, args.minor)
    if args.major is not None or args.minor is not None:
        raise ValueError("provide both --major and --minor, or neither")
    sidecar = _sidecar_path(args.mesh)
    if sidecar.exists():
        return _read_uv_sidecar_spec(sidecar)
    raise ValueError(
        f"torus radii unknown: pass --major/--minor or provide a sidecar {sidecar}"
    )


def _normalized_vt(uv: np.ndarray, spec: TorusSpec) -> np.ndarray:
    canon = canonicalize(uv, spec)
    return np.stack(
        [canon[:, 0] / spec.width, (canon[:, 1] + np.pi * spec.minor_radius) / spec.height],
        axis=1,
    )


def _summary(obj: dict) -> None:
    print(json.dumps(obj))


# ---------------------------------------------------------------------------
# Config files


CONFIG_TYPES = {
    "major": float,
    "minor": float,
    "nu": int,
    "nv": int,
    "dt": float,
    "epsilon": float,
    "nmax": int,
    "base_vertex": int,
    "seam_tolerance": float,
    "solver": str,
    "population": str,
    "shape": str,
    "strict": bool,
    "no_overlap_correction": bool,
}


def _parse_config_file(path) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, raw = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in CONFIG_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            kind = CONFIG_TYPES[key]
            if kind is bool:
                if raw.lower() not in ("true", "false"):
                    raise ValueError(f"{path}:{lineno}: {key} must be true or false")
                values[key] = raw.lower() == "true"
            else:
                values[key] = kind(raw)
    return values


def _apply_config(args, argv: list[str]) -> None:
    if not getattr(args, "config", None):
        return
    explicit = set()
    for token in argv:
        if token.startswith("--"):
            explicit.add(token[2:].split("=", 1)[0].replace("-", "_"))
    for key, value in _parse_config_file(args.config).items():
        if key in explicit or not hasattr(args, key):
            continue
        setattr(args, key, value)


# ---------------------------------------------------------------------------
# Commands


def cmd_make_torus(args) -> int:
    start = time.perf_counter()
    out = Path(args.out)
    if args.shape == "torus":
        if args.major is None or args.minor is None:
            raise ValueError("make-torus needs --major and --minor")
        nu = 64 if args.nu is None else args.nu
        nv = 32 if args.nv is None else args.nv
        mesh, uv = generate_torus_mesh(args.major, args.minor, nu, nv)
        spec = TorusSpec(args.major, args.minor)
    else:
        mesh = builtin_shape(args.shape, args.nu, args.nv)
        uv, spec = None, None
    save_mesh(mesh, out)
    sidecar = None
    if uv is not None:
        sidecar = _sidecar_path(out)
        _write_uv_sidecar(sidecar, uv, spec)
    _summary(
        {
            "command": "make-torus",
            "shape": args.shape,
            "vertices": int(mesh.n_vertices),
            "faces": int(mesh.n_faces),
            "out": str(out),
            "uv_sidecar": str(sidecar) if sidecar else None,
            "time_seconds": time.perf_counter() - start,
        }
    )
    return 0


def _engine_config(args) -> EqualizeConfig:
    return EqualizeConfig(
        dt=args.dt,
        epsilon=args.epsilon,
        n_max=args.nmax,
        overlap_correction=not args.no_overlap_correction,
        seam_tolerance=args.seam_tolerance,
        solver=args.solver,
    )


def cmd_equalize(args) -> int:
    start = time.perf_counter()
    mesh = load_mesh(args.mesh)
    spec = _resolve_spec(args)
    config = _engine_config(args)

    mapped, pmesh, report = run_equalization(
        mesh, args.population, spec, config, base_vertex=args.base_vertex
    )

    prefix = Path(args.out_prefix)
    mapped_path = prefix.with_name(prefix.name + ".mapped.obj")
    planar_path = prefix.with_name(prefix.name + ".planar.obj")
    report_path = prefix.with_name(prefix.name + ".report.csv")
    uv_path = prefix.with_name(prefix.name + ".mapped.uv.csv")

    vt = _normalized_vt(mapped.uv, spec)
    save_mesh(TriangleMesh(mapped.vertices, mapped.faces, uv=vt), mapped_path)
    planar3 = np.column_stack([pmesh.positions, np.zeros(len(pmesh.positions))])
    save_mesh(TriangleMesh(planar3, pmesh.faces), planar_path)
    write_report_csv(report_path, report)
    _write_uv_sidecar(uv_path, mapped.uv, spec)

    _summary(
        {
            "command": "equalize",
            "mesh": str(args.mesh),
            "population": args.population,
            "faces": int(mesh.n_faces),
            "initial_variance": report.initial_variance,
            "final_variance": report.final_variance,
            "initial_error": report.initial_error,
            "final_error": report.final_error,
            "iterations": report.iterations,
            "converged": report.converged,
            "stop_reason": report.stop_reason,
            "residual_folds": report.residual_folds,
            "max_seam_residual": report.max_seam_residual,
            "max_mass_drift": report.max_mass_drift,
            "mapped_obj": str(mapped_path),
            "planar_obj": str(planar_path),
            "report_csv": str(report_path),
            "uv_sidecar": str(uv_path),
            "time_seconds": time.perf_counter() - start,
        }
    )
    if not report.converged:
        if args.strict:
            print(f"error: stopped without convergence ({report.stop_reason})", file=sys.stderr)
            return 3
        print(f"warning: stopped without convergence ({report.stop_reason})", file=sys.stderr)
    return 0


def cmd_parameterize(args) -> int:
    start = time.perf_counter()
    mesh = load_mesh(args.mesh)
    spec = TorusSpec(args.major, args.minor)
    config = _engine_config(args)

    result = run_parameterization(
        mesh, spec, population=args.population, config=config, base_vertex=args.base_vertex
    )
    param = result.parameterization
    report = result.report

    prefix = Path(args.out_prefix)
    mapped_path = prefix.with_name(prefix.name + ".mapped.obj")
    darea_path = prefix.with_name(prefix.name + ".darea.csv")
    hist_path = prefix.with_name(prefix.name + ".hist.csv")
    report_path = prefix.with_name(prefix.name + ".report.csv")

    uv = param.planar_uv()
    save_mesh(TriangleMesh(param.vertex_images, mesh.faces, uv=_normalized_vt(uv, spec)), mapped_path)
    with open(darea_path, "w", encoding="utf-8") as fh:
        fh.write("face_index,d_area\n")
        for i, value in enumerate(result.final_values):
            fh.write(f"{i},{_fmt(value)}\n")
    with open(hist_path, "w", encoding="utf-8") as fh:
        fh.write("bin_left,bin_right,count\n")
        hist = result.final_distortion
        for left, right, count in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.histogram):
            fh.write(f"{_fmt(left)},{_fmt(right)},{int(count)}\n")
    write_report_csv(report_path, report)

    _summary(
        {
            "command": "parameterize",
            "mesh": Path(args.mesh).stem,
            "faces": int(mesh.n_faces),
            "mean_abs_distortion_initial": result.initial_distortion.mean_abs,
            "mean_abs_distortion_final": result.final_distortion.mean_abs,
            "improvement_percent": result.improvement_percent,
            "iterations": report.iterations,
            "converged": report.converged,
            "residual_folds": report.residual_folds,
            "mapped_obj": str(mapped_path),
            "darea_csv": str(darea_path),
            "histogram_csv": str(hist_path),
            "report_csv": str(report_path),
            "time_seconds": time.perf_counter() - start,
        }
    )
    if not report.converged and args.strict:
        print(f"error: stopped without convergence ({report.stop_reason})", file=sys.stderr)
        return 3
    return 0


def _planar_seam_residual(planar_mesh: TriangleMesh, spec: TorusSpec) -> float:
    """Largest deviation of coincident-on-torus vertex pairs from exact
    period translations, for a planar layout loaded from disk."""
    from scipy.spatial import cKDTree

    pos = planar_mesh.vertices[:, :2]
    scale = min(spec.width, spec.height)
    angles = 2.0 * np.pi * pos / spec.periods
    embed = np.concatenate(
        [np.cos(angles) * spec.periods / (2 * np.pi), np.sin(angles) * spec.periods / (2 * np.pi)],
        axis=1,
    )
    pairs = cKDTree(embed).query_pairs(1e-5 * scale, output_type="ndarray")
    if len(pairs) == 0:
        return 0.0
    d = pos[pairs[:, 1]] - pos[pairs[:, 0]]
    k = np.round(d / spec.periods)
    return float(np.abs(d - k * spec.periods).max())


def cmd_metrics(args) -> int:
    start = time.perf_counter()
    source = load_mesh(args.source)
    mapped = load_mesh(args.mapped)
    if not np.array_equal(source.faces, mapped.faces):
        raise ValueError("source and mapped meshes do not share connectivity")

    from .mesh import face_areas
    from .parameterize import area_distortion_values, summarize_distortion
    from .engine import density_error, normalized_variance

    src_areas = face_areas(source.vertices, source.faces)
    map_areas = face_areas(mapped.vertices, mapped.faces)
    values = area_distortion_values(src_areas, map_areas)
    summary = summarize_distortion(values)

    population = mesh_population(args.population, source)
    rho = population / map_areas
    err = density_error(rho)
    var = normalized_variance(rho)

    seam = None
    if args.planar is not None:
        if args.major is None or args.minor is None:
            raise ValueError("--planar needs --major and --minor")
        seam = _planar_seam_residual(load_mesh(args.planar), TorusSpec(args.major, args.minor))

    if args.out_prefix:
        prefix = Path(args.out_prefix)
        darea_path = prefix.with_name(prefix.name + ".darea.csv")
        with open(darea_path, "w", encoding="utf-8") as fh:
            fh.write("face_index,d_area\n")
            for i, value in enumerate(values):
                fh.write(f"{i},{_fmt(value)}\n")

    _summary(
        {
            "command": "metrics",
            "source": str(args.source),
            "mapped": str(args.mapped),
            "mean_abs_distortion": summary.mean_abs,
            "density_error": err,
            "variance": var,
            "population": args.population,
            "seam_residual": seam,
            "time_seconds": time.perf_counter() - start,
        }
    )
    return 0


# ---------------------------------------------------------------------------
# Parser


def _add_engine_flags(sub) -> None:
    sub.add_argument("--dt", type=float, default=0.1, help="diffusion step size")
    sub.add_argument("--epsilon", type=float, default=1e-3, help="density-error stop threshold")
    sub.add_argument("--nmax", type=int, default=1000, help="iteration cap")
    sub.add_argument("--solver", choices=("direct", "cg"), default="direct")
    sub.add_argument("--base-vertex", type=int, default=0, help="cut-graph base vertex")
    sub.add_argument("--seam-tolerance", type=float, default=1e-9)
    sub.add_argument(
        "--no-overlap-correction", action="store_true", help="disable fold repair"
    )
    sub.add_argument("--strict", action="store_true", help="exit 3 if the flow does not converge")
    sub.add_argument("--config", default=None, help="key=value config file (flags override)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toromap",
        description="Density-equalizing torus maps and toroidal parameterizations.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    mk = commands.add_parser("make-torus", help="generate a torus or bundled test shape")
    mk.add_argument("--major", type=float, default=None, help="major radius R")
    mk.add_argument("--minor", type=float, default=None, help="minor (tube) radius r")
    mk.add_argument("--nu", type=int, default=None, help="samples around the main ring")
    mk.add_argument("--nv", type=int, default=None, help="samples around the tube")
    mk.add_argument(
        "--shape", choices=("torus",) + SHAPE_NAMES, default="torus",
        help="exact torus grid or a bundled genus-one shape",
    )
    mk.add_argument("--out", required=True, help="output mesh path (.obj or .ply)")
    mk.add_argument("--config", default=None)
    mk.set_defaults(func=cmd_make_torus)

    eq = commands.add_parser(
        "equalize", aliases=["tdem"], help="density-equalizing self-map of a torus mesh"
    )
    eq.add_argument("--mesh", required=True, help="input mesh with vertices on the torus")
    eq.add_argument("--major", type=float, default=None, help="major radius (or use uv sidecar)")
    eq.add_argument("--minor", type=float, default=None, help="minor radius (or use uv sidecar)")
    eq.add_argument(
        "--population",
        default="uniform",
        help="uniform | cos_u | sinusoid | ball[:u0,v0,rad,in,out] | csv:PATH",
    )
    eq.add_argument("--out-prefix", required=True, help="prefix for output files")
    _add_engine_flags(eq)
    eq.set_defaults(func=cmd_equalize)

    pz = commands.add_parser(
        "parameterize", help="area-equalizing toroidal parameterization of a genus-one mesh"
    )
    pz.add_argument("--mesh", required=True, help="input genus-one mesh")
    pz.add_argument("--major", type=float, default=2.0, help="target major radius")
    pz.add_argument("--minor", type=float, default=1.0, help="target minor radius")
    pz.add_argument(
        "--population", default="area", help="area | uniform | csv:PATH (per source face)"
    )
    pz.add_argument("--out-prefix", required=True)
    _add_engine_flags(pz)
    pz.set_defaults(func=cmd_parameterize)

    mt = commands.add_parser("metrics", help="distortion and density metrics for a mapped mesh")
    mt.add_argument("--source", required=True, help="source mesh")
    mt.add_argument("--mapped", required=True, help="mapped mesh (same connectivity)")
    mt.add_argument("--planar", default=None, help="planar layout OBJ for seam residuals")
    mt.add_argument("--major", type=float, default=None)
    mt.add_argument("--minor", type=float, default=None)
    mt.add_argument(
        "--population", default="area", help="area | uniform | csv:PATH (per source face)"
    )
    mt.add_argument("--out-prefix", default=None, help="also write a d_area CSV")
    mt.add_argument("--config", default=None)
    mt.set_defaults(func=cmd_metrics)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        _apply_config(args, argv)
        return args.func(args)
    except (MeshError, ProjectionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EngineError, SolverError, ParameterizationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
