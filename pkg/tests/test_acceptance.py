"""Acceptance checks: ten end-to-end guarantees at fixed tolerances.

Each check records one PASS/FAIL line for the terminal summary (see
conftest.py) and asserts the same condition, so a failing run always
shows which guarantee broke and by how much.  The flagship density runs
go through the installed command line in subprocesses; the sweeps call
the library directly.  Expect several minutes of wall time.
"""

from __future__ import annotations

import filecmp
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import record_acceptance
from toromap import (
    EqualizeConfig,
    SHAPE_NAMES,
    TorusSpec,
    builtin_shape,
    compute_cut_graph,
    cut_along,
    flatten_to_plane,
    generate_torus_mesh,
    inverse_project,
    operator_entries,
    project_to_torus,
    run_equalization,
    run_parameterization,
)
from toromap.operators import (
    assemble_cotangent_laplacian,
    assemble_face_gradient,
    assemble_face_to_vertex,
    assemble_lumped_mass,
)


def check(num: int, name: str, ok: bool, detail: str = "") -> None:
    record_acceptance(num, name, ok, detail)
    assert ok, f"A{num:02d} {name}: {detail}"


def run_cli(args):
    proc = subprocess.run(
        [sys.executable, "-m", "toromap", *args], capture_output=True, text=True
    )
    summary = None
    for line in proc.stdout.splitlines():
        if line.startswith("{"):
            summary = json.loads(line)
    return proc.returncode, summary


# ---------------------------------------------------------------------------
# Shared runs


@pytest.fixture(scope="module")
def flagship_runs(tmp_path_factory):
    """Command-line density runs on a (3,1) torus with ~7k faces, twice."""
    tmp = tmp_path_factory.mktemp("accept_flagship")
    dirs = (tmp / "first", tmp / "second")
    runs = {"dirs": dirs}
    for folder in dirs:
        folder.mkdir()
        rc, _ = run_cli(
            ["make-torus", "--major", "3", "--minor", "1", "--nu", "100",
             "--nv", "34", "--out", str(folder / "torus.obj")]
        )
        assert rc == 0
    for pop in ("cos_u", "sinusoid"):
        rc, summary = run_cli(
            ["equalize", "--mesh", str(dirs[0] / "torus.obj"), "--population",
             pop, "--out-prefix", str(dirs[0] / pop)]
        )
        assert rc == 0 and summary is not None
        runs[pop] = summary
    rc, summary = run_cli(
        ["equalize", "--mesh", str(dirs[1] / "torus.obj"), "--population",
         "cos_u", "--out-prefix", str(dirs[1] / "cos_u")]
    )
    assert rc == 0 and summary is not None
    runs["repeat"] = summary
    return runs


SWEEP_TARGETS = ((2, 0.3045), (4, 0.1910), (6, 0.1699), (8, 0.1583), (10, 0.1483))


@pytest.fixture(scope="module")
def radius_sweep_runs():
    """Sinusoid population at fixed tube radius, growing major radius."""
    config = EqualizeConfig(n_max=2000)
    out = []
    for R, _ in SWEEP_TARGETS:
        spec = TorusSpec(float(R), 1.0)
        mesh, _ = generate_torus_mesh(float(R), 1.0, 36 * R, 36)
        _, _, report = run_equalization(mesh, "sinusoid", spec, config)
        out.append((R, report))
    return out


@pytest.fixture(scope="module")
def cut_choice_runs():
    """One ball run per cut-graph algorithm on the same (3,1) mesh."""
    spec = TorusSpec(3.0, 1.0)
    mesh, _ = generate_torus_mesh(3.0, 1.0, 48, 16)
    config = EqualizeConfig(n_max=300)
    mapped_a, _, report_a = run_equalization(mesh, "ball", spec, config, base_vertex=0)
    cut = compute_cut_graph(mesh, base_vertex=mesh.n_vertices // 3)
    mapped_b, _, report_b = run_equalization(mesh, "ball", spec, config, cut=cut)
    return {
        "minor": spec.minor_radius,
        "vertices": (mapped_a.vertices, mapped_b.vertices),
        "reports": (report_a, report_b),
    }


@pytest.fixture(scope="module")
def collected_records(flagship_runs, radius_sweep_runs, cut_choice_runs):
    """Per-iteration mass drift and seam residual over every run above."""
    drifts, seams, runs = [], [], 0
    first, second = flagship_runs["dirs"]
    for path in (first / "cos_u.report.csv", first / "sinusoid.report.csv",
                 second / "cos_u.report.csv"):
        table = np.genfromtxt(path, delimiter=",", names=True)
        drifts.append(table["mass_drift"])
        seams.append(table["seam_residual"])
        runs += 1
    reports = [report for _, report in radius_sweep_runs]
    reports += list(cut_choice_runs["reports"])
    for report in reports:
        drifts.append(np.array([rec.mass_drift for rec in report.records]))
        seams.append(np.array([rec.seam_residual for rec in report.records]))
        runs += 1
    return np.concatenate(drifts), np.concatenate(seams), runs


# ---------------------------------------------------------------------------
# Checks


def test_a01_density_equalization_on_reference_torus(flagship_runs):
    windows = (("cos_u", 0.196), ("sinusoid", 0.218))
    ok, details = True, []
    for pop, center in windows:
        s = flagship_runs[pop]
        ok &= s["faces"] == 6800
        ok &= abs(s["initial_variance"] - center) <= 0.02
        ok &= s["final_variance"] <= 1e-3
        ok &= s["time_seconds"] <= 60.0
        details.append(
            f"{pop}: {s['initial_variance']:.4f} -> {s['final_variance']:.1e}"
            f" in {s['time_seconds']:.0f}s"
        )
    check(1, "density equalization on a (3,1) torus", ok, "; ".join(details))


def test_a02_initial_variance_trend_with_major_radius(radius_sweep_runs):
    initials = [report.initial_variance for _, report in radius_sweep_runs]
    finals = [report.final_variance for _, report in radius_sweep_runs]
    targets = [t for _, t in SWEEP_TARGETS]
    ok = all(a > b for a, b in zip(initials, initials[1:]))
    ok &= all(abs(x - t) <= 0.03 for x, t in zip(initials, targets))
    ok &= all(f <= 1e-3 for f in finals)
    detail = "initial " + ", ".join(f"{x:.4f}" for x in initials) + \
        f"; worst final {max(finals):.1e}"
    check(2, "initial variance falls as the torus widens", ok, detail)


def test_a03_result_does_not_depend_on_cut_choice(cut_choice_runs):
    report_a, report_b = cut_choice_runs["reports"]
    va, vb = report_a.final_variance, report_b.final_variance
    ratio = max(va, vb) / min(va, vb)
    pos_a, pos_b = cut_choice_runs["vertices"]
    dist = np.linalg.norm(pos_a - pos_b, axis=1).max()
    tol = 1e-2 * cut_choice_runs["minor"]
    ok = ratio <= 2.0 and dist <= tol
    check(3, "equalized map independent of the cut graph", ok,
          f"variance ratio {ratio:.3f}, max vertex distance {dist:.1e}")


def test_a04_uniform_population_leaves_mesh_fixed():
    worst = 0.0
    for major, minor, nu, nv in ((3.0, 1.0, 100, 34), (2.0, 0.5, 40, 16)):
        spec = TorusSpec(major, minor)
        mesh, _ = generate_torus_mesh(major, minor, nu, nv)
        mapped, _, _ = run_equalization(mesh, "uniform", spec)
        disp = np.linalg.norm(mapped.vertices - mesh.vertices, axis=1).max()
        worst = max(worst, disp / minor)
    check(4, "uniform population is a fixed point", worst <= 1e-9,
          f"max displacement {worst:.1e} of the tube radius")


def test_a05_total_mass_conserved_every_step(collected_records):
    drifts, _, runs = collected_records
    ok = len(drifts) > 0 and drifts.max() <= 1e-10
    check(5, "total mass conserved by every implicit step", ok,
          f"max relative drift {drifts.max():.1e} over {runs} runs")


def test_a06_seams_stay_closed_every_iteration(collected_records):
    _, seams, runs = collected_records
    ok = len(seams) > 0 and seams.max() <= 1e-9
    check(6, "seam translations exact after every iteration", ok,
          f"max residual {seams.max():.1e} over {runs} runs")


def test_a07_operator_assembly_oracles():
    # Unit square split along one diagonal: all angles are 45 or 90
    # degrees, so every off-diagonal weight is -1/2 except the split
    # diagonal, whose two 90-degree angles contribute cot(pi/2) = 0.
    corners = np.array(
        [[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)],
         [(0.0, 0.0), (1.0, 1.0), (0.0, 1.0)]]
    )
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    oracle = np.array(
        [[1.0, -0.5, 0.0, -0.5],
         [-0.5, 1.0, -0.5, 0.0],
         [0.0, -0.5, 1.0, -0.5],
         [-0.5, 0.0, -0.5, 1.0]]
    )
    laplacian = assemble_cotangent_laplacian(corners, faces, 4).toarray()
    lap_err = np.abs(laplacian - oracle).max()
    ok = lap_err <= 1e-14

    rng = np.random.default_rng(11)
    tris = rng.uniform(0.0, 10.0, size=(100, 3, 2))
    areas = 0.5 * np.abs(
        (tris[:, 1, 0] - tris[:, 0, 0]) * (tris[:, 2, 1] - tris[:, 0, 1])
        - (tris[:, 2, 0] - tris[:, 0, 0]) * (tris[:, 1, 1] - tris[:, 0, 1])
    )
    tris = tris[areas > 1e-2][:100]
    faces_q = np.arange(tris.shape[0] * 3).reshape(-1, 3)
    grad_err = 0.0
    for _ in range(100):
        a, b, c = rng.normal(size=3)
        values = a * tris[..., 0].ravel() + b * tris[..., 1].ravel() + c
        grads = assemble_face_gradient(tris, faces_q, values)
        grad_err = max(grad_err, np.abs(grads - [a, b]).max())
    ok &= grad_err <= 1e-12

    spec = TorusSpec(3.0, 1.0)
    mesh, _ = generate_torus_mesh(3.0, 1.0, 32, 16)
    cut_mesh, seams = cut_along(mesh, compute_cut_graph(mesh, torus=spec))
    pmesh = flatten_to_plane(cut_mesh, seams, spec)
    averaging = assemble_face_to_vertex(
        pmesh.positions[pmesh.faces], pmesh.source_vertex[pmesh.faces],
        int(pmesh.source_vertex.max()) + 1,
    )
    row_err = np.abs(np.asarray(averaging.sum(axis=1)).ravel() - 1.0).max()
    ok &= row_err <= 1e-14

    # The same flat periodic grid assembled through wrap-around indices
    # and through an open cut grid with a copy-to-source table must give
    # bitwise-identical operators.
    nu, nv = 8, 6
    tris = []
    for iu in range(nu):
        for iv in range(nv):
            a, b, c, d = (iu, iv), (iu + 1, iv), (iu + 1, iv + 1), (iu, iv + 1)
            tris += [(a, b, c), (a, c, d)] if (iu + iv) % 2 == 0 else [(a, b, d), (b, c, d)]
    corners = np.array([[(float(iu), float(iv)) for iu, iv in tri] for tri in tris])
    faces_uncut = np.array([[(iu % nu) * nv + (iv % nv) for iu, iv in tri] for tri in tris])
    open_pos = np.array([(float(iu), float(iv)) for iu in range(nu + 1) for iv in range(nv + 1)])
    open_src = np.array([(iu % nu) * nv + (iv % nv) for iu in range(nu + 1) for iv in range(nv + 1)])
    faces_open = np.array([[iu * (nv + 1) + iv for iu, iv in tri] for tri in tris])
    identical = True
    for assemble in (assemble_lumped_mass, assemble_cotangent_laplacian,
                     assemble_face_to_vertex):
        uncut = operator_entries(assemble(corners, faces_uncut, nu * nv))
        cut = operator_entries(assemble(open_pos[faces_open], open_src[faces_open], nu * nv))
        identical &= all(np.array_equal(x, y) for x, y in zip(uncut, cut))
    ok &= identical

    check(7, "operator assembly matches hand oracles", ok,
          f"laplacian {lap_err:.1e}, gradient {grad_err:.1e}, "
          f"rows {row_err:.1e}, cut-vs-uncut identical {identical}")


def test_a08_projection_round_trip():
    ok, details = True, []
    for spec in (TorusSpec(3.0, 1.0), TorusSpec(2.0, 0.5)):
        rng = np.random.default_rng(20260815)
        width, height = spec.width, spec.height
        pts = rng.uniform([0.0, -height / 2], [width, height / 2], size=(100000, 2))
        # Ladders of points approaching every wrap line and the tube
        # top/bottom, where naive angle recovery loses precision.
        ladders = []
        for eps in 10.0 ** -np.arange(9, 16, dtype=float):
            us = (eps, width / 2 - eps, width / 2 + eps, width - eps)
            vs = (-height / 2 + eps, -height / 4 - eps, -height / 4 + eps,
                  -eps, eps, height / 4 - eps, height / 4 + eps, height / 2 - eps)
            ladders.extend((u, v) for u in us for v in vs)
        pts = np.vstack([pts, ladders])
        back = inverse_project(project_to_torus(pts, spec), spec)
        delta = back - pts
        delta -= np.round(delta / spec.periods) * spec.periods
        err = np.abs(delta).max()
        tol = 1e-10 * (spec.major_radius + spec.minor_radius)
        ok &= err <= tol
        details.append(f"R={spec.major_radius:g}: {err:.1e} (tol {tol:.0e})")
    check(8, "planar-torus projection round trip", ok, "; ".join(details))


def test_a09_bundled_shape_parameterization():
    ok, details = True, []
    for name in SHAPE_NAMES:
        mesh = builtin_shape(name)
        start = time.perf_counter()
        result = run_parameterization(mesh)
        elapsed = time.perf_counter() - start
        param = result.parameterization
        ring = np.hypot(param.vertex_images[:, 0], param.vertex_images[:, 1])
        tube = np.hypot(ring - param.target.major_radius, param.vertex_images[:, 2])
        off_torus = np.abs(tube - param.target.minor_radius).max()
        folds = len(param.planar.folded_faces())
        ok &= result.improvement_percent >= 50.0
        ok &= folds == 0
        ok &= off_torus <= 1e-10 * param.target.minor_radius
        ok &= elapsed <= 120.0
        details.append(f"{name}: {result.improvement_percent:.1f}% in {elapsed:.0f}s")
    check(9, "area distortion halved on bundled shapes", ok, "; ".join(details))


def test_a10_reruns_byte_identical(flagship_runs):
    first, second = flagship_runs["dirs"]
    names = ["torus.obj", "torus.uv.csv"] + [
        "cos_u" + suffix
        for suffix in (".mapped.obj", ".planar.obj", ".report.csv", ".mapped.uv.csv")
    ]
    same = all(filecmp.cmp(first / n, second / n, shallow=False) for n in names)
    check(10, "repeated runs are byte-identical", same,
          f"{len(names)} files compared")
