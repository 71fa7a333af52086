"""Toroidal parameterization of genus-one meshes.

A genus-one mesh is cut to a disk, laid out on the doubly periodic
rectangle of a target torus, and then pushed through the
density-equalizing flow.  With the face-area population the final map
distributes torus area proportionally to source face area, i.e. it is
area-preserving up to the flow's stopping tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import splu

from .cutting import CutGraph, SeamCorrespondence, compute_cut_graph, cut_along
from .engine import EqualizeConfig, EqualizeReport, equalize
from .mesh import MeshError, TriangleMesh, face_areas, validate_closed_manifold, euler_genus
from .planar import PeriodicPlanarMesh, flatten_to_plane, normalize_seams
from .populations import mesh_population
from .torus import TorusSpec, canonicalize, project_to_torus, surface_residual

__all__ = [
    "ParameterizationError",
    "Parameterization",
    "DistortionSummary",
    "ParameterizationResult",
    "initial_parameterization",
    "run_parameterization",
    "area_distortion",
    "area_distortion_values",
    "summarize_distortion",
]

HISTOGRAM_BINS = 50
HISTOGRAM_RANGE = (-3.0, 3.0)

# Vertices within this multiple of the tube radius count as already on
# the target torus, in which case the exact coordinate lift is used.
ON_SURFACE_TOL = 1e-8


class ParameterizationError(RuntimeError):
    """No valid initial layout could be constructed."""


@dataclass
class Parameterization:
    """A map from a genus-one source mesh onto a torus."""

    source: TriangleMesh
    target: TorusSpec
    vertex_images: np.ndarray
    planar: PeriodicPlanarMesh

    def planar_uv(self) -> np.ndarray:
        """Canonical fundamental-domain coordinates per source vertex."""
        return canonicalize(self.planar.quotient_positions(), self.target)

    def image_mesh(self) -> TriangleMesh:
        return TriangleMesh(self.vertex_images, self.source.faces, uv=self.planar_uv())


@dataclass(frozen=True)
class DistortionSummary:
    mean_abs: float
    histogram: np.ndarray
    bin_edges: np.ndarray


@dataclass
class ParameterizationResult:
    parameterization: Parameterization
    report: EqualizeReport
    initial_distortion: DistortionSummary
    final_distortion: DistortionSummary
    improvement_percent: float
    initial_values: np.ndarray
    final_values: np.ndarray


def _seam_offsets(seams: SeamCorrespondence, spec: TorusSpec, n_copies: int) -> np.ndarray:
    """Lattice offset per copy implied by the seam pair structure.

    Pairs tie the second copy to the first plus one period.  Offsets are
    anchored at each source's own copy (offset zero) and propagated; the
    corner copies close consistently because the four pair constraints
    around the base form a cycle whose shifts cancel.
    """
    width, height = spec.width, spec.height
    constraints: dict[int, list[tuple[int, float, float]]] = {}
    for (c1, c2), (dx, dy) in [
        *(((int(a), int(b)), (0.0, height)) for a, b in seams.pairs_tb),
        *(((int(a), int(b)), (width, 0.0)) for a, b in seams.pairs_lr),
    ]:
        constraints.setdefault(c1, []).append((c2, dx, dy))
        constraints.setdefault(c2, []).append((c1, -dx, -dy))

    offsets = np.zeros((n_copies, 2))
    assigned = np.zeros(n_copies, dtype=bool)
    src = seams.source_vertex
    anchors = sorted({int(src[c]) for c in constraints})
    for anchor in anchors:
        stack = [anchor]
        assigned[anchor] = True
        while stack:
            c = stack.pop()
            for d, dx, dy in constraints.get(c, []):
                target = offsets[c] + (dx, dy)
                if assigned[d]:
                    if not np.allclose(offsets[d], target, atol=1e-9):
                        raise MeshError("seam pair constraints are inconsistent")
                    continue
                offsets[d] = target
                assigned[d] = True
                stack.append(d)
    return offsets


def _harmonic_layout(
    mesh: TriangleMesh,
    cut_mesh: TriangleMesh,
    seams: SeamCorrespondence,
    spec: TorusSpec,
    base_vertex: int,
    weights: str,
) -> tuple[PeriodicPlanarMesh | None, int]:
    """Solve the translation-tied Laplace system for planar positions.

    Unknowns are quotient positions; seam copies enter through fixed
    lattice offsets that carry the period translations into the right
    hand side.  Returns the layout and its folded-face count.
    """
    n_q = mesh.n_vertices
    offsets = _seam_offsets(seams, spec, cut_mesh.n_vertices)
    faces_c = cut_mesh.faces
    faces_q = seams.source_vertex[faces_c]

    if weights == "cotan":
        p = mesh.vertices[mesh.faces]
        w = np.empty((len(faces_q), 3))
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            cross = np.linalg.norm(np.cross(a, b), axis=1)
            if (cross == 0).any():
                raise MeshError("degenerate source face in harmonic assembly")
            w[:, k] = 0.5 * np.einsum("ij,ij->i", a, b) / cross
    else:
        w = np.full((len(faces_q), 3), 0.5)

    rows, cols, vals = [], [], []
    rhs = np.zeros((n_q, 2))
    for k in range(3):
        ci, cj = faces_c[:, (k + 1) % 3], faces_c[:, (k + 2) % 3]
        qi, qj = faces_q[:, (k + 1) % 3], faces_q[:, (k + 2) % 3]
        wk = w[:, k]
        rows += [qi, qj, qi, qj]
        cols += [qi, qj, qj, qi]
        vals += [wk, wk, -wk, -wk]
        delta = offsets[cj] - offsets[ci]
        np.add.at(rhs, qi, wk[:, None] * delta)
        np.add.at(rhs, qj, -wk[:, None] * delta)

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    keep = rows != base_vertex
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    rows = np.append(rows, base_vertex)
    cols = np.append(cols, base_vertex)
    vals = np.append(vals, 1.0)
    rhs[base_vertex] = 0.0

    system = coo_matrix((vals, (rows, cols)), shape=(n_q, n_q)).tocsc()
    try:
        solve = splu(system).solve
    except RuntimeError as exc:
        raise ParameterizationError(f"harmonic system is singular: {exc}") from exc
    q = np.stack([solve(rhs[:, 0]), solve(rhs[:, 1])], axis=1)

    positions = q[seams.source_vertex] + offsets
    faces = faces_c.copy()
    p2 = positions[faces]
    e1 = p2[:, 1] - p2[:, 0]
    e2 = p2[:, 2] - p2[:, 0]
    areas = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    if np.count_nonzero(areas < 0) > len(areas) / 2:
        faces = faces[:, [0, 2, 1]]
        areas = -areas
    folds = int(np.count_nonzero(areas <= 0))
    if folds:
        return None, folds
    pmesh = PeriodicPlanarMesh(
        positions=positions,
        faces=faces,
        seams=normalize_seams(positions, seams, spec),
        spec=spec,
    )
    return pmesh, 0


def initial_parameterization(
    mesh: TriangleMesh,
    spec: TorusSpec,
    cut: CutGraph | None = None,
    base_vertex: int = 0,
) -> Parameterization:
    """Initial fold-free toroidal layout of a genus-one mesh.

    Meshes already lying on the target torus are lifted through the
    exact coordinate chart.  Otherwise the layout is the doubly periodic
    harmonic map with cotangent weights from the source geometry, falling
    back to uniform weights if the cotangent solution folds; if both
    fold, the error is raised rather than repaired silently.
    """
    validate_closed_manifold(mesh)
    genus = euler_genus(mesh)
    if genus != 1:
        raise MeshError(f"genus {genus}, require genus 1")

    on_surface = bool(
        (surface_residual(mesh.vertices, spec) <= ON_SURFACE_TOL * spec.minor_radius).all()
    )
    if cut is None:
        cut = compute_cut_graph(mesh, base_vertex, torus=spec if on_surface else None)
    cut_mesh, seams = cut_along(mesh, cut)

    if on_surface:
        pmesh = flatten_to_plane(cut_mesh, seams, spec, tol=ON_SURFACE_TOL)
    else:
        pmesh, folds = _harmonic_layout(mesh, cut_mesh, seams, spec, cut.base_vertex, "cotan")
        if pmesh is None:
            pmesh, folds = _harmonic_layout(
                mesh, cut_mesh, seams, spec, cut.base_vertex, "uniform"
            )
        if pmesh is None:
            raise ParameterizationError(
                f"initial layout folds under cotangent and uniform weights ({folds} faces)"
            )

    images = project_to_torus(pmesh.quotient_positions(), spec)
    return Parameterization(source=mesh, target=spec, vertex_images=images, planar=pmesh)


def area_distortion_values(source_areas: np.ndarray, image_areas: np.ndarray) -> np.ndarray:
    """Log ratio of normalized source to normalized image face areas."""
    source_areas = np.asarray(source_areas, dtype=np.float64)
    image_areas = np.asarray(image_areas, dtype=np.float64)
    if (image_areas <= 0).any():
        raise ValueError("image faces must have positive area")
    if (source_areas <= 0).any():
        raise ValueError("source faces must have positive area")
    return np.log(
        (source_areas / source_areas.sum()) / (image_areas / image_areas.sum())
    )


def summarize_distortion(values: np.ndarray) -> DistortionSummary:
    lo, hi = HISTOGRAM_RANGE
    counts, edges = np.histogram(np.clip(values, lo, hi), bins=HISTOGRAM_BINS, range=HISTOGRAM_RANGE)
    return DistortionSummary(
        mean_abs=float(np.abs(values).mean()), histogram=counts, bin_edges=edges
    )


def area_distortion(param: Parameterization) -> tuple[np.ndarray, DistortionSummary]:
    """Per-face area distortion of a parameterization plus its summary."""
    src_areas = face_areas(param.source.vertices, param.source.faces)
    img = param.vertex_images[param.source.faces]
    img_areas = 0.5 * np.linalg.norm(
        np.cross(img[:, 1] - img[:, 0], img[:, 2] - img[:, 0]), axis=1
    )
    values = area_distortion_values(src_areas, img_areas)
    return values, summarize_distortion(values)


def run_parameterization(
    mesh: TriangleMesh,
    spec: TorusSpec | None = None,
    population="area",
    config: EqualizeConfig | None = None,
    cut: CutGraph | None = None,
    base_vertex: int = 0,
) -> ParameterizationResult:
    """Area-equalizing toroidal parameterization: initial layout plus flow."""
    spec = spec or TorusSpec(2.0, 1.0)
    initial = initial_parameterization(mesh, spec, cut=cut, base_vertex=base_vertex)
    pop = mesh_population(population, mesh)

    h_values, h_summary = area_distortion(initial)
    report = equalize(initial.planar, pop, config)

    images = project_to_torus(initial.planar.quotient_positions(), spec)
    final = Parameterization(
        source=mesh, target=spec, vertex_images=images, planar=initial.planar
    )
    f_values, f_summary = area_distortion(final)
    improvement = 100.0 * (1.0 - f_summary.mean_abs / h_summary.mean_abs) if h_summary.mean_abs else 0.0
    return ParameterizationResult(
        parameterization=final,
        report=report,
        initial_distortion=h_summary,
        final_distortion=f_summary,
        improvement_percent=improvement,
        initial_values=h_values,
        final_values=f_values,
    )
