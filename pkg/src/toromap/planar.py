"""Planar form of a cut torus mesh on a doubly periodic rectangle.

Flattening sends each cut-mesh vertex to torus coordinates lifted to a
single consistent sheet of the plane, so the two copies of every seam
vertex differ by an exact period translation.  The planar mesh keeps the
copy-to-source map; solvers treat all copies of a source vertex as one
unknown and rebuild copy positions from a quotient position plus a fixed
lattice offset, which keeps seam constraints satisfied to rounding error.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .cutting import SeamCorrespondence
from .mesh import MeshError, TriangleMesh, edge_face_incidence
from .torus import ProjectionError, TorusSpec, inverse_project

__all__ = [
    "PeriodicPlanarMesh",
    "flatten_to_plane",
    "check_seam_constraints",
    "normalize_seams",
    "torus_image_areas",
]


@dataclass
class PeriodicPlanarMesh:
    """A cut torus mesh with planar vertex positions.

    ``positions`` holds one row per cut-mesh vertex (copies included) and
    is mutable; the mesh connectivity and seam structure are fixed.  Seam
    pairs are orientation-normalized: ``pairs_tb[k] = (bottom, top)`` with
    ``top = bottom + (0, height)`` and ``pairs_lr[k] = (left, right)`` with
    ``right = left + (width, 0)``.  ``corner_ids`` order the four base
    copies as (bottom-left, bottom-right, top-left, top-right).
    """

    positions: np.ndarray
    faces: np.ndarray
    seams: SeamCorrespondence
    spec: TorusSpec
    _offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        src = self.seams.source_vertex
        nq = self.n_quotient
        if not np.array_equal(src[:nq], np.arange(nq)):
            raise MeshError("cut-mesh copies must keep original indices for source vertices")
        # Copy offsets are exact lattice translations, frozen at build time.
        d = self.positions - self.positions[src]
        k = np.round(d / self.spec.periods)
        self._offsets = k * self.spec.periods
        if np.abs(d - self._offsets).max() > 1e-6 * min(self.spec.width, self.spec.height):
            raise MeshError("copies of a seam vertex are not period translates of each other")

    @property
    def n_copies(self) -> int:
        return len(self.positions)

    @property
    def n_quotient(self) -> int:
        return int(self.seams.source_vertex.max()) + 1

    @property
    def source_vertex(self) -> np.ndarray:
        return self.seams.source_vertex

    @property
    def copy_offsets(self) -> np.ndarray:
        """Exact lattice translation of each copy from its source's anchor."""
        return self._offsets

    def quotient_positions(self) -> np.ndarray:
        """Positions of the anchor copy of each source vertex."""
        return self.positions[: self.n_quotient].copy()

    def set_quotient_positions(self, q: np.ndarray) -> None:
        """Rebuild all copy positions as quotient position plus lattice offset."""
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (self.n_quotient, 2):
            raise ValueError(f"expected ({self.n_quotient}, 2) positions, got {q.shape}")
        self.positions = q[self.seams.source_vertex] + self._offsets

    def signed_face_areas(self) -> np.ndarray:
        p = self.positions[self.faces]
        u = p[:, 1] - p[:, 0]
        v = p[:, 2] - p[:, 0]
        return 0.5 * (u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])

    def folded_faces(self) -> np.ndarray:
        """Indices of faces with nonpositive planar area."""
        return np.flatnonzero(self.signed_face_areas() <= 0.0)

    def seam_residual(self) -> float:
        """Largest deviation of any seam pair from its period translation."""
        res = 0.0
        for pairs, shift in (
            (self.seams.pairs_tb, np.array([0.0, self.spec.height])),
            (self.seams.pairs_lr, np.array([self.spec.width, 0.0])),
        ):
            d = self.positions[pairs[:, 1]] - self.positions[pairs[:, 0]] - shift
            res = max(res, float(np.abs(d).max()))
        return res

    def to_torus_mesh(self) -> TriangleMesh:
        """Project the current planar positions back onto the torus surface."""
        from .torus import project_to_torus

        verts = project_to_torus(self.quotient_positions(), self.spec)
        return TriangleMesh(verts, self.seams.source_vertex[self.faces])


def torus_image_areas(pmesh: PeriodicPlanarMesh) -> np.ndarray:
    """Area of the straight-edge 3D triangle through each face's torus image.

    Quotient positions are projected once so that all copies of a vertex
    share one image point exactly.
    """
    from .torus import project_to_torus

    images = project_to_torus(pmesh.quotient_positions(), pmesh.spec)
    p = images[pmesh.source_vertex[pmesh.faces]]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    return 0.5 * np.linalg.norm(cross, axis=1)


def check_seam_constraints(pmesh: PeriodicPlanarMesh, tol: float = 1e-9):
    """Seam pairs whose translation residual exceeds ``tol``.

    Returns a list of ``(family, pair_index, residual)`` tuples where
    family is "tb" or "lr"; empty when every pair is within tolerance.
    """
    violations = []
    for family, pairs, shift in (
        ("tb", pmesh.seams.pairs_tb, np.array([0.0, pmesh.spec.height])),
        ("lr", pmesh.seams.pairs_lr, np.array([pmesh.spec.width, 0.0])),
    ):
        d = pmesh.positions[pairs[:, 1]] - pmesh.positions[pairs[:, 0]] - shift
        res = np.abs(d).max(axis=1)
        for k in np.flatnonzero(res > tol):
            violations.append((family, int(k), float(res[k])))
    return violations


def _lift_coordinates(cut_mesh: TriangleMesh, spec: TorusSpec, tol: float) -> np.ndarray:
    """Assign each cut-mesh vertex planar coordinates on one consistent sheet."""
    canon = inverse_project(cut_mesh.vertices, spec, tol=tol)
    periods = spec.periods
    n = cut_mesh.n_vertices
    pos = np.full((n, 2), np.nan)

    incidence = edge_face_incidence(cut_mesh.faces)
    neighbors: dict[int, list[int]] = {f: [] for f in range(cut_mesh.n_faces)}
    for fs in incidence.values():
        if len(fs) == 2:
            neighbors[fs[0]].append(fs[1])
            neighbors[fs[1]].append(fs[0])

    seen_faces = np.zeros(cut_mesh.n_faces, dtype=bool)
    queue = deque([0])
    seen_faces[0] = True
    seed = cut_mesh.faces[0, 0]
    pos[seed] = canon[seed]
    placed = np.zeros(n, dtype=bool)
    placed[seed] = True

    while queue:
        f = queue.popleft()
        corners = cut_mesh.faces[f]
        refs = [v for v in corners if placed[v]]
        if not refs:
            raise MeshError("cut mesh is not face-connected")
        ref = refs[0]
        for v in corners:
            if placed[v]:
                continue
            k = np.round((pos[ref] - canon[v]) / periods)
            pos[v] = canon[v] + k * periods
            placed[v] = True
        for g in sorted(neighbors[f]):
            if not seen_faces[g]:
                seen_faces[g] = True
                queue.append(g)

    if not placed.all():
        raise MeshError("cut mesh has vertices in no face")
    # The lift is unambiguous only if every planar edge is shorter than
    # half a period in each coordinate.
    half = periods / 2.0
    p = pos[cut_mesh.faces]
    spans = np.abs(np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]]))
    if (spans >= half).any():
        raise ProjectionError(
            "mesh triangles span half a torus period; refine the mesh before flattening"
        )
    return pos


def normalize_seams(
    pos: np.ndarray, seams: SeamCorrespondence, spec: TorusSpec
) -> SeamCorrespondence:
    """Seam families relabeled and oriented to match the planar layout.

    Each pair must be a single-period translation; the family whose copies
    differ by the height period becomes tb (cut graphs built without torus
    awareness may deliver the families swapped), and pairs are flipped so
    the translation is positive.
    """
    periods = spec.periods

    def family_axis(pairs: np.ndarray) -> int:
        k = np.round((pos[pairs[:, 1]] - pos[pairs[:, 0]]) / periods)
        axes = {(int(a), int(b)) for a, b in np.abs(k)}
        if axes not in ({(1, 0)}, {(0, 1)}):
            raise MeshError(
                "cut loops do not translate along a single period; "
                "build the cut with the torus-aware constructor"
            )
        return 0 if axes == {(1, 0)} else 1

    def orient(pairs: np.ndarray, axis: int) -> np.ndarray:
        out = pairs.copy()
        for i, (c1, c2) in enumerate(pairs):
            k = np.round((pos[c2] - pos[c1]) / periods)
            if k[axis] < 0:
                out[i] = (c2, c1)
        return out

    pairs_tb, pairs_lr = seams.pairs_tb, seams.pairs_lr
    if {family_axis(pairs_tb), family_axis(pairs_lr)} != {0, 1}:
        raise MeshError("cut seam families translate along the same period")
    if family_axis(pairs_tb) == 0:
        pairs_tb, pairs_lr = pairs_lr, pairs_tb
    pairs_tb = orient(pairs_tb, axis=1)
    pairs_lr = orient(pairs_lr, axis=0)
    corners = sorted(seams.corner_ids.tolist(), key=lambda c: (pos[c, 1], pos[c, 0]))
    return SeamCorrespondence(
        pairs_tb=pairs_tb,
        pairs_lr=pairs_lr,
        corner_ids=np.asarray(corners, dtype=np.int64),
        source_vertex=seams.source_vertex,
    )


def flatten_to_plane(
    cut_mesh: TriangleMesh,
    seams: SeamCorrespondence,
    spec: TorusSpec,
    tol: float = 1e-8,
) -> PeriodicPlanarMesh:
    """Lay a cut torus mesh out flat on the periodic rectangle.

    Vertices must lie on the torus surface (within ``tol`` times the tube
    radius).  Faces keep their input order; orientation is normalized so
    planar areas are positive.  Raises if the cut seams do not line up
    with the coordinate axes or if any face is folded after lifting.
    """
    pos = _lift_coordinates(cut_mesh, spec, tol)
    faces = cut_mesh.faces.copy()

    p = pos[faces]
    u = p[:, 1] - p[:, 0]
    v = p[:, 2] - p[:, 0]
    areas = 0.5 * (u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
    if np.count_nonzero(areas < 0) > len(areas) / 2:
        faces = faces[:, [0, 2, 1]]
        areas = -areas
    if (areas <= 0).any():
        bad = int(np.flatnonzero(areas <= 0)[0])
        raise MeshError(f"face {bad} is folded in the planar layout; mesh overlaps on the torus")

    normalized = normalize_seams(pos, seams, spec)
    return PeriodicPlanarMesh(positions=pos, faces=faces, seams=normalized, spec=spec)
