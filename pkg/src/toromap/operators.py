"""Sparse operators on the seam-identified vertex set of a planar mesh.

All operators act on quotient vertices: seam copies of a vertex share one
row/column, assembled by summing per-face contributions expressed in
quotient indices.  Geometry always enters through per-face corner
coordinates, so a cut mesh with seam identification and an abstract
uncut mesh with the same per-face geometry assemble identical operators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import mmwrite
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.linalg import cg as _cg
from scipy.sparse.linalg import splu

from .mesh import MeshError
from .planar import PeriodicPlanarMesh

__all__ = [
    "SolverError",
    "QuotientIndex",
    "DensityField",
    "quotient_index",
    "lumped_mass",
    "cotangent_laplacian",
    "face_to_vertex",
    "face_gradient",
    "backward_euler_step",
    "operator_entries",
    "dump_operator",
]

# Assembled entries smaller than this in magnitude are dropped (exact
# right angles produce structural zeros that would otherwise linger).
ENTRY_RETENTION = 1e-15


class SolverError(RuntimeError):
    """A sparse solve failed to reach the required residual."""


@dataclass(frozen=True)
class QuotientIndex:
    """Map from cut-mesh vertex ids to quotient (seam-identified) ids."""

    map: np.ndarray
    count: int


@dataclass(frozen=True)
class DensityField:
    """Per-face and per-vertex density derived from a population.

    ``face_density = population / reference_areas`` where the reference
    area of a face is the area of the 3D triangle through the torus
    images of its corners; ``vertex_density`` is the area-weighted
    face-to-vertex average on quotient vertices.
    """

    population: np.ndarray
    reference_areas: np.ndarray
    face_density: np.ndarray
    vertex_density: np.ndarray


def quotient_index(pmesh: PeriodicPlanarMesh) -> QuotientIndex:
    return QuotientIndex(map=pmesh.source_vertex, count=pmesh.n_quotient)


def _corners_and_faces(pmesh: PeriodicPlanarMesh, q: QuotientIndex | None):
    if q is None:
        q = quotient_index(pmesh)
    corners = pmesh.positions[pmesh.faces]
    faces_q = q.map[pmesh.faces]
    return corners, faces_q, q.count


def _signed_areas(corners: np.ndarray) -> np.ndarray:
    u = corners[:, 1] - corners[:, 0]
    v = corners[:, 2] - corners[:, 0]
    return 0.5 * (u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])


def _prune(matrix: csr_matrix) -> csr_matrix:
    matrix.data[np.abs(matrix.data) < ENTRY_RETENTION] = 0.0
    matrix.eliminate_zeros()
    matrix.sort_indices()
    return matrix


def assemble_lumped_mass(corners: np.ndarray, faces_q: np.ndarray, n: int) -> csr_matrix:
    areas = _signed_areas(corners)
    if (areas <= 0).any():
        bad = int(np.flatnonzero(areas <= 0)[0])
        raise MeshError(f"face {bad} has nonpositive planar area")
    rows = faces_q.ravel()
    vals = np.repeat(areas / 3.0, 3)
    diag = coo_matrix((vals, (rows, rows)), shape=(n, n)).tocsr()
    return _prune(diag)


def assemble_cotangent_laplacian(corners: np.ndarray, faces_q: np.ndarray, n: int) -> csr_matrix:
    areas2 = 2.0 * _signed_areas(corners)
    if (areas2 == 0).any():
        bad = int(np.flatnonzero(areas2 == 0)[0])
        raise MeshError(f"face {bad} is degenerate")
    # Half-cotangent of the angle at each corner, shared denominator 2A.
    w = np.empty((len(faces_q), 3))
    for k in range(3):
        a = corners[:, (k + 1) % 3] - corners[:, k]
        b = corners[:, (k + 2) % 3] - corners[:, k]
        w[:, k] = 0.5 * (a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1]) / areas2

    rows, cols, vals = [], [], []
    for k in range(3):
        i = faces_q[:, (k + 1) % 3]
        j = faces_q[:, (k + 2) % 3]
        wk = w[:, k]
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-wk, -wk, wk, wk]
    L = coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    return _prune(L)


def assemble_face_to_vertex(corners: np.ndarray, faces_q: np.ndarray, n: int) -> csr_matrix:
    areas = _signed_areas(corners)
    if (areas <= 0).any():
        bad = int(np.flatnonzero(areas <= 0)[0])
        raise MeshError(f"face {bad} has nonpositive planar area")
    m = len(faces_q)
    rows = faces_q.ravel()
    cols = np.repeat(np.arange(m), 3)
    vals = np.repeat(areas / 3.0, 3)
    B = coo_matrix((vals, (rows, cols)), shape=(n, m)).tocsr()
    weights = np.asarray(B.sum(axis=1)).ravel()
    if (weights <= 0).any():
        raise MeshError("quotient vertex with no incident face")
    D = coo_matrix((1.0 / weights, (np.arange(n), np.arange(n))), shape=(n, n)).tocsr()
    return _prune(D @ B)


def assemble_face_gradient(
    corners: np.ndarray, faces_q: np.ndarray, values: np.ndarray
) -> np.ndarray:
    areas2 = 2.0 * _signed_areas(corners)
    if (areas2 == 0).any():
        raise MeshError("degenerate face in gradient assembly")
    rho = values[faces_q]
    acc = np.zeros((len(faces_q), 2))
    for k in range(3):
        edge = corners[:, (k + 2) % 3] - corners[:, (k + 1) % 3]
        acc += rho[:, k, None] * edge
    # In-plane rotation by +90 degrees realizes the normal cross product.
    grad = np.stack([-acc[:, 1], acc[:, 0]], axis=1)
    return grad / areas2[:, None]


def lumped_mass(pmesh: PeriodicPlanarMesh, q: QuotientIndex | None = None) -> csr_matrix:
    """Diagonal vertex-area matrix: one third of incident face areas."""
    return assemble_lumped_mass(*_corners_and_faces(pmesh, q))


def cotangent_laplacian(pmesh: PeriodicPlanarMesh, q: QuotientIndex | None = None) -> csr_matrix:
    """Symmetric PSD stiffness matrix with half-cotangent edge weights."""
    return assemble_cotangent_laplacian(*_corners_and_faces(pmesh, q))


def face_to_vertex(pmesh: PeriodicPlanarMesh, q: QuotientIndex | None = None) -> csr_matrix:
    """Row-stochastic area-weighted average from faces to quotient vertices."""
    return assemble_face_to_vertex(*_corners_and_faces(pmesh, q))


def face_gradient(pmesh: PeriodicPlanarMesh, vertex_values: np.ndarray) -> np.ndarray:
    """Per-face gradient of a piecewise-linear quotient vertex field.

    Exact for affine fields; returns an (n_faces, 2) array.
    """
    corners, faces_q, n = _corners_and_faces(pmesh, None)
    values = np.asarray(vertex_values, dtype=np.float64)
    if values.shape != (n,):
        raise ValueError(f"expected {n} vertex values, got shape {values.shape}")
    return assemble_face_gradient(corners, faces_q, values)


def backward_euler_step(
    A: csr_matrix,
    L: csr_matrix,
    rho: np.ndarray,
    dt: float,
    method: str = "direct",
    rtol: float = 1e-12,
) -> np.ndarray:
    """One implicit diffusion step: solve (A + dt L) rho_next = A rho.

    ``method`` is "direct" (sparse LU) or "cg" (Jacobi-preconditioned
    conjugate gradient).  The solution must satisfy the residual bound
    ``|(A + dt L) rho_next - A rho|_inf <= 1e-10 |A rho|_inf`` or a
    SolverError is raised.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    rho = np.asarray(rho, dtype=np.float64)
    system = (A + dt * L).tocsc()
    rhs = A @ rho
    if method == "direct":
        try:
            out = splu(system).solve(rhs)
        except RuntimeError as exc:  # singular factorization
            raise SolverError(f"backward Euler factorization failed: {exc}") from exc
    elif method == "cg":
        diag = system.diagonal()
        if (diag <= 0).any():
            raise SolverError("system diagonal not positive; cannot precondition")
        precond = coo_matrix(
            (1.0 / diag, (np.arange(len(diag)), np.arange(len(diag)))), shape=system.shape
        ).tocsr()
        out, info = _cg(system.tocsr(), rhs, x0=rho, rtol=rtol, atol=0.0, M=precond)
        if info != 0:
            raise SolverError(f"conjugate gradient did not converge (info={info})")
    else:
        raise ValueError(f"unknown solver method {method!r}")
    residual = np.abs(system @ out - rhs).max()
    bound = 1e-10 * max(np.abs(rhs).max(), np.finfo(float).tiny)
    if not residual <= bound:
        raise SolverError(f"backward Euler residual {residual:.3e} exceeds {bound:.3e}")
    return out


def operator_entries(op: csr_matrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deduplicated (row, col, value) triplets in row-major sorted order."""
    c = op.tocoo()
    order = np.lexsort((c.col, c.row))
    return c.row[order], c.col[order], c.data[order]


def dump_operator(path, op: csr_matrix) -> None:
    """Write an operator to Matrix Market coordinate format for debugging."""
    mmwrite(str(path), op.tocoo())
