"""Triangle meshes: validation, synthetic torus grids, and OBJ/PLY file I/O."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "MeshError",
    "TriangleMesh",
    "mesh_edges",
    "edge_face_incidence",
    "validate_closed_manifold",
    "euler_genus",
    "face_areas",
    "generate_torus_mesh",
    "grid_faces",
    "load_mesh",
    "save_mesh",
]

# Faces whose area falls below this fraction of the mean face area are
# rejected as degenerate when a mesh is loaded from disk.
DEGENERATE_AREA_FACTOR = 1e-12


class MeshError(ValueError):
    """Raised for malformed mesh data or unsupported mesh files."""


@dataclass(frozen=True)
class TriangleMesh:
    """Immutable triangle mesh with 3D vertex positions.

    Parameters
    ----------
    vertices : (n, 3) float array
        Vertex positions.
    faces : (m, 3) int array
        Vertex indices per triangle, counterclockwise seen from outside.
    population : (m,) float array, optional
        Positive per-face population values.
    uv : (n, 2) float array, optional
        Per-vertex parameter coordinates, kept when available (grid
        generation, texture round trips).
    """

    vertices: np.ndarray
    faces: np.ndarray
    population: np.ndarray | None = None
    uv: np.ndarray | None = None

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError(f"vertices must be (n, 3), got {vertices.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshError(f"faces must be (m, 3), got {faces.shape}")
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise MeshError("face index out of range")
        same = (
            (faces[:, 0] == faces[:, 1])
            | (faces[:, 1] == faces[:, 2])
            | (faces[:, 2] == faces[:, 0])
        )
        if same.any():
            raise MeshError(f"face {int(np.flatnonzero(same)[0])} repeats a vertex")
        vertices.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)
        if self.population is not None:
            pop = np.ascontiguousarray(self.population, dtype=np.float64)
            if pop.shape != (len(faces),):
                raise MeshError("population must be one value per face")
            if not (pop > 0).all():
                raise MeshError("population values must be positive")
            pop.setflags(write=False)
            object.__setattr__(self, "population", pop)
        if self.uv is not None:
            uv = np.ascontiguousarray(self.uv, dtype=np.float64)
            if uv.shape != (len(vertices), 2):
                raise MeshError("uv must be one 2D coordinate per vertex")
            uv.setflags(write=False)
            object.__setattr__(self, "uv", uv)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)


def mesh_edges(faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unique undirected edges and their face-incidence counts.

    Returns
    -------
    edges : (e, 2) int array with edges[i, 0] < edges[i, 1], lexsorted.
    counts : (e,) int array of incident faces per edge.
    """
    raw = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    raw = np.sort(raw, axis=1)
    edges, counts = np.unique(raw, axis=0, return_counts=True)
    return edges, counts


def edge_face_incidence(faces: np.ndarray) -> dict[tuple[int, int], list[int]]:
    """Map each undirected edge to the list of faces containing it."""
    inc: dict[tuple[int, int], list[int]] = {}
    for f, (a, b, c) in enumerate(faces):
        for p, q in ((a, b), (b, c), (c, a)):
            key = (int(p), int(q)) if p < q else (int(q), int(p))
            inc.setdefault(key, []).append(f)
    return inc


def validate_closed_manifold(mesh: TriangleMesh) -> None:
    """Raise MeshError unless every edge bounds exactly two faces."""
    edges, counts = mesh_edges(mesh.faces)
    bad = np.flatnonzero(counts > 2)
    if bad.size:
        a, b = edges[bad[0]]
        raise MeshError(f"non-manifold edge ({int(a)}, {int(b)}) with {int(counts[bad[0]])} faces")
    open_ = np.flatnonzero(counts == 1)
    if open_.size:
        a, b = edges[open_[0]]
        raise MeshError(f"mesh is not closed: boundary edge ({int(a)}, {int(b)})")


def euler_genus(mesh: TriangleMesh) -> int:
    """Genus of a closed connected triangle mesh from its Euler characteristic."""
    validate_closed_manifold(mesh)
    v = mesh.n_vertices
    e = len(mesh_edges(mesh.faces)[0])
    f = mesh.n_faces
    chi = v - e + f
    if chi % 2:
        raise MeshError(f"odd Euler characteristic {chi}")
    return (2 - chi) // 2


def face_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Areas of straight-edge triangles given 3D (or 2D) vertex positions."""
    p = vertices[faces]
    u = p[:, 1] - p[:, 0]
    v = p[:, 2] - p[:, 0]
    if p.shape[2] == 2:
        return 0.5 * np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
    return 0.5 * np.linalg.norm(np.cross(u, v), axis=1)


def generate_torus_mesh(
    major_radius: float, minor_radius: float, nu: int, nv: int, alternating: bool = True
) -> tuple[TriangleMesh, np.ndarray]:
    """Uniform (u, v) grid triangulation of the torus.

    The torus is the set of points at distance ``minor_radius`` from the
    circle of radius ``major_radius`` in the xy-plane.  Vertex (iu, iv) has
    index ``iu * nv + iv`` and planar coordinates
    ``u = iu * 2*pi*R / nu``, ``v = -pi*r + iv * 2*pi*r / nv``; quads are
    split into triangles per ``grid_faces``.

    Returns
    -------
    mesh : TriangleMesh with vertices exactly on the torus (uv attached).
    uv : (nu * nv, 2) array of the generating grid coordinates.
    """
    if not major_radius > minor_radius > 0:
        raise MeshError("torus radii must satisfy major > minor > 0")
    if nu < 3 or nv < 3:
        raise MeshError("nu and nv must be at least 3")
    R, r = float(major_radius), float(minor_radius)
    u = np.arange(nu) * (2.0 * np.pi * R / nu)
    v = -np.pi * r + np.arange(nv) * (2.0 * np.pi * r / nv)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    uv = np.stack([uu.ravel(), vv.ravel()], axis=1)

    ring = R + r * np.cos(uv[:, 1] / r)
    vertices = np.stack(
        [
            ring * np.cos(uv[:, 0] / R),
            ring * np.sin(uv[:, 0] / R),
            r * np.sin(uv[:, 1] / r),
        ],
        axis=1,
    )

    return TriangleMesh(vertices, grid_faces(nu, nv, alternating), uv=uv), uv


def grid_faces(nu: int, nv: int, alternating: bool = True) -> np.ndarray:
    """Triangulation of a doubly periodic nu-by-nv quad grid.

    Vertex (iu, iv) has index ``iu * nv + iv``; the two triangles of quad
    (iu, iv) are faces ``2*(iu*nv+iv)`` and ``2*(iu*nv+iv)+1``.  With
    ``alternating`` the split diagonal flips with the parity of iu+iv, so
    vertex stars mix the two triangle orientations unevenly; a uniform
    split (all quads cut along the same diagonal) gives every interior
    vertex a perfectly balanced star, which makes any density pattern
    that alternates between the two halves of each quad invisible to
    face-to-vertex averaging.
    """
    if nu < 3 or nv < 3:
        raise MeshError("nu and nv must be at least 3")
    iu = np.repeat(np.arange(nu), nv)
    iv = np.tile(np.arange(nv), nu)
    a = iu * nv + iv
    b = ((iu + 1) % nu) * nv + iv
    c = ((iu + 1) % nu) * nv + (iv + 1) % nv
    d = iu * nv + (iv + 1) % nv
    lower = np.stack([a, b, c], axis=1)
    upper = np.stack([a, c, d], axis=1)
    if alternating:
        flip = ((iu + iv) % 2).astype(bool)
        lower[flip] = np.stack([a, b, d], axis=1)[flip]
        upper[flip] = np.stack([b, c, d], axis=1)[flip]
    return np.stack([lower, upper], axis=1).reshape(-1, 3)


# ---------------------------------------------------------------------------
# File I/O


def _format_float(x: float) -> str:
    return f"{x:.17g}"


def load_mesh(path: str | Path, fmt: str | None = None) -> TriangleMesh:
    """Load a triangle mesh from an OBJ or PLY file.

    The format is inferred from the suffix unless ``fmt`` is given.
    Faces must be triangles; degenerate and non-manifold faces are rejected.
    """
    path = Path(path)
    if fmt is None:
        fmt = path.suffix.lower().lstrip(".")
    if fmt == "obj":
        mesh = _load_obj(path)
    elif fmt == "ply":
        mesh = _load_ply(path)
    else:
        raise MeshError(f"unsupported mesh format {fmt!r}")
    _reject_degenerate(mesh, path)
    edges, counts = mesh_edges(mesh.faces)
    bad = np.flatnonzero(counts > 2)
    if bad.size:
        a, b = edges[bad[0]]
        raise MeshError(f"{path}: non-manifold edge ({int(a)}, {int(b)})")
    return mesh


def _reject_degenerate(mesh: TriangleMesh, path: Path) -> None:
    areas = face_areas(mesh.vertices, mesh.faces)
    if not len(areas):
        raise MeshError(f"{path}: mesh has no faces")
    floor = DEGENERATE_AREA_FACTOR * areas.mean()
    bad = np.flatnonzero(areas < floor)
    if bad.size:
        raise MeshError(f"{path}: degenerate face {int(bad[0])} (area {areas[bad[0]]:g})")


def _load_obj(path: Path) -> TriangleMesh:
    vertices: list[list[float]] = []
    uvs: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise MeshError(f"{path}:{lineno}: malformed vertex line")
                vertices.append([float(x) for x in parts[1:4]])
            elif tag == "vt":
                if len(parts) < 3:
                    raise MeshError(f"{path}:{lineno}: malformed vt line")
                uvs.append([float(parts[1]), float(parts[2])])
            elif tag == "f":
                refs = parts[1:]
                if len(refs) != 3:
                    raise MeshError(f"{path}:{lineno}: non-triangular face ({len(refs)} corners)")
                idx = []
                for ref in refs:
                    head = ref.split("/")[0]
                    i = int(head)
                    if i < 0:
                        i = len(vertices) + 1 + i
                    if not 1 <= i <= len(vertices):
                        raise MeshError(f"{path}:{lineno}: vertex reference {ref!r} out of range")
                    idx.append(i - 1)
                faces.append(idx)
    if not vertices or not faces:
        raise MeshError(f"{path}: OBJ file contains no usable mesh")
    uv = None
    if uvs and len(uvs) == len(vertices):
        uv = np.asarray(uvs)
    return TriangleMesh(np.asarray(vertices), np.asarray(faces), uv=uv)


_PLY_SCALARS = {
    "char": ("b", 1), "int8": ("b", 1),
    "uchar": ("B", 1), "uint8": ("B", 1),
    "short": ("h", 2), "int16": ("h", 2),
    "ushort": ("H", 2), "uint16": ("H", 2),
    "int": ("i", 4), "int32": ("i", 4),
    "uint": ("I", 4), "uint32": ("I", 4),
    "float": ("f", 4), "float32": ("f", 4),
    "double": ("d", 8), "float64": ("d", 8),
}


def _load_ply(path: Path) -> TriangleMesh:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"ply"):
        raise MeshError(f"{path}: not a PLY file")
    header_end = data.find(b"end_header")
    if header_end < 0:
        raise MeshError(f"{path}: missing end_header")
    header_end = data.index(b"\n", header_end) + 1
    header = data[:header_end].decode("ascii", errors="replace").splitlines()
    body = data[header_end:]

    fmt = None
    elements: list[tuple[str, int, list]] = []  # (name, count, [property spec...])
    for line in header[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise MeshError(f"{path}: property before element")
            if parts[1] == "list":
                elements[-1][2].append(("list", parts[2], parts[3], parts[4]))
            else:
                elements[-1][2].append(("scalar", parts[1], parts[2]))
        elif parts[0] == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian"):
        raise MeshError(f"{path}: unsupported PLY format {fmt!r}")

    vertices = None
    faces: list[list[int]] = []
    if fmt == "ascii":
        tokens = body.decode("ascii").split()
        pos = 0
        for name, count, props in elements:
            rows = []
            for _ in range(count):
                row = {}
                for prop in props:
                    if prop[0] == "scalar":
                        row[prop[2]] = float(tokens[pos]); pos += 1
                    else:
                        n = int(tokens[pos]); pos += 1
                        row[prop[3]] = [int(tokens[pos + k]) for k in range(n)]
                        pos += n
                rows.append(row)
            if name == "vertex":
                vertices = np.array([[r["x"], r["y"], r["z"]] for r in rows])
            elif name == "face":
                for r in rows:
                    idx = r.get("vertex_indices") or r.get("vertex_index")
                    if idx is None or len(idx) != 3:
                        raise MeshError(f"{path}: non-triangular PLY face")
                    faces.append(idx)
    else:
        offset = 0
        for name, count, props in elements:
            rows = []
            for _ in range(count):
                row = {}
                for prop in props:
                    if prop[0] == "scalar":
                        code, size = _PLY_SCALARS[prop[1]]
                        (val,) = struct.unpack_from("<" + code, body, offset)
                        offset += size
                        row[prop[2]] = val
                    else:
                        ccode, csize = _PLY_SCALARS[prop[1]]
                        icode, isize = _PLY_SCALARS[prop[2]]
                        (n,) = struct.unpack_from("<" + ccode, body, offset)
                        offset += csize
                        vals = struct.unpack_from("<" + icode * n, body, offset)
                        offset += isize * n
                        row[prop[3]] = list(vals)
                rows.append(row)
            if name == "vertex":
                vertices = np.array([[r["x"], r["y"], r["z"]] for r in rows])
            elif name == "face":
                for r in rows:
                    idx = r.get("vertex_indices") or r.get("vertex_index")
                    if idx is None or len(idx) != 3:
                        raise MeshError(f"{path}: non-triangular PLY face")
                    faces.append(idx)
    if vertices is None or not faces:
        raise MeshError(f"{path}: PLY file contains no usable mesh")
    return TriangleMesh(vertices, np.asarray(faces))


def save_mesh(
    mesh: TriangleMesh,
    path: str | Path,
    fmt: str | None = None,
    uv: np.ndarray | None = None,
) -> None:
    """Write a mesh as OBJ or PLY (ascii, full float64 precision).

    With ``uv`` given (one 2D coordinate per vertex, defaulting to the
    mesh's own uv) the OBJ output carries texture coordinates as ``vt``
    lines and ``f v/vt`` faces.
    """
    path = Path(path)
    if fmt is None:
        fmt = path.suffix.lower().lstrip(".")
    if uv is None:
        uv = mesh.uv
    if uv is not None:
        uv = np.asarray(uv, dtype=np.float64)
        if uv.shape != (mesh.n_vertices, 2):
            raise MeshError("uv must be one 2D coordinate per vertex")
    if fmt == "obj":
        lines = []
        for x, y, z in mesh.vertices:
            lines.append(f"v {_format_float(x)} {_format_float(y)} {_format_float(z)}")
        if uv is not None:
            for s, t in uv:
                lines.append(f"vt {_format_float(s)} {_format_float(t)}")
            for a, b, c in mesh.faces + 1:
                lines.append(f"f {a}/{a} {b}/{b} {c}/{c}")
        else:
            for a, b, c in mesh.faces + 1:
                lines.append(f"f {a} {b} {c}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    elif fmt == "ply":
        lines = [
            "ply",
            "format ascii 1.0",
            f"element vertex {mesh.n_vertices}",
            "property double x",
            "property double y",
            "property double z",
            f"element face {mesh.n_faces}",
            "property list uchar int vertex_indices",
            "end_header",
        ]
        for x, y, z in mesh.vertices:
            lines.append(f"{_format_float(x)} {_format_float(y)} {_format_float(z)}")
        for a, b, c in mesh.faces:
            lines.append(f"3 {a} {b} {c}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        raise MeshError(f"unsupported mesh format {fmt!r}")
