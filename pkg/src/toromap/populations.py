"""Population models: per-face positive masses whose density is equalized.

Built-in populations for torus self-maps are densities sampled at the
planar face centroids of the initial layout:

- ``uniform``: proportional to the torus-image face areas, i.e. constant
  density on the surface (the flow leaves the mesh fixed);
- ``cos_u``: 2 - cos(u), varying around the main ring;
- ``sinusoid``: 1.2 - sin(u) sin(v) with both angles active;
- ``ball:u0,v0,radius,inside,outside``: a disk of higher density at
  (u0, v0) in planar coordinates under the wrapped (periodic) distance;
  ``ball`` alone centers it at (pi R, pi r / 2) with radius r/2 and
  densities 2 inside, 1 outside;
- ``csv:PATH``: explicit per-face values from a ``face_index,value`` file.

For parameterizing a general genus-one mesh the population lives on the
source faces instead: ``area`` (face areas, the area-preserving choice),
``uniform`` (all ones), or ``csv:PATH``.
"""

from __future__ import annotations

import numpy as np

from .mesh import MeshError, TriangleMesh, face_areas
from .planar import PeriodicPlanarMesh, torus_image_areas

__all__ = [
    "planar_population",
    "mesh_population",
    "load_population_csv",
    "area_preserving_population",
]


def _require_positive(values: np.ndarray, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if not np.isfinite(values).all() or (values <= 0).any():
        raise ValueError(f"{what} must be positive and finite")
    return values


def load_population_csv(path, n_faces: int) -> np.ndarray:
    """Per-face values from ``face_index,value`` rows (comments with #)."""
    raw = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if raw.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns (face_index,value)")
    idx = raw[:, 0]
    if not np.array_equal(np.sort(idx), np.arange(n_faces)):
        raise ValueError(f"{path}: face indices must cover 0..{n_faces - 1} exactly once")
    values = np.empty(n_faces)
    values[idx.astype(np.int64)] = raw[:, 1]
    return _require_positive(values, f"{path} population")


def _face_centroids(pmesh: PeriodicPlanarMesh) -> np.ndarray:
    return pmesh.positions[pmesh.faces].mean(axis=1)


def _wrap_centered(d: np.ndarray, period: float) -> np.ndarray:
    return d - period * np.round(d / period)


def planar_population(spec_text, pmesh: PeriodicPlanarMesh) -> np.ndarray:
    """Resolve a population spec against the initial planar layout."""
    if not isinstance(spec_text, str):
        values = _require_positive(spec_text, "population")
        if values.shape != (len(pmesh.faces),):
            raise ValueError(f"population needs {len(pmesh.faces)} per-face values")
        return values

    torus = pmesh.spec
    name, _, args = spec_text.partition(":")
    if name == "csv":
        return load_population_csv(args, len(pmesh.faces))
    if name == "uniform":
        return torus_image_areas(pmesh)

    c = _face_centroids(pmesh)
    theta = c[:, 0] / torus.major_radius
    psi = c[:, 1] / torus.minor_radius
    if name == "cos_u":
        return 2.0 - np.cos(theta)
    if name == "sinusoid":
        return 1.2 - np.sin(theta) * np.sin(psi)
    if name == "ball":
        if args:
            parts = [float(x) for x in args.split(",")]
            if len(parts) != 5:
                raise ValueError("ball population needs u0,v0,radius,inside,outside")
            u0, v0, radius, inside, outside = parts
        else:
            u0 = np.pi * torus.major_radius
            v0 = 0.5 * np.pi * torus.minor_radius
            radius = 0.5 * torus.minor_radius
            inside, outside = 2.0, 1.0
        if radius <= 0 or inside <= 0 or outside <= 0:
            raise ValueError("ball population needs positive radius and densities")
        du = _wrap_centered(c[:, 0] - u0, torus.width)
        dv = _wrap_centered(c[:, 1] - v0, torus.height)
        d = np.hypot(du, dv)
        return np.where(d <= radius, inside, outside)
    raise ValueError(f"unknown population {spec_text!r}")


def area_preserving_population(mesh: TriangleMesh) -> np.ndarray:
    """Source face areas; equalizing them makes the map area-preserving."""
    areas = face_areas(mesh.vertices, mesh.faces)
    if (areas <= 0).any():
        raise MeshError("mesh has a zero-area face")
    return areas


def mesh_population(spec_text, mesh: TriangleMesh) -> np.ndarray:
    """Resolve a population spec against a source mesh's faces."""
    if not isinstance(spec_text, str):
        values = _require_positive(spec_text, "population")
        if values.shape != (mesh.n_faces,):
            raise ValueError(f"population needs {mesh.n_faces} per-face values")
        return values
    name, _, args = spec_text.partition(":")
    if name == "area":
        return area_preserving_population(mesh)
    if name == "uniform":
        return np.ones(mesh.n_faces)
    if name == "csv":
        return load_population_csv(args, mesh.n_faces)
    raise ValueError(f"unknown population {spec_text!r}")
