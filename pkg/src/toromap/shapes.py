"""Bundled genus-one test shapes.

Each generator returns a closed genus-one mesh that does not lie on any
round torus, so parameterizing it exercises the harmonic initial layout
rather than the exact coordinate lift.  The graded shape additionally has
strongly non-uniform triangle sizes.
"""

from __future__ import annotations

import numpy as np

from .mesh import MeshError, TriangleMesh, grid_faces

__all__ = ["bumpy_torus", "wavy_tube", "graded_torus", "builtin_shape", "SHAPE_NAMES"]


def _tube_surface(theta: np.ndarray, psi: np.ndarray, ring: np.ndarray, tube: np.ndarray) -> np.ndarray:
    """Points of a tube around the unit circle scaled by per-point radii."""
    x = (ring + tube * np.cos(psi)) * np.cos(theta)
    y = (ring + tube * np.cos(psi)) * np.sin(theta)
    z = tube * np.sin(psi)
    return np.stack([x, y, z], axis=1)


def _angles(nu: int, nv: int) -> tuple[np.ndarray, np.ndarray]:
    theta = np.repeat(np.arange(nu) * (2.0 * np.pi / nu), nv)
    psi = np.tile(-np.pi + np.arange(nv) * (2.0 * np.pi / nv), nu)
    return theta, psi


def bumpy_torus(
    nu: int = 96,
    nv: int = 32,
    major: float = 2.0,
    minor: float = 0.8,
    amplitude: float = 0.3,
    lobes_u: int = 5,
    lobes_v: int = 3,
) -> TriangleMesh:
    """Torus-like surface with sinusoidal radial bumps in both directions."""
    if not 0 <= amplitude < 1:
        raise MeshError("amplitude must be in [0, 1)")
    theta, psi = _angles(nu, nv)
    tube = minor * (1.0 + amplitude * np.sin(lobes_u * theta) * np.sin(lobes_v * psi))
    ring = np.full_like(theta, major)
    return TriangleMesh(_tube_surface(theta, psi, ring, tube), grid_faces(nu, nv))


def wavy_tube(
    nu: int = 120,
    nv: int = 24,
    major: float = 2.0,
    minor: float = 0.5,
    amplitude: float = 0.45,
    waves: int = 4,
) -> TriangleMesh:
    """Closed tube whose thickness swells and shrinks around the ring."""
    if not 0 <= amplitude < 1:
        raise MeshError("amplitude must be in [0, 1)")
    theta, psi = _angles(nu, nv)
    tube = minor * (1.0 + amplitude * np.sin(waves * theta))
    ring = major * (1.0 + 0.1 * np.cos(waves * theta))
    points = _tube_surface(theta, psi, ring, tube)
    points[:, 2] += 0.3 * minor * np.sin(waves * theta)
    return TriangleMesh(points, grid_faces(nu, nv))


def graded_torus(
    nu: int = 80,
    nv: int = 28,
    major: float = 2.0,
    minor: float = 0.7,
    grading: float = 0.72,
    amplitude: float = 0.18,
) -> TriangleMesh:
    """Bumpy torus sampled on a strongly graded grid.

    Sample angles are compressed toward one side in both directions, so
    triangle sizes vary by roughly (1+g)/(1-g) squared across the mesh
    while the surface itself stays smooth.
    """
    if not 0 <= grading < 1:
        raise MeshError("grading must be in [0, 1)")
    tu = np.arange(nu) / nu
    tv = np.arange(nv) / nv
    theta_1d = 2.0 * np.pi * tu + grading * np.sin(2.0 * np.pi * tu)
    psi_1d = -np.pi + 2.0 * np.pi * tv + grading * np.sin(2.0 * np.pi * tv)
    theta = np.repeat(theta_1d, nv)
    psi = np.tile(psi_1d, nu)
    tube = minor * (1.0 + amplitude * np.sin(3 * theta) * np.cos(2 * psi))
    ring = np.full_like(theta, major)
    return TriangleMesh(_tube_surface(theta, psi, ring, tube), grid_faces(nu, nv))


SHAPE_NAMES = ("bumpy", "wavy", "graded")


def builtin_shape(name: str, nu: int | None = None, nv: int | None = None) -> TriangleMesh:
    """Construct a bundled shape by name with optional grid overrides."""
    builders = {"bumpy": bumpy_torus, "wavy": wavy_tube, "graded": graded_torus}
    if name not in builders:
        raise MeshError(f"unknown shape {name!r}; choose from {', '.join(SHAPE_NAMES)}")
    kwargs = {}
    if nu is not None:
        kwargs["nu"] = nu
    if nv is not None:
        kwargs["nv"] = nv
    return builders[name](**kwargs)
