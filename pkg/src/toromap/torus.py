"""The torus surface and its doubly periodic planar coordinate chart."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ProjectionError",
    "TorusSpec",
    "project_to_torus",
    "inverse_project",
    "canonicalize",
    "surface_residual",
]


class ProjectionError(ValueError):
    """Raised when points cannot be projected onto or off the torus."""


@dataclass(frozen=True)
class TorusSpec:
    """Torus of revolution: distance ``minor_radius`` from the circle of
    radius ``major_radius`` in the xy-plane.  Requires major > minor > 0."""

    major_radius: float
    minor_radius: float

    def __post_init__(self):
        if not self.major_radius > self.minor_radius > 0:
            raise ProjectionError(
                f"torus radii must satisfy major > minor > 0, got "
                f"({self.major_radius}, {self.minor_radius})"
            )

    @property
    def width(self) -> float:
        """Period of the planar u coordinate, 2*pi*R."""
        return 2.0 * np.pi * self.major_radius

    @property
    def height(self) -> float:
        """Period of the planar v coordinate, 2*pi*r."""
        return 2.0 * np.pi * self.minor_radius

    @property
    def periods(self) -> np.ndarray:
        return np.array([self.width, self.height])

    @property
    def area(self) -> float:
        return 4.0 * np.pi**2 * self.major_radius * self.minor_radius


def project_to_torus(points_uv: np.ndarray, spec: TorusSpec) -> np.ndarray:
    """Map planar (u, v) points onto the torus.

    u is arc length along the center circle (period 2*pi*R), v is arc
    length around the tube (period 2*pi*r); any real values are accepted.
    """
    uv = np.asarray(points_uv, dtype=np.float64)
    single = uv.ndim == 1
    uv = np.atleast_2d(uv)
    R, r = spec.major_radius, spec.minor_radius
    u, v = uv[:, 0], uv[:, 1]
    ring = R + r * np.cos(v / r)
    out = np.stack([ring * np.cos(u / R), ring * np.sin(u / R), r * np.sin(v / r)], axis=1)
    return out[0] if single else out


def surface_residual(points: np.ndarray, spec: TorusSpec) -> np.ndarray:
    """Absolute deviation of points from the torus surface."""
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    R, r = spec.major_radius, spec.minor_radius
    ring = np.hypot(p[:, 0], p[:, 1])
    return np.abs(np.hypot(ring - R, p[:, 2]) - r)


def inverse_project(
    points: np.ndarray, spec: TorusSpec, tol: float = 1e-8
) -> np.ndarray:
    """Planar (u, v) coordinates of points on the torus.

    Points may sit slightly off the surface: each is first snapped to the
    nearest torus point along the tube-radial direction, and rejected if
    its deviation exceeds ``tol * minor_radius``.  Branch cuts place u in
    [0, 2*pi*R) and v in [-pi*r, pi*r).
    """
    p = np.asarray(points, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    R, r = spec.major_radius, spec.minor_radius

    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    ring = np.hypot(x, y)
    if (ring == 0).any():
        raise ProjectionError("point on the torus axis cannot be projected")
    dev = np.abs(np.hypot(ring - R, z) - r)
    bad = np.flatnonzero(dev > tol * r)
    if bad.size:
        i = int(bad[0])
        raise ProjectionError(
            f"point {i} is {dev[i]:.3g} off the torus surface (tol {tol * r:.3g})"
        )
    if (np.hypot(ring - R, z) == 0).any():
        raise ProjectionError("point on the tube center circle cannot be projected")
    # atan2 stays well-conditioned near z = +-r (an arcsin form loses tiny
    # offsets there) and ignores radial length, so the tube-radial snap of
    # off-surface points is implicit.
    u = R * np.arctan2(y, x)
    v = r * np.arctan2(z, ring - R)
    out = np.stack([u, v], axis=1)
    out = canonicalize(out, spec)
    return out[0] if single else out


def canonicalize(points_uv: np.ndarray, spec: TorusSpec) -> np.ndarray:
    """Wrap planar coordinates into [0, 2*pi*R) x [-pi*r, pi*r)."""
    uv = np.asarray(points_uv, dtype=np.float64)
    single = uv.ndim == 1
    uv = np.atleast_2d(uv).copy()
    W, H = spec.width, spec.height
    u = np.mod(uv[:, 0], W)
    u[u >= W] -= W  # np.mod may round up to the period itself
    u[u < 0] += W
    v = np.mod(uv[:, 1] + 0.5 * H, H) - 0.5 * H
    v[v >= 0.5 * H] -= H
    v[v < -0.5 * H] += H
    out = np.stack([u, v], axis=1)
    return out[0] if single else out
