"""Density-equalizing self-maps of tori and area-preserving toroidal
parameterizations of genus-one triangle meshes.

The flow runs on a doubly periodic planar domain obtained by cutting the
mesh along two generator loops; densities diffuse under backward Euler
steps and vertices move along the negative density gradient until the
face density field is uniform.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .mesh import (
    MeshError,
    TriangleMesh,
    euler_genus,
    face_areas,
    generate_torus_mesh,
    grid_faces,
    load_mesh,
    mesh_edges,
    save_mesh,
    validate_closed_manifold,
)
from .torus import (
    ProjectionError,
    TorusSpec,
    canonicalize,
    inverse_project,
    project_to_torus,
    surface_residual,
)
from .cutting import CutGraph, SeamCorrespondence, compute_cut_graph, cut_along, glue_cut
from .planar import (
    PeriodicPlanarMesh,
    check_seam_constraints,
    flatten_to_plane,
    torus_image_areas,
)
from .operators import (
    DensityField,
    QuotientIndex,
    SolverError,
    backward_euler_step,
    cotangent_laplacian,
    face_gradient,
    face_to_vertex,
    lumped_mass,
    operator_entries,
    quotient_index,
)
from .populations import (
    area_preserving_population,
    load_population_csv,
    mesh_population,
    planar_population,
)
from .engine import (
    EngineError,
    EqualizeConfig,
    EqualizeReport,
    IterationRecord,
    correct_overlaps,
    density_error,
    equalize,
    initial_modified_density,
    normalized_variance,
    run_equalization,
    write_report_csv,
)
from .parameterize import (
    DistortionSummary,
    Parameterization,
    ParameterizationError,
    ParameterizationResult,
    area_distortion,
    area_distortion_values,
    initial_parameterization,
    run_parameterization,
    summarize_distortion,
)
from .shapes import SHAPE_NAMES, builtin_shape, bumpy_torus, graded_torus, wavy_tube

__all__ = [
    "__version__",
    "MeshError",
    "TriangleMesh",
    "euler_genus",
    "face_areas",
    "generate_torus_mesh",
    "grid_faces",
    "load_mesh",
    "mesh_edges",
    "save_mesh",
    "validate_closed_manifold",
    "ProjectionError",
    "TorusSpec",
    "canonicalize",
    "inverse_project",
    "project_to_torus",
    "surface_residual",
    "CutGraph",
    "SeamCorrespondence",
    "compute_cut_graph",
    "cut_along",
    "glue_cut",
    "PeriodicPlanarMesh",
    "check_seam_constraints",
    "flatten_to_plane",
    "torus_image_areas",
    "DensityField",
    "QuotientIndex",
    "SolverError",
    "backward_euler_step",
    "cotangent_laplacian",
    "face_gradient",
    "face_to_vertex",
    "lumped_mass",
    "operator_entries",
    "quotient_index",
    "area_preserving_population",
    "load_population_csv",
    "mesh_population",
    "planar_population",
    "EngineError",
    "EqualizeConfig",
    "EqualizeReport",
    "IterationRecord",
    "correct_overlaps",
    "density_error",
    "equalize",
    "initial_modified_density",
    "normalized_variance",
    "run_equalization",
    "write_report_csv",
    "DistortionSummary",
    "Parameterization",
    "ParameterizationError",
    "ParameterizationResult",
    "area_distortion",
    "area_distortion_values",
    "initial_parameterization",
    "run_parameterization",
    "summarize_distortion",
    "SHAPE_NAMES",
    "builtin_shape",
    "bumpy_torus",
    "graded_torus",
    "wavy_tube",
]
