"""Population models resolved against planar layouts and source meshes."""

from __future__ import annotations

import numpy as np
import pytest

from toromap import (
    TorusSpec,
    area_preserving_population,
    builtin_shape,
    compute_cut_graph,
    cut_along,
    face_areas,
    flatten_to_plane,
    generate_torus_mesh,
    load_population_csv,
    mesh_population,
    planar_population,
    torus_image_areas,
)

SPEC = TorusSpec(3.0, 1.0)


@pytest.fixture(scope="module")
def pmesh():
    mesh, _ = generate_torus_mesh(3.0, 1.0, 24, 12)
    cut = compute_cut_graph(mesh, 0, torus=SPEC)
    cut_mesh, seams = cut_along(mesh, cut)
    return flatten_to_plane(cut_mesh, seams, SPEC)


def centroids(pmesh):
    return pmesh.positions[pmesh.faces].mean(axis=1)


class TestPlanarPopulations:
    def test_uniform_is_torus_image_area(self, pmesh):
        assert np.array_equal(planar_population("uniform", pmesh), torus_image_areas(pmesh))

    def test_cos_u_formula(self, pmesh):
        c = centroids(pmesh)
        expected = 2.0 - np.cos(c[:, 0] / SPEC.major_radius)
        assert np.abs(planar_population("cos_u", pmesh) - expected).max() <= 1e-14

    def test_sinusoid_formula(self, pmesh):
        c = centroids(pmesh)
        expected = 1.2 - np.sin(c[:, 0] / SPEC.major_radius) * np.sin(
            c[:, 1] / SPEC.minor_radius
        )
        assert np.abs(planar_population("sinusoid", pmesh) - expected).max() <= 1e-14

    def test_ball_defaults(self, pmesh):
        values = planar_population("ball", pmesh)
        assert set(np.unique(values)) == {1.0, 2.0}
        c = centroids(pmesh)
        u0 = np.pi * SPEC.major_radius
        v0 = 0.5 * np.pi * SPEC.minor_radius
        du = c[:, 0] - u0 - SPEC.width * np.round((c[:, 0] - u0) / SPEC.width)
        dv = c[:, 1] - v0 - SPEC.height * np.round((c[:, 1] - v0) / SPEC.height)
        inside = np.hypot(du, dv) <= 0.5 * SPEC.minor_radius
        assert np.array_equal(values == 2.0, inside)

    def test_ball_custom_arguments(self, pmesh):
        values = planar_population("ball:1.0,0.25,0.8,3.0,1.5", pmesh)
        assert set(np.unique(values)) <= {1.5, 3.0}
        assert (values == 3.0).any() and (values == 1.5).any()

    def test_ball_wraps_around_domain_edge(self, pmesh):
        values = planar_population(f"ball:0.0,{-0.5 * SPEC.height},1.0,2.0,1.0", pmesh)
        c = centroids(pmesh)
        hot = c[values == 2.0]
        # Faces adjacent to all four corners of the rectangle are inside.
        assert (hot[:, 0] < 2.0).any() and (hot[:, 0] > SPEC.width - 2.0).any()
        assert (hot[:, 1] < -2.0).any() and (hot[:, 1] > 2.0).any()

    def test_ball_wrong_arity(self, pmesh):
        with pytest.raises(ValueError, match="ball population"):
            planar_population("ball:1.0,2.0", pmesh)

    def test_ball_nonpositive_radius(self, pmesh):
        with pytest.raises(ValueError, match="positive"):
            planar_population("ball:1.0,0.0,-0.5,2.0,1.0", pmesh)

    def test_explicit_array(self, pmesh):
        values = np.linspace(1.0, 2.0, len(pmesh.faces))
        assert np.array_equal(planar_population(values, pmesh), values)

    def test_explicit_array_wrong_length(self, pmesh):
        with pytest.raises(ValueError, match="per-face"):
            planar_population(np.ones(7), pmesh)

    def test_explicit_array_nonpositive(self, pmesh):
        values = np.ones(len(pmesh.faces))
        values[3] = 0.0
        with pytest.raises(ValueError, match="positive"):
            planar_population(values, pmesh)

    def test_unknown_name(self, pmesh):
        with pytest.raises(ValueError, match="unknown population"):
            planar_population("gaussian", pmesh)

    def test_csv_population(self, pmesh, tmp_path):
        m = len(pmesh.faces)
        values = np.linspace(0.5, 1.5, m)
        order = np.random.default_rng(0).permutation(m)
        path = tmp_path / "pop.csv"
        lines = ["# face_index,value"]
        lines += [f"{i},{values[i]:.17g}" for i in order]
        path.write_text("\n".join(lines) + "\n")
        assert np.abs(planar_population(f"csv:{path}", pmesh) - values).max() <= 1e-15


class TestCsvLoader:
    def test_wrong_column_count(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0,1.0,9\n1,1.0,9\n")
        with pytest.raises(ValueError, match="two columns"):
            load_population_csv(path, 2)

    def test_incomplete_cover(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0,1.0\n0,2.0\n")
        with pytest.raises(ValueError, match="exactly once"):
            load_population_csv(path, 2)

    def test_nonpositive_value(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0,1.0\n1,-2.0\n")
        with pytest.raises(ValueError, match="positive"):
            load_population_csv(path, 2)


@pytest.fixture(scope="module")
def shape():
    return builtin_shape("graded", nu=16, nv=8)


class TestMeshPopulations:
    def test_area(self, shape):
        expected = face_areas(shape.vertices, shape.faces)
        assert np.array_equal(mesh_population("area", shape), expected)
        assert np.array_equal(area_preserving_population(shape), expected)

    def test_uniform_is_ones(self, shape):
        assert np.array_equal(mesh_population("uniform", shape), np.ones(shape.n_faces))

    def test_unknown_name(self, shape):
        with pytest.raises(ValueError, match="unknown population"):
            mesh_population("cos_u", shape)

    def test_explicit_array_validated(self, shape):
        with pytest.raises(ValueError):
            mesh_population(np.zeros(shape.n_faces), shape)
