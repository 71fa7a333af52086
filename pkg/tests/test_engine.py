"""Density-equalizing flow: stopping, conservation, seams, and reports."""

from __future__ import annotations

import numpy as np
import pytest

from toromap import (
    EqualizeConfig,
    EqualizeReport,
    TorusSpec,
    compute_cut_graph,
    correct_overlaps,
    cut_along,
    density_error,
    equalize,
    face_to_vertex,
    flatten_to_plane,
    generate_torus_mesh,
    initial_modified_density,
    normalized_variance,
    run_equalization,
    surface_residual,
    torus_image_areas,
    write_report_csv,
)

SPEC = TorusSpec(3.0, 1.0)
RNG = np.random.default_rng(23)


def fresh_layout(nu=24, nv=12):
    mesh, _ = generate_torus_mesh(SPEC.major_radius, SPEC.minor_radius, nu, nv)
    cut = compute_cut_graph(mesh, 0, torus=SPEC)
    cut_mesh, seams = cut_along(mesh, cut)
    return mesh, flatten_to_plane(cut_mesh, seams, SPEC)


class TestDensityMetrics:
    def test_density_error_hand_value(self):
        assert density_error(np.array([1.0, 3.0])) == pytest.approx(0.5, abs=1e-15)

    def test_density_error_constant_is_zero(self):
        assert density_error(np.full(10, 4.2)) <= 1e-15

    def test_density_error_zero_mean_rejected(self):
        with pytest.raises(ValueError, match="zero mean"):
            density_error(np.array([-1.0, 1.0]))

    def test_variance_is_squared_error(self):
        for _ in range(20):
            rho = RNG.uniform(0.1, 5.0, size=RNG.integers(2, 200))
            assert normalized_variance(rho) == pytest.approx(
                density_error(rho) ** 2, rel=1e-12
            )


class TestInitialDensity:
    def test_field_components(self):
        _, pmesh = fresh_layout()
        field = initial_modified_density(pmesh, "cos_u")
        ref = torus_image_areas(pmesh)
        assert np.array_equal(field.reference_areas, ref)
        assert np.array_equal(field.face_density, field.population / ref)
        expected_vertex = face_to_vertex(pmesh) @ field.face_density
        assert np.array_equal(field.vertex_density, expected_vertex)

    def test_uniform_population_gives_constant_density(self):
        _, pmesh = fresh_layout()
        field = initial_modified_density(pmesh, "uniform")
        assert np.abs(field.face_density - 1.0).max() <= 1e-12


class TestConfigValidation:
    def test_defaults(self):
        config = EqualizeConfig()
        assert config.dt == 0.1
        assert config.epsilon == 1e-3
        assert config.n_max == 1000
        assert config.solver == "direct"
        assert config.overlap_correction

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"dt": 0.0},
            {"dt": -1.0},
            {"epsilon": 0.0},
            {"n_max": 0},
            {"solver": "multigrid"},
        ],
    )
    def test_bad_values_rejected(self, kwargs):
        with pytest.raises(ValueError):
            EqualizeConfig(**kwargs)


class TestFlow:
    def test_uniform_population_is_fixed_point(self):
        mesh, _ = generate_torus_mesh(3.0, 1.0, 20, 10)
        mapped, pmesh, report = run_equalization(mesh, "uniform", SPEC)
        assert report.converged
        assert report.iterations == 0
        assert report.stop_reason == "converged"
        assert np.abs(mapped.vertices - mesh.vertices).max() <= 1e-9 * SPEC.minor_radius

    def test_error_decreases(self):
        _, pmesh = fresh_layout()
        report = equalize(pmesh, "cos_u", EqualizeConfig(n_max=1))
        assert not report.converged
        assert report.stop_reason == "max_iterations"
        assert report.final_error < report.initial_error

    def test_error_decreases_monotonically_early(self):
        _, pmesh = fresh_layout()
        report = equalize(pmesh, "cos_u", EqualizeConfig(n_max=20))
        errors = [rec.density_error for rec in report.records]
        assert all(b < a for a, b in zip(errors[:-1], errors[1:]))

    def test_mass_conserved_and_seams_clean(self):
        _, pmesh = fresh_layout()
        report = equalize(pmesh, "cos_u", EqualizeConfig(n_max=50))
        assert report.max_mass_drift <= 1e-10
        assert report.max_seam_residual <= 1e-9
        assert all(rec.mass_drift <= 1e-10 for rec in report.records)
        assert all(rec.seam_residual <= 1e-9 for rec in report.records)

    def test_population_scale_invariance(self):
        _, p1 = fresh_layout()
        _, p2 = fresh_layout()
        pop = 1.5 - 0.5 * np.cos(p1.positions[p1.faces].mean(axis=1)[:, 0] / 3.0)
        equalize(p1, pop, EqualizeConfig(n_max=5))
        equalize(p2, 100.0 * pop, EqualizeConfig(n_max=5))
        assert np.abs(p1.quotient_positions() - p2.quotient_positions()).max() <= 1e-12

    def test_solver_choice_matches(self):
        _, p1 = fresh_layout()
        _, p2 = fresh_layout()
        equalize(p1, "cos_u", EqualizeConfig(n_max=5))
        equalize(p2, "cos_u", EqualizeConfig(n_max=5, solver="cg", solver_rtol=1e-14))
        assert np.abs(p1.quotient_positions() - p2.quotient_positions()).max() <= 1e-8

    def test_deterministic_reruns(self):
        _, p1 = fresh_layout()
        _, p2 = fresh_layout()
        r1 = equalize(p1, "sinusoid", EqualizeConfig(n_max=10))
        r2 = equalize(p2, "sinusoid", EqualizeConfig(n_max=10))
        assert np.array_equal(p1.quotient_positions(), p2.quotient_positions())
        assert [rec.density_error for rec in r1.records] == [
            rec.density_error for rec in r2.records
        ]

    def test_records_cover_every_iteration(self):
        _, pmesh = fresh_layout()
        report = equalize(pmesh, "cos_u", EqualizeConfig(n_max=7))
        assert [rec.iteration for rec in report.records] == list(range(8))
        assert report.iterations == 7
        assert report.initial_error == report.records[0].density_error
        assert report.initial_variance == report.records[0].variance

    def test_ball_population_converges_toward_uniform(self):
        _, pmesh = fresh_layout()
        report = equalize(pmesh, "ball", EqualizeConfig(n_max=120))
        assert report.final_error < 0.2 * report.initial_error
        assert report.residual_folds == 0


class TestRunEqualization:
    def test_outputs_consistent(self):
        mesh, _ = generate_torus_mesh(3.0, 1.0, 24, 12)
        mapped, pmesh, report = run_equalization(mesh, "cos_u", SPEC, EqualizeConfig(n_max=30))
        assert mapped.n_vertices == mesh.n_vertices
        assert np.array_equal(mapped.faces, mesh.faces)
        assert surface_residual(mapped.vertices, SPEC).max() <= 1e-12
        assert mapped.uv is not None
        from toromap import project_to_torus

        assert np.abs(project_to_torus(mapped.uv, SPEC) - mapped.vertices).max() <= 1e-12

    def test_custom_cut_accepted(self):
        mesh, _ = generate_torus_mesh(3.0, 1.0, 24, 12)
        cut = compute_cut_graph(mesh)  # tree-cotree route
        mapped, _, report = run_equalization(
            mesh, "cos_u", SPEC, EqualizeConfig(n_max=10), cut=cut
        )
        assert surface_residual(mapped.vertices, SPEC).max() <= 1e-12
        assert report.iterations == 10


class TestOverlapCorrection:
    def test_planted_fold_repaired(self):
        _, pmesh = fresh_layout()
        q = pmesh.quotient_positions()
        victim = pmesh.n_quotient // 2 + 3
        original = q[victim].copy()
        q[victim] += (1.2, 0.6)  # past the far edges of the incident faces
        pmesh.set_quotient_positions(q)
        assert len(pmesh.folded_faces()) > 0

        remaining = correct_overlaps(pmesh)
        assert remaining == 0
        assert len(pmesh.folded_faces()) == 0
        assert pmesh.seam_residual() <= 1e-12
        # The repaired vertex is pulled back near its neighbors.
        assert np.linalg.norm(pmesh.quotient_positions()[victim] - original) < 0.8

    def test_fold_free_layout_untouched(self):
        _, pmesh = fresh_layout()
        before = pmesh.positions.copy()
        assert correct_overlaps(pmesh) == 0
        assert np.array_equal(pmesh.positions, before)

    def test_far_vertices_fixed(self):
        _, pmesh = fresh_layout()
        q0 = pmesh.quotient_positions()
        victim = pmesh.n_quotient // 2 + 3
        q = q0.copy()
        q[victim] += (1.2, 0.6)
        pmesh.set_quotient_positions(q)
        correct_overlaps(pmesh)
        moved = np.linalg.norm(pmesh.quotient_positions() - q0, axis=1)
        far = np.argsort(moved)[: pmesh.n_quotient // 2]
        assert moved[far].max() == 0.0


class TestReportCsv:
    def test_round_trip(self, tmp_path):
        _, pmesh = fresh_layout()
        report = equalize(pmesh, "cos_u", EqualizeConfig(n_max=6))
        path = tmp_path / "report.csv"
        write_report_csv(path, report)
        lines = path.read_text().splitlines()
        assert lines[0] == (
            "iteration,density_error,variance,max_displacement,"
            "folds_before,folds_after,seam_residual,mass_drift"
        )
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        assert data.shape == (len(report.records), 8)
        for row, rec in zip(data, report.records):
            assert row[0] == rec.iteration
            assert row[1] == rec.density_error  # %.17g survives the round trip
            assert row[2] == rec.variance
            assert row[6] == rec.seam_residual

    def test_byte_deterministic(self, tmp_path):
        _, p1 = fresh_layout()
        _, p2 = fresh_layout()
        r1 = equalize(p1, "cos_u", EqualizeConfig(n_max=6))
        r2 = equalize(p2, "cos_u", EqualizeConfig(n_max=6))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_report_csv(a, r1)
        write_report_csv(b, r2)
        assert a.read_bytes() == b.read_bytes()
