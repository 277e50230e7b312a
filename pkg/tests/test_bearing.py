import math

import numpy as np
import pytest

from lubemon.bearing import (
    ML_MIN_PER_M3_S, BearingGeometry, CapacityExceededError, ContactError,
    CoefficientTable, FilmMesh, FilmState, Lubricant, ShaftKinematics,
    build_coefficient_table, calibrate_nominal, film_thickness,
    find_equilibrium, hydrodynamic_force, interpolate_coefficients,
    linearized_coefficients, load_coefficient_table, save_coefficient_table,
    solve_film)

from conftest import BEARING_LOAD, SPEED_75HZ

NOMINAL_Q = 596.3 / ML_MIN_PER_M3_S


def kin(e=(0.0, 0.0), edot=(0.0, 0.0), speed=SPEED_75HZ):
    return ShaftKinematics(tuple(e), tuple(edot), speed)


class TestFilmThickness:
    def test_concentric_equals_clearance_everywhere(self, turbine_bearing_geometry):
        phi = np.linspace(0, 2 * math.pi, 37, endpoint=False)
        h = film_thickness(turbine_bearing_geometry, kin(), phi)
        assert np.allclose(h, 120.0e-6)

    def test_cosine_at_zero_angle(self, turbine_bearing_geometry):
        h = film_thickness(turbine_bearing_geometry, kin(e=(60.0e-6, 0.0)), 0.0)
        assert h == pytest.approx(60.0e-6)

    def test_mean_over_circumference_is_clearance(self, turbine_bearing_geometry):
        phi = (np.arange(256) + 0.5) * 2 * math.pi / 256
        h = film_thickness(turbine_bearing_geometry, kin(e=(40e-6, -75e-6)), phi)
        assert np.mean(h) == pytest.approx(120.0e-6, rel=1e-12)

    def test_contact_rejected(self, turbine_bearing_geometry):
        with pytest.raises(ContactError):
            film_thickness(turbine_bearing_geometry, kin(e=(125e-6, 0.0)), 0.0)


class TestGeometryValidation:
    def test_negative_clearance(self):
        with pytest.raises(ValueError):
            BearingGeometry(radius=0.045, width=0.07, radial_clearance=-1e-6)

    def test_groove_wider_than_bearing(self):
        with pytest.raises(ValueError):
            BearingGeometry(radius=0.045, width=0.07, radial_clearance=1e-4,
                            groove_axial_width=0.08)

    def test_lubricant_validation(self):
        with pytest.raises(ValueError):
            Lubricant(dynamic_viscosity=-0.1)
        with pytest.raises(ValueError):
            Lubricant(dynamic_viscosity=0.1, supply_pressure=0.0,
                      cavitation_pressure=1e4)

    def test_mesh_resolution_floor(self, turbine_bearing_geometry):
        with pytest.raises(ValueError):
            FilmMesh.build(turbine_bearing_geometry, 30, 10)
        with pytest.raises(ValueError):
            FilmMesh.build(turbine_bearing_geometry, 41, 10)   # odd circumferential count


class TestSolveFilm:
    def test_concentric_transverse_force_vanishes(self, turbine_bearing_geometry,
                                                  turbine_lubricant, small_mesh):
        st = solve_film(turbine_bearing_geometry, turbine_lubricant, small_mesh, kin(),
                        NOMINAL_Q)
        F = hydrodynamic_force(st, turbine_bearing_geometry)
        # constant film: no Couette wedge, pressure symmetric about the
        # groove axis, so the force orthogonal to it cancels exactly
        assert abs(F[1]) < 1e-6 * abs(F[0])

    def test_concentric_force_vanishes_with_supply(self, turbine_bearing_geometry,
                                                   turbine_lubricant, small_mesh):
        scale = []
        for q_ml in (60.0, 15.0):
            st = solve_film(turbine_bearing_geometry, turbine_lubricant, small_mesh, kin(),
                            q_ml / ML_MIN_PER_M3_S)
            scale.append(np.linalg.norm(hydrodynamic_force(st, turbine_bearing_geometry)))
        # groove-axis force is purely supply-driven and dies with the flow
        assert scale[1] < 0.5 * scale[0]
        assert scale[1] < 100.0

    def test_complementarity_and_bounds(self, turbine_bearing_geometry, turbine_lubricant,
                                        small_mesh):
        st = solve_film(turbine_bearing_geometry, turbine_lubricant, small_mesh,
                        kin(e=(20e-6, -60e-6)), 0.4 * NOMINAL_Q)
        assert st.fluid_fraction.min() >= 0.0
        assert st.fluid_fraction.max() <= 1.0
        assert st.pressure.min() >= turbine_lubricant.cavitation_pressure - 1e-9
        p_scale = st.pressure.max() - turbine_lubricant.cavitation_pressure
        comp = (st.pressure - turbine_lubricant.cavitation_pressure) / p_scale \
            * (1.0 - st.fluid_fraction)
        assert np.abs(comp).max() < 1e-6

    def test_mass_balance(self, turbine_bearing_geometry, turbine_lubricant, small_mesh):
        for e in ((0.0, 0.0), (20e-6, -60e-6)):
            st = solve_film(turbine_bearing_geometry, turbine_lubricant, small_mesh,
                            kin(e=e), 0.8 * NOMINAL_Q)
            assert abs(st.mass_balance) < 1e-5

    def test_starved_vs_flooded(self, turbine_bearing_geometry, turbine_lubricant,
                                small_mesh):
        q_t = 546.0 / ML_MIN_PER_M3_S
        e = (20e-6, -60e-6)
        starved = solve_film(turbine_bearing_geometry, turbine_lubricant, small_mesh,
                             kin(e=e), 0.5 * q_t)
        flooded = solve_film(turbine_bearing_geometry, turbine_lubricant, small_mesh,
                             kin(e=e), 1.5 * q_t)
        # a finite fluid-fraction deficit develops downstream of the groove
        gcols = small_mesh.groove.any(axis=1)
        downstream = np.roll(gcols, 3) & ~gcols
        assert starved.fluid_fraction[downstream].min() < 0.999
        f_starved = hydrodynamic_force(starved, turbine_bearing_geometry)
        f_flooded = hydrodynamic_force(flooded, turbine_bearing_geometry)
        assert np.linalg.norm(f_starved) < np.linalg.norm(f_flooded)

    def test_rejects_nonpositive_flow(self, turbine_bearing_geometry, turbine_lubricant,
                                      small_mesh):
        with pytest.raises(ValueError):
            solve_film(turbine_bearing_geometry, turbine_lubricant, small_mesh, kin(), 0.0)


class TestHydrodynamicForce:
    def test_zero_pressure_zero_force(self, turbine_bearing_geometry, turbine_lubricant,
                                      small_mesh):
        st = FilmState(
            pressure=np.zeros((small_mesh.n_circ, small_mesh.n_axial)),
            fluid_fraction=np.ones((small_mesh.n_circ, small_mesh.n_axial)),
            film_thickness=np.full((small_mesh.n_circ, small_mesh.n_axial), 1e-4),
            mesh=small_mesh, kinematics=kin(), groove_flow=0.0,
            sweeps=0, residual=0.0, mass_balance=0.0)
        assert np.allclose(hydrodynamic_force(st, turbine_bearing_geometry), 0.0)

    def test_mirrored_pressure_cancels_transverse(self, turbine_bearing_geometry,
                                                  small_mesh):
        # field symmetric about the vertical (load) line phi = -pi/2:
        # p(phi) = p(-pi - phi) leaves only a vertical resultant
        phi = small_mesh.phi
        p = (1.0e5 * np.maximum(0.0, -np.sin(phi)))[:, None] \
            * np.ones((1, small_mesh.n_axial))
        st = FilmState(pressure=p, fluid_fraction=np.ones_like(p),
                       film_thickness=np.full_like(p, 1e-4), mesh=small_mesh,
                       kinematics=kin(), groove_flow=0.0, sweeps=0,
                       residual=0.0, mass_balance=0.0)
        F = hydrodynamic_force(st, turbine_bearing_geometry)
        assert abs(F[0]) < 1e-9 * abs(F[1])
        assert F[1] > 0.0


class TestEquilibrium:
    def test_zero_load_centers_the_shaft(self, turbine_bearing_geometry, turbine_lubricant,
                                         small_mesh):
        eq, _ = find_equilibrium(turbine_bearing_geometry, turbine_lubricant, small_mesh,
                                 SPEED_75HZ, (0.0, 0.0), 0.2 * NOMINAL_Q)
        assert np.linalg.norm(eq.eccentricity0) < 2e-6

    def test_force_balance_at_equilibrium(self, turbine_bearing_geometry, turbine_lubricant,
                                          small_mesh):
        eq, station = find_equilibrium(turbine_bearing_geometry, turbine_lubricant,
                                       small_mesh, SPEED_75HZ, BEARING_LOAD,
                                       NOMINAL_Q)
        F = station.force(np.asarray(eq.eccentricity0))
        assert np.linalg.norm(F + BEARING_LOAD) < 1e-3 * np.linalg.norm(BEARING_LOAD)
        e_mag = np.linalg.norm(eq.eccentricity0)
        assert 0.0 < e_mag < 120.0e-6

    def test_nominal_equilibrium_regression(self, turbine_bearing_geometry,
                                            turbine_lubricant, small_mesh):
        # regression anchor recorded from this solver at 64x16
        eq, _ = find_equilibrium(turbine_bearing_geometry, turbine_lubricant, small_mesh,
                                 SPEED_75HZ, BEARING_LOAD, NOMINAL_Q)
        assert np.linalg.norm(eq.eccentricity0) * 1e6 == pytest.approx(14.7, abs=1.5)

    def test_capacity_exceeded_under_severe_starvation(self, turbine_bearing_geometry,
                                                       turbine_lubricant,
                                                       small_mesh):
        with pytest.raises(CapacityExceededError):
            find_equilibrium(turbine_bearing_geometry, turbine_lubricant, small_mesh,
                             SPEED_75HZ, BEARING_LOAD,
                             1.0 / ML_MIN_PER_M3_S)


class TestSimilarity:
    @pytest.mark.parametrize("alpha", [0.5, 2.0])
    def test_scaling_leaves_equilibrium_unchanged(self, turbine_bearing_geometry,
                                                  turbine_lubricant, small_mesh,
                                                  alpha):
        eq0, _ = find_equilibrium(turbine_bearing_geometry, turbine_lubricant, small_mesh,
                                  SPEED_75HZ, BEARING_LOAD, NOMINAL_Q)
        scaled = Lubricant(
            dynamic_viscosity=alpha * turbine_lubricant.dynamic_viscosity,
            supply_pressure=alpha * turbine_lubricant.supply_pressure)
        eq1, _ = find_equilibrium(turbine_bearing_geometry, scaled, small_mesh,
                                  SPEED_75HZ, alpha * BEARING_LOAD, NOMINAL_Q)
        e0 = np.asarray(eq0.eccentricity0)
        e1 = np.asarray(eq1.eccentricity0)
        assert np.linalg.norm(e1 - e0) < 0.005 * np.linalg.norm(e0)


@pytest.fixture(scope="module")
def nominal_coeffs(turbine_bearing_geometry, turbine_lubricant, small_mesh):
    eq, station = find_equilibrium(turbine_bearing_geometry, turbine_lubricant,
                                   small_mesh, SPEED_75HZ, BEARING_LOAD,
                                   NOMINAL_Q)
    co = linearized_coefficients(turbine_bearing_geometry, turbine_lubricant,
                                 small_mesh, SPEED_75HZ, eq, NOMINAL_Q,
                                 _station=station)
    return eq, co


class TestCoefficients:
    def test_direct_stiffness_restoring(self, nominal_coeffs):
        _, co = nominal_coeffs
        assert co.stiffness[1, 1] > 0.0
        assert co.damping[0, 0] > 0.0 and co.damping[1, 1] > 0.0

    def test_damping_reciprocity(self, nominal_coeffs):
        _, co = nominal_coeffs
        cxy, cyx = co.damping[0, 1], co.damping[1, 0]
        assert abs(cxy - cyx) / max(abs(cxy), abs(cyx)) < 0.05

    def test_step_halving_stability(self, turbine_bearing_geometry, turbine_lubricant,
                                    small_mesh, nominal_coeffs):
        eq, co = nominal_coeffs
        co_half = linearized_coefficients(turbine_bearing_geometry, turbine_lubricant,
                                          small_mesh, SPEED_75HZ, eq, NOMINAL_Q,
                                          rel_step=0.5e-3)
        for a, b in ((co.stiffness, co_half.stiffness),
                     (co.damping, co_half.damping)):
            rel = np.abs(a - b) / np.abs(a).max()
            assert rel.max() < 0.01

    def test_stiffness_predicts_nonlinear_force(self, turbine_bearing_geometry,
                                                turbine_lubricant, small_mesh,
                                                nominal_coeffs):
        eq, co = nominal_coeffs
        e0 = np.asarray(eq.eccentricity0)
        f0 = np.asarray(co.static_reaction)
        from lubemon.bearing import _FilmStation
        station = _FilmStation(turbine_bearing_geometry, turbine_lubricant, small_mesh,
                               SPEED_75HZ, NOMINAL_Q)
        de = np.array([0.8e-6, -0.9e-6])   # ~1% of clearance
        f1 = station.force(e0 + de)
        predicted = f0 - co.stiffness @ de
        assert np.linalg.norm(f1 - predicted) < 0.05 * np.linalg.norm(f1 - f0)


@pytest.fixture(scope="module")
def small_table(turbine_bearing_geometry, turbine_lubricant, small_mesh):
    grid = np.array([300.0, 450.0, 600.0, 750.0]) / ML_MIN_PER_M3_S
    return build_coefficient_table(turbine_bearing_geometry, turbine_lubricant,
                                   small_mesh, SPEED_75HZ, BEARING_LOAD, grid)


class TestCoefficientTable:
    def test_eccentricity_monotone_in_flowrate(self, small_table):
        mags = [np.linalg.norm(e.equilibrium.eccentricity0)
                for e in small_table.entries]
        assert all(a > b for a, b in zip(mags, mags[1:]))

    def test_csv_round_trip(self, small_table, tmp_path):
        path = tmp_path / "table.csv"
        save_coefficient_table(small_table, path)
        loaded = load_coefficient_table(path)
        assert np.allclose(loaded.flowrate_grid, small_table.flowrate_grid)
        for a, b in zip(loaded.entries, small_table.entries):
            assert np.allclose(a.stiffness, b.stiffness)
            assert np.allclose(a.damping, b.damping)
            assert np.allclose(a.equilibrium.eccentricity0,
                               b.equilibrium.eccentricity0)

    def test_interpolation_exact_at_nodes(self, small_table):
        q = small_table.flowrate_grid[1]
        co = interpolate_coefficients(small_table, q)
        assert np.allclose(co.stiffness, small_table.entries[1].stiffness)
        assert not co.clamped

    def test_interpolation_midpoint_mean(self, small_table):
        g = small_table.flowrate_grid
        q = 0.5 * (g[0] + g[1])
        co = interpolate_coefficients(small_table, q)
        expected = 0.5 * (small_table.entries[0].stiffness
                          + small_table.entries[1].stiffness)
        assert np.allclose(co.stiffness, expected)

    def test_out_of_range_clamps_and_flags(self, small_table):
        co = interpolate_coefficients(small_table,
                                      1.2 * small_table.flowrate_grid[-1])
        assert co.clamped
        assert np.allclose(co.stiffness, small_table.entries[-1].stiffness)

    def test_single_point_table(self, small_table):
        single = CoefficientTable(flowrate_grid=small_table.flowrate_grid[:1],
                                  entries=small_table.entries[:1])
        co = interpolate_coefficients(single, single.flowrate_grid[0])
        assert np.allclose(co.stiffness, single.entries[0].stiffness)
        with pytest.raises(ValueError):
            interpolate_coefficients(single, 1.5 * single.flowrate_grid[0])

    def test_unsorted_grid_rejected(self, turbine_bearing_geometry, turbine_lubricant,
                                    small_mesh):
        with pytest.raises(ValueError):
            build_coefficient_table(turbine_bearing_geometry, turbine_lubricant, small_mesh,
                                    SPEED_75HZ, BEARING_LOAD,
                                    np.array([6e-6, 5e-6]))


class TestCalibration:
    def test_nominal_flow_scale(self, turbine_bearing_geometry, turbine_lubricant,
                                small_mesh):
        q = calibrate_nominal(turbine_bearing_geometry, turbine_lubricant, small_mesh,
                              SPEED_75HZ, BEARING_LOAD)
        # coarse-mesh value; the reference-band check runs on the default mesh
        assert 350.0 < q * ML_MIN_PER_M3_S < 900.0

    def test_doubled_viscosity_similarity(self, turbine_bearing_geometry,
                                          turbine_lubricant, small_mesh):
        # doubling (viscosity, load, supply pressure) leaves the
        # pressure-driven equilibrium position unchanged
        eq0, _ = find_equilibrium(turbine_bearing_geometry, turbine_lubricant, small_mesh,
                                  SPEED_75HZ, BEARING_LOAD, 0.0,
                                  pressure_driven=True)
        lub2 = Lubricant(dynamic_viscosity=2 * turbine_lubricant.dynamic_viscosity,
                         supply_pressure=2 * turbine_lubricant.supply_pressure)
        eq2, _ = find_equilibrium(turbine_bearing_geometry, lub2, small_mesh, SPEED_75HZ,
                                  2 * BEARING_LOAD, 0.0, pressure_driven=True)
        e0 = np.asarray(eq0.eccentricity0)
        e2 = np.asarray(eq2.eccentricity0)
        assert np.linalg.norm(e2 - e0) < 0.005 * np.linalg.norm(e0)
